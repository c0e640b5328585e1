"""Encoders X -> R^d and the pushforward certificate.

Every encoder maps grid functions (rows of an (n, G) array) to R^d and is
normalized so that the first d coefficients of the measure, restricted to a
slightly shrunken coefficient box, land on [0,1]^d. The normalization is
recorded as the nominal affine map ``coeffs -> (coeffs - lo) / (hi - lo)``;
``error`` bounds how far the encoder can sit from that map on the support of
the measure (0 for exact encoders).
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.stats import beta

from ..rng import stream


class EncoderError(ValueError):
    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class DeepONetEncoder:
    """apply(u) = bias + coeffs @ (l_1(u), ..., l_d0(u)), l_k(u) = mean(weights_k * u)."""

    functionals: np.ndarray
    coeffs: np.ndarray
    bias: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    delta: float = 0.0
    error: float = 0.0
    kind: str = "cosine_moments"

    @property
    def d(self):
        return self.coeffs.shape[0]

    def moments(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return U @ self.functionals.T / U.shape[1]

    def __call__(self, U):
        return self.bias + self.moments(U) @ self.coeffs.T

    def nominal(self, Z):
        return (np.asarray(Z, dtype=float)[..., : self.d] - self.lo) / (self.hi - self.lo)

    def preimage(self, lo, hi):
        """Coefficient box mapped by the nominal map onto the box [lo, hi]."""
        return self.lo + (self.hi - self.lo) * np.asarray(lo), self.lo + (self.hi - self.lo) * np.asarray(hi)


def dual_norm_on_span(residual, span):
    """sup |residual . u| over u in span{rows of ``span``} with max_x |u(x)| <= 1.

    ``residual`` is a grid weight vector acting by r(u) = mean(residual * u).
    Solved as one linear program (the feasible set is symmetric).
    """
    span = np.atleast_2d(span)
    G = span.shape[1]
    obj = span @ residual / G
    if np.abs(obj).max() < 1e-15:
        return 0.0
    k = span.shape[0]
    A = np.vstack([span.T, -span.T])
    res = linprog(-obj, A_ub=A, b_ub=np.ones(2 * G), bounds=[(None, None)] * k, method="highs")
    if res.status != 0:
        raise RuntimeError(f"dual-norm linear program failed: {res.message}")
    return float(-res.fun)


def _box(mu, d, margin):
    lo = mu.low[:d] + margin
    hi = mu.high[:d] - margin
    if np.any(hi <= lo):
        raise EncoderError("encoder error exceeds the coefficient box", margin)
    return lo, hi


def deeponet_encoder_build(mu, d, delta=0.0, functional_family="cosine_moments", d0=None):
    """Encoder from fixed linear functionals whose combination approximates the first d duals.

    cosine_moments uses the duals themselves (exact). point_evals(d0) samples u
    at d0 evenly spaced grid nodes and solves least squares so the combination
    matches each dual on span{1, e_1, ..., e_J}; the achieved delta is the
    dual norm of the residual on that span.
    """
    if d > mu.J:
        raise ValueError(f"d={d} exceeds the measure's J={mu.J}")
    G = mu.G
    if functional_family == "cosine_moments":
        W = mu.duals[:d].copy()
        C = np.eye(d)
        achieved = 0.0
    elif functional_family == "point_evals":
        d0 = int(d0 or 64)
        if d0 > G:
            raise ValueError(f"d0={d0} exceeds the grid size {G}")
        idx = np.round((np.arange(d0) + 0.5) * G / d0 - 0.5).astype(int)
        W = np.zeros((d0, G))
        W[np.arange(d0), idx] = G
        span = np.vstack([np.ones(G), mu.offset[None, :], mu.basis]) if np.any(mu.offset) \
            else np.vstack([np.ones(G), mu.basis])
        P = span[:, idx]
        target = span @ mu.duals[:d].T / G
        C = np.linalg.lstsq(P, target, rcond=None)[0].T
        achieved = max([0.0] + [dual_norm_on_span(mu.duals[j] - C[j] @ W, span) for j in range(d)])
    else:
        raise ValueError(f"unknown functional family {functional_family!r}")
    if achieved > delta + 1e-12 and functional_family != "cosine_moments":
        raise EncoderError(f"achieved dual error {achieved:.3g} exceeds requested delta {delta}", achieved)
    error = achieved * mu.sup_bound()
    lo, hi = _box(mu, d, error)
    scale = 1.0 / (hi - lo)
    return DeepONetEncoder(W, C * scale[:, None], -lo * scale, lo, hi, achieved,
                           float(np.max(error * scale)), functional_family)


def clopper_pearson(k, n, conf=0.95):
    """One-sided (lower, upper) Clopper-Pearson bounds at level ``conf``."""
    a = 1 - conf
    lower = 0.0 if k == 0 else float(beta.ppf(a, k, n - k + 1))
    upper = 1.0 if k == n else float(beta.ppf(1 - a, k + 1, n - k))
    return lower, upper


@dataclass
class PushforwardReport:
    c_hat: float
    c_lower: float
    min_bin: tuple
    min_count: int
    samples: int
    bins: int
    outside: float

    @property
    def passed(self):
        return self.min_count > 0 and self.c_lower > 0

    def to_dict(self):
        return dict(c_hat=self.c_hat, c_lower=self.c_lower, min_bin=list(self.min_bin),
                    min_count=self.min_count, samples=self.samples, bins=self.bins,
                    outside_fraction=self.outside, verdict="PASS" if self.passed else "FAIL")


def encode_batches(encoder, mu, samples, rng, batch=20000):
    out = []
    left = int(samples)
    while left > 0:
        n = min(batch, left)
        U, _ = mu.sample(n, rng)
        out.append(np.atleast_2d(encoder(U)))
        left -= n
    return np.vstack(out)


def pushforward_certify(encoder, mu, bins, samples, seed=0, d=None, conf=0.95):
    """Histogram the encoded samples on [0,1]^d and bound the smallest bin mass.

    c_hat = min count / (samples / bins^d); c_lower is the same ratio with the
    one-sided Clopper-Pearson lower bound on the smallest bin's mass.
    """
    rng = stream(seed, 0xE7C)
    Y = encode_batches(encoder, mu, samples, rng)
    d = Y.shape[1] if d is None else d
    if bins ** d * 20 > samples:
        raise ValueError(f"{samples} samples give fewer than 20 per bin over {bins}^{d} bins")
    inside = np.all((Y >= 0) & (Y < 1), axis=1)
    cells = np.floor(Y[inside] * bins).astype(int)
    counts = np.zeros((bins,) * d, dtype=int)
    np.add.at(counts, tuple(cells.T), 1)
    flat = int(np.argmin(counts))
    k = int(counts.reshape(-1)[flat])
    expected = samples / bins ** d
    lower, _ = clopper_pearson(k, samples, conf)
    return PushforwardReport(
        k / expected, lower * bins ** d, tuple(int(i) for i in np.unravel_index(flat, counts.shape)),
        k, int(samples), int(bins), float(1 - inside.mean()),
    )


def default_eps0(mu, d):
    """min(1/2, r/4) with r the inscribed radius of the coefficient box."""
    r = float(np.min(mu.high[:d] - mu.low[:d]) / 2)
    return min(0.5, r / 4), r


def estimate_b_prime(mu, d, seed=0, samples=4000, quantile=0.99, factor=1.5):
    """Sup bound on inputs: 1.5 x the 99th percentile of tail sup norms plus the d-term part."""
    from .fields import decompose

    U, _ = mu.sample(samples, stream(seed, 0xB9))
    _, xi = decompose(U, mu, d)
    B = factor * float(np.quantile(np.abs(xi).max(axis=1), quantile))
    cV = float(np.max(np.maximum(np.abs(mu.low[:d]), np.abs(mu.high[:d]))))
    return B + d * cV * float(np.abs(mu.basis[:d]).max()), B


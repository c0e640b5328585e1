"""The operator-level adversary: Psi_xi = psi_xi o E for an encoder E.

An operator algorithm declares N input functions (an (N, G) array) before
seeing any value, receives Psi_xi at those inputs, and returns a map from
(n, G) arrays to n values. The error is the Bochner norm
E_{u~mu}[|Psi_xi(u) - A(Psi_xi)(u)|^p]^(1/p), estimated by Monte Carlo with
two strata in coefficient space: the preimage of the bump's (enlarged)
support cube and its complement.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..adversary import ErrorRow, draw_instance
from ..errors import ProtocolError, PROTO_ADAPTIVE, PROTO_DOMAIN, PROTO_NONFINITE, PROTO_POINTCOUNT
from ..layouts import grid_side, midpoint_grid
from ..rng import stream
from ..spaces import DepthGrowth, SpaceParams, depth_discount

ENCODER_KINDS = ("deeponet", "ano")


def embedded_space(params, encoder_kind):
    """(space of the finite-dimensional instance, amplitude depth discount).

    deeponet: depth budget ell - 3, discount floor((ell* - 1)/2);
    ano: fixed depth 3, discount floor(3/2) = 1.
    """
    if encoder_kind == "deeponet":
        star = params.ell.star
        disc = depth_discount(star - 1) if not math.isinf(star) else math.inf
        return SpaceParams(params.alpha, params.p, params.d, params.ell.shifted(-3)), disc
    if encoder_kind == "ano":
        return SpaceParams(params.alpha, params.p, params.d, DepthGrowth.constant(3)), 1
    raise ValueError(f"unknown encoder kind {encoder_kind!r}; expected one of {ENCODER_KINDS}")


def operator_rate(params, encoder_kind):
    """1/p + (1/d) alpha / (alpha + discount) for the embedded instances."""
    _, disc = embedded_space(params, encoder_kind)
    frac = 0.0 if math.isinf(disc) else params.alpha / (params.alpha + disc)
    return 1.0 / params.p + frac / params.d


@dataclass(frozen=True)
class OperatorTask:
    """What an operator algorithm may know up front: the input law and the encoder."""

    mu: object
    encoder: object
    d: int

    @property
    def G(self):
        return self.mu.G


@dataclass(frozen=True)
class OperatorInstance:
    instance: object
    encoder: object

    def __call__(self, U):
        return self.instance(self.encoder(U))

    def flipped(self):
        return OperatorInstance(self.instance.flipped(), self.encoder)


class ZeroOperatorAlgorithm:
    name = "zero"
    reentrant = True

    def plan(self, N, task):
        return np.zeros((N, task.G))

    def reconstruct(self, inputs, values):
        return lambda U: np.zeros(len(np.atleast_2d(U)))

    def influence_radius(self, N, task):
        return 0.0


class NearestNeighborOperatorAlgorithm:
    """Inputs whose nominal codes form the midpoint grid; predicts the value of the nearest code (sup norm)."""

    name = "nearest-neighbor-encoded"
    reentrant = True

    def __init__(self, task):
        self.task = task

    def plan(self, N, task):
        enc, mu = task.encoder, task.mu
        lo, hi = enc.preimage(np.zeros(task.d), np.ones(task.d))
        Z = lo + (hi - lo) * midpoint_grid(N, task.d)
        return mu.offset + Z @ mu.basis[: task.d]

    def reconstruct(self, inputs, values):
        codes = self.task.encoder(inputs)
        _, first = np.unique(codes, axis=0, return_index=True)
        first = np.sort(first)
        tree = cKDTree(codes[first])
        vals = np.asarray(values, dtype=float)[first]

        def f(U):
            _, idx = tree.query(self.task.encoder(U), k=1, p=np.inf)
            return vals[idx]

        return f

    def influence_radius(self, N, task):
        return 0.5 / grid_side(N, task.d) + 2 * task.encoder.error


@dataclass
class OperatorErrorRow(ErrorRow):
    sup_errors: np.ndarray = field(default=None, repr=False)

    def ordering_holds(self):
        """Every trial's L^p estimate is at most the max error over its own MC inputs."""
        if self.sup_errors is None or self.errors is None:
            return True
        return bool(np.all(self.errors <= self.sup_errors * (1 + 1e-12)))

    def to_dict(self, with_errors=True):
        out = super().to_dict(with_errors)
        if with_errors and self.sup_errors is not None:
            out["sup_errors"] = [float(e) for e in self.sup_errors]
        return out


def _check_inputs(U, N, G):
    try:
        U = np.asarray(U, dtype=float)
    except (TypeError, ValueError):
        raise ProtocolError(PROTO_DOMAIN, "inputs are not numeric") from None
    if U.ndim != 2 or U.shape[1] != G:
        raise ProtocolError(PROTO_DOMAIN, f"inputs must have shape (N, {G}), got {U.shape}")
    if len(U) != N:
        raise ProtocolError(PROTO_POINTCOUNT, f"declared {len(U)} inputs, expected {N}")
    if not np.all(np.isfinite(U)):
        raise ProtocolError(PROTO_NONFINITE, "inputs contain NaN or infinity")
    return U


def stratified_samples(mu, d, box_lo, box_hi, n, rng):
    """Coefficients for the two strata and the probability of the first.

    Stratum one: Z_1..Z_d uniform on the box clipped to the coefficient
    intervals; stratum two: the complement, by rejection. Tails follow mu.
    """
    lo = np.maximum(mu.low[:d], box_lo)
    hi = np.minimum(mu.high[:d], box_hi)
    width = mu.high[:d] - mu.low[:d]
    prob = float(np.prod(np.clip(hi - lo, 0, None) / width))
    n_in = n // 2 if 0 < prob < 1 else (n if prob >= 1 else 0)
    Z_in = mu.coefficients(n_in, rng)
    Z_in[:, :d] = lo + (hi - lo) * rng.random((n_in, d))
    need = n - n_in
    outs = []
    while need > 0:
        Z = mu.coefficients(max(2 * need, 64), rng)
        inside = np.all((Z[:, :d] >= lo) & (Z[:, :d] <= hi), axis=1)
        Z = Z[~inside][:need]
        outs.append(Z)
        need -= len(Z)
    Z_out = np.vstack(outs) if outs else np.zeros((0, mu.J))
    return Z_in, Z_out, prob


def operator_adversary_run(alg, N, params, mu, encoder, encoder_kind, trials, mc_inputs=2000,
                           seed=0, ps=None, kappa=1.0, threads=1):
    """{p: OperatorErrorRow} for operator instances psi_xi o encoder at sample size N."""
    ps = [params.p] if ps is None else list(ps)
    if any(math.isinf(p) for p in ps):
        raise ValueError("Bochner norms need finite p")
    emb, disc = embedded_space(params, encoder_kind)
    d = params.d
    task = OperatorTask(mu, encoder, d)
    reference = {}

    def trial(t):
        inst = OperatorInstance(draw_instance(N, emb, kappa, stream(seed, N, t), discount=disc), encoder)
        try:
            U = _check_inputs(alg.plan(N, task), N, mu.G)
            ref = reference.setdefault("inputs", U)
            if ref is not U and not np.array_equal(ref, U):
                raise ProtocolError(PROTO_ADAPTIVE, "inputs changed between trials with the same N")
            values = inst(U)
            if hasattr(alg, "observe_instance"):
                alg.observe_instance(inst)
            rec = alg.reconstruct(U, values)
            reach = alg.influence_radius(N, task) if hasattr(alg, "influence_radius") else None
            h = 1.0 / inst.instance.M + (reach if reach is not None else 1.0) + encoder.error
            y = inst.instance.y
            box_lo, box_hi = encoder.preimage(y - h, y + h)
            Z_in, Z_out, prob = stratified_samples(mu, d, box_lo, box_hi, mc_inputs, stream(seed, N, t, 2))
            diffs = []
            for Z in (Z_in, Z_out):
                if len(Z):
                    X = mu.synthesize(Z)
                    pred = np.asarray(rec(X), dtype=float).reshape(-1)
                    if not np.all(np.isfinite(pred)):
                        raise ProtocolError(PROTO_NONFINITE, "reconstruction returned NaN or infinity")
                    diffs.append(np.abs(inst(X) - pred))
                else:
                    diffs.append(np.zeros(0))
            errs = []
            for p in ps:
                m_in = float(np.mean(diffs[0] ** p)) if len(diffs[0]) else 0.0
                m_out = float(np.mean(diffs[1] ** p)) if len(diffs[1]) else 0.0
                errs.append((prob * m_in + (1 - prob) * m_out) ** (1.0 / p))
            sup = float(max(np.max(x, initial=0.0) for x in diffs))
            return errs, sup, None
        except ProtocolError as exc:
            return None, None, (t, exc.code, exc.message)

    if threads > 1 and getattr(alg, "reentrant", True):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(trial, range(trials)))
    else:
        results = [trial(t) for t in range(trials)]
    failures = [r[2] for r in results if r[2] is not None]
    sups = np.array([r[1] for r in results if r[2] is None])
    rows = {}
    for i, p in enumerate(ps):
        errs = [r[0][i] for r in results if r[2] is None]
        base = ErrorRow.from_errors(N, p, errs, failures)
        rows[p] = OperatorErrorRow(base.N, base.trials, base.mean_error, base.stderr, base.p,
                                   base.errors, base.failures, None, sups)
    return rows


def bochner_norm(Gop, mu, p, mc_inputs=2000, seed=0):
    """(E_{u~mu}|G(u)|^p)^(1/p) by plain Monte Carlo, with a delta-method stderr."""
    if math.isinf(p) or p < 1:
        raise ValueError("p must be finite and at least 1")
    U, _ = mu.sample(mc_inputs, stream(seed, 0xB0C))
    v = np.abs(np.asarray(Gop(U), dtype=float).reshape(-1)) ** p
    m = float(v.mean())
    se_m = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan
    est = m ** (1.0 / p)
    se = se_m * (m ** (1.0 / p - 1) / p) if m > 0 else 0.0
    return est, se

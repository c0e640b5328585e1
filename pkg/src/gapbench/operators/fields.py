"""Grid functions on [0,1] and random-field input measures.

A grid function is a length-G array of samples at the cell midpoints
(i + 1/2)/G; the average over D is the plain mean of the samples. Batches
are (n, G) arrays.

A measure draws u = offset + sum_j Z_j e_j with independent Z_j uniform on
[low_j, high_j]. Its duals satisfy mean(e_j * dual_k) = delta_jk, so the
coefficients are recovered by grid averages.
"""

from dataclasses import dataclass

import numpy as np


def grid_nodes(G):
    return (np.arange(G) + 0.5) / G


def grid_mean(u):
    return np.asarray(u, dtype=float).mean(axis=-1)


@dataclass(frozen=True)
class GridFunction:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def G(self):
        return len(self.values)

    def mean(self):
        return float(self.values.mean())

    def pair(self, other):
        """Average of the pointwise product, i.e. the L^1/L^inf duality pairing."""
        return float(np.mean(self.values * np.asarray(getattr(other, "values", other))))


def cosine_basis(G, J):
    """Rows e_j(x) = cos(pi j x), j = 1..J, and duals 2 cos(pi j x)."""
    x = grid_nodes(G)
    E = np.cos(np.pi * np.outer(np.arange(1, J + 1), x))
    return E, 2.0 * E


@dataclass(frozen=True)
class RandomFieldMeasure:
    """u = offset + sum_j Z_j e_j with Z_j ~ Unif[low_j, high_j] independent."""

    basis: np.ndarray
    duals: np.ndarray
    low: np.ndarray
    high: np.ndarray
    offset: np.ndarray = None
    label: str = "field"

    def __post_init__(self):
        for name in ("basis", "duals", "low", "high"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.basis.shape != self.duals.shape:
            raise ValueError("basis and duals must have the same shape")
        if self.offset is None:
            object.__setattr__(self, "offset", np.zeros(self.basis.shape[1]))
        if np.any(self.high < self.low):
            raise ValueError("coefficient intervals must have low <= high")

    @property
    def G(self):
        return self.basis.shape[1]

    @property
    def J(self):
        return self.basis.shape[0]

    def coefficients(self, n, rng):
        return self.low + (self.high - self.low) * rng.random((int(n), self.J))

    def synthesize(self, Z):
        return self.offset + np.asarray(Z, dtype=float) @ self.basis

    def sample(self, n, rng):
        """(U, Z): n grid functions and their coefficient records."""
        Z = self.coefficients(n, rng)
        return self.synthesize(Z), Z

    def sup_bound(self):
        """Bound on |u(x)| over the support of the measure."""
        amp = np.maximum(np.abs(self.low), np.abs(self.high))
        return float(np.abs(self.offset).max() + amp @ np.abs(self.basis).max(axis=1))

    def biorthogonality_error(self):
        gram = self.basis @ self.duals.T / self.G
        return float(np.abs(gram - np.eye(self.J)).max())


def cosine_measure(G=512, J=32, s=1.0, q=2.0):
    """Cosine field with Z_j ~ Unif[-s j^-q, s j^-q]."""
    if q <= 1:
        raise ValueError("decay exponent q must exceed 1 for the series to converge")
    E, D = cosine_basis(G, J)
    half = s * np.arange(1, J + 1, dtype=float) ** (-q)
    return RandomFieldMeasure(E, D, -half, half, label="cosine")


def sample_measure(mu, rng, n=None):
    """One draw (GridFunction, coefficient vector), or a batch when n is given."""
    if n is None:
        U, Z = mu.sample(1, rng)
        return GridFunction(U[0]), Z[0]
    return mu.sample(n, rng)


def decompose(u, mu, d):
    """Split u into its first d coordinates y and the remainder xi = u - sum y_j e_j."""
    if d > mu.J:
        raise ValueError(f"cannot split off {d} coordinates from a measure with J={mu.J}")
    U = np.asarray(getattr(u, "values", u), dtype=float)
    y = U @ mu.duals[:d].T / mu.G
    xi = U - y @ mu.basis[:d]
    return y, xi


def compact_set_measure(vertices, tol=1e-10):
    """Law of e_0 + sum_j y_j e_j, y ~ Unif[0,1]^d, with e_0 = v_0 and e_j = (v_j - v_0)/d.

    Every draw is the convex combination of the vertices with weights
    1 - sum(y)/d and y_j/d. The duals are biorthogonal to e_1..e_d and
    annihilate e_0.
    """
    V = np.asarray(vertices, dtype=float)
    d = len(V) - 1
    if d < 1:
        raise ValueError("need at least two vertices")
    G = V.shape[1]
    gram = V @ V.T / G
    scale = np.prod(np.diag(gram))
    if not scale > 0 or np.linalg.det(gram) <= tol * scale:
        raise ValueError("vertices are linearly dependent (Gram determinant below tolerance)")
    e0 = V[0]
    E = (V[1:] - e0) / d
    full = np.vstack([e0, E])
    duals_full = G * np.linalg.solve(full @ full.T, full)
    return RandomFieldMeasure(E, duals_full[1:], np.zeros(d), np.ones(d), offset=e0, label="simplex")


def barycentric_weights(y):
    """Vertex weights of a compact-set draw with coordinates y (rows)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = y.shape[1]
    return np.hstack([1.0 - y.sum(axis=1, keepdims=True) / d, y / d])


def gram_determinant(functions):
    F = np.asarray(functions, dtype=float)
    return float(np.linalg.det(F @ F.T / F.shape[1]))

"""Coverage check for near-identity maps of a box.

For F: V -> R^d with ||F - id||_{W^{1,inf}(V)} <= eps0 = min(1/2, r/4), where
B(y0, r) is the inscribed ball of V, the image of Unif(V) covers
V0 = B(y0, r/4) with density at least c0 = |V0|/|V| (2/3)^d. The check
estimates the norm by finite differences, then bins the pushforward over
the cells of a 20^d partition of V0's bounding cube that lie inside V0.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..rng import stream
from .encoders import clopper_pearson


def ball_volume(d, r):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r ** d


def near_identity_norm(F, lo, hi, rng, points=2000, h=1e-6):
    """(sup |F - id|, sup ||DF - I||_2) over random points of the box, by central differences."""
    d = len(lo)
    Y = lo + (hi - lo) * rng.random((points, d))
    val = float(np.linalg.norm(F(Y) - Y, axis=1).max())
    J = np.empty((points, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        J[:, :, k] = (F(Y + e) - F(Y - e)) / (2 * h)
    jac = float(np.linalg.norm(J - np.eye(d), ord=2, axis=(1, 2)).max())
    return val, jac


@dataclass
class CoverageReport:
    verdict: str
    norm_value: float
    norm_jacobian: float
    eps0: float
    c0: float
    bins_total: int = 0
    bins_hit: int = 0
    min_density: float = None
    failing_bins: list = field(default_factory=list)

    def to_dict(self):
        return dict(verdict=self.verdict, norm_value=self.norm_value, norm_jacobian=self.norm_jacobian,
                    eps0=self.eps0, c0=self.c0, bins_total=self.bins_total, bins_hit=self.bins_hit,
                    min_density=self.min_density, failing_bins=self.failing_bins)


def contraction_coverage_check(F, lo, hi, samples=200000, seed=0, bins=20, conf=0.95):
    """PASS, FAIL or NOT_APPLICABLE (when ||F - id||_{W^{1,inf}} > eps0).

    A bin fails when no sample lands in it, or when even the Clopper-Pearson
    upper bound on its mass is below c0 |bin| / |V0|.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = len(lo)
    r = float(np.min(hi - lo) / 2)
    y0 = (lo + hi) / 2
    eps0 = min(0.5, r / 4)
    rad = r / 4
    vol_v = float(np.prod(hi - lo))
    vol_0 = ball_volume(d, rad)
    c0 = vol_0 / vol_v * (2.0 / 3.0) ** d
    rng = stream(seed, d, 0xC0)
    val, jac = near_identity_norm(F, lo, hi, rng)
    if max(val, jac) > eps0:
        return CoverageReport("NOT_APPLICABLE", val, jac, eps0, c0)
    side = 2 * rad / bins
    corner = y0 - rad
    idx = np.stack(np.meshgrid(*[np.arange(bins)] * d, indexing="ij"), -1).reshape(-1, d)
    # a cube lies inside the ball iff its farthest corner does
    far = np.maximum(np.abs(corner + idx * side - y0), np.abs(corner + (idx + 1) * side - y0))
    keep = np.linalg.norm(far, axis=1) <= rad
    counts = np.zeros((bins,) * d, dtype=np.int64)
    left = int(samples)
    while left > 0:
        n = min(left, 100000)
        Y = lo + (hi - lo) * rng.random((n, d))
        Z = F(Y)
        cell = np.floor((Z - corner) / side).astype(int)
        ok = np.all((cell >= 0) & (cell < bins), axis=1)
        np.add.at(counts, tuple(cell[ok].T), 1)
        left -= n
    flat = counts.reshape(-1)[keep]
    need = c0 * side ** d / vol_0
    failing = []
    dens = []
    for b, k in zip(idx[keep], flat):
        _, up = clopper_pearson(int(k), int(samples), conf)
        dens.append(k / samples / (side ** d / vol_0))
        if k == 0 or up < need:
            failing.append([int(i) for i in b])
    verdict = "FAIL" if failing else "PASS"
    return CoverageReport(verdict, val, jac, eps0, c0, int(keep.sum()), int(np.count_nonzero(flat)),
                          float(min(dens)), failing[:20])


def random_perturbation(d, eps, rng, waves=3):
    """y -> y + eps * g(y), g a sum of sines with sup |g| <= 1 and sup ||Dg||_2 <= 1."""
    a = rng.normal(size=(waves, d))
    W = rng.normal(size=(waves, d)) * 3
    phase = rng.uniform(0, 2 * np.pi, size=(waves, d))
    # component i of wave k is a[k,i] sin(W[k] . y + phase[k,i])
    total = np.linalg.norm(a) + np.linalg.norm(np.abs(a).sum(axis=0)[:, None] * np.abs(W).sum(axis=0)[None, :])
    a = a / total

    def F(Y):
        Y = np.atleast_2d(Y)
        arg = (Y @ W.T)[:, :, None] + phase[None]
        return Y + eps * np.einsum("ki,nki->ni", a, np.sin(arg))

    return F


def collapsing_map(Y):
    Y = np.array(np.atleast_2d(Y), dtype=float)
    Y[:, 1:] = 0.0
    return Y

"""Reference reconstruction algorithms for the point-sample protocol.

An algorithm declares its points with ``plan(N, d)`` before any value is
seen, then ``reconstruct(points, values)`` returns a function on [0,1]^d
that maps an (n, d) array to n values.

Optional attributes the harness understands:

* ``reentrant`` (default True): False makes the harness run trials one at a time.
* ``randomized`` (default False): plan takes a per-trial ``rng`` and may return
  any number of points; the harness checks that the mean count stays within N.
* ``influence_radius(N, d)``: how far (sup distance) beyond a sample point the
  sample's value can change the reconstruction. The error quadrature is
  refined over that extra margin around the bump. None means unknown.
"""

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .layouts import grid_side, iid_points, midpoint_grid, node_grid


class ReconstructionAlgorithm:
    name = "algorithm"
    reentrant = True
    randomized = False

    def plan(self, N, d):
        raise NotImplementedError

    def reconstruct(self, points, values):
        raise NotImplementedError

    def influence_radius(self, N, d):
        return None


def _zero(X):
    return np.zeros(len(np.atleast_2d(X)))


class ZeroAlgorithm(ReconstructionAlgorithm):
    name = "zero"

    def plan(self, N, d):
        return midpoint_grid(N, d)

    def reconstruct(self, points, values):
        return _zero

    def influence_radius(self, N, d):
        return 0.0


def zero_algorithm():
    return ZeroAlgorithm()


class NearestNeighborAlgorithm(ReconstructionAlgorithm):
    """Piecewise constant on sup-norm Voronoi cells; ties go to the lowest index."""

    def __init__(self, layout="grid", seed=0):
        if layout not in ("grid", "iid"):
            raise ValueError(f"unknown layout {layout!r}; expected grid or iid")
        self.layout = layout
        self.seed = seed
        self.name = f"nearest-neighbor-{layout}"

    def plan(self, N, d):
        if self.layout == "grid":
            return midpoint_grid(N, d)
        return iid_points(N, d, self.seed)

    def reconstruct(self, points, values):
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        # duplicates share a location, so keep the first occurrence only
        _, first = np.unique(points, axis=0, return_index=True)
        first = np.sort(first)
        pts, vals = points[first], values[first]
        tree = cKDTree(pts)
        k_max = min(len(pts), 2 ** pts.shape[1] + 1)

        def f(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            if len(pts) == 1:
                return np.full(len(X), vals[0])
            dist, idx = tree.query(X, k=2, p=np.inf)
            choice = idx[:, 0].copy()
            tied = dist[:, 1] <= dist[:, 0]
            if tied.any():
                # resolve ties among all equidistant candidates by smallest index
                dt, it = tree.query(X[tied], k=k_max, p=np.inf)
                cand = np.where(dt <= dt[:, :1], first[it], np.iinfo(np.int64).max)
                choice[tied] = it[np.arange(len(it)), np.argmin(cand, axis=1)]
            return vals[choice]

        return f

    def influence_radius(self, N, d):
        if self.layout == "grid":
            return 0.5 / grid_side(N, d)
        return None


def nearest_neighbor_algorithm(layout="grid", seed=0):
    return NearestNeighborAlgorithm(layout, seed)


class MultilinearAlgorithm(ReconstructionAlgorithm):
    """Tensor-product piecewise-linear interpolation on the uniform node grid.

    The grid has m nodes per axis including 0 and 1, with m the largest
    integer such that m^d <= N. Any leftover budget repeats the corner node.
    """

    name = "multilinear"

    def plan(self, N, d):
        return node_grid(N, d)[0]

    def reconstruct(self, points, values):
        points = np.asarray(points, dtype=float)
        d = points.shape[1]
        m = grid_side(len(points), d)
        vals = np.asarray(values, dtype=float)[: m ** d]
        if m == 1:
            c = float(vals[0])
            return lambda X: np.full(len(np.atleast_2d(X)), c)
        axis = np.linspace(0.0, 1.0, m)
        interp = RegularGridInterpolator((axis,) * d, vals.reshape((m,) * d), method="linear")

        def f(X):
            X = np.clip(np.atleast_2d(np.asarray(X, dtype=float)), 0.0, 1.0)
            return interp(X)

        return f

    def influence_radius(self, N, d):
        m = grid_side(N, d)
        return 1.0 if m == 1 else 1.0 / (m - 1)


def multilinear_interpolation_algorithm():
    return MultilinearAlgorithm()

"""Point configurations in [0,1]^d."""

import numpy as np

from .rng import stream


def grid_side(N, d):
    """Largest m with m**d <= N (at least 1)."""
    m = max(1, int(round(N ** (1.0 / d))))
    while m ** d > N:
        m -= 1
    while (m + 1) ** d <= N:
        m += 1
    return max(m, 1)


def _tensor(axis, d):
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def midpoint_grid(N, d):
    """Cell midpoints of the m^d grid, m = grid_side(N, d).

    When N is not a d-th power the remaining N - m^d points repeat the first
    grid point, so exactly N points are returned.
    """
    m = grid_side(N, d)
    pts = _tensor((np.arange(m) + 0.5) / m, d)
    extra = N - len(pts)
    if extra:
        pts = np.vstack([pts, np.repeat(pts[:1], extra, axis=0)])
    return pts


def node_grid(N, d):
    """Grid including the endpoints 0 and 1 (m nodes per axis), padded like midpoint_grid.

    With m = 1 the single node sits at the center.
    """
    m = grid_side(N, d)
    axis = np.array([0.5]) if m == 1 else np.linspace(0.0, 1.0, m)
    pts = _tensor(axis, d)
    extra = N - len(pts)
    if extra:
        pts = np.vstack([pts, np.repeat(pts[:1], extra, axis=0)])
    return pts, axis


def iid_points(N, d, seed):
    return stream(seed, N, d).random((N, d))


def clustered_points(N, d, seed, width=0.1):
    """iid points packed into the corner cube [0, width]^d."""
    return width * stream(seed, N, d, 1).random((N, d))


def coincident_points(N, d, where=0.5):
    return np.full((N, d), float(where))


def make_layout(kind, N, d, seed=0):
    if kind == "grid":
        return midpoint_grid(N, d)
    if kind == "iid":
        return iid_points(N, d, seed)
    if kind == "clustered":
        return clustered_points(N, d, seed)
    if kind == "coincident":
        return coincident_points(N, d)
    raise ValueError(f"unknown layout {kind!r}; expected grid, iid, clustered or coincident")

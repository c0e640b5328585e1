"""Averaging neural operators, the averaged-lifting encoder, and network embedding.

An ANO maps a grid function u to Q(v_L(x)) where v_0(x) = R(u(x), x) and
v_j(x) = relu(W_j v_{j-1}(x) + b_j + mean_y v_{j-1}(y)). R and Q are depth-2
networks; the grid mean plays the role of the average over D.
"""

from dataclasses import dataclass

import numpy as np

from ..relu import Network, evaluate, relu, stats
from .encoders import EncoderError, _box, default_eps0, estimate_b_prime
from .fields import grid_nodes


@dataclass(frozen=True)
class ANO:
    lift: Network
    hidden: tuple
    project: Network

    def __post_init__(self):
        if self.lift.d_in != 2:
            raise ValueError("the lifting network takes (u(x), x)")
        width = self.lift.d_out
        hidden = []
        for j, (W, b) in enumerate(self.hidden):
            W = np.array(W, dtype=float, ndmin=2)
            b = np.array(b, dtype=float).reshape(-1)
            if W.shape != (width, width) or b.shape != (width,):
                raise ValueError(f"hidden layer {j + 1} has shape {W.shape}/{b.shape}, channel width is {width}")
            W.setflags(write=False)
            b.setflags(write=False)
            hidden.append((W, b))
        object.__setattr__(self, "hidden", tuple(hidden))
        if self.project.d_in != width or self.project.d_out != 1:
            raise ValueError(f"projection must map R^{width} to R")

    @property
    def channels(self):
        return self.lift.d_out

    @property
    def depth(self):
        return len(self.hidden)


def ano_lift(Psi, U):
    """Channel field v_0 with shape (n, G, channels)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n, G = U.shape
    X = np.broadcast_to(grid_nodes(G), (n, G))
    pairs = np.stack([U.reshape(-1), X.reshape(-1)], axis=1)
    return evaluate(Psi.lift, pairs).reshape(n, G, -1)


def ano_apply(Psi, U):
    """Output grid functions, shape (n, G) (or (G,) for a single input)."""
    single = np.ndim(U) == 1
    V = ano_lift(Psi, U)
    for W, b in Psi.hidden:
        V = relu(V @ W.T + b + V.mean(axis=1, keepdims=True))
    n, G, c = V.shape
    out = evaluate(Psi.project, V.reshape(-1, c)).reshape(n, G)
    return out[0] if single else out


def ano_stats(Psi):
    """(depth, weight count, max weight magnitude) over lifting, hidden layers and projection."""
    sl, sq = stats(Psi.lift), stats(Psi.project)
    count = sl.weight_count + sq.weight_count
    sup = max(sl.weight_sup, sq.weight_sup)
    for W, b in Psi.hidden:
        count += int(np.count_nonzero(W) + np.count_nonzero(b))
        sup = max(sup, float(np.abs(W).max(initial=0)), float(np.abs(b).max(initial=0)))
    return Psi.depth, count, sup


def _pad(A, rows, cols):
    out = np.zeros((rows, cols))
    out[: A.shape[0], : A.shape[1]] = A
    return out


def _padv(b, n):
    out = np.zeros(n)
    out[: len(b)] = b
    return out


def embed_network_in_ano(psi, lift):
    """ANO equal to psi(mean_x lift(u(x), x)) for every u.

    The first affine map of psi is merged into the lifting; hidden layer 1 is
    pure averaging (W = 0, b = 0), which turns the field into the constant
    vector relu(A_1 E(u) + b_1); hidden layer j uses W_j = A_j - I, which on a
    constant field reproduces relu(A_j v + b_j); the projection packs the
    last two affine maps of psi. Channels are padded with zeros to a common
    width. psi of depth 2 gets one averaging layer and a projection that
    starts with the identity.
    """
    L = psi.depth
    if L < 2:
        raise ValueError("psi must have depth at least 2")
    if lift.depth != 2 or lift.d_out != psi.d_in:
        raise ValueError(f"lifting must be a depth-2 network into R^{psi.d_in}")
    layers = psi.layers
    A1, b1 = layers[0]
    (R1, c1), (R2, c2) = lift.layers
    carried = range(max(1, L - 2))
    width = max(layers[j][0].shape[0] for j in carried)
    lift_t = Network([(R1, c1), (_pad(A1 @ R2, width, R2.shape[1]), _padv(A1 @ c2 + b1, width))])
    hidden = [(np.zeros((width, width)), np.zeros(width))]
    for j in range(1, L - 2):
        A, b = layers[j]
        hidden.append((_pad(A, width, width) - np.eye(width), _padv(b, width)))
    if L == 2:
        A, b = layers[1]
        project = Network([(np.eye(width), np.zeros(width)), (_pad(A, A.shape[0], width), b)])
    else:
        (Ap, bp), (Al, bl) = layers[L - 2], layers[L - 1]
        project = Network([(_pad(Ap, Ap.shape[0], width), bp), (Al, bl)])
    return ANO(lift_t, tuple(hidden), project)


@dataclass(frozen=True)
class ANOEncoder:
    """E(u) = mean_x R(u(x), x), with the normalization folded into R's output layer.

    R is built from boundaries x_0 = -1 < x_1 < ... (between grid nodes); the
    four units of boundary m, with s = K (x - x_m), are
    relu(eta + B' + s), relu(s), relu(s + 2B'), relu(s + B'), combined with
    weights (1, -1, -1, 1). The combination is exactly eta where s >= 0 and
    exactly 0 where s <= -2B' (for |eta| <= B'), so R(eta, x) = eta * step(x)
    with step the piecewise-constant dual on the cells. K = 8 B' G keeps every
    grid node outside the transition bands.
    """

    R: Network
    cell_values: np.ndarray
    boundaries: np.ndarray
    b_prime: float
    achieved_eps: float
    target_eps: float
    lo: np.ndarray
    hi: np.ndarray
    error: float
    cells: int

    @property
    def d(self):
        return self.R.d_out

    @property
    def ok(self):
        return self.achieved_eps <= self.target_eps

    def network_encode(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        n, G = U.shape
        out = np.empty((n, self.d))
        rows = max(1, 65536 // G)
        for i in range(0, n, rows):
            blk = U[i: i + rows]
            X = np.broadcast_to(grid_nodes(G), blk.shape)
            v = evaluate(self.R, np.stack([blk.reshape(-1), X.reshape(-1)], axis=1))
            out[i: i + rows] = v.reshape(len(blk), G, -1).mean(axis=1)
        return out

    def __call__(self, U):
        """Same values as network_encode; rows with |u| <= 3B' use the closed form.

        Every grid node sits at least 1/(2G) from a boundary, so |s| >= 4B' there
        and each unit group is exactly eta or exactly 0 for |eta| <= 3B'. The
        closed form is then mean_x (eta * step(x)) plus the folded shift.
        """
        U = np.atleast_2d(np.asarray(U, dtype=float))
        A, b = self.R.layers[-1]
        out = U @ self.node_weights(U.shape[1]).T / U.shape[1] + b
        wild = np.abs(U).max(axis=1) > 3 * self.b_prime
        if wild.any():
            out[wild] = self.network_encode(U[wild])
        return out

    def node_weights(self, G):
        """Effective dual per grid node, shape (d, G): the folded output row times step(x)."""
        cells = np.searchsorted(self.boundaries, grid_nodes(G), side="right") - 1
        A, _ = self.R.layers[-1]
        groups = A[:, 0::4]
        return np.cumsum(groups, axis=1)[:, cells]

    def nominal(self, Z):
        return (np.asarray(Z, dtype=float)[..., : self.d] - self.lo) / (self.hi - self.lo)

    def preimage(self, lo, hi):
        return self.lo + (self.hi - self.lo) * np.asarray(lo), self.lo + (self.hi - self.lo) * np.asarray(hi)


def _cell_partition(G, cells):
    """Boundaries between node groups (midway between adjacent nodes), x_0 = -1 first."""
    groups = np.array_split(np.arange(G), cells)
    x = grid_nodes(G)
    bounds = [-1.0] + [0.5 * (x[g[0] - 1] + x[g[0]]) for g in groups[1:]]
    return np.array(bounds), groups


def _lift_network(step, bounds, b_prime, G, out_scale, out_shift):
    """Depth-2 network (eta, x) -> out_scale * eta * step_k(x) + out_shift."""
    K = 8.0 * b_prime * G
    m = len(bounds)
    A1 = np.zeros((4 * m, 2))
    c1 = np.zeros(4 * m)
    A1[0::4, 0] = 1.0
    A1[:, 1] = K
    for i, xm in enumerate(bounds):
        c1[4 * i: 4 * i + 4] = np.array([b_prime, 0.0, 2 * b_prime, b_prime]) - K * xm
    jumps = np.diff(step, axis=1, prepend=0.0) * out_scale[:, None]
    A2 = np.zeros((step.shape[0], 4 * m))
    for k, sgn in enumerate((1.0, -1.0, -1.0, 1.0)):
        A2[:, k::4] = sgn * jumps
    return Network([(A1, c1), (A2, out_shift)])


def _measure_eps(R, duals, b_prime, eta_points=65):
    """Grid mean over x of sup_eta |R - eta e*| + sup_eta |d_eta R - e*|, max over channels."""
    G = duals.shape[1]
    eta = np.linspace(-b_prime, b_prime, eta_points)
    x = grid_nodes(G)
    E, X = np.meshgrid(eta, x, indexing="ij")
    v = evaluate(R, np.stack([E.reshape(-1), X.reshape(-1)], axis=1)).reshape(eta_points, G, -1)
    target = eta[:, None, None] * duals.T[None]
    val = np.abs(v - target).max(axis=0)
    dv = np.diff(v, axis=0) / np.diff(eta)[:, None, None]
    der = np.abs(dv - duals.T[None]).max(axis=0)
    return float((val + der).mean(axis=0).max())


def ano_encoder_build(mu, d, B_prime=None, eps=None, start_cells=8, seed=0):
    """Averaged-lifting encoder whose lifting approximates (eta, x) -> eta e*_k(x).

    Cells double from ``start_cells`` until the measured integrated W^{1,inf}
    error is at most eps (default eps0 / (2d)) or every node has its own
    cell. The unnormalized lifting's error is what is measured; the result
    folds the map of the (shrunken) coefficient box onto [0,1]^d into R.
    """
    G = mu.G
    duals = mu.duals[:d]
    if B_prime is None:
        B_prime, _ = estimate_b_prime(mu, d, seed)
    eps0, _ = default_eps0(mu, d)
    target = eps0 / (2 * d) if eps is None else eps
    cells = min(start_cells, G)
    while True:
        bounds, groups = _cell_partition(G, cells)
        step = np.stack([duals[:, g].mean(axis=1) for g in groups], axis=1)
        R0 = _lift_network(step, bounds, B_prime, G, np.ones(d), np.zeros(d))
        achieved = _measure_eps(R0, duals, B_prime)
        if achieved <= target or cells >= G:
            break
        cells = min(2 * cells, G)
    try:
        lo, hi = _box(mu, d, achieved)
    except EncoderError:
        raise EncoderError(f"encoder error {achieved:.3g} leaves no room in the coefficient box", achieved)
    scale = 1.0 / (hi - lo)
    R = _lift_network(step, bounds, B_prime, G, scale, -lo * scale)
    return ANOEncoder(R, step, bounds, float(B_prime), achieved, float(target), lo, hi,
                      float(np.max(achieved * scale)), cells)

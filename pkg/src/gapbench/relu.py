"""Explicit ReLU networks as tuples of affine layers.

A network with layers (A_1, b_1), ..., (A_L, b_L) realizes

    x -> T_L(relu(T_{L-1}(... relu(T_1(x)) ...)))

with T_j(z) = A_j z + b_j. There is no activation after the last layer.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

_CHUNK = 8192


class NetworkDimensionError(ValueError):
    """Shapes do not chain, or an input has the wrong length."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


def relu(t):
    return np.maximum(t, 0.0)


@dataclass(frozen=True)
class NetworkStats:
    depth: int
    weight_count: int
    weight_sup: float


class Network:
    """Immutable ReLU network stored as dense (A_j, b_j) pairs."""

    __slots__ = ("_layers",)

    def __init__(self, layers):
        checked = []
        prev_out = None
        for j, (A, b) in enumerate(layers, start=1):
            A = np.array(A, dtype=float, ndmin=2)
            b = np.array(b, dtype=float).reshape(-1)
            if A.ndim != 2:
                raise NetworkDimensionError(f"layer {j}: weight matrix must be 2-D", layer=j)
            if A.shape[0] != b.shape[0]:
                raise NetworkDimensionError(
                    f"layer {j}: weight matrix has {A.shape[0]} rows but bias has {b.shape[0]} entries",
                    layer=j,
                )
            if prev_out is not None and A.shape[1] != prev_out:
                raise NetworkDimensionError(
                    f"layer {j}: expects {A.shape[1]} inputs but layer {j - 1} produces {prev_out}",
                    layer=j,
                )
            A.setflags(write=False)
            b.setflags(write=False)
            checked.append((A, b))
            prev_out = A.shape[0]
        if not checked:
            raise NetworkDimensionError("a network needs at least one layer")
        self._layers = tuple(checked)

    @property
    def layers(self):
        return self._layers

    @property
    def d_in(self):
        return self._layers[0][0].shape[1]

    @property
    def d_out(self):
        return self._layers[-1][0].shape[0]

    @property
    def depth(self):
        return len(self._layers)

    @property
    def widths(self):
        return [self.d_in] + [A.shape[0] for A, _ in self._layers]

    def __call__(self, x):
        return evaluate(self, x)

    def __repr__(self):
        return f"Network(widths={self.widths})"


def evaluate(net, x):
    """Evaluate ``net`` at one point (shape (d_in,)) or a batch (shape (n, d_in))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.d_in:
        raise NetworkDimensionError(
            f"layer 1: expects inputs of length {net.d_in}, got shape {x.shape}", layer=1
        )
    if X.shape[0] <= _CHUNK:
        out = _forward(net, X)
    else:
        out = np.concatenate([_forward(net, X[i:i + _CHUNK]) for i in range(0, X.shape[0], _CHUNK)])
    return out[0] if single else out


def _forward(net, X):
    h = X
    last = len(net.layers) - 1
    for j, (A, b) in enumerate(net.layers):
        h = h @ A.T + b
        if j < last:
            h = np.maximum(h, 0.0)
    return h


def stats(net):
    count = 0
    sup = 0.0
    for A, b in net.layers:
        count += int(np.count_nonzero(A)) + int(np.count_nonzero(b))
        if A.size:
            sup = max(sup, float(np.max(np.abs(A))))
        if b.size:
            sup = max(sup, float(np.max(np.abs(b))))
    return NetworkStats(depth=net.depth, weight_count=count, weight_sup=sup)


def affine_precompose(net, C, b):
    """Network realizing x -> net(C x + b); only the first layer changes."""
    C = np.array(C, dtype=float, ndmin=2)
    b = np.asarray(b, dtype=float).reshape(-1)
    if C.shape[0] != net.d_in or b.shape[0] != net.d_in:
        raise NetworkDimensionError(
            f"layer 1: precomposition maps into R^{C.shape[0]} but the network expects R^{net.d_in}",
            layer=1,
        )
    A1, b1 = net.layers[0]
    return Network([(A1 @ C, A1 @ b + b1)] + list(net.layers[1:]))


def homogeneous_rescale(net, R):
    """Network realizing net / R: first-layer weights and every bias are divided by R."""
    if not R > 0:
        raise ValueError(f"rescale factor must be positive, got {R}")
    if R == 1:
        return net
    layers = []
    for j, (A, b) in enumerate(net.layers):
        layers.append((A / R if j == 0 else A, b / R))
    return Network(layers)


def compose(outer, inner):
    """outer after inner, with one relu inserted at the seam.

    The realization is outer(relu(inner(x))) and the depth is the sum of depths.
    """
    if inner.d_out != outer.d_in:
        raise NetworkDimensionError(
            f"layer {inner.depth + 1}: outer expects {outer.d_in} inputs, inner produces {inner.d_out}",
            layer=inner.depth + 1,
        )
    return Network(list(inner.layers) + list(outer.layers))


def merge_affine(outer, inner):
    """outer after inner with no seam activation.

    The last affine map of ``inner`` is fused into the first map of ``outer``,
    so the depth is L(inner) + L(outer) - 1.
    """
    if inner.d_out != outer.d_in:
        raise NetworkDimensionError(
            f"layer {inner.depth}: outer expects {outer.d_in} inputs, inner produces {inner.d_out}",
            layer=inner.depth,
        )
    Ai, bi = inner.layers[-1]
    Ao, bo = outer.layers[0]
    fused = (Ao @ Ai, Ao @ bi + bo)
    return Network(list(inner.layers[:-1]) + [fused] + list(outer.layers[1:]))


def identity_network(d):
    return Network([(np.eye(d), np.zeros(d))])


def scale_output(net, c):
    """Multiply the last affine map by ``c``."""
    A, b = net.layers[-1]
    return Network(list(net.layers[:-1]) + [(c * A, c * b)])


def replicate_last_hidden(net, copies):
    """Repeat the last hidden layer ``copies`` times and tile the output row.

    The realization becomes copies * (net - b_L) + b_L; weight magnitudes are unchanged.
    """
    if net.depth < 2:
        raise NetworkDimensionError("replication needs at least one hidden layer")
    copies = int(copies)
    A_h, b_h = net.layers[-2]
    A_o, b_o = net.layers[-1]
    return Network(
        list(net.layers[:-2])
        + [(np.tile(A_h, (copies, 1)), np.tile(b_h, copies)), (np.tile(A_o, (1, copies)), b_o)]
    )


def _binary_min_level(m):
    """One depth-2 level taking m values to ceil(m/2) pairwise minima.

    min(a, b) = (relu(a+b) - relu(-a-b) - relu(a-b) - relu(b-a)) / 2; an unpaired
    last value passes through as relu(c) - relu(-c).
    """
    pairs = m // 2
    hidden = 4 * pairs + 2 * (m % 2)
    outs = pairs + m % 2
    A1 = np.zeros((hidden, m))
    A2 = np.zeros((outs, hidden))
    for i in range(pairs):
        a, b = 2 * i, 2 * i + 1
        rows = slice(4 * i, 4 * i + 4)
        A1[rows, a] = [1, -1, 1, -1]
        A1[rows, b] = [1, -1, -1, 1]
        A2[i, rows] = [0.5, -0.5, -0.5, -0.5]
    if m % 2:
        A1[-2, m - 1] = 1
        A1[-1, m - 1] = -1
        A2[-1, -2:] = [1, -1]
    return Network([(A1, np.zeros(hidden)), (A2, np.zeros(outs))])


def min_network(k, nonnegative=False):
    """Network with min(v_1, ..., v_k) as output.

    By default levels are fused with merge_affine, which is valid for all real
    inputs; the depth is ceil(log2 k) + 1 for k >= 2. With ``nonnegative`` the
    levels are joined through a relu seam instead (depth 2*ceil(log2 k)); this
    is only valid for nonnegative inputs, and then an exact zero input gives
    an exact zero output. Every weight has magnitude at most 1.
    """
    if k < 1:
        raise ValueError(f"min_network needs k >= 1, got {k}")
    if k == 1:
        return identity_network(1)
    join = compose if nonnegative else merge_affine
    net = _binary_min_level(k)
    m = (k + 1) // 2
    while m > 1:
        net = join(_binary_min_level(m), net)
        m = (m + 1) // 2
    return net


def min_tree_depth(k, nonnegative=False):
    if k == 1:
        return 1
    levels = math.ceil(math.log2(k))
    return 2 * levels if nonnegative else levels + 1


def network_to_dict(net):
    return {"layers": [{"A": A.tolist(), "b": b.tolist()} for A, b in net.layers]}


def network_from_dict(data):
    layers = []
    for j, layer in enumerate(data["layers"], start=1):
        A = np.array(layer["A"], dtype=float)
        if A.ndim == 1:
            A = A.reshape(len(A), 0) if A.size == 0 else A.reshape(1, -1)
        layers.append((A, layer["b"]))
    return Network(layers)


def dumps(net):
    return json.dumps(network_to_dict(net))


def loads(text):
    return network_from_dict(json.loads(text))

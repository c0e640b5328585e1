"""Approximation-space bookkeeping and localized bump networks.

A space is identified by (alpha, p, d, depth growth). Its rate bound is

    lambda = 1/p + (1/d) * alpha / (alpha + floor(ell_star / 2)).

The adversary's building block is a bump of height 1 supported in the cube
of half-side 1/M around a center y, realized exactly by a ReLU network whose
weights all have magnitude at most 1.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .relu import (
    Network,
    compose,
    evaluate,
    merge_affine,
    min_network,
    affine_precompose,
    stats,
)

DEFAULT_DEPTH_CAP = 64


class BudgetError(ValueError):
    """The requested bump cannot be realized within the given budgets."""

    def __init__(self, message, max_M=None):
        super().__init__(message)
        self.max_M = max_M


@dataclass(frozen=True)
class DepthGrowth:
    """Nondecreasing depth growth n -> ell(n) with values in N or infinity.

    kind is "constant" (value), "table" (values, then tail forever) or
    "affine" (floor(a*n + b)). ``offset`` shifts every value, which is how the
    reduced depth of an embedded finite-dimensional space is expressed.
    """

    kind: str
    value: float = 0
    values: tuple = ()
    tail: float = None
    a: float = 0.0
    b: float = 0.0
    offset: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "table", "affine"):
            raise ValueError(f"unknown depth growth kind {self.kind!r}")
        if self.kind == "table":
            vals = list(self.values)
            if not vals:
                raise ValueError("table depth growth needs at least one value")
            tail = vals[-1] if self.tail is None else self.tail
            if any(v2 < v1 for v1, v2 in zip(vals, vals[1:])) or tail < vals[-1]:
                raise ValueError("depth growth must be nondecreasing")
        if self.kind == "affine" and self.a < 0:
            raise ValueError("affine depth growth needs a >= 0")

    @classmethod
    def constant(cls, value):
        return cls("constant", value=value)

    @classmethod
    def table(cls, values, tail=None):
        return cls("table", values=tuple(values), tail=tail)

    @classmethod
    def affine(cls, a, b):
        return cls("affine", a=float(a), b=float(b))

    def shifted(self, k):
        return DepthGrowth(self.kind, self.value, self.values, self.tail, self.a, self.b, self.offset + k)

    def _base(self, n):
        if self.kind == "constant":
            return self.value
        if self.kind == "table":
            if n < 1:
                return self.values[0]
            if n <= len(self.values):
                return self.values[n - 1]
            return self.values[-1] if self.tail is None else self.tail
        return math.floor(self.a * n + self.b)

    def __call__(self, n):
        v = self._base(n)
        return v if math.isinf(v) else int(v) + self.offset

    @property
    def star(self):
        if self.kind == "constant":
            v = self.value
        elif self.kind == "table":
            v = self.values[-1] if self.tail is None else self.tail
        else:
            v = math.inf if self.a > 0 else math.floor(self.b)
        return v if math.isinf(v) else int(v) + self.offset

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = _num_out(self.value)
        elif self.kind == "table":
            out["values"] = list(self.values)
            if self.tail is not None:
                out["tail"] = _num_out(self.tail)
        else:
            out["a"], out["b"] = self.a, self.b
        if self.offset:
            out["offset"] = self.offset
        return out

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, (int, float, str)):
            return cls.constant(_num_in(data))
        kind = data["kind"]
        offset = int(data.get("offset", 0))
        if kind == "constant":
            g = cls.constant(_num_in(data["value"]))
        elif kind == "table":
            tail = data.get("tail")
            g = cls.table(data["values"], None if tail is None else _num_in(tail))
        elif kind == "affine":
            g = cls.affine(data["a"], data["b"])
        else:
            raise ValueError(f"unknown depth growth kind {kind!r}")
        return g.shifted(offset) if offset else g


def _num_out(v):
    return "inf" if math.isinf(v) else v


def _num_in(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        return int(v)
    return v


@dataclass(frozen=True)
class SpaceParams:
    alpha: float
    p: float
    d: int
    ell: DepthGrowth = field(default_factory=lambda: DepthGrowth.constant(3))

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.p >= 1:
            raise ValueError("p must be at least 1")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")

    def with_p(self, p):
        return SpaceParams(self.alpha, p, self.d, self.ell)

    def to_dict(self):
        return {"alpha": self.alpha, "p": _num_out(self.p), "d": self.d, "ell": self.ell.to_dict()}


def ell_star(ell):
    return ell.star


def depth_discount(star):
    """floor(ell_star / 2), infinite when ell_star is."""
    return math.inf if math.isinf(star) else star // 2


def rate_fraction(alpha, discount):
    return 0.0 if math.isinf(discount) else alpha / (alpha + discount)


def theoretical_rate(params, discount=None):
    """The rate bound lambda for the space; ``discount`` overrides floor(ell_star/2)."""
    star = params.ell.star
    if star < 3:
        raise ValueError(f"the rate bound needs ell_star >= 3, got {star}")
    if discount is None:
        discount = depth_discount(star)
    inv_p = 0.0 if math.isinf(params.p) else 1.0 / params.p
    return inv_p + rate_fraction(params.alpha, discount) / params.d


@dataclass(frozen=True)
class MembershipReport:
    ok: bool
    violations: tuple

    def __bool__(self):
        return self.ok


def sigma_membership(net, n, params):
    """Check W <= n, L <= ell(n) and weight_sup <= 1 for a scalar net on R^d."""
    if net.d_in != params.d or net.d_out != 1:
        raise ValueError(f"expected a network R^{params.d} -> R, got R^{net.d_in} -> R^{net.d_out}")
    s = stats(net)
    violations = []
    if s.weight_count > n:
        violations.append(f"weight_count={s.weight_count}>{n}")
    depth_cap = params.ell(n)
    if s.depth > depth_cap:
        violations.append(f"depth={s.depth}>{depth_cap}")
    if s.weight_sup > 1:
        violations.append(f"weight_sup={s.weight_sup:g}>1")
    return MembershipReport(not violations, tuple(violations))


@dataclass(frozen=True)
class BumpSpec:
    """d, steepness M, depth and width budgets, and the bump shape.

    shape "cross" is M*relu(1/M - |x|_1) (depth 3 in any dimension); shape
    "cube" is M*min_j relu(1/M - |x_j|), the tensor-product tent, whose min
    tree costs two layers per halving.
    """

    d: int
    M: float
    depth_budget: int
    width_budget: int = None
    shape: str = "cross"


def _abs_parts(d):
    # rows +e_j and -e_j: relu of these sum to |x_j|
    return np.vstack([np.eye(d), -np.eye(d)])


def _bump_core(d, M, shape):
    """Network whose scalar output is the pre-steepening bump (height 1/M).

    For "cross" the output is 1/M - |x|_1 before activation; the steepening
    stage applies the relu. For "cube" the output is min_j relu(1/M - |x_j|),
    already nonnegative.
    """
    inv = 1.0 / M
    if shape == "cross":
        return Network([(_abs_parts(d), np.zeros(2 * d)), (-np.ones((1, 2 * d)), [inv])])
    if shape == "cube":
        tents = Network([
            (_abs_parts(d), np.zeros(2 * d)),
            (-np.hstack([np.eye(d), np.eye(d)]), np.full(d, inv)),
        ])
        return compose(min_network(d, nonnegative=True), tents)
    raise ValueError(f"unknown bump shape {shape!r}")


def bump_base_depth(d, shape="cross"):
    return _bump_core(d, 2.0, shape).depth + 1


def _stage_count(M, depth_room, stage_cap=None):
    if M <= 1:
        return 1
    s = max(1, min(depth_room, max(1, math.ceil(math.log2(M)))))
    if stage_cap is not None:
        s = max(1, min(s, stage_cap))
    return s


def _stage_width(M, stages):
    if M <= 1:
        return 1
    w = max(1, math.ceil(M ** (1.0 / stages)))
    while w ** stages < M:
        w += 1
    while w > 1 and (w - 1) ** stages >= M:
        w -= 1
    return w


def bump_network(spec, stage_cap=None):
    """The bump of height 1 centered at the origin with support |x|_inf < 1/M.

    The factor M is spread over ``stages`` layers of duplicated channels: the
    height-1/M core is copied into w channels, each later all-ones layer sums
    w channels, and the output row sums the last w channels with a weight
    M / w^stages <= 1. Every weight has magnitude at most 1.
    """
    d, M = int(spec.d), float(spec.M)
    if M < 1:
        raise ValueError(f"steepness must be at least 1, got {M}")
    core = _bump_core(d, M, spec.shape)
    base = core.depth + 1
    if spec.depth_budget < base:
        raise BudgetError(
            f"depth budget {spec.depth_budget} below the minimum {base} for d={d}", max_M=0.0
        )
    stages = _stage_count(M, spec.depth_budget - core.depth, stage_cap)
    w = _stage_width(M, stages)
    if spec.width_budget is not None and w > spec.width_budget:
        raise BudgetError(
            f"steepness {M:g} needs width {w} > budget {spec.width_budget}",
            max_M=float(spec.width_budget) ** stages,
        )
    coeff = M / float(w) ** stages
    stage_layers = [(np.ones((w, 1)), np.zeros(w))]
    stage_layers += [(np.ones((w, w)), np.zeros(w)) for _ in range(stages - 1)]
    stage_layers.append((np.full((1, w), coeff), [0.0]))
    net = merge_affine(Network(stage_layers), core)
    return _cap_peak(net, np.zeros(d), 1.0)


def _cap_peak(net, center, target):
    """Nudge the output row down by a few ulps so the peak value is <= target."""
    A, b = net.layers[-1]
    c = float(A[0, 0])
    head = list(net.layers[:-1])
    for _ in range(64):
        out = Network(head + [(np.full(A.shape, c), b)])
        if abs(evaluate(out, center)[0]) <= abs(target):
            return out
        c = float(np.nextafter(c, 0.0))
    return out


def bump_lp_norm(d, M, p, shape="cross"):
    """Closed-form L^p(R^d) norm of the bump (support inside the domain)."""
    if math.isinf(p):
        return 1.0
    if shape == "cross":
        # integral of relu(1 - |s|_1)^p over R^d is 2^d Gamma(p+1) / Gamma(p+d+1)
        mass = 2.0 ** d * math.exp(math.lgamma(p + 1) - math.lgamma(p + d + 1))
    elif shape == "cube":
        # integral of min_j relu(1 - |s_j|)^p: the level set {theta > t} is a cube of side 2(1-t)
        mass = 2.0 ** d * d * math.exp(math.lgamma(p + 1) + math.lgamma(d) - math.lgamma(p + d + 1))
    else:
        raise ValueError(f"unknown bump shape {shape!r}")
    return (mass * M ** (-d)) ** (1.0 / p)


def adversarial_amplitude(params, M, kappa=1.0, discount=None):
    """kappa * M^(-alpha / (alpha + discount)), discount = floor(ell_star/2) by default."""
    if discount is None:
        discount = depth_discount(params.ell.star)
    return kappa * M ** (-rate_fraction(params.alpha, discount))


def construction_depth(params, d, shape="cross", depth_cap=DEFAULT_DEPTH_CAP):
    """Depth budget used for bumps in this space, and the steepening-stage cap."""
    star = params.ell.star
    capped = depth_cap if math.isinf(star) else min(int(star), depth_cap)
    half = depth_discount(star)
    stage_cap = max(1, depth_cap // 2 if math.isinf(half) else int(half))
    base = bump_base_depth(d, shape)
    return min(capped, base - 1 + stage_cap), stage_cap


def make_g(params, M, y, kappa=1.0, *, sign=1, discount=None, shape="cross",
           depth_cap=DEFAULT_DEPTH_CAP, width_budget=None):
    """amplitude * bump_M(x - y), optionally times a sign, as a Network.

    The depth is the largest allowed by the space at the network's own weight
    count, so the result lies in the space's Sigma_n for n = its weight count
    (and every larger n).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    d = params.d
    if y.shape[0] != d:
        raise ValueError(f"center has dimension {y.shape[0]}, expected {d}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("center must lie in [0,1]^d")
    amp = adversarial_amplitude(params, M, kappa, discount)
    if amp > 1:
        raise ValueError(f"amplitude {amp:g} > 1 cannot be placed in one output row")
    depth, stage_cap = construction_depth(params, d, shape, depth_cap)
    base = bump_base_depth(d, shape)
    while True:
        bump = bump_network(BumpSpec(d, M, depth, width_budget, shape), stage_cap=stage_cap)
        g = affine_precompose(bump, np.eye(d), -y)
        A, b = g.layers[-1]
        g = Network(list(g.layers[:-1]) + [(sign * amp * A, b)])
        g = _cap_peak(g, y, amp)
        s = stats(g)
        if params.ell(s.weight_count) >= s.depth or depth <= base:
            return g
        depth -= 1

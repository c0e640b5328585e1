"""Mollified ReLU and its shallow ReLU approximant in W^{1,inf}.

The mollifier is rho(t) = 3/4 (1 - t^2) on [-1, 1], so ||rho'||_{L^1} = 3/2
and the approximant with M breakpoints is within 2 * 3/2 / M = 3/M.
"""

import numpy as np

from ..relu import Network

RHO_PRIME_L1 = 1.5


def sigma_rho(x):
    """(value, derivative) of relu convolved with rho; quartic/cubic on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    t = np.clip(x, -1.0, 1.0)
    inner = -t ** 4 / 16 + 3 * t ** 2 / 8 + t / 2 + 3.0 / 16
    dinner = -t ** 3 / 4 + 3 * t / 4 + 0.5
    value = np.where(x >= 1, x, np.where(x <= -1, 0.0, inner))
    deriv = np.where(x >= 1, 1.0, np.where(x <= -1, 0.0, dinner))
    return value, deriv


def shallow_breakpoints(M):
    return -1.0 + 2.0 * np.arange(M + 1) / M


def shallow_w1inf_approximant(M):
    """sum_{m=1}^M c_m relu(x - x_m), c_m = sigma_rho'(x_m) - sigma_rho'(x_{m-1})."""
    if M < 1:
        raise ValueError("M must be positive")
    xs = shallow_breakpoints(int(M))
    _, dv = sigma_rho(xs)
    c = np.diff(dv)
    return Network([(np.ones((M, 1)), -xs[1:]), (c[None, :], [0.0])])


def w1inf_errors(net, lo=-2.0, hi=2.0, points=40001):
    """Sup error and finite-difference derivative error against sigma_rho on a grid."""
    from ..relu import evaluate

    x = np.linspace(lo, hi, points)
    v = evaluate(net, x[:, None])[:, 0]
    ref, _ = sigma_rho(x)
    mid = 0.5 * (x[1:] + x[:-1])
    dnet = np.diff(v) / np.diff(x)
    _, dref = sigma_rho(mid)
    return float(np.abs(v - ref).max()), float(np.abs(dnet - dref).max())

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapbench.adversary import QuadratureSpec, lp_errors
from gapbench.relu import stats
from gapbench.rng import stream
from gapbench.spaces import (
    BudgetError,
    BumpSpec,
    DepthGrowth,
    SpaceParams,
    adversarial_amplitude,
    bump_lp_norm,
    bump_network,
    make_g,
    sigma_membership,
    theoretical_rate,
)


def test_depth_growth_kinds():
    assert DepthGrowth.constant(3)(100) == 3
    t = DepthGrowth.table([3, 4, 6], tail=8)
    assert [t(n) for n in (1, 2, 3, 4, 100)] == [3, 4, 6, 8, 8]
    assert t.star == 8
    a = DepthGrowth.affine(0.5, 3)
    assert a(4) == 5 and math.isinf(a.star)
    assert DepthGrowth.constant(6).shifted(-3).star == 3


def test_depth_growth_rejects_decreasing_table():
    with pytest.raises(ValueError):
        DepthGrowth.table([4, 3])


@pytest.mark.parametrize("spec", [3, "inf", {"kind": "table", "values": [3, 5], "tail": 7},
                                  {"kind": "affine", "a": 1.0, "b": 2.0}, {"kind": "constant", "value": 6, "offset": -3}])
def test_depth_growth_dict_roundtrip(spec):
    g = DepthGrowth.from_dict(spec)
    assert DepthGrowth.from_dict(g.to_dict()) == g


@pytest.mark.parametrize("alpha,p,d,star,expected", [
    (2.0, 1.0, 2, 3, 1 + 1 / 3),
    (2.0, 2.0, 2, 3, 0.5 + 1 / 3),
    (2.0, 2.0, 4, 3, 0.5 + 0.25 * 2 / 3),
    (1.0, math.inf, 1, 8, 1 / 5),
])
def test_rate_closed_form(alpha, p, d, star, expected):
    assert theoretical_rate(SpaceParams(alpha, p, d, DepthGrowth.constant(star))) == pytest.approx(expected)


def test_rate_with_unbounded_depth_is_one_over_p():
    prm = SpaceParams(2.0, 2.0, 3, DepthGrowth.affine(1, 3))
    assert theoretical_rate(prm) == pytest.approx(0.5)


def test_rate_needs_depth_three():
    with pytest.raises(ValueError, match="ell_star >= 3"):
        theoretical_rate(SpaceParams(2.0, 2.0, 2, DepthGrowth.constant(2)))


def test_space_params_validation():
    with pytest.raises(ValueError):
        SpaceParams(0.0, 2.0, 2)
    with pytest.raises(ValueError):
        SpaceParams(1.0, 0.5, 2)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("M", [4, 8, 16, 32])
def test_bump_support_range_and_weights(d, M):
    net = bump_network(BumpSpec(d, M, depth_budget=3))
    assert stats(net).weight_sup <= 1
    rng = stream(d, M)
    X = rng.uniform(-2.0 / M, 2.0 / M, size=(20000, d))
    v = net(X)[:, 0]
    assert np.all(v >= 0) and np.all(v <= 1)
    assert np.all(v[np.abs(X).sum(axis=1) >= 1.0 / M] == 0.0)
    assert net(np.zeros(d))[0] == pytest.approx(1.0, abs=1e-12)
    assert net(np.zeros(d))[0] <= 1.0


@pytest.mark.parametrize("d,p", [(1, 1.0), (1, 2.0), (2, 1.0), (2, 2.0)])
def test_bump_lp_norm_matches_quadrature(d, p):
    M = 8.0
    net = bump_network(BumpSpec(d, M, depth_budget=3))
    y = np.full(d, 0.5)
    quad = QuadratureSpec(d).with_box(y - 1 / M, y + 1 / M, 2 / M)
    shifted = lambda X: net(X - y)[:, 0]  # noqa: E731
    got = lp_errors(shifted, lambda X: np.zeros(len(X)), [p], quad)[0]
    assert got == pytest.approx(bump_lp_norm(d, M, p), rel=1e-3)


def test_bump_depth_budget_error():
    with pytest.raises(BudgetError):
        bump_network(BumpSpec(2, 8, depth_budget=2))


def test_bump_width_budget_error_reports_max_steepness():
    with pytest.raises(BudgetError) as exc:
        bump_network(BumpSpec(1, 1000, depth_budget=3, width_budget=4))
    assert exc.value.max_M == 4.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, 3]), st.integers(3, 8))
def test_make_g_lies_in_its_space(seed, d, star):
    prm = SpaceParams(2.0, 2.0, d, DepthGrowth.constant(star))
    rng = stream(seed)
    M = float(rng.uniform(4, 64))
    y = rng.random(d)
    g = make_g(prm, M, y)
    assert sigma_membership(g, stats(g).weight_count, prm)
    assert g(y)[0] <= adversarial_amplitude(prm, M) + 1e-15
    assert g(y)[0] == pytest.approx(adversarial_amplitude(prm, M), rel=1e-12)


def test_membership_reports_violations():
    prm = SpaceParams(2.0, 2.0, 1, DepthGrowth.constant(3))
    g = make_g(prm, 16.0, [0.5])
    rep = sigma_membership(g, 1, prm)
    assert not rep and any("weight_count" in v for v in rep.violations)

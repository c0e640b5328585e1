import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapbench.baselines import (
    multilinear_interpolation_algorithm,
    nearest_neighbor_algorithm,
    zero_algorithm,
)
from gapbench.layouts import grid_side, make_layout, midpoint_grid, node_grid
from gapbench.rng import stream


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 4))
def test_grid_side_is_largest_power_below(N, d):
    m = grid_side(N, d)
    assert m ** d <= N < (m + 1) ** d


@pytest.mark.parametrize("kind", ["grid", "iid", "clustered", "coincident"])
@pytest.mark.parametrize("N,d", [(10, 1), (100, 2), (37, 3)])
def test_layouts_have_exact_count_inside_cube(kind, N, d):
    pts = make_layout(kind, N, d, seed=3)
    assert pts.shape == (N, d)
    assert np.all((pts >= 0) & (pts <= 1))


def test_layout_unknown_kind():
    with pytest.raises(ValueError, match="unknown layout"):
        make_layout("hexagonal", 4, 2)


def test_midpoint_grid_values():
    np.testing.assert_allclose(midpoint_grid(4, 1)[:, 0], [0.125, 0.375, 0.625, 0.875])
    pts, axis = node_grid(9, 2)
    np.testing.assert_allclose(axis, [0, 0.5, 1])
    assert len(pts) == 9


def test_zero_algorithm():
    alg = zero_algorithm()
    f = alg.reconstruct(alg.plan(16, 2), np.ones(16))
    assert np.all(f(stream(0).random((50, 2))) == 0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_nearest_neighbor_interpolates_samples(d):
    alg = nearest_neighbor_algorithm()
    pts = alg.plan(64, d)
    vals = stream(d).normal(size=64)
    f = alg.reconstruct(pts, vals)
    np.testing.assert_array_equal(f(pts[: grid_side(64, d) ** d]), vals[: grid_side(64, d) ** d])


def test_nearest_neighbor_ties_go_to_lowest_index():
    alg = nearest_neighbor_algorithm()
    pts = np.array([[0.25], [0.75]])
    f = alg.reconstruct(pts, np.array([1.0, 2.0]))
    assert f(np.array([[0.5]]))[0] == 1.0
    assert f(np.array([[0.6]]))[0] == 2.0


def test_nearest_neighbor_ignores_repeated_points():
    pts = np.array([[0.25], [0.75], [0.25]])
    f = nearest_neighbor_algorithm().reconstruct(pts, np.array([1.0, 2.0, 9.0]))
    assert f(np.array([[0.2]]))[0] == 1.0


def test_nearest_neighbor_brute_force():
    rng = stream(11)
    pts = rng.random((30, 2))
    vals = rng.normal(size=30)
    X = rng.random((500, 2))
    f = nearest_neighbor_algorithm("iid").reconstruct(pts, vals)
    dist = np.abs(X[:, None, :] - pts[None]).max(axis=2)
    np.testing.assert_array_equal(f(X), vals[np.argmin(dist, axis=1)])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_multilinear_reproduces_multilinear_functions(d):
    alg = multilinear_interpolation_algorithm()
    pts = alg.plan(200, d)
    coef = stream(d).normal(size=d + 1)

    def h(X):
        # affine plus the full product term, which is multilinear
        return coef[0] + X @ coef[1:] + np.prod(X, axis=1)

    f = alg.reconstruct(pts, h(pts))
    X = stream(d, 1).random((300, d))
    np.testing.assert_allclose(f(X), h(X), atol=1e-12)


def test_influence_radii():
    assert zero_algorithm().influence_radius(64, 2) == 0
    assert nearest_neighbor_algorithm().influence_radius(64, 2) == pytest.approx(1 / 16)
    assert nearest_neighbor_algorithm("iid").influence_radius(64, 2) is None
    assert multilinear_interpolation_algorithm().influence_radius(64, 2) == pytest.approx(1 / 7)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapbench.operators.ano import ANO, ano_apply, ano_encoder_build, ano_stats, embed_network_in_ano
from gapbench.operators.coverage import (
    ball_volume,
    collapsing_map,
    contraction_coverage_check,
    near_identity_norm,
    random_perturbation,
)
from gapbench.operators.encoders import (
    EncoderError,
    clopper_pearson,
    deeponet_encoder_build,
    default_eps0,
    dual_norm_on_span,
    pushforward_certify,
)
from gapbench.operators.fields import (
    GridFunction,
    barycentric_weights,
    compact_set_measure,
    cosine_basis,
    cosine_measure,
    decompose,
    gram_determinant,
    grid_nodes,
    sample_measure,
)
from gapbench.operators.mollify import (
    RHO_PRIME_L1,
    shallow_w1inf_approximant,
    sigma_rho,
    w1inf_errors,
)
from gapbench.relu import Network
from gapbench.rng import stream
from helpers import random_network


@pytest.fixture(scope="module")
def mu():
    return cosine_measure(G=128, J=16)


# ---------------------------------------------------------------- fields


def test_cosine_duals_are_biorthogonal(mu):
    assert mu.biorthogonality_error() < 1e-12


def test_grid_function_pairing():
    u = GridFunction(np.cos(2 * np.pi * grid_nodes(64)))
    assert u.G == 64 and abs(u.mean()) < 1e-14
    assert u.pair(u) == pytest.approx(0.5)


def test_decompose_recovers_coefficients(mu):
    U, Z = mu.sample(50, stream(1))
    y, xi = decompose(U, mu, 3)
    np.testing.assert_allclose(y, Z[:, :3], atol=1e-13)
    np.testing.assert_allclose(xi, Z[:, 3:] @ mu.basis[3:], atol=1e-13)


def test_coefficients_stay_in_their_intervals(mu):
    _, Z = mu.sample(2000, stream(2))
    assert np.all(Z >= mu.low) and np.all(Z <= mu.high)
    assert np.abs(mu.synthesize(Z)).max() <= mu.sup_bound() + 1e-12
    u, z = sample_measure(mu, stream(3))
    assert isinstance(u, GridFunction) and z.shape == (mu.J,)


def test_cosine_measure_needs_summable_decay():
    with pytest.raises(ValueError):
        cosine_measure(J=4, q=1.0)


def test_compact_set_draws_are_convex_combinations():
    G = 64
    x = grid_nodes(G)
    V = np.stack([np.ones(G), np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)])
    m = compact_set_measure(V)
    U, Z = m.sample(100, stream(4))
    np.testing.assert_allclose(U, barycentric_weights(Z) @ V, atol=1e-13)
    y, _ = decompose(U, m, 2)
    np.testing.assert_allclose(y, Z, atol=1e-12)


def test_compact_set_rejects_dependent_vertices():
    x = grid_nodes(32)
    with pytest.raises(ValueError, match="Gram"):
        compact_set_measure(np.stack([x, 2 * x, np.ones(32)]))


def test_gram_determinant_of_orthogonal_cosines():
    E, _ = cosine_basis(256, 3)
    funcs = np.vstack([np.ones(256), E])
    # Gram matrix is diag(1, 1/2, 1/2, 1/2)
    assert gram_determinant(funcs) == pytest.approx(0.125)


# ---------------------------------------------------------------- mollifier


def test_sigma_rho_joins_relu_smoothly():
    v, dv = sigma_rho(np.array([-1.0, 1.0]))
    np.testing.assert_allclose(v, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(dv, [0.0, 1.0], atol=1e-15)


def test_sigma_rho_derivative_matches_finite_difference():
    x = np.linspace(-1.5, 1.5, 3001)
    v, dv = sigma_rho(x)
    mid = 0.5 * (x[1:] + x[:-1])
    np.testing.assert_allclose(np.diff(v) / np.diff(x), sigma_rho(mid)[1], atol=1e-6)


@pytest.mark.parametrize("M", [4, 8, 32, 128])
def test_shallow_approximant_bound(M):
    sup_err, der_err = w1inf_errors(shallow_w1inf_approximant(M))
    bound = 2 * RHO_PRIME_L1 / M
    assert sup_err <= bound and der_err <= bound


# ---------------------------------------------------------------- encoders


def test_dual_norm_on_span_of_orthogonal_residual():
    E, _ = cosine_basis(64, 4)
    span = np.vstack([np.ones(64), E])
    # the residual pairs to zero with everything in the span
    res = np.cos(2 * np.pi * 10 * grid_nodes(64))
    assert dual_norm_on_span(res, span) == pytest.approx(0.0, abs=1e-9)
    assert dual_norm_on_span(2 * E[0], span) > 0.1


def test_cosine_moment_encoder_is_exact(mu):
    enc = deeponet_encoder_build(mu, 2)
    U, Z = mu.sample(100, stream(5))
    np.testing.assert_allclose(enc(U), enc.nominal(Z), atol=1e-12)
    lo, hi = enc.preimage(np.zeros(2), np.ones(2))
    np.testing.assert_allclose((lo, hi), (enc.lo, enc.hi))


def test_point_evaluation_encoder(mu):
    enc = deeponet_encoder_build(mu, 2, delta=0.05, functional_family="point_evals", d0=32)
    assert enc.delta <= 0.05
    U, Z = mu.sample(100, stream(6))
    np.testing.assert_allclose(enc(U), enc.nominal(Z), atol=1e-9)


def test_point_evaluation_encoder_too_few_points(mu):
    with pytest.raises(EncoderError) as exc:
        deeponet_encoder_build(mu, 2, delta=0.0, functional_family="point_evals", d0=4)
    assert exc.value.achieved > 0


def test_clopper_pearson_brackets_proportion():
    lo, hi = clopper_pearson(30, 100, 0.95)
    assert lo < 0.3 < hi
    assert clopper_pearson(0, 50)[0] == 0.0


def test_pushforward_of_exact_encoder_is_near_uniform(mu):
    rep = pushforward_certify(deeponet_encoder_build(mu, 2), mu, 5, 50000, seed=1)
    assert rep.passed and rep.c_hat > 0.8


def test_pushforward_rejects_too_few_samples(mu):
    with pytest.raises(ValueError):
        pushforward_certify(deeponet_encoder_build(mu, 2), mu, 10, 1000)


def test_default_eps0_uses_smallest_half_width(mu):
    eps0, r = default_eps0(mu, 2)
    assert r == pytest.approx(mu.high[1])
    assert eps0 == pytest.approx(min(0.5, r / 4))


# ---------------------------------------------------------------- ANO


@pytest.fixture(scope="module")
def ano_enc(mu):
    return ano_encoder_build(mu, 2)


def test_ano_encoder_reaches_target(ano_enc):
    assert ano_enc.ok and ano_enc.achieved_eps <= ano_enc.target_eps


def test_ano_fast_path_matches_network(mu, ano_enc):
    U, _ = mu.sample(200, stream(7))
    U[:3] *= 50  # exercise the network fallback
    np.testing.assert_allclose(ano_enc(U), ano_enc.network_encode(U), atol=1e-10)


def test_ano_encoder_tracks_coefficients(mu, ano_enc):
    U, Z = mu.sample(500, stream(8))
    err = np.abs(ano_enc(U) - ano_enc.nominal(Z)).max()
    assert err <= ano_enc.error + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 5))
def test_network_embeds_exactly_in_ano(seed, depth):
    rng = stream(seed)
    lift = random_network(rng, 2, 2, width=5, d_out=3)
    psi = random_network(rng, 3, depth, width=4)
    Psi = embed_network_in_ano(psi, lift)
    U = rng.normal(size=(6, 32))
    X = np.broadcast_to(grid_nodes(32), U.shape)
    E = lift(np.stack([U.reshape(-1), X.reshape(-1)], 1)).reshape(6, 32, 3).mean(axis=1)
    ref = psi(E)[:, 0]
    out = ano_apply(Psi, U)
    # the output field is constant in x and equals psi(E(u))
    assert np.all(np.abs(out - ref[:, None]) <= 1e-10 * (1 + np.abs(ref[:, None])))


def test_ano_shape_validation():
    lift = Network([(np.ones((2, 2)), np.zeros(2)), (np.ones((3, 2)), np.zeros(3))])
    proj = Network([(np.ones((1, 3)), [0.0])])
    with pytest.raises(ValueError):
        ANO(lift, ((np.eye(2), np.zeros(2)),), proj)
    depth, count, sup = ano_stats(ANO(lift, ((np.eye(3), np.zeros(3)),), proj))
    assert depth == 1 and count == 4 + 6 + 3 + 3 and sup == 1.0


# ---------------------------------------------------------------- coverage


def test_ball_volume():
    assert ball_volume(2, 1.0) == pytest.approx(np.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * np.pi * 8)


def test_perturbation_norm_is_bounded():
    F = random_perturbation(2, 0.1, stream(9))
    val, jac = near_identity_norm(F, np.zeros(2), np.ones(2), stream(10))
    assert val <= 0.1 + 1e-9 and jac <= 0.1 + 1e-6


def test_identity_covers_and_collapse_is_not_applicable():
    ident = contraction_coverage_check(lambda Y: Y, np.zeros(2), np.ones(2), samples=100000)
    assert ident.verdict == "PASS" and ident.bins_hit == ident.bins_total > 0
    assert contraction_coverage_check(collapsing_map, np.zeros(2), np.ones(2)).verdict == "NOT_APPLICABLE"


def test_coverage_fails_when_mass_leaves_the_ball():
    # the identity is admissible, but 300 samples leave bins empty
    rep = contraction_coverage_check(lambda Y: Y, np.zeros(2), np.ones(2), samples=300)
    assert rep.verdict == "FAIL" and rep.failing_bins

"""End-to-end acceptance checks at full size; each prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from gapbench import harness
from gapbench.adversary import QuadratureSpec, lp_errors, run_adversary_multi
from gapbench.baselines import zero_algorithm
from gapbench.errors import PROTO_MALFORMED, PROTO_NONFINITE, PROTO_POINTCOUNT, ProtocolError
from gapbench.operators.ano import ano_apply, ano_encoder_build, embed_network_in_ano
from gapbench.operators.fields import cosine_measure
from gapbench.protocol import ExternalAlgorithm, ExternalAlgorithmSpec, echo_zero_command
from gapbench.relu import affine_precompose, compose, homogeneous_rescale, merge_affine, min_network, stats
from gapbench.rng import stream
from gapbench.spaces import BumpSpec, DepthGrowth, SpaceParams, bump_network, make_g, sigma_membership
from helpers import random_network, relerr

pytestmark = pytest.mark.slow


def _elapsed(start):
    return time.perf_counter() - start


def test_criterion_01_void(record_criterion):
    t0 = time.perf_counter()
    report = harness.run({"kind": "void-check"}, threads=1)
    res = report["results"]
    worst = min(r["probability"] for r in res["table"])
    ex = res["exact_case"]
    ok = report["verdict"] == "PASS" and _elapsed(t0) < 60
    record_criterion(1, "void probability >= 0.5 - 0.01; d=1 N=4 within 3 stderr of 0.5", ok,
                     f"{len(res['table'])} configs, min {worst:.4f}; exact case {ex['probability']:.4f}"
                     f"+-{ex['stderr']:.4f}; {_elapsed(t0):.1f}s")
    assert ok


def test_criterion_02_network_algebra(record_criterion):
    rng = stream(2024)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 5))
        net = random_network(rng, d, int(rng.integers(1, 6)))
        X = rng.normal(size=(8, d))
        R = float(rng.uniform(0.1, 10))
        worst = max(worst, relerr(homogeneous_rescale(net, R)(X), net(X) / R))
        C, b = rng.normal(size=(d, 3)), rng.normal(size=d)
        Y = rng.normal(size=(8, 3))
        worst = max(worst, relerr(affine_precompose(net, C, b)(Y), net(Y @ C.T + b)))
        inner = random_network(rng, 3, int(rng.integers(1, 4)), d_out=d)
        worst = max(worst, relerr(compose(net, inner)(Y), net(np.maximum(inner(Y), 0))))
        worst = max(worst, relerr(merge_affine(net, inner)(Y), net(inner(Y))))
    V = stream(7).normal(size=(10000, 9)) * 5
    min_err = float(np.abs(min_network(9)(V)[:, 0] - V.min(axis=1)).max())
    ok = worst <= 1e-12 and min_err <= 1e-12
    record_criterion(2, "network algebra identities within 1e-12; min_network equals brute-force min", ok,
                     f"max rel err {worst:.2e}, min err {min_err:.2e}")
    assert ok


def test_criterion_03_bump_contract(record_criterion):
    problems = []
    ratios = {}
    for d in (1, 2):
        for p in (1.0, 2.0, math.inf):
            scaled = []
            for M in (4, 8, 16, 32):
                net = bump_network(BumpSpec(d, M, depth_budget=3))
                y = np.full(d, 0.5)
                X = stream(d, M).uniform(-2.0 / M, 2.0 / M, size=(20000, d))
                v = net(X)[:, 0]
                outside = np.abs(X).sum(axis=1) >= 1.0 / M
                if np.any(v[outside] != 0) or v.min() < 0 or v.max() > 1 or net(np.zeros(d))[0] != 1.0:
                    problems.append(f"support/range d={d} M={M}")
                quad = QuadratureSpec(d).with_box(y - 1 / M, y + 1 / M, 2 / M)
                norm = lp_errors(lambda Z: net(Z - y)[:, 0], lambda Z: np.zeros(len(Z)), [p], quad)[0]
                scaled.append(norm * (M ** (d / p) if not math.isinf(p) else 1.0))
            ratios[(d, p)] = max(scaled) / min(scaled)
        prm = SpaceParams(2.0, 2.0, d, DepthGrowth.constant(3))
        for M in (4, 8, 16, 32):
            g = make_g(prm, M, np.full(d, 0.5))
            if not sigma_membership(g, stats(g).weight_count, prm):
                problems.append(f"membership d={d} M={M}")
    worst = max(ratios.values())
    ok = not problems and worst <= 1.1
    record_criterion(3, "bump support/range exact, L^p scaling ratio <= 1.1, membership", ok,
                     f"max ratio {worst:.4f}" + (f"; {problems}" if problems else ""))
    assert ok


@pytest.fixture(scope="module")
def finite_gap_report():
    t0 = time.perf_counter()
    report = harness.run({"kind": "finite-gap", "params": {"alpha": 2.0, "p": [1.0, 2.0], "d": 2, "ell": 3},
                          "algorithms": ["zero", "nearest-neighbor", "multilinear"]}, threads=0)
    return report, _elapsed(t0)


def test_criterion_04_zero_rate_reproduction(finite_gap_report, record_criterion):
    report, secs = finite_gap_report
    blocks = [b for b in report["results"]["curves"] if b["algorithm"] == "zero"]
    details = [f"p={b['p']}: beta_hat {b['reproduction']['beta_hat']:.4f} vs {b['rate']:.4f}" for b in blocks]
    ok = len(blocks) == 2 and all(b["reproduction"]["verdict"] == "PASS" for b in blocks)
    ok = ok and all(b["certificate"]["fit"]["resamples"] > 0 for b in blocks)
    ok = ok and [r["N"] for r in blocks[0]["certificate"]["curve"]["rows"]] == [2 ** k for k in range(4, 13)]
    ok = ok and all(r["trials"] == 200 for r in blocks[0]["certificate"]["curve"]["rows"])
    record_criterion(4, "zero-algorithm fitted rate within 0.05 of the closed form", ok,
                     "; ".join(details) + f"; shared run {secs:.0f}s")
    assert ok


def test_criterion_05_baseline_gap_certificates(finite_gap_report, record_criterion):
    report, secs = finite_gap_report
    blocks = [b for b in report["results"]["curves"] if b["algorithm"] != "zero"]
    details = [f"{b['algorithm']} p={b['p']}: {b['certificate']['beta_hat']:.3f} "
               f"(ci_high {b['certificate']['ci_high']:.3f}) <= {b['rate']:.3f}+0.15" for b in blocks]
    ok = len(blocks) == 4 and all(b["certificate"]["verdict"] == "PASS" for b in blocks)
    ok = ok and harness.verify_report(report) and secs < 600 + 300
    record_criterion(5, "nearest-neighbor and multilinear certified: beta_hat <= rate + 0.15, CI high <= rate + 0.25",
                     ok, "; ".join(details))
    assert ok


def test_criterion_06_shallow_approximant(record_criterion):
    report = harness.run({"kind": "appendix-check"}, threads=1)
    rows = report["results"]["table"]
    details = ", ".join(f"M={r['M']}: {r['sup_error']:.4f}/{r['derivative_error']:.4f}<= {r['bound']:.4f}"
                        for r in rows)
    ok = report["verdict"] == "PASS" and report["results"]["strictly_decreasing"]
    record_criterion(6, "shallow approximant within 3/M + 1e-3, strictly decreasing", ok, details)
    assert ok


def test_criterion_07_contraction_coverage(record_criterion):
    t0 = time.perf_counter()
    report = harness.run({"kind": "contraction-check"}, threads=1)
    res = report["results"]
    passed = sum(r["verdict"] == "PASS" for r in res["perturbations"])
    ok = report["verdict"] == "PASS" and passed == 100 and _elapsed(t0) < 120
    ok = ok and all(r["norm_value"] <= r["eps0"] and r["norm_jacobian"] <= r["eps0"] for r in res["perturbations"])
    record_criterion(7, "near-identity maps cover V0 with density >= c0; collapse NOT_APPLICABLE", ok,
                     f"{passed}/100 perturbations pass; collapse {[c['verdict'] for c in res['collapsing']]}; "
                     f"{_elapsed(t0):.1f}s")
    assert ok


def test_criterion_08_encoder_certification(record_criterion):
    t0 = time.perf_counter()
    report = harness.run({"kind": "encoder-check"}, threads=1)
    enc = {e["encoder"]: e for e in report["results"]["encoders"]}
    cm, pe, ano = enc["cosine_moments"], enc["point_evals"], enc["ano"]
    ok = (report["verdict"] == "PASS" and cm["c_hat"] >= 0.8 and cm["samples"] == 10 ** 6
          and pe["delta_hat"] <= 0.05 and pe["c_lower"] > 0 and ano["c_hat"] > 0
          and ano["achieved_eps"] <= ano["target_eps"] and _elapsed(t0) < 300)
    record_criterion(8, "pushforward domination for cosine-moment, point-evaluation and ANO encoders", ok,
                     f"cosine c_hat {cm['c_hat']:.3f}; point evals delta {pe['delta_hat']:.2g} c_lower "
                     f"{pe['c_lower']:.3f}; ANO eps {ano['achieved_eps']:.2e} <= {ano['target_eps']:.2e}, "
                     f"c_hat {ano['c_hat']:.3f}; {_elapsed(t0):.1f}s")
    assert ok


def test_criterion_09_ano_embedding(record_criterion):
    mu = cosine_measure(G=256, J=32)
    enc = ano_encoder_build(mu, 2)
    rng = stream(99)
    worst = 0.0
    for i in range(100):
        psi = random_network(rng, 2, int(rng.integers(2, 6)), width=6)
        Psi = embed_network_in_ano(psi, enc.R)
        U, _ = mu.sample(1, stream(99, i))
        ref = psi(enc(U))[0, 0]
        out = ano_apply(Psi, U)[0]
        worst = max(worst, float(np.max(np.abs(out - ref)) / (1 + abs(ref))))
    ok = worst <= 1e-10
    record_criterion(9, "ANO embedding equals psi(E(u)) within 1e-10 relative", ok, f"max rel err {worst:.2e}")
    assert ok


def test_criterion_10_operator_gap(record_criterion):
    t0 = time.perf_counter()
    report = harness.run({"kind": "operator-gap"}, threads=0)
    res = report["results"]
    zero = next(b for b in res["curves"] if b["algorithm"] == "zero")
    nn = next(b for b in res["curves"] if b["algorithm"] != "zero")
    rate = 0.5 + 0.25 * 2 / (2 + (6 - 1) // 2)
    ok = (report["verdict"] == "PASS" and abs(zero["rate"] - rate) < 1e-12
          and abs(zero["reproduction"]["beta_hat"] - rate) <= 0.07
          and nn["certificate"]["beta_hat"] <= rate + 0.15
          and res["ceiling"]["rate"] == [0.5] and res["lp_below_sup_every_trial"]
          and report["config"]["measure"]["G"] == 256 and report["config"]["mc_inputs"] == 2000
          and _elapsed(t0) < 900)
    record_criterion(10, "operator gap at d=4, p=2: zero within 0.07, nearest-neighbor <= rate + 0.15; ceiling 1/p",
                     ok, f"rate {rate:.4f}; zero {zero['reproduction']['beta_hat']:.4f}; "
                         f"{nn['algorithm']} {nn['certificate']['beta_hat']:.4f}; ceiling 1/p = 0.5; "
                         f"{_elapsed(t0):.0f}s")
    assert ok


def test_criterion_11_protocol_conformance(record_criterion):
    import sys
    from pathlib import Path

    prm = SpaceParams(2.0, 2.0, 2, DepthGrowth.constant(3))
    ext = ExternalAlgorithm(ExternalAlgorithmSpec(echo_zero_command(), name="echo-zero"))
    same = True
    try:
        for N in (16, 64, 256):
            a = run_adversary_multi(zero_algorithm(), N, prm, [1.0, 2.0], 20, seed=11)
            b = run_adversary_multi(ext, N, prm, [1.0, 2.0], 20, seed=11)
            same = same and all(np.array_equal(a[p].errors, b[p].errors) and not b[p].failures for p in a)
    finally:
        ext.close()
    bad = str(Path(__file__).parent / "fixtures" / "bad_client.py")
    codes = {}
    for fault in ("nan", "short", "garbage"):
        alg = ExternalAlgorithm(ExternalAlgorithmSpec((sys.executable, bad, fault), timeout=5.0))
        try:
            pts = alg.plan(4, 2)
            alg.reconstruct(pts, np.zeros(4))(np.zeros((2, 2)))
        except ProtocolError as exc:
            codes[fault] = exc.code
        finally:
            alg.close()
    ok = same and codes == {"nan": PROTO_NONFINITE, "short": PROTO_POINTCOUNT, "garbage": PROTO_MALFORMED}
    record_criterion(11, "echo-zero client reproduces the zero curve exactly; bad clients raise the codes", ok,
                     f"identical curves: {same}; codes {codes}")
    assert ok

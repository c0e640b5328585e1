"""Config-driven experiment runner.

A config is a TOML or JSON document with a ``kind`` and kind-specific keys
(see KINDS and ``describe``). ``load_config`` fills defaults and validates;
``run`` executes and returns a report dict; ``write_outputs`` emits
report.json, and for curve experiments curve.csv and plotdata.csv.
"""

import copy
import hashlib
import json
import math
import os
import platform
import subprocess
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import (
    ErrorCurve,
    certify_gap,
    fit_rate,
    run_adversary_multi,
    revalidate_certificate,
    void_probability_estimate,
)
from .baselines import multilinear_interpolation_algorithm, nearest_neighbor_algorithm, zero_algorithm
from .errors import ConfigError
from .layouts import make_layout
from .protocol import ExternalAlgorithm, ExternalAlgorithmSpec, ExternalOperatorAlgorithm
from .rng import stream
from .spaces import DepthGrowth, SpaceParams, theoretical_rate

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_PROTOCOL = 0, 1, 2, 3

KINDS = {
    "void-check": (
        "Monte-Carlo probability that a uniform center y has no sample point within sup distance "
        "N^(-1/d)/4, over grid, iid, clustered and coincident layouts. The void lemma guarantees "
        "at least 1/2 for every configuration of N points."
    ),
    "finite-gap": (
        "Randomized bump adversary against reconstruction algorithms on [0,1]^d. Fits the decay "
        "rate of the expected L^p error and certifies it against the sampling-rate upper bound "
        "beta* <= 1/p + (1/d) alpha/(alpha + floor(ell*/2)) for the ReLU approximation space "
        "(requires ell* >= 3)."
    ),
    "operator-gap": (
        "Operator-learning adversary: finite-dimensional bumps composed with a DeepONet or "
        "averaging-operator encoder. Certifies fitted rates against "
        "1/p + (1/d) alpha/(alpha + discount) and reports the dimension-free ceiling "
        "beta* <= 1/p (requires ell* >= 4)."
    ),
    "encoder-check": (
        "Pushforward certificate E_# mu >= c Unif([0,1]^d) for the cosine-moment and "
        "point-evaluation DeepONet encoders and the averaged-lifting ANO encoder."
    ),
    "appendix-check": (
        "Shallow ReLU approximation of the mollified ReLU in W^{1,inf}: measured sup and "
        "derivative errors against the bound 2 ||rho'||_{L^1} / M = 3/M."
    ),
    "contraction-check": (
        "Coverage by near-identity maps: for ||F - id||_{W^{1,inf}} <= eps0 = min(1/2, r/4) the "
        "image of Unif(V) covers B(y0, r/4) with density >= c0 = (|V0|/|V|)(2/3)^d; a "
        "collapsing map must report NOT_APPLICABLE."
    ),
}


def _pow2(lo, hi):
    return [2 ** k for k in range(lo, hi + 1)]


DEFAULTS = {
    "void-check": {
        "d_values": [1, 2, 3], "N_values": [10, 100, 1000],
        "layouts": ["grid", "iid", "clustered", "coincident"],
        "trials": 100000, "tolerance": 0.01,
    },
    "finite-gap": {
        "params": {"alpha": 2.0, "p": [1.0, 2.0], "d": 2, "ell": 3},
        "N": _pow2(4, 12), "trials": 200, "kappa": 1.0,
        "algorithms": ["zero", "nearest-neighbor", "multilinear"],
        "slack": 0.15, "ci_slack": 0.25, "reproduce_tolerance": 0.05,
    },
    "operator-gap": {
        "params": {"alpha": 2.0, "p": 2.0, "d": 4, "ell": 6},
        "measure": {"G": 256, "J": 32, "s": 1.0, "q": 2.0},
        "encoder": {"kind": "deeponet", "family": "cosine_moments", "d0": 64, "delta": 0.05},
        "N": _pow2(4, 10), "trials": 200, "mc_inputs": 2000, "kappa": 1.0,
        "algorithms": ["zero", "nearest-neighbor"],
        "slack": 0.15, "reproduce_tolerance": 0.07, "uniform_p": [1, 2, 4, 8],
    },
    "encoder-check": {
        "measure": {"G": 256, "J": 32, "s": 1.0, "q": 2.0},
        "d": 2, "bins": 10, "samples": 1000000, "ano_samples": 4000,
        "encoders": ["cosine_moments", "point_evals", "ano"],
        "d0": 64, "delta": 0.05, "min_c_hat": 0.8,
    },
    "appendix-check": {"M_values": [8, 32, 128], "slack": 1e-3},
    "contraction-check": {"d_values": [1, 2], "perturbations": 50, "samples": 200000, "bins": 20},
}

COMMON = {"seed": 0, "threads": 1, "output": "gapbench-out"}
# keys that do not change results and stay out of the config hash
UNHASHED = ("output", "threads")


def suggest(name, options):
    import difflib

    close = difflib.get_close_matches(str(name), list(options), n=3, cutoff=0.4)
    return close or list(options)


def list_kinds():
    return sorted(KINDS)


def describe(kind):
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; did you mean: {', '.join(suggest(kind, KINDS))}")
    lines = [f"{kind}: {KINDS[kind]}", "", "defaults:"]
    lines += [f"  {k} = {json.dumps(v)}" for k, v in DEFAULTS[kind].items()]
    lines += [f"  {k} = {json.dumps(v)}" for k, v in COMMON.items()]
    return "\n".join(lines)


# ---------------------------------------------------------------- config

def read_config(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _depth_growth(spec):
    return DepthGrowth.from_dict(spec)


def _p_list(p):
    ps = p if isinstance(p, list) else [p]
    return [math.inf if (isinstance(v, str) and v.lower() in ("inf", "infinity")) else float(v) for v in ps]


def load_config(data):
    """Fill defaults and validate; raises ConfigError listing every problem."""
    if isinstance(data, (str, Path)):
        data = read_config(data)
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; did you mean: {', '.join(suggest(kind, KINDS))}")
    cfg = _merge(_merge(COMMON, DEFAULTS[kind]), data)
    problems = []
    known = set(COMMON) | set(DEFAULTS[kind]) | {"kind"}
    for k in cfg:
        if k not in known:
            problems.append(f"unknown key {k!r} for kind {kind}; did you mean: {', '.join(suggest(k, known))}")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        problems.append("seed must be a nonnegative integer")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 0:
        problems.append("threads must be a nonnegative integer (0 = auto)")
    check = _VALIDATORS[kind]
    problems += check(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _space_problems(prm, min_star, clause):
    problems = []
    try:
        ell = _depth_growth(prm.get("ell", 3))
    except (ValueError, KeyError, TypeError) as exc:
        return [f"params.ell is not a valid depth growth: {exc}"]
    alpha = prm.get("alpha")
    if not isinstance(alpha, (int, float)) or not alpha > 0:
        problems.append("params.alpha must be positive")
    d = prm.get("d")
    if not isinstance(d, int) or d < 1:
        problems.append("params.d must be a positive integer")
    try:
        ps = _p_list(prm.get("p"))
        if any(not p >= 1 for p in ps):
            problems.append("params.p must be in [1, inf]")
    except (TypeError, ValueError):
        problems.append("params.p must be a number, 'inf', or a list of them")
    if ell.star < min_star:
        problems.append(f"ell* = {ell.star} violates the depth-growth condition {clause} "
                        f"(non-decreasing depth growth with ell* >= {min_star})")
    return problems


def _n_problems(cfg, min_trials=30):
    problems = []
    Ns = cfg["N"]
    if not isinstance(Ns, list) or len(Ns) < 3 or any(not isinstance(n, int) or n < 1 for n in Ns):
        problems.append("N must be a list of at least three positive integers")
    elif any(b <= a for a, b in zip(Ns, Ns[1:])):
        problems.append("N must be strictly increasing")
    if not isinstance(cfg["trials"], int) or cfg["trials"] < min_trials:
        problems.append(f"trials must be an integer >= {min_trials}")
    if not cfg.get("kappa", 1) > 0:
        problems.append("kappa must be positive")
    if cfg.get("slack", 0) < 0:
        problems.append("slack must be nonnegative")
    return problems


def _algo_problems(cfg, names):
    problems = []
    for a in cfg["algorithms"]:
        if isinstance(a, str):
            if a not in names:
                problems.append(f"unknown algorithm {a!r}; did you mean: {', '.join(suggest(a, names))}")
        elif isinstance(a, dict):
            if not isinstance(a.get("command"), list) or not a["command"]:
                problems.append("an external algorithm needs a nonempty 'command' list")
        else:
            problems.append(f"algorithm entries must be names or tables, got {a!r}")
    return problems


def _validate_void(cfg):
    problems = []
    if any(not isinstance(d, int) or d < 1 for d in cfg["d_values"]):
        problems.append("d_values must be positive integers")
    if any(not isinstance(n, int) or n < 1 for n in cfg["N_values"]):
        problems.append("N_values must be positive integers")
    for lay in cfg["layouts"]:
        if lay not in ("grid", "iid", "clustered", "coincident"):
            problems.append(f"unknown layout {lay!r}")
    if not isinstance(cfg["trials"], int) or cfg["trials"] < 1:
        problems.append("trials must be a positive integer")
    return problems


def _validate_finite(cfg):
    problems = _space_problems(cfg["params"], 3, "ℓ* ≥ 3")
    problems += _n_problems(cfg)
    problems += _algo_problems(cfg, FINITE_ALGORITHMS)
    return problems


def _validate_operator(cfg):
    prm = cfg["params"]
    problems = _space_problems(prm, 4, "ℓ* ≥ 4")
    problems += _n_problems(cfg)
    problems += _algo_problems(cfg, OPERATOR_ALGORITHMS)
    enc = cfg["encoder"]
    meas = cfg["measure"]
    if enc.get("kind") not in ("deeponet", "ano"):
        problems.append("encoder.kind must be deeponet or ano")
    if enc.get("family", "cosine_moments") not in ("cosine_moments", "point_evals"):
        problems.append("encoder.family must be cosine_moments or point_evals")
    try:
        if any(math.isinf(p) for p in _p_list(prm.get("p"))):
            problems.append("operator errors are Bochner L^p norms; p must be finite")
    except (TypeError, ValueError):
        pass
    if enc.get("kind") == "deeponet" and not problems:
        star = _depth_growth(prm.get("ell", 3)).star
        if star - 3 < 3:
            problems.append(f"deeponet instances use depth ell - 3, which must host a depth-3 bump: "
                            f"need ell* >= 6, got {star}")
    if isinstance(prm.get("d"), int) and prm["d"] > meas.get("J", 0):
        problems.append("params.d must not exceed measure.J")
    if cfg["mc_inputs"] < 1000:
        problems.append("mc_inputs must be at least 1000")
    if meas.get("q", 2) <= 1:
        problems.append("measure.q must exceed 1")
    return problems


def _validate_encoder(cfg):
    problems = []
    for e in cfg["encoders"]:
        if e not in ("cosine_moments", "point_evals", "ano"):
            problems.append(f"unknown encoder {e!r}")
    if cfg["bins"] ** cfg["d"] * 20 > cfg["samples"]:
        problems.append("samples must give at least 20 per bin")
    if cfg["bins"] ** cfg["d"] * 20 > cfg["ano_samples"]:
        problems.append("ano_samples must give at least 20 per bin")
    return problems


def _validate_appendix(cfg):
    return [] if all(isinstance(m, int) and m >= 1 for m in cfg["M_values"]) else ["M_values must be positive integers"]


def _validate_contraction(cfg):
    return [] if all(d in (1, 2, 3) for d in cfg["d_values"]) else ["d_values must be in {1, 2, 3}"]


_VALIDATORS = {
    "void-check": _validate_void,
    "finite-gap": _validate_finite,
    "operator-gap": _validate_operator,
    "encoder-check": _validate_encoder,
    "appendix-check": _validate_appendix,
    "contraction-check": _validate_contraction,
}


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg):
    hashed = {k: v for k, v in cfg.items() if k not in UNHASHED}
    return hashlib.sha256(canonical_json(hashed).encode()).hexdigest()


def resolve_threads(cfg):
    env = os.environ.get("GAPBENCH_THREADS")
    n = int(env) if env not in (None, "") else int(cfg.get("threads", 1))
    return (os.cpu_count() or 1) if n == 0 else max(1, n)


def version_string():
    """git describe of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"], cwd=Path(__file__).parent,
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ---------------------------------------------------------------- algorithms

FINITE_ALGORITHMS = ("zero", "nearest-neighbor", "nearest-neighbor-iid", "multilinear")
OPERATOR_ALGORITHMS = ("zero", "nearest-neighbor")


def _external_spec(entry):
    return ExternalAlgorithmSpec(tuple(entry["command"]), float(entry.get("timeout", 30.0)),
                                 name=entry.get("name", "external"))


def make_finite_algorithm(entry, seed=0):
    if isinstance(entry, dict):
        return ExternalAlgorithm(_external_spec(entry))
    if entry == "zero":
        return zero_algorithm()
    if entry == "nearest-neighbor":
        return nearest_neighbor_algorithm("grid")
    if entry == "nearest-neighbor-iid":
        return nearest_neighbor_algorithm("iid", seed)
    if entry == "multilinear":
        return multilinear_interpolation_algorithm()
    raise ConfigError(f"unknown algorithm {entry!r}")


def make_operator_algorithm(entry, task):
    from .operators.adversary import NearestNeighborOperatorAlgorithm, ZeroOperatorAlgorithm

    if isinstance(entry, dict):
        return ExternalOperatorAlgorithm(_external_spec(entry))
    if entry == "zero":
        return ZeroOperatorAlgorithm()
    if entry == "nearest-neighbor":
        return NearestNeighborOperatorAlgorithm(task)
    raise ConfigError(f"unknown operator algorithm {entry!r}")


def _close(alg):
    if hasattr(alg, "close"):
        alg.close()


# ---------------------------------------------------------------- runners

def _curve_block(name, p, curve, rate, cfg, seed, chash, reproduce=False):
    block = {"algorithm": name, "p": "inf" if math.isinf(p) else p, "rate": rate}
    fails = curve.failures
    block["protocol_failures"] = [{"N": None, "trial": t, "code": c, "message": m} for t, c, m in fails]
    if fails or any(r.trials < 3 for r in curve.rows) or any(not r.mean_error > 0 for r in curve.rows):
        block["curve"] = curve.to_dict()
        block["certificate"] = {"verdict": "FAIL", "reasons": ["curve incomplete (protocol failures or zero errors)"]}
        return block
    fit = fit_rate(curve, resamples=1000, seed=seed)
    cert = certify_gap(fit, None, cfg["slack"], rate=rate, ci_slack=cfg.get("ci_slack"),
                       curve=curve, seeds=[seed], config_hash=chash)
    block["certificate"] = cert.to_dict()
    if reproduce:
        tol = cfg["reproduce_tolerance"]
        ok = abs(fit.beta_hat - rate) <= tol
        block["reproduction"] = {"beta_hat": fit.beta_hat, "rate": rate, "tolerance": tol,
                                 "verdict": "PASS" if ok else "FAIL"}
    return block


def _block_passed(block):
    ok = block["certificate"]["verdict"] == "PASS"
    if "reproduction" in block:
        ok = ok and block["reproduction"]["verdict"] == "PASS"
    return ok


def run_void(cfg, threads):
    rows = []
    seed = cfg["seed"]
    for d in cfg["d_values"]:
        for N in cfg["N_values"]:
            for lay in cfg["layouts"]:
                pts = make_layout(lay, N, d, seed)
                est, se = void_probability_estimate(pts, cfg["trials"], seed)
                ok = est >= 0.5 - cfg["tolerance"]
                rows.append({"d": d, "N": N, "layout": lay, "probability": est, "stderr": se,
                             "verdict": "PASS" if ok else "FAIL"})
    # four equispaced midpoints in d=1 leave exactly half of [0,1] uncovered
    est, se = void_probability_estimate(make_layout("grid", 4, 1, seed), cfg["trials"], seed)
    exact = {"d": 1, "N": 4, "layout": "grid", "probability": est, "stderr": se, "exact": 0.5,
             "verdict": "PASS" if abs(est - 0.5) <= 3 * se else "FAIL"}
    ok = all(r["verdict"] == "PASS" for r in rows) and exact["verdict"] == "PASS"
    return {"verdict": "PASS" if ok else "FAIL", "table": rows, "exact_case": exact}


def run_finite(cfg, threads):
    prm = cfg["params"]
    ps = _p_list(prm["p"])
    base = SpaceParams(float(prm["alpha"]), ps[0], prm["d"], _depth_growth(prm["ell"]))
    seed = cfg["seed"]
    chash = config_hash(cfg)
    blocks = []
    for entry in cfg["algorithms"]:
        alg = make_finite_algorithm(entry, seed)
        try:
            per_p = {p: [] for p in ps}
            for N in cfg["N"]:
                rows = run_adversary_multi(alg, N, base, ps, cfg["trials"], cfg["kappa"], seed, threads=threads)
                for p in ps:
                    per_p[p].append(rows[p])
        finally:
            _close(alg)
        for p in ps:
            rate = theoretical_rate(base.with_p(p))
            blocks.append(_curve_block(alg.name, p, ErrorCurve(per_p[p]), rate, cfg, seed, chash,
                                       reproduce=(entry == "zero")))
    verdict = "PASS" if all(_block_passed(b) for b in blocks) else "FAIL"
    return {"verdict": verdict, "curves": blocks}


def build_measure(meas):
    from .operators.fields import cosine_measure

    return cosine_measure(int(meas["G"]), int(meas["J"]), float(meas["s"]), float(meas["q"]))


def build_operator_encoder(enc_cfg, mu, d, seed=0):
    from .operators.ano import ano_encoder_build
    from .operators.encoders import deeponet_encoder_build

    if enc_cfg["kind"] == "ano":
        return ano_encoder_build(mu, d, seed=seed)
    return deeponet_encoder_build(mu, d, float(enc_cfg.get("delta", 0.0)), enc_cfg.get("family", "cosine_moments"),
                                  int(enc_cfg.get("d0", 64)))


def run_operator(cfg, threads):
    from .operators.adversary import OperatorTask, operator_adversary_run, operator_rate

    prm = cfg["params"]
    ps = _p_list(prm["p"])
    params = SpaceParams(float(prm["alpha"]), ps[0], prm["d"], _depth_growth(prm["ell"]))
    mu = build_measure(cfg["measure"])
    kind = cfg["encoder"]["kind"]
    seed = cfg["seed"]
    encoder = build_operator_encoder(cfg["encoder"], mu, params.d, seed)
    task = OperatorTask(mu, encoder, params.d)
    chash = config_hash(cfg)
    blocks = []
    ordering = True
    for entry in cfg["algorithms"]:
        alg = make_operator_algorithm(entry, task)
        try:
            per_p = {p: [] for p in ps}
            for N in cfg["N"]:
                rows = operator_adversary_run(alg, N, params, mu, encoder, kind, cfg["trials"], cfg["mc_inputs"],
                                              seed, ps=ps, kappa=cfg["kappa"], threads=threads)
                for p in ps:
                    per_p[p].append(rows[p])
                    ordering = ordering and rows[p].ordering_holds()
        finally:
            _close(alg)
        for p in ps:
            rate = operator_rate(params.with_p(p), kind)
            blocks.append(_curve_block(alg.name, p, ErrorCurve(per_p[p]), rate, cfg, seed, chash,
                                       reproduce=(entry == "zero")))
    uniform = [{"p": p, "bound": operator_rate(params.with_p(float(p)), kind)} for p in cfg["uniform_p"]]
    verdict = "PASS" if ordering and all(_block_passed(b) for b in blocks) else "FAIL"
    return {
        "verdict": verdict, "curves": blocks, "encoder": _encoder_summary(encoder, kind),
        "ceiling": {"rate": [1.0 / p for p in ps], "note": "dimension-free ceiling beta* <= 1/p"},
        "uniform_family": uniform, "lp_below_sup_every_trial": ordering, "embedded_dimension": params.d,
        "scale_factors": {"gamma": "symbolic; rate fits are invariant under rescaling of the unit ball"},
    }


def _encoder_summary(enc, kind):
    if kind == "ano":
        return {"kind": "ano", "cells": enc.cells, "achieved_eps": enc.achieved_eps,
                "target_eps": enc.target_eps, "b_prime": enc.b_prime, "error": enc.error}
    return {"kind": "deeponet", "family": enc.kind, "delta": enc.delta, "error": enc.error}


def run_encoder(cfg, threads):
    from .operators.ano import ano_encoder_build
    from .operators.encoders import EncoderError, deeponet_encoder_build, pushforward_certify

    mu = build_measure(cfg["measure"])
    d, bins, seed = cfg["d"], cfg["bins"], cfg["seed"]
    out = []
    for name in cfg["encoders"]:
        entry = {"encoder": name}
        try:
            if name == "ano":
                enc = ano_encoder_build(mu, d, seed=seed)
                entry.update(achieved_eps=enc.achieved_eps, target_eps=enc.target_eps, cells=enc.cells)
                rep = pushforward_certify(enc, mu, bins, cfg["ano_samples"], seed)
                ok = rep.passed and enc.ok
            elif name == "point_evals":
                enc = deeponet_encoder_build(mu, d, cfg["delta"], "point_evals", cfg["d0"])
                entry.update(delta_hat=enc.delta)
                rep = pushforward_certify(enc, mu, bins, cfg["samples"], seed)
                ok = rep.passed
            else:
                enc = deeponet_encoder_build(mu, d)
                rep = pushforward_certify(enc, mu, bins, cfg["samples"], seed)
                ok = rep.passed and rep.c_hat >= cfg["min_c_hat"]
                entry.update(min_c_hat=cfg["min_c_hat"])
            entry.update(rep.to_dict())
        except EncoderError as exc:
            ok = False
            entry.update(error=str(exc), achieved=exc.achieved)
        entry["verdict"] = "PASS" if ok else "FAIL"
        out.append(entry)
    return {"verdict": "PASS" if all(e["verdict"] == "PASS" for e in out) else "FAIL", "encoders": out}


def run_appendix(cfg, threads):
    from .operators.mollify import shallow_w1inf_approximant, w1inf_errors

    rows = []
    for M in cfg["M_values"]:
        sup_err, der_err = w1inf_errors(shallow_w1inf_approximant(M))
        bound = 3.0 / M + cfg["slack"]
        rows.append({"M": M, "sup_error": sup_err, "derivative_error": der_err, "bound": bound,
                     "verdict": "PASS" if max(sup_err, der_err) <= bound else "FAIL"})
    decreasing = all(b["sup_error"] < a["sup_error"] and b["derivative_error"] < a["derivative_error"]
                     for a, b in zip(rows, rows[1:]))
    ok = decreasing and all(r["verdict"] == "PASS" for r in rows)
    return {"verdict": "PASS" if ok else "FAIL", "table": rows, "strictly_decreasing": decreasing}


def run_contraction(cfg, threads):
    from .operators.coverage import collapsing_map, contraction_coverage_check, random_perturbation

    seed = cfg["seed"]
    rows = []
    for d in cfg["d_values"]:
        lo, hi = np.zeros(d), np.ones(d)
        eps0 = min(0.5, 0.5 / 4)
        for i in range(cfg["perturbations"]):
            F = random_perturbation(d, 0.9 * eps0, stream(seed, d, i, 0xF))
            rep = contraction_coverage_check(F, lo, hi, cfg["samples"], seed=seed + i, bins=cfg["bins"])
            rows.append({"d": d, "index": i, **rep.to_dict()})
    collapse = []
    for d in cfg["d_values"]:
        if d >= 2:
            rep = contraction_coverage_check(collapsing_map, np.zeros(d), np.ones(d), cfg["samples"], seed=seed)
            collapse.append({"d": d, "verdict": rep.verdict})
    ok = all(r["verdict"] == "PASS" for r in rows) and all(c["verdict"] == "NOT_APPLICABLE" for c in collapse)
    return {"verdict": "PASS" if ok else "FAIL", "perturbations": rows, "collapsing": collapse}


_RUNNERS = {
    "void-check": run_void,
    "finite-gap": run_finite,
    "operator-gap": run_operator,
    "encoder-check": run_encoder,
    "appendix-check": run_appendix,
    "contraction-check": run_contraction,
}


def run(config, threads=None):
    """Validate, execute and return the report dict (nothing is written)."""
    cfg = load_config(config)
    nthreads = resolve_threads(cfg) if threads is None else threads
    start = time.perf_counter()
    results = _RUNNERS[cfg["kind"]](cfg, nthreads)
    wall = time.perf_counter() - start
    return {
        "tool": "gapbench",
        "version": version_string(),
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": _scipy_version()},
        "kind": cfg["kind"],
        "config": {k: v for k, v in cfg.items() if k not in UNHASHED},
        "config_hash": config_hash(cfg),
        "verdict": results["verdict"],
        "results": results,
        "timing": {"wall_clock_seconds": wall, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
    }


def _scipy_version():
    import scipy

    return scipy.__version__


def protocol_failures(report):
    return [f for b in report["results"].get("curves", []) for f in b.get("protocol_failures", [])]


def exit_code(report):
    if protocol_failures(report):
        return EXIT_PROTOCOL
    return EXIT_PASS if report["verdict"] == "PASS" else EXIT_FAIL


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def report_json(report):
    return json.dumps(_clean(report), indent=2, sort_keys=True, default=_json_default) + "\n"


def write_outputs(report, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report_json(report), encoding="utf-8")
    written = [outdir / "report.json"]
    curves = report["results"].get("curves")
    if curves:
        curve_lines = ["algorithm,p,N,trials,mean,stderr"]
        plot_lines = ["algorithm,p,N,mean,stderr,theory"]
        for b in curves:
            rows = b.get("certificate", {}).get("curve", b.get("curve", {})).get("rows", [])
            if not rows:
                continue
            n0, m0 = rows[0]["N"], rows[0]["mean_error"]
            for r in rows:
                curve_lines.append(f"{b['algorithm']},{b['p']},{r['N']},{r['trials']},{r['mean_error']!r},{r['stderr']!r}")
                theory = m0 * (r["N"] / n0) ** (-b["rate"])
                plot_lines.append(f"{b['algorithm']},{b['p']},{r['N']},{r['mean_error']!r},{r['stderr']!r},{theory!r}")
        (outdir / "curve.csv").write_text("\n".join(curve_lines) + "\n", encoding="utf-8")
        (outdir / "plotdata.csv").write_text("\n".join(plot_lines) + "\n", encoding="utf-8")
        written += [outdir / "curve.csv", outdir / "plotdata.csv"]
    table = report["results"].get("table")
    if table:
        keys = list(table[0])
        lines = [",".join(keys)] + [",".join(str(r[k]) for k in keys) for r in table]
        (outdir / "table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(outdir / "table.csv")
    return written


def load_report(path):
    """Read a report and re-check every certificate against its embedded curve."""
    report = json.loads(Path(path).read_text(encoding="utf-8"))
    report["certificates_consistent"] = verify_report(report)
    return report


def verify_report(report):
    for b in report.get("results", {}).get("curves", []):
        cert = b.get("certificate", {})
        if "curve" in cert and not revalidate_certificate(cert):
            return False
    return True

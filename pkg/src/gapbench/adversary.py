"""The randomized bump adversary: voids, instances, error estimation and rate fits.

One trial draws a center y ~ Unif([0,1]^d) and a sign, builds the signed bump
of steepness M = 4 N^(1/d) at y, hands the algorithm the values at its N
declared points, and measures the L^p([0,1]^d) distance between the bump and
the reconstruction.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    NonFiniteError,
    ProtocolError,
    PROTO_ADAPTIVE,
    PROTO_DOMAIN,
    PROTO_MALFORMED,
    PROTO_NONFINITE,
    PROTO_POINTCOUNT,
)
from .relu import Network, evaluate
from .rng import stream
from .spaces import adversarial_amplitude, make_g, theoretical_rate


# ---------------------------------------------------------------- voids

def min_linf_distance(y, points):
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise ValueError("point set is empty")
    points = points.reshape(len(points), -1)
    return float(np.min(np.max(np.abs(points - np.asarray(y, dtype=float)), axis=1)))


def void_radius(N, d):
    return 0.25 * N ** (-1.0 / d)


def void_probability_estimate(points, trials, seed=0):
    """Monte-Carlo estimate of P_y[min_j |y - x_j|_inf > N^(-1/d)/4] and its stderr."""
    points = np.asarray(points, dtype=float)
    N, d = points.shape
    if trials < 1:
        raise ValueError("trials must be positive")
    ys = stream(seed, N, d, 7).random((int(trials), d))
    dist, _ = cKDTree(points).query(ys, k=1, p=np.inf)
    hits = dist > void_radius(N, d)
    est = float(hits.mean())
    return est, math.sqrt(est * (1 - est) / trials)


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor midpoint rule on [0,1]^d, refined inside declared boxes.

    Each box is (lo, hi, side): inside [lo, hi] the cells are side/cells_per_side
    wide. In d = 1 every resolution is multiplied by ``fine_1d``.
    """

    d: int
    base_cells: int = 64
    cells_per_side: int = 64
    boxes: tuple = ()
    fine_1d: int = 16

    def with_box(self, lo, hi, side):
        box = (tuple(np.atleast_1d(lo).astype(float)), tuple(np.atleast_1d(hi).astype(float)), float(side))
        return replace(self, boxes=self.boxes + (box,))

    def axis_edges(self, axis):
        scale = self.fine_1d if self.d == 1 else 1
        parts = [np.linspace(0.0, 1.0, self.base_cells * scale + 1)]
        for lo, hi, side in self.boxes:
            a, b = max(0.0, lo[axis]), min(1.0, hi[axis])
            if b <= a:
                continue
            h = side / (self.cells_per_side * scale)
            k = max(1, int(math.ceil((b - a) / h - 1e-9)))
            parts.append(np.linspace(a, b, k + 1))
        return np.unique(np.concatenate(parts))

    def nodes(self, sup=False):
        """Nodes and weights; with ``sup`` the nodes also include all cell vertices."""
        axes, wts = [], []
        for j in range(self.d):
            e = self.axis_edges(j)
            mids = 0.5 * (e[1:] + e[:-1])
            if sup:
                axes.append(np.unique(np.concatenate([e, mids])))
                wts.append(None)
            else:
                axes.append(mids)
                wts.append(np.diff(e))
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([m.reshape(-1) for m in mesh], axis=1)
        if sup:
            return X, None
        W = wts[0]
        for w in wts[1:]:
            W = np.multiply.outer(W, w)
        return X, W.reshape(-1)


def _eval(f, X):
    if isinstance(f, Network):
        return evaluate(f, X)[:, 0]
    return np.asarray(f(X), dtype=float).reshape(-1)


def lp_errors(f, g, ps, quad):
    """||f - g||_{L^p([0,1]^d)} for each p in ``ps`` using one set of evaluations per rule."""
    out = {}
    finite = [p for p in ps if not math.isinf(p)]
    if finite:
        X, W = quad.nodes()
        diff = np.abs(_eval(f, X) - _eval(g, X))
        if not np.all(np.isfinite(diff)):
            raise NonFiniteError("non-finite value at a quadrature node")
        for p in finite:
            out[p] = float(np.dot(W, diff ** p)) ** (1.0 / p)
    if len(finite) < len(ps):
        X, _ = quad.nodes(sup=True)
        diff = np.abs(_eval(f, X) - _eval(g, X))
        if not np.all(np.isfinite(diff)):
            raise NonFiniteError("non-finite value at a quadrature node")
        out[math.inf] = float(diff.max())
    return [out[p] for p in ps]


def lp_error(f, g, p, quad):
    return lp_errors(f, g, [p], quad)[0]


def lp_error_mc(f, g, p, d, box, samples, rng):
    """Stratified Monte-Carlo cross-check: stratum one is ``box`` (clipped), stratum two the rest."""
    lo = np.clip(np.asarray(box[0], dtype=float), 0, 1)
    hi = np.clip(np.asarray(box[1], dtype=float), 0, 1)
    vol = float(np.prod(hi - lo))
    half = samples // 2
    inside = lo + (hi - lo) * rng.random((half, d))
    total = vol * np.mean(np.abs(_eval(f, inside) - _eval(g, inside)) ** p)
    if vol < 1:
        out = rng.random((4 * half, d))
        out = out[~np.all((out >= lo) & (out <= hi), axis=1)][:half]
        total += (1 - vol) * np.mean(np.abs(_eval(f, out) - _eval(g, out)) ** p)
    return total ** (1.0 / p)


# ---------------------------------------------------------------- instances

@dataclass(frozen=True)
class AdversarialInstance:
    N: int
    y: np.ndarray
    sign: int
    M: float
    amplitude: float
    g: Network

    def __call__(self, X):
        """Evaluate g, skipping nodes outside the support cube where g is exactly 0."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(len(X))
        inside = np.all(np.abs(X - self.y) < 1.0 / self.M, axis=1)
        if inside.any():
            out[inside] = evaluate(self.g, X[inside])[:, 0]
        return out

    def flipped(self):
        A, b = self.g.layers[-1]
        g = Network(list(self.g.layers[:-1]) + [(-A, -b)])
        return replace(self, sign=-self.sign, g=g)


def steepness(N, d):
    return 4.0 * N ** (1.0 / d)


def draw_instance(N, params, kappa, rng_state, *, discount=None, shape="cross"):
    if N < 1:
        raise ValueError("N must be positive")
    d = params.d
    y = rng_state.random(d)
    sign = 1 if rng_state.random() < 0.5 else -1
    M = steepness(N, d)
    g = make_g(params, M, y, kappa, sign=sign, discount=discount, shape=shape)
    amp = adversarial_amplitude(params, M, kappa, discount)
    return AdversarialInstance(N=int(N), y=y, sign=sign, M=M, amplitude=amp, g=g)


# ---------------------------------------------------------------- curves

@dataclass
class ErrorRow:
    N: int
    trials: int
    mean_error: float
    stderr: float
    p: float
    errors: np.ndarray = field(default=None, repr=False)
    failures: list = field(default_factory=list)
    mean_points: float = None

    @classmethod
    def from_errors(cls, N, p, errors, failures=(), mean_points=None):
        errors = np.asarray(errors, dtype=float)
        n = len(errors)
        mean = float(errors.mean()) if n else math.nan
        se = float(errors.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        return cls(int(N), n, mean, se, float(p), errors, list(failures), mean_points)

    def to_dict(self, with_errors=True):
        out = {
            "N": self.N, "trials": self.trials, "mean_error": self.mean_error,
            "stderr": self.stderr, "p": _p_out(self.p),
        }
        if self.mean_points is not None:
            out["mean_points"] = self.mean_points
        if self.failures:
            out["failures"] = [{"trial": t, "code": c, "message": m} for t, c, m in self.failures]
        if with_errors and self.errors is not None:
            out["errors"] = [float(e) for e in self.errors]
        return out

    @classmethod
    def from_dict(cls, data):
        errs = data.get("errors")
        fails = [(f["trial"], f["code"], f["message"]) for f in data.get("failures", [])]
        return cls(data["N"], data["trials"], data["mean_error"], data["stderr"], _p_in(data["p"]),
                   None if errs is None else np.asarray(errs, dtype=float), fails, data.get("mean_points"))


def _p_out(p):
    return "inf" if math.isinf(p) else p


def _p_in(p):
    return math.inf if p == "inf" else float(p)


@dataclass
class ErrorCurve:
    rows: list

    def __post_init__(self):
        Ns = [r.N for r in self.rows]
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise ValueError("curve rows must have strictly increasing N")

    @property
    def failures(self):
        return [f for r in self.rows for f in r.failures]

    def to_dict(self, with_errors=True):
        return {"rows": [r.to_dict(with_errors) for r in self.rows]}

    @classmethod
    def from_dict(cls, data):
        return cls([ErrorRow.from_dict(r) for r in data["rows"]])

    def csv_lines(self):
        lines = ["N,trials,mean,stderr"]
        lines += [f"{r.N},{r.trials},{r.mean_error!r},{r.stderr!r}" for r in self.rows]
        return lines


# ---------------------------------------------------------------- running

def check_points(pts, N, d, exact_count=True):
    try:
        pts = np.asarray(pts, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(PROTO_MALFORMED, f"points are not numeric: {exc}") from None
    if pts.ndim == 1 and d == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or (len(pts) and pts.shape[1] != d):
        raise ProtocolError(PROTO_MALFORMED, f"points must have shape (n, {d}), got {pts.shape}")
    if exact_count and len(pts) != N:
        raise ProtocolError(PROTO_POINTCOUNT, f"declared {len(pts)} points, expected {N}")
    if not np.all(np.isfinite(pts)):
        raise ProtocolError(PROTO_NONFINITE, "declared points contain NaN or infinity")
    if np.any(pts < 0) or np.any(pts > 1):
        raise ProtocolError(PROTO_DOMAIN, "declared points leave [0,1]^d")
    return pts


def run_adversary_multi(alg, N, params, ps, trials, kappa=1.0, seed=0, *, quad=None,
                        threads=1, discount=None, shape="cross"):
    """Run ``trials`` adversary trials at size N and return {p: ErrorRow}.

    Instances do not depend on p, so every p reuses the same draws and the same
    reconstructions.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    d = params.d
    base = quad or QuadratureSpec(d)
    randomized = getattr(alg, "randomized", False)
    reference = {}
    lock = threading.Lock()

    def trial(t):
        inst = draw_instance(N, params, kappa, stream(seed, N, t), discount=discount, shape=shape)
        try:
            if randomized:
                pts = alg.plan(N, d, rng=stream(seed, N, t, 1))
            else:
                pts = alg.plan(N, d)
            pts = check_points(pts, N, d, exact_count=not randomized)
            if not randomized:
                with lock:
                    ref = reference.setdefault("points", pts)
                if ref is not pts and not np.array_equal(ref, pts):
                    raise ProtocolError(PROTO_ADAPTIVE, "plan changed between trials with the same (N, d)")
            values = evaluate(inst.g, pts)[:, 0] if len(pts) else np.zeros(0)
            if hasattr(alg, "observe_instance"):
                alg.observe_instance(inst)
            rec = alg.reconstruct(pts, values)
            reach = alg.influence_radius(N, d) if hasattr(alg, "influence_radius") else None
            half = 1.0 / inst.M + (reach or 0.0)
            q = base.with_box(inst.y - half, inst.y + half, 2.0 / inst.M)
            try:
                errs = lp_errors(inst, rec, ps, q)
            except NonFiniteError as exc:
                raise ProtocolError(PROTO_NONFINITE, f"reconstruction: {exc}") from None
            return errs, len(pts), None
        except ProtocolError as exc:
            return None, None, (t, exc.code, exc.message)

    if threads > 1 and getattr(alg, "reentrant", True):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(trial, range(trials)))
    else:
        results = [trial(t) for t in range(trials)]

    failures = [r[2] for r in results if r[2] is not None]
    counts = [r[1] for r in results if r[2] is None]
    mean_points = float(np.mean(counts)) if (randomized and counts) else None
    if randomized and counts and len(counts) > 1:
        se = float(np.std(counts, ddof=1) / math.sqrt(len(counts)))
        if mean_points > N + 3 * se:
            failures.append((-1, PROTO_POINTCOUNT,
                             f"mean point count {mean_points:.3f} exceeds budget {N}"))
    rows = {}
    for i, p in enumerate(ps):
        errs = [r[0][i] for r in results if r[2] is None]
        rows[p] = ErrorRow.from_errors(N, p, errs, failures, mean_points)
    return rows


def run_adversary(alg, N, params, trials, kappa=1.0, seed=0, **kwargs):
    return run_adversary_multi(alg, N, params, [params.p], trials, kappa, seed, **kwargs)[params.p]


# ---------------------------------------------------------------- fitting

@dataclass(frozen=True)
class RateFit:
    beta_hat: float
    intercept: float
    r_squared: float
    ci_low: float
    ci_high: float
    resamples: int = 0

    def to_dict(self):
        return dict(beta_hat=self.beta_hat, intercept=self.intercept, r_squared=self.r_squared,
                    ci_low=self.ci_low, ci_high=self.ci_high, resamples=self.resamples)


def _ols(x, Y):
    """Slopes and intercepts of Y (rows are replicates) against x."""
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    slope = (Y - Y.mean(axis=-1, keepdims=True)) @ xc / sxx
    return slope, Y.mean(axis=-1) - slope * x.mean()


def fit_rate(curve, resamples=1000, seed=0):
    rows = curve.rows if isinstance(curve, ErrorCurve) else list(curve)
    if len(rows) < 3:
        raise ValueError("a rate fit needs at least three rows")
    means = np.array([r.mean_error for r in rows], dtype=float)
    if not np.all(means > 0):
        raise ValueError("a rate fit needs strictly positive mean errors")
    x = np.log([r.N for r in rows])
    y = np.log(means)
    slope, icpt = _ols(x, y)
    resid = y - (icpt + slope * x)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.dot(resid, resid)) / sst if sst > 0 else 1.0
    beta = -float(slope)
    lo = hi = beta
    used = 0
    if resamples and all(r.errors is not None and len(r.errors) > 1 for r in rows):
        rng = stream(seed, 0xB007)
        boot = np.empty((resamples, len(rows)))
        for j, r in enumerate(rows):
            e = np.asarray(r.errors)
            idx = rng.integers(0, len(e), size=(resamples, len(e)))
            boot[:, j] = e[idx].mean(axis=1)
        ok = np.all(boot > 0, axis=1)
        if ok.any():
            slopes, _ = _ols(x, np.log(boot[ok]))
            lo, hi = np.percentile(-slopes, [2.5, 97.5])
            used = int(ok.sum())
    return RateFit(beta, float(icpt), r2, float(lo), float(hi), used)


@dataclass
class CertificateReport:
    verdict: str
    beta_hat: float
    rate: float
    slack: float
    ci_high: float = None
    ci_slack: float = None
    reasons: list = field(default_factory=list)
    fit: RateFit = None
    curve: ErrorCurve = None
    seeds: list = None
    config_hash: str = None

    @property
    def passed(self):
        return self.verdict == "PASS"

    def to_dict(self):
        out = {
            "verdict": self.verdict, "beta_hat": self.beta_hat, "rate": self.rate,
            "slack": self.slack, "reasons": list(self.reasons),
        }
        if self.ci_slack is not None:
            out["ci_high"], out["ci_slack"] = self.ci_high, self.ci_slack
        if self.fit is not None:
            out["fit"] = self.fit.to_dict()
        if self.curve is not None:
            out["curve"] = self.curve.to_dict()
        if self.seeds is not None:
            out["seeds"] = list(self.seeds)
        if self.config_hash is not None:
            out["config_hash"] = self.config_hash
        return out


def certify_gap(fit, params, slack, *, rate=None, ci_slack=None, curve=None, seeds=None,
                config_hash=None, discount=None):
    """PASS iff beta_hat <= rate + slack (and, if ci_slack is given, ci_high <= rate + ci_slack)."""
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    lam = theoretical_rate(params, discount) if rate is None else rate
    reasons = []
    if fit.beta_hat > lam + slack:
        reasons.append(f"beta_hat {fit.beta_hat:.4f} > rate {lam:.4f} + slack {slack}")
    if ci_slack is not None and fit.ci_high > lam + ci_slack:
        reasons.append(f"ci_high {fit.ci_high:.4f} > rate {lam:.4f} + {ci_slack}")
    return CertificateReport(
        "FAIL" if reasons else "PASS", fit.beta_hat, lam, slack,
        fit.ci_high, ci_slack, reasons, fit, curve, seeds, config_hash,
    )


def revalidate_certificate(cert, resamples=None, seed=0, tol=1e-9):
    """Refit from the curve embedded in a certificate dict and confirm fit and verdict."""
    curve = ErrorCurve.from_dict(cert["curve"])
    if cert.get("seeds"):
        seed = cert["seeds"][0]
    fit = fit_rate(curve, resamples=cert["fit"]["resamples"] if resamples is None else resamples, seed=seed)
    if abs(fit.beta_hat - cert["fit"]["beta_hat"]) > tol:
        return False
    passed = cert["beta_hat"] <= cert["rate"] + cert["slack"]
    if cert.get("ci_slack") is not None:
        if abs(fit.ci_high - cert["ci_high"]) > tol:
            return False
        passed = passed and cert["ci_high"] <= cert["rate"] + cert["ci_slack"]
    return passed == (cert["verdict"] == "PASS")

"""Line-delimited JSON protocol for external reconstruction algorithms.

Point mode (functions on [0,1]^d), one session per trial::

    harness -> {"type": "plan", "n": N, "d": d}
    client  -> {"type": "points", "points": [[...], ...]}        exactly N rows of length d
    harness -> {"type": "values", "values": [...]}               N numbers
    client  -> {"type": "model_ready"}
    harness -> {"type": "query", "points": [[...], ...]}         repeated
    client  -> {"type": "predictions", "values": [...]}          one number per query row
    ...
    harness -> {"type": "plan", ...}                             next session, or
    harness -> {"type": "end"}                                   client exits with status 0

Operator mode replaces points by grid functions::

    harness -> {"type": "plan", "n": N, "grid": G, "mode": "operator"}
    client  -> {"type": "inputs", "grid": G, "functions": [[G numbers], ...]}
    harness -> {"type": "values", "values": [...]}
    client  -> {"type": "model_ready"}
    harness -> {"type": "query", "grid": G, "functions": [[...], ...]}
    client  -> {"type": "predictions", "values": [...]}

Any deviation raises ProtocolError with one of the codes in errors.PROTOCOL_CODES.
"""

import json
import os
import queue
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .baselines import ReconstructionAlgorithm
from .errors import (
    ProtocolError,
    PROTO_DOMAIN,
    PROTO_EXIT,
    PROTO_MALFORMED,
    PROTO_NONFINITE,
    PROTO_POINTCOUNT,
    PROTO_TIMEOUT,
)

_EOF = object()


@dataclass(frozen=True)
class ExternalAlgorithmSpec:
    command: tuple
    timeout: float = 30.0
    env_allowlist: tuple = ("PATH", "PYTHONPATH", "HOME", "LANG", "LC_ALL")
    name: str = "external"


def _numbers(seq, what):
    """Float array from a JSON list; non-finite entries (NaN from 'NaN' tokens) are rejected."""
    try:
        arr = np.asarray(seq, dtype=float)
    except (TypeError, ValueError):
        raise ProtocolError(PROTO_MALFORMED, f"{what} must be numbers") from None
    if not np.all(np.isfinite(arr)):
        raise ProtocolError(PROTO_NONFINITE, f"{what} contain NaN or infinity")
    return arr


class _Client:
    """A running external process with a reader thread feeding a line queue."""

    def __init__(self, spec):
        env = {k: os.environ[k] for k in spec.env_allowlist if k in os.environ}
        self.spec = spec
        self.proc = subprocess.Popen(
            list(spec.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, env=env, text=True, encoding="utf-8", bufsize=1,
        )
        self.lines = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(_EOF)

    def send(self, message):
        try:
            self.proc.stdin.write(json.dumps(message) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise ProtocolError(PROTO_EXIT, f"client exited (status {self.proc.poll()})") from None

    def receive(self, expected):
        try:
            line = self.lines.get(timeout=self.spec.timeout)
        except queue.Empty:
            raise ProtocolError(PROTO_TIMEOUT, f"no {expected!r} message within {self.spec.timeout}s") from None
        if line is _EOF:
            raise ProtocolError(PROTO_EXIT, f"client closed its output (status {self.proc.poll()})")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(PROTO_MALFORMED, f"not JSON: {line[:80]!r}") from None
        if not isinstance(msg, dict) or msg.get("type") != expected:
            got = msg.get("type") if isinstance(msg, dict) else type(msg).__name__
            raise ProtocolError(PROTO_MALFORMED, f"expected {expected!r}, got {got!r}")
        return msg

    def close(self):
        if self.proc.poll() is None:
            try:
                self.send({"type": "end"})
                self.proc.stdin.close()
            except ProtocolError:
                pass
            try:
                self.proc.wait(timeout=self.spec.timeout)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        return self.proc.returncode


class ExternalAlgorithm(ReconstructionAlgorithm):
    """Reconstruction algorithm served by an external process (point mode).

    Sessions run one at a time, so the harness serializes trials for it.
    A client that breaks the protocol is restarted for the next trial.
    """

    reentrant = False

    def __init__(self, spec):
        self.spec = spec
        self.name = spec.name
        self._client = None

    def _ensure(self):
        if self._client is None or self._client.proc.poll() is not None:
            self._client = _Client(self.spec)
        return self._client

    def _reset(self):
        if self._client is not None:
            if self._client.proc.poll() is None:
                self._client.proc.kill()
                self._client.proc.wait()
            self._client = None

    def _guard(self, fn):
        try:
            return fn()
        except ProtocolError:
            self._reset()
            raise

    def plan(self, N, d):
        def go():
            c = self._ensure()
            c.send({"type": "plan", "n": int(N), "d": int(d)})
            msg = c.receive("points")
            pts = msg.get("points")
            if not isinstance(pts, list):
                raise ProtocolError(PROTO_MALFORMED, "'points' must be a list")
            if len(pts) != N:
                raise ProtocolError(PROTO_POINTCOUNT, f"client declared {len(pts)} points, expected {N}")
            if any(not isinstance(p, list) or len(p) != d for p in pts):
                raise ProtocolError(PROTO_MALFORMED, f"every point must be a list of {d} numbers")
            arr = _numbers(pts, "points").reshape(N, d)
            if np.any(arr < 0) or np.any(arr > 1):
                raise ProtocolError(PROTO_DOMAIN, "declared points leave [0,1]^d")
            return arr
        return self._guard(go)

    def reconstruct(self, points, values):
        def go():
            c = self._ensure()
            c.send({"type": "values", "values": [float(v) for v in values]})
            c.receive("model_ready")
            return c
        client = self._guard(go)

        def f(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))

            def ask():
                client.send({"type": "query", "points": X.tolist()})
                vals = client.receive("predictions").get("values")
                if not isinstance(vals, list):
                    raise ProtocolError(PROTO_MALFORMED, "'values' must be a list")
                if len(vals) != len(X):
                    raise ProtocolError(PROTO_POINTCOUNT, f"{len(vals)} predictions for {len(X)} queries")
                return _numbers(vals, "predictions")
            return self._guard(ask)

        return f

    def close(self):
        if self._client is not None:
            code = self._client.close()
            self._client = None
            return code
        return 0


def external_algorithm(spec):
    return ExternalAlgorithm(spec)


class ExternalOperatorAlgorithm:
    """Operator-level reconstruction algorithm served by an external process."""

    reentrant = False
    randomized = False

    def __init__(self, spec):
        self._inner = ExternalAlgorithm(spec)
        self.name = spec.name

    def plan(self, N, task):
        inner = self._inner
        grid = int(getattr(task, "G", task))

        def go():
            c = inner._ensure()
            c.send({"type": "plan", "n": int(N), "grid": int(grid), "mode": "operator"})
            msg = c.receive("inputs")
            funcs = msg.get("functions")
            if msg.get("grid") != grid:
                raise ProtocolError(PROTO_DOMAIN, f"inputs use grid {msg.get('grid')}, expected {grid}")
            if not isinstance(funcs, list):
                raise ProtocolError(PROTO_MALFORMED, "'functions' must be a list")
            if len(funcs) != N:
                raise ProtocolError(PROTO_POINTCOUNT, f"client declared {len(funcs)} functions, expected {N}")
            if any(not isinstance(u, list) or len(u) != grid for u in funcs):
                raise ProtocolError(PROTO_DOMAIN, f"every function must list {grid} grid values")
            return _numbers(funcs, "functions").reshape(N, grid)
        return inner._guard(go)

    def reconstruct(self, inputs, values):
        inner = self._inner
        client = inner._guard(lambda: _ready(inner, values))
        grid = np.asarray(inputs).shape[1]

        def f(U):
            U = np.atleast_2d(np.asarray(U, dtype=float))

            def ask():
                client.send({"type": "query", "grid": int(grid), "functions": U.tolist()})
                vals = client.receive("predictions").get("values")
                if not isinstance(vals, list) or len(vals) != len(U):
                    raise ProtocolError(PROTO_POINTCOUNT, "prediction count does not match the query")
                return _numbers(vals, "predictions")
            return inner._guard(ask)

        return f

    def close(self):
        return self._inner.close()


def _ready(inner, values):
    c = inner._ensure()
    c.send({"type": "values", "values": [float(v) for v in values]})
    c.receive("model_ready")
    return c


def conformance_vectors():
    """A complete two-session transcript with the echo-zero client, as (direction, message) pairs."""
    from .layouts import midpoint_grid

    out = []
    for n, d in ((4, 2), (3, 1)):
        pts = midpoint_grid(n, d).tolist()
        out += [
            ("harness->client", {"type": "plan", "n": n, "d": d}),
            ("client->harness", {"type": "points", "points": pts}),
            ("harness->client", {"type": "values", "values": [0.0] * (n - 1) + [0.5]}),
            ("client->harness", {"type": "model_ready"}),
            ("harness->client", {"type": "query", "points": [[0.1] * d, [0.9] * d]}),
            ("client->harness", {"type": "predictions", "values": [0.0, 0.0]}),
        ]
    out.append(("harness->client", {"type": "end"}))
    return out


def conformance_jsonl():
    return "".join(json.dumps({"direction": a, "message": m}) + "\n" for a, m in conformance_vectors())


def echo_zero_command():
    """Command line that runs the shipped echo-zero client with the current interpreter."""
    import sys
    from pathlib import Path

    return (sys.executable, str(Path(__file__).parent / "fixtures" / "echo_zero.py"))


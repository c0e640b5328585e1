"""Echo-zero reference client: declares the midpoint grid and predicts 0 everywhere.

Standard library only, so it also runs as a plain script:
``python echo_zero.py`` speaks the protocol on stdin/stdout. Operator-mode
plans are answered with N constant functions (value k/N for the k-th input).
"""

import itertools
import json
import sys


def grid_side(n, d):
    m = max(1, int(round(n ** (1.0 / d))))
    while m ** d > n:
        m -= 1
    while (m + 1) ** d <= n:
        m += 1
    return max(m, 1)


def midpoint_grid(n, d):
    m = grid_side(n, d)
    axis = [(i + 0.5) / m for i in range(m)]
    pts = [list(p) for p in itertools.product(axis, repeat=d)]
    return pts + [pts[0]] * (n - len(pts))


def reply(msg):
    sys.stdout.write(json.dumps(msg) + "\n")
    sys.stdout.flush()


def main():
    for line in sys.stdin:
        if not line.strip():
            continue
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "end":
            return 0
        if kind == "plan" and msg.get("mode") == "operator":
            n, g = msg["n"], msg["grid"]
            reply({"type": "inputs", "grid": g, "functions": [[k / n] * g for k in range(n)]})
        elif kind == "plan":
            reply({"type": "points", "points": midpoint_grid(msg["n"], msg["d"])})
        elif kind == "values":
            reply({"type": "model_ready"})
        elif kind == "query":
            rows = msg.get("points", msg.get("functions", []))
            reply({"type": "predictions", "values": [0.0] * len(rows)})
    return 0


if __name__ == "__main__":
    sys.exit(main())

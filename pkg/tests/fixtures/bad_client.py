"""Misbehaving protocol client; the first argument picks the fault.

nan       predictions contain NaN
short     declares N-1 points
garbage   answers the plan with a line that is not JSON
silent    never answers
"""

import itertools
import json
import sys

FAULT = sys.argv[1]


def grid(n, d):
    m = 1
    while (m + 1) ** d <= n:
        m += 1
    axis = [(i + 0.5) / m for i in range(m)]
    pts = [list(p) for p in itertools.product(axis, repeat=d)]
    return pts + [pts[0]] * (n - len(pts))


def reply(text):
    sys.stdout.write(text + "\n")
    sys.stdout.flush()


for line in sys.stdin:
    msg = json.loads(line)
    kind = msg["type"]
    if kind == "end":
        break
    if FAULT == "silent":
        continue
    if kind == "plan":
        if FAULT == "garbage":
            reply("{points: not json")
            continue
        pts = grid(msg["n"], msg["d"])
        if FAULT == "short":
            pts = pts[:-1]
        reply(json.dumps({"type": "points", "points": pts}))
    elif kind == "values":
        reply(json.dumps({"type": "model_ready"}))
    elif kind == "query":
        vals = [float("nan")] * len(msg["points"])
        reply(json.dumps({"type": "predictions", "values": vals}))

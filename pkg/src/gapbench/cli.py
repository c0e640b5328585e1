"""Command-line entry point: ``gapbench run|describe|list|protocol-fixture``."""

import argparse
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, ProtocolError
from .protocol import conformance_jsonl, echo_zero_command


def _summary(report):
    res = report["results"]
    lines = [f"kind: {report['kind']}  config: {report['config_hash'][:12]}  verdict: {report['verdict']}"]
    for b in res.get("curves", []):
        cert = b["certificate"]
        beta = cert.get("beta_hat")
        head = f"  {b['algorithm']:<22} p={b['p']:<4} rate={b['rate']:.4f}"
        lines.append(head + (f" beta_hat={beta:.4f}" if beta is not None else "") + f" {cert['verdict']}")
        if "reproduction" in b:
            lines.append(f"    reproduction within {b['reproduction']['tolerance']}: {b['reproduction']['verdict']}")
    if "ceiling" in res:
        rates = ", ".join(f"{r:g}" for r in res["ceiling"]["rate"])
        lines.append(f"  dimension-free ceiling 1/p = {rates}")
    for row in res.get("table", []):
        lines.append("  " + " ".join(f"{k}={v}" for k, v in row.items()))
    for e in res.get("encoders", []):
        lines.append(f"  encoder {e['encoder']}: c_hat={e.get('c_hat')} c_lower={e.get('c_lower')} {e['verdict']}")
    if "perturbations" in res:
        passed = sum(r["verdict"] == "PASS" for r in res["perturbations"])
        lines.append(f"  perturbations passing: {passed}/{len(res['perturbations'])}")
        for c in res["collapsing"]:
            lines.append(f"  collapsing map d={c['d']}: {c['verdict']}")
    lines.append(f"  wall clock {report['timing']['wall_clock_seconds']:.1f}s")
    return "\n".join(lines)


def cmd_run(args):
    cfg = harness.load_config(args.config)
    if args.output:
        cfg["output"] = args.output
    report = harness.run(cfg, threads=args.threads)
    written = harness.write_outputs(report, cfg["output"])
    print(_summary(report))
    for path in written:
        print(f"wrote {path}")
    return harness.exit_code(report)


def cmd_describe(args):
    print(harness.describe(args.kind))
    return 0


def cmd_list(args):
    for kind in harness.list_kinds():
        print(kind)
    return 0


def cmd_fixture(args):
    text = conformance_jsonl()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.command:
        print(" ".join(echo_zero_command()), file=sys.stderr)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="gapbench", description="Sampling-rate lower-bound experiments.")
    ap.add_argument("--version", action="version", version=harness.version_string())
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run an experiment config (TOML or JSON)")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    r.add_argument("--threads", type=int, default=None, help="worker threads, 0 = auto")
    r.set_defaults(fn=cmd_run)

    dsc = sub.add_parser("describe", help="describe an experiment kind")
    dsc.add_argument("kind")
    dsc.set_defaults(fn=cmd_describe)

    ls = sub.add_parser("list", help="list experiment kinds")
    ls.set_defaults(fn=cmd_list)

    fx = sub.add_parser("protocol-fixture", help="emit the echo-zero conformance transcript as JSON lines")
    fx.add_argument("-o", "--output")
    fx.add_argument("--command", action="store_true", help="also print the echo-zero client command to stderr")
    fx.set_defaults(fn=cmd_fixture)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return harness.EXIT_PROTOCOL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``iago {criterion-noise,optimize,bench} CONFIG``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench as B
from .exceptions import IagoError, InvalidArgumentError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iago", description="Entropy-based Bayesian optimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path, help="YAML configuration file")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--threads", type=_positive, default=1, help="worker count")
    sub.add_parser("criterion-noise", parents=[common], help="replicate criterion profiles per virtual batch size")
    opt = sub.add_parser("optimize", parents=[common], help="a single optimization run")
    opt.add_argument("--policy", help="policy name from the config (default: the first)")
    b = sub.add_parser("bench", parents=[common], help="repeated runs of every policy plus percentile summary")
    b.add_argument("--runs", type=_positive, help="runs per policy (overrides the config)")
    return parser


def _resolved(args) -> dict:
    cfg = B.load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        cfg["runs"] = args.runs
    return cfg


def _write_config(cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolved(args)
    except InvalidArgumentError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out
    B.timed_log(out, args.command, f"start seed={cfg['seed']}")
    try:
        _write_config(cfg, out)
        if args.command == "criterion-noise":
            report = B.criterion_noise_study(cfg, threads=args.threads)
            B.write_criterion_noise(report, out)
            for k in report.K:
                print(f"K={B.format_batch_size(k):>4}  rho={report.rho[k]:.4f}")
        elif args.command == "optimize":
            name, trace, objective = B.optimize(cfg, threads=args.threads, policy=args.policy)
            B.write_trace(name, trace, objective, out)
            f = trace.final
            print(f"{name}: n={f.evaluations} xhat={f.xhat} Mhat={f.Mhat:.6g} H={f.H:.4f}")
        else:
            summary = B.bench(cfg, workers=args.threads)
            B.write_bench(summary, out)
            if summary.failures:
                print(f"warning: {len(summary.failures)} run(s) failed", file=sys.stderr)
            print(f"wrote {len(summary.lines)} trace records and {len(summary.rows)} summary rows to {out}")
    except B.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IagoError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        B.timed_log(out, args.command, f"failed: {exc}")
        return EXIT_NUMERICAL
    B.timed_log(out, args.command, "done")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

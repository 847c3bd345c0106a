"""Command line driver for single solves, studies and the model problem."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from inverse_ibm import model_problem
from inverse_ibm.studies import (
    ConfigError,
    StudyConfig,
    rows_to_csv,
    run_conditioning,
    run_convergence,
    solve_single,
)

log = logging.getLogger("inverse_ibm")


def _write(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        log.info("wrote %s", out)


def _load(args) -> StudyConfig:
    if args.config is None:
        return StudyConfig()
    return StudyConfig.load(args.config)


def _out(args, cfg=None):
    if args.out is not None:
        return args.out
    return cfg.output if cfg is not None else None


def cmd_solve(args) -> int:
    cfg = _load(args)
    summary = solve_single(cfg, args.level)
    _write(json.dumps(summary, indent=2, default=float) + "\n", _out(args, cfg))
    return 0


def cmd_convergence(args) -> int:
    cfg = _load(args)
    _write(rows_to_csv(run_convergence(cfg)), _out(args, cfg))
    return 0


def cmd_conditioning(args) -> int:
    cfg = _load(args)
    _write(rows_to_csv(run_conditioning(cfg, threads=args.threads)), _out(args, cfg))
    return 0


def cmd_model_hessian(args) -> int:
    spec = {}
    if args.config is not None:
        spec = json.loads(Path(args.config).read_text())
    shapes = spec.get("shapes")
    if shapes is None:
        shapes = [(a, b if b is not None else a) for a, b in zip(args.a, args.b or [None] * len(args.a))]
    Ks = spec.get("Ks", args.K)
    n = spec.get("n", model_problem.DEFAULT_INTERVALS)
    rows = model_problem.conditioning_sweep([tuple(s) for s in shapes], Ks, n)
    _write(model_problem.sweep_to_csv(rows), args.out or spec.get("output"))
    return 0


def cmd_illposed(args) -> int:
    lines = ["n,R,ratio,closed_form"]
    for n in range(1, args.n + 1):
        ratio = model_problem.illposedness_demo(n, args.R)
        lines.append(f"{n},{args.R!r},{ratio!r},{args.R**n * math.sqrt(args.R)!r}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inverse-ibm", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, threads=False):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--out", type=Path, help="output path (default: stdout)")
        if threads:
            p.add_argument("--threads", type=int, default=1, help="worker threads for column solves")
        return p

    p = common(sub.add_parser("solve", help="one saddle-point solve, JSON summary"))
    p.add_argument("--level", type=int, default=0, help="refinement level of the coarse mesh")
    p.set_defaults(func=cmd_solve)
    common(sub.add_parser("convergence", help="L2 convergence study, CSV")).set_defaults(func=cmd_convergence)
    common(sub.add_parser("conditioning", help="reduced Hessian conditioning sweep, CSV"), threads=True).set_defaults(
        func=cmd_conditioning
    )

    p = common(sub.add_parser("model-hessian", help="analytic model-problem conditioning sweep, CSV"))
    p.add_argument("--K", type=int, nargs="+", default=[50], help="numbers of point controls")
    p.add_argument("--a", type=float, nargs="+", default=[0.8], help="ellipse semi-major axes")
    p.add_argument("--b", type=float, nargs="+", default=None, help="semi-minor axes (default: circles)")
    p.set_defaults(func=cmd_model_hessian)

    p = sub.add_parser("illposed-demo", help="amplification of harmonic modes")
    p.add_argument("--n", type=int, default=10, help="largest mode number")
    p.add_argument("--R", type=float, default=1.25, help="outer radius")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_illposed)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

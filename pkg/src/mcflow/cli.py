"""Command line entry point.

Subcommands run the staged pipeline up to and including the named stage:

  alencar            shoot the radial minimal profile and write its table
  eigen              exact polynomial eigenfunction and its coefficients
  gsolve             auxiliary correction ODE and glued-initial-data scales
  barriers verify    certify the frozen barrier constants (residual signs,
                     matching brackets, nesting)
  barriers search    re-run the staged constant search before certifying
  evolve             run the continuation family and write monitor traces
  report             everything plus the criterion report and figures
  all                alias for report

The default output root comes from --out, then the MCFLOW_OUT environment
variable, then ./mcflow_out. With --resume existing CSV/JSON artifacts are
kept byte-identical and reloaded instead of recomputed. Exit status for
report/all is 0 iff every non-blocked criterion passes; for earlier stages
it is 0 iff no stage failed.
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import default_config, parse_config
from .errors import McflowError
from .pipeline import STAGES, run_pipeline

_STAGE_OF = {
    "alencar": "alencar",
    "eigen": "eigen",
    "gsolve": "gsolve",
    "barriers": "barriers",
    "evolve": "evolve",
    "report": "report",
    "all": "report",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mcflow",
        description="desk-scale continuation of a symmetric mean curvature "
        "flow through its degenerate singularity",
    )
    ap.add_argument("--config", metavar="PATH", default=None,
                    help="JSON configuration file (defaults are used if omitted)")
    ap.add_argument("--out", metavar="DIR", default=None,
                    help="output root (default: $MCFLOW_OUT or ./mcflow_out)")
    ap.add_argument("--only", metavar="STAGE", default=None, choices=STAGES,
                    help="stop after this stage even if the subcommand goes further")
    ap.add_argument("--resume", action="store_true",
                    help="keep existing artifacts byte-identical; recompute only "
                    "what is missing")
    ap.add_argument("--threads", type=int, default=1, metavar="N",
                    help="worker thread budget (stages are deterministic for any N)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("alencar", "eigen", "gsolve", "evolve", "report", "all"):
        sub.add_parser(name)
    bar = sub.add_parser("barriers")
    bar.add_argument("action", choices=("verify", "search"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else default_config()
        if args.command == "barriers" and args.action == "search":
            cfg.barriers.mode = "search"
        outdir = args.out or os.environ.get("MCFLOW_OUT") or "mcflow_out"
        stage = args.only or _STAGE_OF[args.command]
        report = run_pipeline(cfg, outdir, only=stage, resume=args.resume,
                              threads=args.threads)
    except McflowError as exc:
        print(f"mcflow: error: {exc}", file=sys.stderr)
        return 2
    if report is not None:
        for crit in report["criteria"]:
            mark = "BLOCKED" if crit.get("blocked") else (
                "PASS" if crit["pass"] else "FAIL")
            print(f"{mark:8s} {crit['name']}")
        print(f"report written under {outdir}")
        return 0 if report["all_pass"] else 1
    print(f"stage '{stage}' complete; artifacts under {outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

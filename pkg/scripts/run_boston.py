#!/usr/bin/env python3
"""Run the full Boston housing experiment: prepare, tune, evaluate, report.

Roughly 15 minutes on one core with the shipped config (most of it hyper-
parameter search). Pass --skip-tune to reuse tuned_*.json from a previous
run, or --stage to run a single stage.
"""
import argparse
import sys
import time

from regrobust.cli import main as cli_main

STAGES = ("prepare", "tune", "evaluate", "report")


def run(stage: str, config: str, extra) -> int:
    argv = [stage, "--config", config, *extra]
    print(f"== {stage} {' '.join(extra)}", flush=True)
    t0 = time.time()
    rc = cli_main(argv)
    print(f"== {stage} done in {time.time() - t0:.0f}s (rc={rc})", flush=True)
    return rc


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/boston.json")
    ap.add_argument("--stage", choices=STAGES, help="run only this stage")
    ap.add_argument("--skip-tune", action="store_true",
                    help="reuse existing tuned_*.json files")
    ap.add_argument("--jobs", type=int, help="worker processes")
    args = ap.parse_args()

    extra = []
    if args.jobs is not None:
        extra += ["--jobs", str(args.jobs)]

    stages = [args.stage] if args.stage else [
        s for s in STAGES if not (args.skip_tune and s == "tune")
    ]
    for stage in stages:
        rc = run(stage, args.config, extra)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())

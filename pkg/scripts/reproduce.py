#!/usr/bin/env python3
"""Generate the synthetic year and run every CLI command on it.

    python3 scripts/reproduce.py --out results --jobs 4

Each subcommand writes into its own folder below ``--out``. The rank step
on a full year takes a few minutes per variant; pass ``--days`` to shorten.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from dhpeak.cli import main as dhpeak


def step(name: str, argv: list[str]) -> None:
    t0 = time.perf_counter()
    code = dhpeak(argv)
    print(f"{name:<9} exit={code}  {time.perf_counter() - t0:6.1f} s")
    if code:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--days", type=int, default=365)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--skip-rank", action="store_true")
    args = ap.parse_args()

    data = args.out / "data"
    step("synth", ["synth", "--seed", str(args.seed), "--days", str(args.days), "--out", str(data)])
    source = ["--meter-csv", str(data / "meter.csv"), "--meta-csv", str(data / "meta.csv")]
    step("validate", ["validate", *source, "--out", str(args.out / "validate")])
    step("run", ["run", *source, "--out", str(args.out / "run")])
    step("sweep", ["sweep", *source, "--jobs", str(args.jobs), "--out", str(args.out / "sweep")])
    if not args.skip_rank:
        step("rank", ["rank", *source, "--jobs", str(args.jobs), "--out", str(args.out / "rank")])


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Run every retrieval ablation arm over one seeded scenario batch.

Prints a combined markdown table and, with --out, writes the per-arm
report JSONs next to it. The arms share seeds, so rows are directly
comparable.

Usage:
    python scripts/suppression_ablation.py --n 100 --seed 0 --out results/
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from lookforge.evalsuite import ABLATIONS, markdown_table, run_interference_suite


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=100, help="scenarios per arm")
    parser.add_argument("--seed", type=int, default=0, help="base seed")
    parser.add_argument("--out", default=None, help="directory for report JSONs")
    args = parser.parse_args(argv)

    reports = []
    for arm in ABLATIONS:
        t0 = time.perf_counter()
        report = run_interference_suite(args.n, base_seed=args.seed, ablate=arm)
        elapsed = time.perf_counter() - t0
        print(f"[{arm}] {args.n} scenarios in {elapsed:.2f}s", file=sys.stderr)
        reports.append(report)

    print()
    print(markdown_table(reports), end="")

    none_row = reports[0]
    suppression_row = reports[1]
    if not none_row.top1_accuracy > suppression_row.top1_accuracy:
        print("warning: suppression arm did not separate from the full branch",
              file=sys.stderr)
        return 1

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for report in reports:
            path = out / f"eval_{report.ablation}.json"
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        print(f"\nreports in {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""End-to-end walkthrough on a fabricated scenario bundle.

Generates a synthetic marketplace (ambiguous hoodie prompt, interference
in the global embedding, one part crop, bundled bodies, scripted judge).
Runs every CLI stage in order, then checks the winning look against the
planted truth.

Usage:
    python scripts/demo_pipeline.py --dir demo_run --seed 0
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from lookforge.cli import main as lookforge_main


def run(args: list[str]) -> None:
    print(f"$ lookforge {' '.join(args)}")
    rc = lookforge_main(args)
    if rc != 0:
        raise SystemExit(rc)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dir", default="demo_run", help="scenario directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    root = Path(args.dir)
    run(["synth", "--out", str(root), "--seed", str(args.seed)])
    cfg = ["--config", str(root / "config.json")]
    for command in ("ingest", "build-index", "route", "retrieve", "assemble"):
        run([command, *cfg])

    truth = json.loads((root / "truth.json").read_text())
    look = json.loads((root / "output" / "look.json").read_text())
    winner = look["winner"]

    print()
    print(f"winner: {winner['look_id']} ({winner['status']}), "
          f"body bundle {winner['body_bundle_id']}")
    ok = True
    for category, planted in sorted(truth["planted_selections"].items()):
        got = winner["selections"].get(category)
        mark = "ok" if got == planted else "MISS"
        print(f"  {category:8s} planted {planted:12s} got {got or '-':12s} {mark}")
        ok = ok and got == planted
    extras = sorted(set(winner["selections"]) - set(truth["planted_selections"]))
    if extras:
        print(f"  extra selections: {', '.join(extras)}")
    print()
    print("planted truth recovered" if ok else "planted truth NOT recovered")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Desk-scale end-to-end workflow driven through the CLI.

Generates the 20x20 training grid and a seeded validation set at nx=151,
fits the beta=15 / 10-component surrogate, reports reconstruction errors,
and runs the synthetic-noise study. Everything lands under the chosen
output root; re-running resumes the dataset sweeps.

Usage: python scripts/desk_pipeline.py [--root desk_run] [--workers 2]
"""

import argparse
import sys
from pathlib import Path

from cavityfill.cli import main as cli


def run(argv: list[str]) -> None:
    print("$ cavityfill " + " ".join(argv), flush=True)
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="desk_run")
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()
    root = Path(args.root)
    w = str(args.workers)

    run(["dataset", "--grid", "20x20", "--n", "1", "--nx", "151",
         "--workers", w, "--out", str(root / "train")])
    run(["dataset", "--random", "200", "--n", "1", "--nx", "151",
         "--seed", "20240901", "--workers", w, "--out", str(root / "val")])
    run(["train", "--dataset", str(root / "train"), "--beta", "15", "--p", "9",
         "--out", str(root / "model")])
    run(["validate", "--model", str(root / "model" / "surrogate.json"),
         "--dataset", str(root / "val"), "--out", str(root / "validation")])
    run(["noise-study", "--model", str(root / "model" / "surrogate.json"),
         "--dataset", str(root / "val"), "--alphas", "0,0.02,0.05,0.1",
         "--couples", "50", "--seed", "777", "--workers", w,
         "--out", str(root / "noise")])


if __name__ == "__main__":
    main()

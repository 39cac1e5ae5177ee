#!/usr/bin/env python3
"""Pre-compute the solver runs the acceptance suite depends on.

The acceptance tests build any missing run on demand, but the full set
(convergence references, the 20x20 training grid, validation profiles)
costs a few CPU-hours; this script fills the ``.cache/runs`` directory in
parallel so ``pytest tests/test_acceptance.py`` is fast afterwards.

Usage: python scripts/warm_acceptance_cache.py [--workers N]
"""

import argparse
import os
import sys
import time
from multiprocessing import Pool
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import acceptance_cache as ac
from cavityfill.model import RheoParams
from cavityfill.solver import SolverConfig

# Convergence-study triples: grid lists chosen so every coarse grid nests in
# the reference.  The high-B/low-S triple is refined less: its cost grows
# roughly eightfold per grid doubling and a 2401-node reference would take
# about a day on a desk machine.
CONVERGENCE_JOBS = [
    (100.0, 120.0, 0.8, [76, 151, 301, 601, 1201, 2401]),
    (30.0, 15.0, 0.8, [76, 151, 301, 601, 1201, 2401]),
    (70.0, 0.3, 0.8, [76, 151, 301, 601, 1201]),
]


def all_jobs():
    jobs = []
    for b, s, n, nx_list in CONVERGENCE_JOBS:
        for nx in nx_list:
            jobs.append((b, s, n, nx))
    for b, s in ac.training_couples():
        jobs.append((b, s, 1.0, ac.DESK_NX))
    for b, s in ac.validation_couples():
        jobs.append((b, s, 1.0, ac.DESK_NX))
    for b, s in ac.mass_balance_couples():
        jobs.append((b, s, 1.0, 301))
        jobs.append((b, s, 1.0, 601))
    # Longest first: cost grows with B/S and steeply with resolution.
    jobs.sort(key=lambda j: ac.cost_rank(j[0], j[1]) * j[3] ** 3, reverse=True)
    return jobs


def run_one(job):
    b, s, n, nx = job
    t0 = time.perf_counter()
    run = ac.run_cached(RheoParams(b, s, n), SolverConfig(nx=nx))
    return job, run.steps_taken, run.wall_touch_time, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    jobs = all_jobs()
    print(f"{len(jobs)} runs, {args.workers} workers", flush=True)
    done = 0
    with Pool(args.workers) as pool:
        for (b, s, n, nx), steps, t_wall, wall in pool.imap_unordered(run_one, jobs):
            done += 1
            print(
                f"[{done}/{len(jobs)}] B={b:<8.4g} S={s:<8.4g} n={n} nx={nx:<5d} "
                f"steps={steps:<11d} t_wall={t_wall:.4f} ({wall:.1f}s)",
                flush=True,
            )
    print("cache complete", flush=True)


if __name__ == "__main__":
    main()

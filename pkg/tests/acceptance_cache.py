"""Disk cache of expensive solver runs shared by the acceptance suite.

Full-physics runs (convergence references, the training grid, validation
profiles) cost minutes to hours; they are pure functions of (params, config)
and the solver is bit-deterministic, so results are cached under
``.cache/runs`` at the repository root and reused across pytest sessions.
Delete the directory to force a rebuild.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from cavityfill.model import RheoParams
from cavityfill.solver import HeightProfile, SolverConfig, SolverRun, run_to_wall_touch

REPO_ROOT = Path(__file__).resolve().parent.parent
CACHE_DIR = Path(os.environ.get("CAVITYFILL_CACHE", REPO_ROOT / ".cache")) / "runs"

# Frozen sampling seeds for the acceptance studies.
VALIDATION_SEED = 20240901
N_VALIDATION = 200
MASS_SEED = 4242
TRAIN_GRID_SHAPE = (20, 20)
DESK_NX = 151


def run_key(params: RheoParams, config: SolverConfig) -> str:
    return (
        f"B{params.B:.17g}_S{params.S:.17g}_n{params.n:.17g}"
        f"_nx{config.nx}_cd{config.Cd:.17g}_thr{config.wall_touch_threshold:.6g}"
    )


def run_cached(params: RheoParams, config: SolverConfig) -> SolverRun:
    """run_to_wall_touch with a transparent on-disk cache."""
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    path = CACHE_DIR / (run_key(params, config) + ".npz")
    if path.exists():
        data = np.load(path)
        final = HeightProfile(
            h=data["h"],
            t=float(data["t"]),
            params=params,
            provenance="pde",
        )
        return SolverRun(
            final=final,
            wall_touch_time=float(data["t"]),
            steps_taken=int(data["steps"]),
            dt_summary=(
                float(data["dt_min"]),
                float(data["dt_max"]),
                float(data["dt_mean"]),
            ),
            clamped_mass=float(data["clamped"]),
            max_boundary_residual=float(data["resid"]),
        )
    run = run_to_wall_touch(params, config)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        h=run.final.h,
        t=run.wall_touch_time,
        steps=run.steps_taken,
        dt_min=run.dt_summary[0],
        dt_max=run.dt_summary[1],
        dt_mean=run.dt_summary[2],
        clamped=run.clamped_mass,
        resid=run.max_boundary_residual,
    )
    os.replace(tmp, path)
    return run


def training_couples() -> list[tuple[float, float]]:
    """Regular 20x20 grid spanning the full (B, S) rectangle."""
    bs = np.linspace(0.5, 250.0, TRAIN_GRID_SHAPE[0])
    ss = np.linspace(0.05, 120.0, TRAIN_GRID_SHAPE[1])
    return [(float(b), float(s)) for b in bs for s in ss]


def validation_couples(count: int = N_VALIDATION, seed: int = VALIDATION_SEED):
    """Seeded uniform sample of the (B, S) rectangle."""
    rng = np.random.default_rng(seed)
    arr = rng.uniform(low=[0.5, 0.05], high=[250.0, 120.0], size=(count, 2))
    return [(float(b), float(s)) for b, s in arr]


def mass_balance_couples(count: int = 10, seed: int = MASS_SEED):
    rng = np.random.default_rng(seed)
    arr = rng.uniform(low=[0.5, 0.05], high=[250.0, 120.0], size=(count, 2))
    return [(float(b), float(s)) for b, s in arr]


def cost_rank(b: float, s: float) -> float:
    """Longest-first scheduling heuristic: high B and low S run longest."""
    return b / max(s, 0.05)

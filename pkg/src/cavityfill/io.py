"""File formats: profile CSV + JSON sidecar, dataset directories, manifests.

A profile is stored as a two-column CSV (``x,h``, one node per line, floats
as shortest round-trip decimals) next to a JSON sidecar carrying the
generating parameters and the wall-touch time.  A dataset directory holds
one profile pair per (B, S) couple under ``couples/`` plus an ``index.json``
with the sweep description; every command output directory also gets a
``manifest.json`` snapshot sufficient to reproduce it (timestamps aside,
seeded outputs are bit-reproducible).
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .model import RheoParams
from .solver import HeightProfile, SolverConfig
from .surrogate import TrainingSet

PROFILE_HEADER = "x,h"


def write_profile(
    csv_path: str | Path,
    sidecar_path: str | Path,
    profile: HeightProfile,
) -> None:
    """Write the CSV profile and its JSON sidecar."""
    lines = [PROFILE_HEADER]
    xs = profile.x
    for x, h in zip(xs, profile.h):
        lines.append(f"{float(x)!r},{float(h)!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")
    sidecar = {
        "B": profile.params.B,
        "S": profile.params.S,
        "n": profile.params.n,
        "nx": profile.nx,
        "wall_touch_time": profile.t,
        "provenance": profile.provenance,
    }
    Path(sidecar_path).write_text(json.dumps(sidecar, indent=1) + "\n")


def read_profile_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column ``x,h`` CSV; returns (x, h)."""
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip().lower() not in ("x,h", '"x","h"'):
        raise ValueError(f"{path}: expected header '{PROFILE_HEADER}'")
    xs, hs = [], []
    for i, line in enumerate(text[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{i}: expected two columns")
        xs.append(float(parts[0]))
        hs.append(float(parts[1]))
    return np.asarray(xs), np.asarray(hs)


def read_profile(csv_path: str | Path) -> HeightProfile:
    """Read a profile pair (CSV plus sidecar) back into a HeightProfile."""
    x, h = read_profile_csv(csv_path)
    sidecar_path = Path(csv_path).with_suffix(".json")
    meta = json.loads(sidecar_path.read_text())
    return HeightProfile(
        h=h,
        t=meta.get("wall_touch_time"),
        params=RheoParams(B=meta["B"], S=meta["S"], n=meta["n"]),
        provenance=meta.get("provenance", "pde"),
    )


def load_observation(
    path: str | Path, nx_target: int
) -> tuple[HeightProfile, RheoParams | None]:
    """Load an observed profile and resample it onto a uniform nx grid.

    Accepts any ``x,h`` CSV whose x column is strictly increasing and spans
    [0, 1]; a sidecar JSON next to it, when present, supplies the generating
    parameters (used as the known truth of synthetic studies).
    """
    x, h = read_profile_csv(path)
    if np.any(np.diff(x) <= 0):
        raise ValueError(f"{path}: x must be strictly increasing")
    if abs(x[0]) > 1e-6 or abs(x[-1] - 1.0) > 1e-6:
        raise ValueError(f"{path}: x must span [0, 1], got [{x[0]}, {x[-1]}]")
    if np.any(h < 0):
        raise ValueError(f"{path}: heights must be nonnegative")
    resampled = np.interp(np.linspace(0.0, 1.0, nx_target), x, h)

    truth = None
    t = None
    provenance = "observed"
    sidecar = Path(path).with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        truth = RheoParams(B=meta["B"], S=meta["S"], n=meta["n"])
        t = meta.get("wall_touch_time")
        provenance = meta.get("provenance", "observed")
        if provenance not in ("observed", "noisy"):
            provenance = "observed"
    profile = HeightProfile(
        h=resampled,
        t=t,
        params=truth if truth is not None else RheoParams(1.0, 1.0, 1.0),
        provenance=provenance,
    )
    return profile, truth


# ---------------------------------------------------------------------------
# Dataset directories


def couple_id(i: int) -> str:
    return f"c{i:04d}"


def dataset_paths(out_dir: Path, cid: str) -> tuple[Path, Path]:
    couples = out_dir / "couples"
    return couples / f"{cid}.csv", couples / f"{cid}.json"


def write_dataset_index(
    out_dir: str | Path,
    grid_descriptor: dict,
    n: float,
    solver_config: SolverConfig,
    entries: list[dict],
) -> None:
    index = {
        "grid": grid_descriptor,
        "n": n,
        "solver_config": {
            "nx": solver_config.nx,
            "Cd": solver_config.Cd,
            "dt_max": solver_config.dt_max,
            "wall_touch_threshold": solver_config.wall_touch_threshold,
            "max_steps": solver_config.max_steps,
        },
        "couples": sorted(entries, key=lambda e: e["id"]),
    }
    (Path(out_dir) / "index.json").write_text(json.dumps(index, indent=1) + "\n")


def read_dataset_index(dataset_dir: str | Path) -> dict:
    path = Path(dataset_dir) / "index.json"
    if not path.exists():
        raise FileNotFoundError(f"{dataset_dir} has no index.json")
    return json.loads(path.read_text())


def read_dataset(dataset_dir: str | Path) -> TrainingSet:
    """Load every successful couple of a dataset directory."""
    dataset_dir = Path(dataset_dir)
    index = read_dataset_index(dataset_dir)
    inputs, outputs = [], []
    failed = []
    for entry in index["couples"]:
        if entry.get("status") != "ok":
            failed.append(entry["id"])
            continue
        profile = read_profile(dataset_dir / entry["csv"])
        inputs.append(profile.params)
        outputs.append(profile)
    if not inputs:
        raise ValueError(f"{dataset_dir}: no successful couples")
    return TrainingSet(
        inputs=inputs, outputs=outputs, grid_descriptor=index["grid"]
    )


# ---------------------------------------------------------------------------
# Run manifests


def write_manifest(
    out_dir: str | Path,
    command: str,
    config: dict,
    seed: int | None = None,
    durations: dict | None = None,
    started: float | None = None,
) -> None:
    """One manifest per output directory: everything needed to re-run."""
    now = time.time()
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "started": started if started is not None else now,
        "finished": now,
        "durations": durations or {},
    }
    (Path(out_dir) / "manifest.json").write_text(json.dumps(doc, indent=1) + "\n")


def write_columns_csv(path: str | Path, header: list[str], columns: list) -> None:
    """Write aligned columns (floats as shortest round-trip decimals)."""
    rows = zip(*columns)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")

"""Command-line interface.

Subcommands: simulate | dataset | train | validate | invert | noise-study |
convergence.  Every command writes its outputs plus a ``manifest.json`` into
the ``--out`` directory; seeded commands are bit-reproducible from the
manifest (timestamps aside).  Exit codes: 0 success, 1 usage or
configuration error, 2 numerical failure, 3 below the convergence-order gate
(convergence command only).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from .model import B_BOUNDS, DomainError, RheoParams, S_BOUNDS
from .inversion import (
    InversionOptions,
    NoiseSpec,
    Observation,
    add_noise,
    estimate_params,
    noise_study,
    _noise_seed,
)
from .solver import (
    NumericalError,
    SolverConfig,
    convergence_study,
    run_to_wall_touch,
)
from .surrogate import (
    UnderdeterminedError,
    evaluate,
    load_surrogate,
    save_surrogate,
    train_surrogate,
    validate as validate_surrogate,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_GATE = 3

# Named resolution/sample-count profiles: "desk" turns studies around in
# minutes on a laptop, "production" matches the full-scale configuration.
PROFILES = {
    "desk": {"nx": 151, "couples": 50, "validation_count": 200},
    "production": {"nx": 301, "couples": 500, "validation_count": 6000},
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _common_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="JSON file with default option values")
    parent.add_argument("--profile", choices=sorted(PROFILES), default=None,
                        help="named defaults: desk (default) or production")
    parent.add_argument("--seed", type=int, default=None)
    parent.add_argument("--workers", type=int, default=None)
    parent.add_argument("--out", required=True, help="output directory")
    return parent


def _solver_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--nx", type=int, default=None)
    parent.add_argument("--cd", type=float, default=None)
    parent.add_argument("--wall-touch-threshold", type=float, default=None)
    parent.add_argument("--max-steps", type=int, default=None)
    return parent


def build_parser() -> _Parser:
    parser = _Parser(prog="cavityfill", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parent()
    solver = _solver_parent()

    p = sub.add_parser("simulate", parents=[common, solver],
                       help="run one couple to wall-touch and export the profile")
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--S", type=float, required=True)
    p.add_argument("--n", type=float, default=1.0)

    p = sub.add_parser("dataset", parents=[common, solver],
                       help="evaluate a (B, S) sweep in parallel, resumably")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid", help="regular grid, e.g. 20x20")
    g.add_argument("--random", type=int, help="uniform random couple count")
    p.add_argument("--b-range", nargs=2, type=float, default=list(B_BOUNDS))
    p.add_argument("--s-range", nargs=2, type=float, default=list(S_BOUNDS))
    p.add_argument("--n", type=float, default=1.0)

    p = sub.add_parser("train", parents=[common],
                       help="fit the PCE+PCA surrogate on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--beta", type=int, default=15)
    p.add_argument("--p", type=int, default=9,
                   help="index of the last retained component")
    p.add_argument("--no-pca", action="store_true",
                   help="retain every component (independent PCE per node)")

    p = sub.add_parser("validate", parents=[common],
                       help="reconstruction-error statistics on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("invert", parents=[common],
                       help="estimate (B, S) from an observed profile")
    p.add_argument("--model", required=True)
    p.add_argument("--observation", required=True)
    p.add_argument("--max-iter", type=int, default=400)
    p.add_argument("--no-multi-start", action="store_true")
    p.add_argument("--overlay", action="store_true",
                   help="also write observed-vs-fitted overlay columns")

    p = sub.add_parser("noise-study", parents=[common],
                       help="estimation-error statistics under synthetic noise")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True,
                   help="validation dataset directory")
    p.add_argument("--alphas", default="0,0.02,0.05,0.1",
                   help="comma-separated noise intensities")
    p.add_argument("--couples", type=int, default=None)

    p = sub.add_parser("convergence", parents=[common, solver],
                       help="grid-refinement error study at one couple")
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--S", type=float, required=True)
    p.add_argument("--n", type=float, default=1.0)
    p.add_argument("--nx-list", default="76,151,301",
                   help="comma-separated coarse grids")
    p.add_argument("--nx-ref", type=int, default=2401)
    p.add_argument("--min-order", type=float, default=0.6,
                   help="exit 3 when the fitted order falls below this")
    return parser


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return doc


class Settings:
    """Option resolution: CLI flag > config file > named profile."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.config = _load_config_file(self.args.get("config"))
        profile = self.args.get("profile") or self.config.get("profile") or "desk"
        if profile not in PROFILES:
            raise UsageError(f"unknown profile {profile!r}")
        self.profile = PROFILES[profile]

    def get(self, key: str, fallback=None):
        value = self.args.get(key)
        if value is None:
            value = self.config.get(key)
        if value is None:
            value = self.profile.get(key)
        if value is None:
            value = fallback
        return value

    def solver_config(self) -> SolverConfig:
        kwargs = {}
        nx = self.get("nx")
        if nx is not None:
            kwargs["nx"] = int(nx)
        if self.get("cd") is not None:
            kwargs["Cd"] = float(self.get("cd"))
        if self.get("wall_touch_threshold") is not None:
            kwargs["wall_touch_threshold"] = float(self.get("wall_touch_threshold"))
        if self.get("max_steps") is not None:
            kwargs["max_steps"] = int(self.get("max_steps"))
        return SolverConfig(**kwargs)

    def out_dir(self) -> Path:
        out = Path(self.args["out"])
        out.mkdir(parents=True, exist_ok=True)
        return out


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in _parse_float_list(text)]


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    params = RheoParams(
        B=settings.args["B"], S=settings.args["S"], n=settings.args["n"]
    )
    config = settings.solver_config()
    run = run_to_wall_touch(params, config)
    fio.write_profile(out / "profile.csv", out / "profile.json", run.final)
    fio.write_manifest(
        out,
        "simulate",
        {
            "B": params.B, "S": params.S, "n": params.n,
            "nx": config.nx, "Cd": config.Cd,
            "wall_touch_threshold": config.wall_touch_threshold,
            "max_steps": config.max_steps,
        },
        durations={"solve": time.time() - started},
        started=started,
    )
    print(f"wall-touch time: {run.wall_touch_time!r} "
          f"({run.steps_taken} steps, max closure residual "
          f"{run.max_boundary_residual:.2e})")
    return EXIT_OK


def _dataset_worker(task):
    cid, b, s, n, cfg_kwargs, out_dir = task
    t0 = time.perf_counter()
    config = SolverConfig(**cfg_kwargs)
    csv_path, sidecar_path = fio.dataset_paths(Path(out_dir), cid)
    try:
        run = run_to_wall_touch(RheoParams(b, s, n), config)
        fio.write_profile(csv_path, sidecar_path, run.final)
        return cid, "ok", run.wall_touch_time, time.perf_counter() - t0, ""
    except Exception as exc:  # noqa: BLE001 - reported in the index
        return cid, "failed", None, time.perf_counter() - t0, str(exc)


def _dataset_couples(settings: Settings) -> tuple[list[tuple[float, float]], dict]:
    blo, bhi = settings.args["b_range"]
    slo, shi = settings.args["s_range"]
    if not (blo < bhi and slo < shi):
        raise UsageError("ranges must be increasing pairs")
    if settings.args.get("grid"):
        try:
            nb, ns = (int(v) for v in settings.args["grid"].lower().split("x"))
        except ValueError as exc:
            raise UsageError(f"--grid expects NBxNS, got {settings.args['grid']!r}") from exc
        if nb < 2 or ns < 2:
            raise UsageError("regular grids need at least 2 values per axis")
        couples = [
            (float(b), float(s))
            for b in np.linspace(blo, bhi, nb)
            for s in np.linspace(slo, shi, ns)
        ]
        descriptor = {
            "kind": "regular", "shape": [nb, ns],
            "B_range": [blo, bhi], "S_range": [slo, shi],
        }
    else:
        count = int(settings.args["random"])
        seed = settings.get("seed", 0)
        rng = np.random.default_rng(seed)
        arr = rng.uniform(low=[blo, slo], high=[bhi, shi], size=(count, 2))
        couples = [(float(b), float(s)) for b, s in arr]
        descriptor = {
            "kind": "random", "count": count, "seed": seed,
            "B_range": [blo, bhi], "S_range": [slo, shi],
        }
    return couples, descriptor


def cmd_dataset(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    (out / "couples").mkdir(exist_ok=True)
    couples, descriptor = _dataset_couples(settings)
    n = float(settings.args["n"])
    config = settings.solver_config()
    cfg_kwargs = {
        "nx": config.nx, "Cd": config.Cd, "dt_max": config.dt_max,
        "wall_touch_threshold": config.wall_touch_threshold,
        "max_steps": config.max_steps,
    }
    workers = int(settings.get("workers", 1) or 1)

    tasks = []
    skipped = 0
    for i, (b, s) in enumerate(couples):
        cid = fio.couple_id(i)
        csv_path, sidecar_path = fio.dataset_paths(out, cid)
        if csv_path.exists() and sidecar_path.exists():
            skipped += 1
            continue
        tasks.append((cid, b, s, n, cfg_kwargs, str(out)))
    # Longest first: high B and low S wall-touch latest and dominate the
    # wall time of the sweep.
    tasks.sort(key=lambda t: t[1] / max(t[2], 0.05), reverse=True)

    durations: dict[str, float] = {}
    failures: dict[str, str] = {}
    if tasks:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_dataset_worker, tasks))
        else:
            results = [_dataset_worker(t) for t in tasks]
        for cid, status, _t_wall, dur, err in results:
            durations[cid] = dur
            if status != "ok":
                failures[cid] = err

    entries = []
    for i, (b, s) in enumerate(couples):
        cid = fio.couple_id(i)
        csv_path, sidecar_path = fio.dataset_paths(out, cid)
        entry = {"id": cid, "B": b, "S": s}
        if csv_path.exists() and sidecar_path.exists():
            meta = json.loads(sidecar_path.read_text())
            entry.update(
                status="ok",
                csv=str(csv_path.relative_to(out)),
                sidecar=str(sidecar_path.relative_to(out)),
                wall_touch_time=meta["wall_touch_time"],
            )
        else:
            entry.update(status="failed", error=failures.get(cid, "missing output"))
        entries.append(entry)
    fio.write_dataset_index(out, descriptor, n, config, entries)
    fio.write_manifest(
        out,
        "dataset",
        {
            "grid": descriptor, "n": n, "solver": cfg_kwargs, "workers": workers,
        },
        seed=descriptor.get("seed"),
        durations=durations,
        started=started,
    )
    n_failed = sum(1 for e in entries if e["status"] != "ok")
    print(f"dataset: {len(entries) - n_failed}/{len(entries)} couples "
          f"({skipped} reused, {n_failed} failed)")
    if n_failed:
        for e in entries:
            if e["status"] != "ok":
                print(f"  {e['id']} (B={e['B']}, S={e['S']}): {e['error']}",
                      file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_train(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    training = fio.read_dataset(settings.args["dataset"])
    beta = int(settings.args["beta"])
    p = None if settings.args["no_pca"] else int(settings.args["p"])
    index = fio.read_dataset_index(settings.args["dataset"])
    surrogate = train_surrogate(
        training,
        beta=beta,
        p=p,
        metadata={
            "grid": training.grid_descriptor,
            "seed": training.grid_descriptor.get("seed"),
            "solver_config": index["solver_config"],
        },
    )
    save_surrogate(surrogate, out / "surrogate.json")
    fio.write_manifest(
        out,
        "train",
        {"dataset": str(settings.args["dataset"]), "beta": beta, "p": p},
        durations={"train": time.time() - started},
        started=started,
    )
    res = surrogate.pce.rms_residuals
    print(
        f"trained beta={beta} p={surrogate.pca.p} on {len(training.inputs)} couples: "
        f"max component RMS residual {res.max():.3e}, "
        f"design condition {surrogate.pce.design_condition:.3e}"
    )
    return EXIT_OK


def cmd_validate(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    surrogate = load_surrogate(settings.args["model"])
    validation = fio.read_dataset(settings.args["dataset"])
    stats = validate_surrogate(surrogate, validation)
    report = {
        "count": len(stats.per_couple),
        "beta": surrogate.pce.beta,
        "p": surrogate.pca.p,
        **stats.as_dict(),
    }
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    fio.write_columns_csv(
        out / "per_couple.csv",
        ["B", "S", "l2_error"],
        [
            [c[0] for c in stats.per_couple],
            [c[1] for c in stats.per_couple],
            [c[2] for c in stats.per_couple],
        ],
    )
    fio.write_manifest(
        out,
        "validate",
        {"model": settings.args["model"], "dataset": settings.args["dataset"]},
        durations={"validate": time.time() - started},
        started=started,
    )
    print(f"{'median':>10} {'q3':>10} {'max':>10} {'variance':>10}")
    print(f"{stats.median:10.4g} {stats.q3:10.4g} {stats.max:10.4g} "
          f"{stats.variance:10.4g}")
    return EXIT_OK


def cmd_invert(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    surrogate = load_surrogate(settings.args["model"])
    profile, truth = fio.load_observation(
        settings.args["observation"], surrogate.nx
    )
    obs = Observation(profile=profile, known_truth=truth)
    options = InversionOptions(
        max_iter=int(settings.args["max_iter"]),
        multi_start=not settings.args["no_multi_start"],
    )
    result = estimate_params(obs, surrogate, options)
    doc = {
        "B": result.estimate.B,
        "S": result.estimate.S,
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "warnings": result.warnings,
    }
    if result.relative_error is not None:
        doc["relative_error"] = result.relative_error
    if settings.get("seed") is not None:
        doc["seed"] = settings.get("seed")
    (out / "result.json").write_text(json.dumps(doc, indent=1) + "\n")
    if settings.args["overlay"]:
        fitted = evaluate(surrogate, result.estimate)
        fio.write_columns_csv(
            out / "overlay.csv",
            ["x", "h_observed", "h_fitted"],
            [fitted.x, profile.h, fitted.h],
        )
    fio.write_manifest(
        out,
        "invert",
        {
            "model": settings.args["model"],
            "observation": settings.args["observation"],
            "max_iter": options.max_iter,
            "multi_start": options.multi_start,
        },
        durations={"invert": time.time() - started},
        started=started,
    )
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(json.dumps(doc))
    return EXIT_OK


def cmd_noise_study(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    surrogate = load_surrogate(settings.args["model"])
    validation = fio.read_dataset(settings.args["dataset"])
    alphas = _parse_float_list(settings.args["alphas"])
    couples = int(settings.get("couples"))
    seed = int(settings.get("seed", 0) or 0)
    workers = int(settings.get("workers", 1) or 1)
    result = noise_study(
        surrogate, validation, alphas=alphas, couples=couples, seed=seed,
        workers=workers,
    )
    report = {
        "seed": seed,
        "couples": couples,
        "noise_convention": result.noise_convention,
        "rows": [
            {
                "alpha": r.alpha, "median": r.median, "q3": r.q3, "max": r.max,
                "variance": r.variance, "n_not_converged": r.n_not_converged,
                "n_failed": r.n_failed,
            }
            for r in result.rows
        ],
        "records": result.records,
    }
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")

    # Overlay columns (clean, noisy, fitted) for the first three couples.
    overlays = out / "overlays"
    overlays.mkdir(exist_ok=True)
    chosen = result.chosen_indices[:3]
    for ci, vi in enumerate(chosen):
        clean = validation.outputs[vi]
        for ai, alpha in enumerate(alphas):
            noisy = add_noise(
                clean, NoiseSpec(alpha=alpha, seed=_noise_seed(seed, ci, ai))
            )
            obs = Observation(profile=noisy, known_truth=validation.inputs[vi])
            est = estimate_params(obs, surrogate)
            fitted = evaluate(surrogate, est.estimate)
            fio.write_columns_csv(
                overlays / f"couple{ci}_alpha{alpha:g}.csv",
                ["x", "h_clean", "h_noisy", "h_fitted"],
                [clean.x, clean.h, noisy.h, fitted.h],
            )
    fio.write_manifest(
        out,
        "noise-study",
        {
            "model": settings.args["model"],
            "dataset": settings.args["dataset"],
            "alphas": alphas,
            "couples": couples,
            "workers": workers,
        },
        seed=seed,
        durations={"study": time.time() - started},
        started=started,
    )
    print(f"{'alpha':>8} {'median':>10} {'q3':>10} {'max':>10} {'variance':>10}")
    for r in result.rows:
        print(f"{r.alpha:8.3g} {r.median:10.4g} {r.q3:10.4g} {r.max:10.4g} "
              f"{r.variance:10.4g}")
    return EXIT_OK


def cmd_convergence(settings: Settings) -> int:
    started = time.time()
    out = settings.out_dir()
    params = RheoParams(
        B=settings.args["B"], S=settings.args["S"], n=settings.args["n"]
    )
    nx_list = _parse_int_list(settings.args["nx_list"])
    nx_ref = int(settings.args["nx_ref"])
    config = settings.solver_config()
    study = convergence_study(params, nx_list, nx_ref, config)
    fio.write_columns_csv(
        out / "errors.csv",
        ["nx", "dx", "l2_error"],
        [
            [float(r[0]) for r in study.rows],
            [r[1] for r in study.rows],
            [r[2] for r in study.rows],
        ],
    )
    report = {
        "B": params.B, "S": params.S, "n": params.n,
        "nx_ref": nx_ref, "order": study.order,
        "min_order": float(settings.args["min_order"]),
    }
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    fio.write_manifest(
        out, "convergence", report,
        durations={"study": time.time() - started}, started=started,
    )
    print(f"fitted order: {study.order:.3f}")
    if not study.order >= float(settings.args["min_order"]):
        print(
            f"order {study.order:.3f} below required "
            f"{settings.args['min_order']}", file=sys.stderr,
        )
        return EXIT_GATE
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "validate": cmd_validate,
    "invert": cmd_invert,
    "noise-study": cmd_noise_study,
    "convergence": cmd_convergence,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        settings = Settings(args)
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, UnderdeterminedError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

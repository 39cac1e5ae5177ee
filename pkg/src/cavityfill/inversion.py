"""Estimation of (B, S) from observed height profiles.

An observed wall-touch profile is matched against the surrogate by
derivative-free minimization of the L2 misfit.  The search runs in the
standardized coordinates of the trained rectangle (the raw domain is
250:120 anisotropic, which distorts simplex geometry), with out-of-domain
candidates clamped for evaluation and pushed back by a quadratic penalty.
Synthetic-noise studies quantify how estimation errors grow with the noise
level.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import RheoParams
from .solver import HeightProfile
from .surrogate import Surrogate, evaluate

__all__ = [
    "Observation",
    "NoiseSpec",
    "InversionResult",
    "InversionOptions",
    "SimplexResult",
    "NoiseStudyRow",
    "NoiseStudyResult",
    "add_noise",
    "relative_error",
    "misfit",
    "nelder_mead",
    "estimate_params",
    "noise_study",
]


@dataclass
class Observation:
    """A profile to invert, with the generating parameters when known."""

    profile: HeightProfile
    known_truth: RheoParams | None = None


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative Gaussian noise: per node, std = alpha * h."""

    alpha: float
    seed: int

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"noise intensity must be >= 0, got {self.alpha}")


@dataclass
class InversionResult:
    estimate: RheoParams
    objective: float
    iterations: int
    converged: bool
    relative_error: float | None = None
    trace: list | None = None
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class InversionOptions:
    max_iter: int = 400
    tol: float = 1e-8
    simplex_edge: float = 0.1
    multi_start: bool = True
    keep_trace: bool = False


def add_noise(profile: HeightProfile, spec: NoiseSpec) -> HeightProfile:
    """Noisy copy of a profile: h + N(0, (alpha h)^2) per node, clamped at 0.

    Nodes with h = 0 are unchanged; the result is deterministic in the seed.
    """
    rng = np.random.default_rng(spec.seed)
    eps = rng.standard_normal(profile.nx) * (spec.alpha * profile.h)
    return HeightProfile(
        h=np.maximum(profile.h + eps, 0.0),
        t=profile.t,
        params=profile.params,
        provenance="noisy",
    )


def relative_error(truth: RheoParams, estimate: RheoParams) -> float:
    """Euclidean norm of the componentwise relative (B, S) errors."""
    return math.hypot(
        (truth.B - estimate.B) / truth.B, (truth.S - estimate.S) / truth.S
    )


def _resample_to(profile: HeightProfile, nx: int) -> np.ndarray:
    if profile.nx == nx:
        return profile.h
    return np.interp(np.linspace(0.0, 1.0, nx), profile.x, profile.h)


def _domain_arrays(surrogate: Surrogate):
    off = np.asarray(surrogate.domain["offsets"])
    div = np.asarray(surrogate.domain["divisors"])
    return off, div


def _destandardize_clamped(surrogate: Surrogate, z: np.ndarray) -> tuple[float, float]:
    """Map standardized coordinates back to (B, S), clipped exactly onto the
    trained rectangle (the affine round trip can undershoot a bound by an
    ulp, which would trip the extrapolation warning)."""
    off, div = _domain_arrays(surrogate)
    b, s = off + div * np.clip(z, -1.0, 1.0)
    blo, bhi = surrogate.domain["B_bounds"]
    slo, shi = surrogate.domain["S_bounds"]
    return float(min(max(b, blo), bhi)), float(min(max(s, slo), shi))


def misfit(
    candidate: tuple[float, float],
    observation: Observation,
    surrogate: Surrogate,
    penalty_weight: float = 0.0,
) -> float:
    """L2 distance between the surrogate profile at (B, S) and the observation.

    Candidates outside the trained rectangle are clamped for evaluation;
    with a positive ``penalty_weight`` the squared standardized distance to
    the rectangle is added on top.
    """
    off, div = _domain_arrays(surrogate)
    z = (np.asarray(candidate, dtype=float) - off) / div
    zc = np.clip(z, -1.0, 1.0)
    b, s = _destandardize_clamped(surrogate, zc)
    obs_h = _resample_to(observation.profile, surrogate.nx)
    pred = evaluate(surrogate, RheoParams(B=b, S=s, n=surrogate.n))
    value = float(np.linalg.norm(pred.h - obs_h))
    if penalty_weight > 0.0:
        value += penalty_weight * float(np.sum((z - zc) ** 2))
    return value


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    trace: list | None = None


def nelder_mead(
    objective,
    start,
    max_iter: int = 400,
    edge: float = 0.1,
    tol: float = 1e-8,
    keep_trace: bool = False,
) -> SimplexResult:
    """Two-dimensional Nelder-Mead simplex minimization.

    Standard coefficients (reflection 1, expansion 2, contraction 0.5,
    shrink 0.5).  Converged when both the simplex diameter and the spread of
    vertex values fall below ``tol``; otherwise stops at ``max_iter`` and
    reports converged=False.  Returns the best vertex.
    """
    start = np.asarray(start, dtype=float)
    ndim = start.shape[0]
    verts = [start.copy()]
    for i in range(ndim):
        v = start.copy()
        v[i] += edge
        verts.append(v)
    vals = [float(objective(v)) for v in verts]

    trace = [] if keep_trace else None
    converged = False
    it = 0
    while it < max_iter:
        order = np.argsort(vals)
        verts = [verts[i] for i in order]
        vals = [vals[i] for i in order]
        if trace is not None:
            trace.append((verts[0].copy(), vals[0]))

        diameter = max(
            float(np.linalg.norm(verts[i] - verts[j]))
            for i in range(ndim + 1)
            for j in range(i + 1, ndim + 1)
        )
        if diameter < tol and vals[-1] - vals[0] < tol:
            converged = True
            break
        it += 1

        centroid = np.mean(verts[:-1], axis=0)
        worst = verts[-1]
        reflected = centroid + (centroid - worst)
        f_r = float(objective(reflected))
        if f_r < vals[0]:
            expanded = centroid + 2.0 * (reflected - centroid)
            f_e = float(objective(expanded))
            if f_e < f_r:
                verts[-1], vals[-1] = expanded, f_e
            else:
                verts[-1], vals[-1] = reflected, f_r
        elif f_r < vals[-2]:
            verts[-1], vals[-1] = reflected, f_r
        else:
            if f_r < vals[-1]:
                contracted = centroid + 0.5 * (reflected - centroid)
                f_c = float(objective(contracted))
                if f_c <= f_r:
                    verts[-1], vals[-1] = contracted, f_c
                else:
                    verts, vals = _shrink(verts, vals, objective)
            else:
                contracted = centroid + 0.5 * (worst - centroid)
                f_c = float(objective(contracted))
                if f_c < vals[-1]:
                    verts[-1], vals[-1] = contracted, f_c
                else:
                    verts, vals = _shrink(verts, vals, objective)

    best = int(np.argmin(vals))
    return SimplexResult(
        x=verts[best].copy(),
        fun=vals[best],
        iterations=it,
        converged=converged,
        trace=trace,
    )


def _shrink(verts, vals, objective):
    best = verts[0]
    new_verts = [best]
    new_vals = [vals[0]]
    for v in verts[1:]:
        nv = best + 0.5 * (v - best)
        new_verts.append(nv)
        new_vals.append(float(objective(nv)))
    return new_verts, new_vals


def _default_starts(multi_start: bool) -> list[np.ndarray]:
    starts = [np.zeros(2)]
    if multi_start:
        for sb in (-0.5, 0.5):
            for ss in (-0.5, 0.5):
                starts.append(np.array([sb, ss]))
    return starts


def estimate_params(
    observation: Observation,
    surrogate: Surrogate,
    options: InversionOptions | None = None,
) -> InversionResult:
    """Estimate (B, S) by Nelder-Mead on the surrogate misfit.

    Optimizes in standardized coordinates from the rectangle center plus,
    by default, four spread-out restarts, keeping the best final vertex.
    The reported objective is the plain misfit at the (clamped) estimate;
    the relative-error metric is attached when the truth is known.
    """
    opts = options or InversionOptions()
    off, div = _domain_arrays(surrogate)
    obs_h = _resample_to(observation.profile, surrogate.nx)
    resampled = observation.profile.nx != surrogate.nx

    def raw_misfit(z: np.ndarray) -> float:
        b, s = _destandardize_clamped(surrogate, z)
        pred = evaluate(surrogate, RheoParams(B=b, S=s, n=surrogate.n))
        return float(np.linalg.norm(pred.h - obs_h))

    starts = _default_starts(opts.multi_start)
    lam = 10.0 * raw_misfit(starts[0])

    def objective(z: np.ndarray) -> float:
        zc = np.clip(z, -1.0, 1.0)
        return raw_misfit(zc) + lam * float(np.sum((z - zc) ** 2))

    best: SimplexResult | None = None
    for s0 in starts:
        res = nelder_mead(
            objective,
            s0,
            max_iter=opts.max_iter,
            edge=opts.simplex_edge,
            tol=opts.tol,
            keep_trace=opts.keep_trace,
        )
        if best is None or res.fun < best.fun:
            best = res

    z = np.clip(best.x, -1.0, 1.0)
    b, s = _destandardize_clamped(surrogate, z)
    estimate = RheoParams(B=b, S=s, n=surrogate.n)

    notes = []
    if np.any(np.abs(best.x) > 1.0):
        notes.append("estimate clamped to the trained (B, S) rectangle")
    elif np.any(np.abs(z) >= 1.0 - 1e-12):
        notes.append("estimate lies on the boundary of the trained rectangle")
    if estimate.S < 0.1:
        notes.append("S below 0.1: sparse training coverage in this range")
    if resampled:
        notes.append(
            f"observation resampled from {observation.profile.nx} to "
            f"{surrogate.nx} nodes"
        )

    rel = None
    if observation.known_truth is not None:
        rel = relative_error(observation.known_truth, estimate)

    return InversionResult(
        estimate=estimate,
        objective=raw_misfit(z),
        iterations=best.iterations,
        converged=best.converged,
        relative_error=rel,
        trace=best.trace,
        warnings=notes,
    )


# ---------------------------------------------------------------------------
# Synthetic-noise study


@dataclass
class NoiseStudyRow:
    alpha: float
    median: float
    q3: float
    max: float
    variance: float
    n_not_converged: int
    n_failed: int


@dataclass
class NoiseStudyResult:
    rows: list[NoiseStudyRow]
    records: list[dict]
    seed: int
    chosen_indices: list[int] = field(default_factory=list)
    noise_convention: str = "std = alpha * h"


def _noise_seed(master: int, couple_idx: int, alpha_idx: int) -> int:
    seq = np.random.SeedSequence(entropy=master, spawn_key=(couple_idx, alpha_idx))
    return int(seq.generate_state(1)[0])


def _run_one_inversion(args):
    surrogate, truth, clean, alpha, seed, options = args
    try:
        noisy = add_noise(clean, NoiseSpec(alpha=alpha, seed=seed))
        obs = Observation(profile=noisy, known_truth=truth)
        return estimate_params(obs, surrogate, options)
    except Exception as exc:  # noqa: BLE001 - counted per row, never fatal
        return exc


def noise_study(
    surrogate: Surrogate,
    validation,
    alphas: list[float],
    couples: int,
    seed: int,
    options: InversionOptions | None = None,
    workers: int = 1,
) -> NoiseStudyResult:
    """Invert noisy copies of validation profiles at several noise levels.

    ``couples`` profiles are drawn (seeded, without replacement) from the
    validation set; per-task noise seeds derive deterministically from the
    master seed, so the study is bit-reproducible at any worker count.
    Failed inversions are counted per row instead of aborting the study.
    """
    if not validation.inputs:
        raise ValueError("validation set is empty")
    rng = np.random.default_rng(seed)
    count = min(couples, len(validation.inputs))
    chosen = rng.choice(len(validation.inputs), size=count, replace=False)

    tasks = []
    for ci, vi in enumerate(chosen):
        truth = validation.inputs[vi]
        clean = validation.outputs[vi]
        for ai, alpha in enumerate(alphas):
            tasks.append(
                (
                    (ci, ai),
                    (surrogate, truth, clean, alpha, _noise_seed(seed, ci, ai), options),
                )
            )

    results: dict[tuple[int, int], InversionResult | Exception] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (key, _), res in zip(
                tasks, pool.map(_run_one_inversion, [t[1] for t in tasks])
            ):
                results[key] = res
    else:
        for key, args in tasks:
            results[key] = _run_one_inversion(args)

    records = []
    rows = []
    for ai, alpha in enumerate(alphas):
        errs = []
        n_failed = 0
        n_not_converged = 0
        for ci, vi in enumerate(chosen):
            truth = validation.inputs[vi]
            res = results[(ci, ai)]
            if isinstance(res, Exception):
                n_failed += 1
                records.append(
                    {"alpha": alpha, "B": truth.B, "S": truth.S, "failed": str(res)}
                )
                continue
            if not res.converged:
                n_not_converged += 1
            errs.append(res.relative_error)
            records.append(
                {
                    "alpha": alpha,
                    "B": truth.B,
                    "S": truth.S,
                    "B_est": res.estimate.B,
                    "S_est": res.estimate.S,
                    "error": res.relative_error,
                    "objective": res.objective,
                    "converged": res.converged,
                }
            )
        arr = np.array(errs) if errs else np.array([math.nan])
        rows.append(
            NoiseStudyRow(
                alpha=alpha,
                median=float(np.median(arr)),
                q3=float(np.percentile(arr, 75)),
                max=float(arr.max()),
                variance=float(np.var(arr, ddof=1)) if arr.size > 1 else 0.0,
                n_not_converged=n_not_converged,
                n_failed=n_failed,
            )
        )
    return NoiseStudyResult(
        rows=rows,
        records=records,
        seed=seed,
        chosen_indices=[int(i) for i in chosen],
    )

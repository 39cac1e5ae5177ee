"""Explicit finite-difference solver for the cavity-filling equation.

The conservation law dh/dt + dq/dx = 0 is integrated on a uniform grid over
[0, 1] from an empty cavity (h = 0) with unit inflow flux at x = 0 and a
wall (q = 0) at x = 1, until the fluid front reaches the wall.  Space is
discretized with centered slopes inside the flux and an upwind divergence;
time is forward Euler with a step adapted each iteration to the advection
(CFL) and explicit-diffusion stability limits.  The inlet node cannot be
updated by the upwind stencil and is instead closed each step by solving a
scalar nonlinear equation (see :func:`solve_h0`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import RheoParams

__all__ = [
    "Grid",
    "HeightProfile",
    "SolverConfig",
    "SolverRun",
    "NumericalError",
    "spatial_fluxes",
    "stable_dt",
    "solve_h0",
    "step",
    "run_to_wall_touch",
    "convergence_study",
    "ConvergenceStudy",
    "trapezoid_mass",
]


class NumericalError(RuntimeError):
    """Raised when a run fails to produce a usable numerical result."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid of nx nodes on [0, 1]."""

    nx: int

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)


@dataclass
class HeightProfile:
    """Height values on a uniform grid, with time stamp and provenance.

    t is the dimensionless time of the snapshot, or None when unknown
    (surrogate predictions and observed data carry no time stamp).
    provenance is one of "pde", "surrogate", "observed", "noisy".
    """

    h: np.ndarray
    t: float | None
    params: RheoParams
    provenance: str = "pde"

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        if self.h.ndim != 1:
            raise ValueError("profile must be a 1D vector")
        if np.any(self.h < 0):
            raise ValueError("heights must be nonnegative")
        if self.t is not None and not self.t >= 0:
            raise ValueError(f"time stamp must be nonnegative, got {self.t}")
        if self.provenance not in ("pde", "surrogate", "observed", "noisy"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def nx(self) -> int:
        return self.h.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs for a solver run.

    dt_max is the cap on the adaptive step; None means one grid spacing,
    which keeps the boundary-driven start-up (where both stability limits
    are vacuous on an empty cavity) accurate.  Cd is the explicit-diffusion
    safety constant; 0.5 is stable for pre-wall-touch runs, lower it if a
    run reports instability.
    """

    nx: int = 301
    Cd: float = 0.5
    dt_max: float | None = None
    wall_touch_threshold: float = 1e-8
    max_steps: int = 2_000_000_000

    def __post_init__(self):
        if not 0.0 < self.Cd <= 0.5:
            raise ValueError(f"Cd must lie in (0, 0.5], got {self.Cd}")
        if self.wall_touch_threshold <= 0:
            raise ValueError("wall_touch_threshold must be > 0")
        if self.nx < 3:
            raise ValueError(f"nx must be >= 3, got {self.nx}")

    @property
    def grid(self) -> Grid:
        return Grid(self.nx)

    def dt_cap(self) -> float:
        return self.grid.dx if self.dt_max is None else self.dt_max


@dataclass
class SolverRun:
    """Result of integrating to wall-touch."""

    final: HeightProfile
    wall_touch_time: float
    steps_taken: int
    dt_summary: tuple[float, float, float]  # (min, max, mean) of accepted steps
    clamped_mass: float
    max_boundary_residual: float


def spatial_fluxes(h: np.ndarray, grid: Grid, params: RheoParams) -> np.ndarray:
    """Nodal fluxes with centered interior slopes and the boundary values
    overridden to the inflow (q = 1) and wall (q = 0) conditions."""
    h = np.ascontiguousarray(h, dtype=float)
    if h.shape[0] != grid.nx:
        raise ValueError(f"state has {h.shape[0]} nodes, grid has {grid.nx}")
    q = np.empty(grid.nx)
    _kernels.fluxes_pass(h, grid.dx, params.B, params.S, params.n, q)
    return q


def _stability_maxima(h, grid, params):
    h = np.ascontiguousarray(h, dtype=float)
    if h.shape[0] != grid.nx:
        raise ValueError(f"state has {h.shape[0]} nodes, grid has {grid.nx}")
    q = np.empty(grid.nx)
    return _kernels.fluxes_pass(h, grid.dx, params.B, params.S, params.n, q)


def combine_dt(max_v: float, max_d: float, dx: float, cd: float, dt_cap: float) -> float:
    """Stability-limited step: min of dx/(2 max|V|), Cd dx^2 / max|D| and the
    cap, with vanished coefficients dropping their constraint."""
    dt = dt_cap
    if max_v > 0.0:
        dt = min(dt, dx / (2.0 * max_v))
    if max_d > 0.0:
        dt = min(dt, cd * dx * dx / max_d)
    return dt


def stable_dt(
    h: np.ndarray, grid: Grid, params: RheoParams, config: SolverConfig
) -> float:
    """Largest stable time step for the current state.

    Transport and diffusion coefficients of the quasilinear form are
    evaluated at every node (one-sided slopes at the ends); an empty state
    has no constraint and returns the configured cap.
    """
    max_v, max_d = _stability_maxima(h, grid, params)
    return combine_dt(max_v, max_d, grid.dx, config.Cd, config.dt_cap())


def solve_h0(
    h1: float, dx: float, params: RheoParams, tol: float = 1e-10
) -> float:
    """Inlet height closing the unit-inflow condition against neighbor h1.

    Solves q(h0, (h1 - h0)/dx) = 1 for the unique root above the closed-form
    yield bound; the residual of the returned value is at most ``tol``.
    Raises :class:`NumericalError` when no sign change is found (pathological
    parameters).
    """
    h0, resid, status = _kernels.solve_h0_kernel(
        float(h1), float(dx), params.B, params.S, params.n, tol, 200
    )
    if status == _kernels.STATUS_NO_BRACKET:
        raise NumericalError(
            f"inlet closure found no sign change (h1={h1}, dx={dx}, "
            f"B={params.B}, S={params.S}, n={params.n})"
        )
    if status != _kernels.STATUS_OK or not math.isfinite(h0):
        raise NumericalError("inlet closure produced a non-finite value")
    return h0


def step(
    h: np.ndarray, grid: Grid, params: RheoParams, config: SolverConfig
) -> tuple[np.ndarray, float]:
    """One accepted explicit step; returns (new state, dt used).

    Interior nodes first (upwind divergence, clamped at zero), then the
    inlet node from the updated h1.
    """
    hn = np.ascontiguousarray(h, dtype=float).copy()
    if hn.shape[0] != grid.nx:
        raise ValueError(f"state has {hn.shape[0]} nodes, grid has {grid.nx}")
    q = np.empty(grid.nx)
    dt, _, _, status = _kernels.step_inplace(
        hn, q, grid.dx, params.B, params.S, params.n, config.Cd, config.dt_cap(), 1e-10
    )
    _raise_for_status(status, params, config)
    if not np.all(np.isfinite(hn)):
        _raise_for_status(_kernels.STATUS_NOT_FINITE, params, config)
    return hn, dt


def _raise_for_status(status, params, config):
    if status == _kernels.STATUS_OK:
        return
    if status == _kernels.STATUS_NOT_FINITE:
        raise NumericalError(
            f"state became non-finite at (B={params.B}, S={params.S}, "
            f"n={params.n}); try a smaller Cd than {config.Cd}"
        )
    if status == _kernels.STATUS_NO_BRACKET:
        raise NumericalError(
            f"inlet closure found no sign change at (B={params.B}, "
            f"S={params.S}, n={params.n})"
        )
    if status == _kernels.STATUS_MAX_STEPS:
        raise NumericalError(
            f"no wall-touch within {config.max_steps} steps at "
            f"(B={params.B}, S={params.S}, n={params.n}); raise max_steps"
        )
    raise NumericalError(f"solver failed with status {status}")


def run_to_wall_touch(params: RheoParams, config: SolverConfig) -> SolverRun:
    """Integrate from the empty cavity until the far wall is wetted.

    Marches h(x, 0) = 0 with the adaptive explicit scheme until the height
    at the last node first reaches ``config.wall_touch_threshold``.
    """
    if params.B <= 0 or params.S <= 0:
        raise ValueError("run_to_wall_touch requires B > 0 and S > 0")
    grid = config.grid
    h = np.zeros(grid.nx)
    t, steps, dt_min, dt_max, dt_sum, clamped, max_resid, status = _kernels.run_kernel(
        h,
        grid.dx,
        params.B,
        params.S,
        params.n,
        config.Cd,
        config.dt_cap(),
        config.wall_touch_threshold,
        config.max_steps,
        1e-10,
    )
    _raise_for_status(status, params, config)
    final = HeightProfile(h=h, t=t, params=params, provenance="pde")
    return SolverRun(
        final=final,
        wall_touch_time=t,
        steps_taken=steps,
        dt_summary=(dt_min, dt_max, dt_sum / steps if steps else 0.0),
        clamped_mass=clamped,
        max_boundary_residual=max_resid,
    )


def trapezoid_mass(profile: HeightProfile) -> float:
    """Trapezoid-rule volume of a profile on its own grid."""
    return float(np.trapezoid(profile.h, dx=1.0 / (profile.nx - 1)))


def l2_grid_norm(e: np.ndarray, dx: float) -> float:
    """Discrete L2 norm sqrt(dx * sum e^2); comparable across resolutions."""
    return float(math.sqrt(dx * float(np.dot(e, e))))


@dataclass
class ConvergenceStudy:
    """Grid-refinement errors against a fine reference at wall-touch."""

    params: RheoParams
    nx_ref: int
    rows: list[tuple[int, float, float]] = field(default_factory=list)  # (nx, dx, err)
    order: float = math.nan

    def as_columns(self) -> tuple[np.ndarray, np.ndarray]:
        dxs = np.array([r[1] for r in self.rows])
        errs = np.array([r[2] for r in self.rows])
        return dxs, errs


def convergence_study(
    params: RheoParams,
    nx_list: list[int],
    nx_ref: int,
    config_base: SolverConfig | None = None,
    reference: HeightProfile | None = None,
    runner=None,
) -> ConvergenceStudy:
    """Errors of coarse wall-touch profiles against a fine-grid reference.

    Every nx in nx_list must satisfy (nx_ref - 1) % (nx - 1) == 0 so the
    reference can be restricted to coincident nodes; each solution is taken
    at its own wall-touch time.  The reported order is the least-squares
    slope of log error versus log dx (zero-error rows are excluded).
    A precomputed ``reference`` profile at nx_ref may be supplied, and
    ``runner`` (same signature as :func:`run_to_wall_touch`) lets callers
    memoize the expensive runs.
    """
    base = config_base or SolverConfig()
    if runner is None:
        runner = run_to_wall_touch
    if any(nx > nx_ref for nx in nx_list):
        raise ValueError("nx_ref must be at least every entry of nx_list")
    for nx in nx_list:
        if (nx_ref - 1) % (nx - 1) != 0:
            raise ValueError(
                f"(nx_ref-1) must be divisible by (nx-1); got nx={nx}, nx_ref={nx_ref}"
            )

    if reference is None:
        ref_cfg = SolverConfig(
            nx=nx_ref,
            Cd=base.Cd,
            dt_max=base.dt_max,
            wall_touch_threshold=base.wall_touch_threshold,
            max_steps=base.max_steps,
        )
        reference = runner(params, ref_cfg).final
    elif reference.nx != nx_ref:
        raise ValueError(
            f"reference profile has {reference.nx} nodes, expected {nx_ref}"
        )

    study = ConvergenceStudy(params=params, nx_ref=nx_ref)
    for nx in nx_list:
        dx = 1.0 / (nx - 1)
        if nx == nx_ref:
            study.rows.append((nx, dx, 0.0))
            continue
        cfg = SolverConfig(
            nx=nx,
            Cd=base.Cd,
            dt_max=base.dt_max,
            wall_touch_threshold=base.wall_touch_threshold,
            max_steps=base.max_steps,
        )
        coarse = runner(params, cfg).final
        stride = (nx_ref - 1) // (nx - 1)
        restricted = reference.h[::stride]
        study.rows.append((nx, dx, l2_grid_norm(restricted - coarse.h, dx)))

    pts = [(math.log(dx), math.log(err)) for _, dx, err in study.rows if err > 0.0]
    if len(pts) >= 2:
        lx = np.array([p[0] for p in pts])
        ly = np.array([p[1] for p in pts])
        study.order = float(np.polyfit(lx, ly, 1)[0])
    return study

"""Confined yield-stress cavity filling: solver, surrogate, inversion."""

__version__ = "0.1.0"

from .model import (
    B_BOUNDS,
    DomainError,
    N_BOUNDS,
    PhysicalSetup,
    RheoParams,
    S_BOUNDS,
    destandardize,
    flux,
    nondimensionalize,
    standardize,
    yield_surface,
)
from .solver import (
    Grid,
    HeightProfile,
    NumericalError,
    SolverConfig,
    SolverRun,
    convergence_study,
    run_to_wall_touch,
    solve_h0,
    spatial_fluxes,
    stable_dt,
    step,
)

__all__ = [
    "B_BOUNDS",
    "S_BOUNDS",
    "N_BOUNDS",
    "DomainError",
    "NumericalError",
    "RheoParams",
    "PhysicalSetup",
    "Grid",
    "HeightProfile",
    "SolverConfig",
    "SolverRun",
    "flux",
    "yield_surface",
    "nondimensionalize",
    "standardize",
    "destandardize",
    "spatial_fluxes",
    "stable_dt",
    "solve_h0",
    "step",
    "run_to_wall_touch",
    "convergence_study",
    "__version__",
]

"""Dimensionless thin-film model for yield-stress cavity filling.

The filling of a closed, inclined 1D cavity by a Herschel-Bulkley fluid is
governed by a scalar conservation law for the free-surface height h(x, t),

    dh/dt + dq/dx = 0,   x in [0, 1],

with a nonlinear flux q(h, h_x) that switches off below a yield threshold.
This module holds the dimensionless quantities driving that law:

* ``yield_surface`` -- the sheared-layer height Y(h, h_x),
* ``flux``          -- the flux q(h, h_x),
* ``nondimensionalize`` -- the map from lab quantities to (B, S, n),
* ``standardize``   -- the affine map of (B, S) onto the unit square used by
  the surrogate's orthogonal polynomial basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "B_BOUNDS",
    "S_BOUNDS",
    "N_BOUNDS",
    "B_OFFSET",
    "B_SCALE",
    "S_OFFSET",
    "S_SCALE",
    "DomainError",
    "RheoParams",
    "PhysicalSetup",
    "DerivedScales",
    "yield_surface",
    "flux",
    "nondimensionalize",
    "standardize",
    "destandardize",
    "in_surrogate_domain",
]

# Parameter rectangle the surrogate is trained on.  The solver itself accepts
# any positive (B, S, n).
B_BOUNDS = (0.5, 250.0)
S_BOUNDS = (0.05, 120.0)
N_BOUNDS = (0.2, 1.2)

# Exact affine map of the rectangle onto [-1, 1]^2: offset = midpoint,
# divisor = half-range.  Both constants are stored in serialized surrogates.
B_OFFSET = 0.5 * (B_BOUNDS[0] + B_BOUNDS[1])
B_SCALE = 0.5 * (B_BOUNDS[1] - B_BOUNDS[0])
S_OFFSET = 0.5 * (S_BOUNDS[0] + S_BOUNDS[1])
S_SCALE = 0.5 * (S_BOUNDS[1] - S_BOUNDS[0])


class DomainError(ValueError):
    """Raised when a parameter lies outside its admissible range."""


@dataclass(frozen=True)
class RheoParams:
    """Dimensionless triple driving the cavity-filling equation.

    B is the Bingham number (yield stress over viscous stress scale), S the
    slope parameter tan(phi)/epsilon, and n the power-law index.
    """

    B: float
    S: float
    n: float

    def __post_init__(self):
        for name, value in (("B", self.B), ("S", self.S), ("n", self.n)):
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
        if self.B < 0:
            raise DomainError(f"B must be >= 0, got {self.B}")
        if self.S < 0:
            raise DomainError(f"S must be >= 0, got {self.S}")
        if self.n <= 0:
            raise DomainError(f"n must be > 0, got {self.n}")


@dataclass(frozen=True)
class PhysicalSetup:
    """Dimensional description of a filling experiment.

    Units: tau_y [Pa], kappa [Pa s^n], rho [kg/m^3], phi [rad], L and W [m],
    Q0 [m^3/s], g [m/s^2].
    """

    tau_y: float
    kappa: float
    rho: float
    n: float
    phi: float
    L: float
    W: float
    Q0: float
    g: float = 9.81

    def __post_init__(self):
        positives = {
            "tau_y": self.tau_y,
            "kappa": self.kappa,
            "rho": self.rho,
            "L": self.L,
            "W": self.W,
            "Q0": self.Q0,
            "g": self.g,
        }
        # tau_y = 0 is the pure power-law limit and is allowed.
        if self.tau_y < 0:
            raise DomainError(f"tau_y must be >= 0, got {self.tau_y}")
        for name in ("kappa", "rho", "L", "W", "Q0", "g"):
            if positives[name] <= 0:
                raise DomainError(f"{name} must be > 0, got {positives[name]}")
        if self.n <= 0:
            raise DomainError(f"n must be > 0, got {self.n}")
        if not 0.0 <= self.phi < math.pi / 2:
            raise DomainError(
                f"phi must lie in [0, pi/2) (tan singularity), got {self.phi}"
            )


@dataclass(frozen=True)
class DerivedScales:
    """Characteristic scales produced by the nondimensionalization."""

    H0: float
    U: float
    nu: float
    epsilon: float


def _maybe_scalar(arr):
    arr = np.asarray(arr)
    return float(arr) if arr.ndim == 0 else arr


def yield_surface(h, hx, params: RheoParams):
    """Sheared-layer height Y = max(h - B/|S - hx|, 0).

    Above Y the material rides as a pseudo-plug; at |S - hx| = 0 the yield
    term diverges and Y is 0 by continuity.  Accepts scalars or arrays.
    """
    h = np.asarray(h, dtype=float)
    drive = np.abs(params.S - np.asarray(hx, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        y = np.where(drive > 0.0, h - params.B / np.where(drive > 0.0, drive, 1.0), -1.0)
    return _maybe_scalar(np.maximum(y, 0.0))


def flux(h, hx, params: RheoParams):
    """Height flux q(h, hx) of the thin-film conservation law.

    q = sgn(S - hx) |S - hx|^(1/n) * n Y^(1+1/n) / ((n+1)(2n+1))
        * ((2n+1) h - n Y),

    with Y from :func:`yield_surface`.  Exactly zero wherever Y = 0.
    """
    n = params.n
    h = np.asarray(h, dtype=float)
    u = params.S - np.asarray(hx, dtype=float)
    au = np.abs(u)
    y = np.asarray(yield_surface(h, hx, params))
    prefac = n / ((n + 1.0) * (2.0 * n + 1.0))
    with np.errstate(invalid="ignore"):
        q = (
            np.sign(u)
            * au ** (1.0 / n)
            * prefac
            * y ** (1.0 + 1.0 / n)
            * ((2.0 * n + 1.0) * h - n * y)
        )
    return _maybe_scalar(np.where(y > 0.0, q, 0.0))


def nondimensionalize(setup: PhysicalSetup) -> tuple[RheoParams, DerivedScales]:
    """Map a dimensional setup to (B, S, n) and the characteristic scales.

    H0 = (kappa L / (rho g cos phi) * (Q0/W)^n)^(1/(2(1+n))), U = Q0/(W H0),
    nu = (kappa/rho)(U/H0)^(n-1), B = H0 tau_y / (rho nu U),
    S = tan(phi) / (H0/L).
    """
    s = setup
    H0 = (
        s.kappa * s.L / (s.rho * s.g * math.cos(s.phi)) * (s.Q0 / s.W) ** s.n
    ) ** (1.0 / (2.0 * (1.0 + s.n)))
    U = s.Q0 / (s.W * H0)
    nu = (s.kappa / s.rho) * (U / H0) ** (s.n - 1.0)
    epsilon = H0 / s.L
    B = H0 * s.tau_y / (s.rho * nu * U)
    S = math.tan(s.phi) / epsilon
    return RheoParams(B=B, S=S, n=s.n), DerivedScales(H0=H0, U=U, nu=nu, epsilon=epsilon)


def in_surrogate_domain(B: float, S: float) -> bool:
    """True when (B, S) lies inside the trained parameter rectangle."""
    return B_BOUNDS[0] <= B <= B_BOUNDS[1] and S_BOUNDS[0] <= S <= S_BOUNDS[1]


def standardize(params: RheoParams) -> tuple[float, float]:
    """Affine map of (B, S) onto [-1, 1]^2.

    Raises :class:`DomainError` naming the violated bound for out-of-range
    input; use :func:`destandardize` for the inverse.
    """
    if not B_BOUNDS[0] <= params.B <= B_BOUNDS[1]:
        raise DomainError(
            f"B={params.B} outside [{B_BOUNDS[0]}, {B_BOUNDS[1]}]"
        )
    if not S_BOUNDS[0] <= params.S <= S_BOUNDS[1]:
        raise DomainError(
            f"S={params.S} outside [{S_BOUNDS[0]}, {S_BOUNDS[1]}]"
        )
    return (params.B - B_OFFSET) / B_SCALE, (params.S - S_OFFSET) / S_SCALE


def destandardize(bt: float, st: float) -> tuple[float, float]:
    """Inverse of :func:`standardize`; accepts values outside [-1, 1]."""
    return B_OFFSET + B_SCALE * bt, S_OFFSET + S_SCALE * st

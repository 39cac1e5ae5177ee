"""Independent reference implementations used only by the test suite.

These deliberately re-derive each quantity in a different style (vectorized
numpy, plain bisection) from the production kernels so that agreement is a
two-route check, not a tautology.
"""

import numpy as np

from cavityfill.model import RheoParams, flux


def transport_coefficient(h, hx, params: RheoParams):
    """Signed advection coefficient delta * Y^(1/n) |S-hx|^(1/n) h."""
    n = params.n
    u = params.S - np.asarray(hx, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        y = np.maximum(np.where(au > 0, h - params.B / au, -1.0), 0.0)
        v = np.sign(u) * y ** (1.0 / n) * au ** (1.0 / n) * h
    return np.where(y > 0, v, 0.0)


def diffusion_coefficient(h, hx, params: RheoParams):
    """Magnitude of the diffusion coefficient of the quasilinear form."""
    n = params.n
    u = params.S - np.asarray(hx, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        y = np.maximum(np.where(au > 0, h - params.B / au, -1.0), 0.0)
        d = (
            1.0
            / ((1.0 + n) * (1.0 + 2.0 * n))
            * y ** (1.0 / n)
            * au ** (1.0 / n - 1.0)
            * (
                2.0 * n * np.asarray(h) * params.B / au
                + (1.0 + n) * np.asarray(h) ** 2
                + 2.0 * n * n * params.B ** 2 / u ** 2
            )
        )
    return np.where(y > 0, np.abs(d), 0.0)


def all_slopes(h, dx):
    """Centered interior slopes, one-sided at the two end nodes."""
    h = np.asarray(h, dtype=float)
    hx = np.empty_like(h)
    hx[1:-1] = (h[2:] - h[:-2]) / (2.0 * dx)
    hx[0] = (h[1] - h[0]) / dx
    hx[-1] = (h[-1] - h[-2]) / dx
    return hx


def reference_dt(h, dx, params, cd, dt_cap):
    """Stability-limited step recomputed from the coefficient formulas."""
    hx = all_slopes(h, dx)
    vmax = float(np.max(np.abs(transport_coefficient(h, hx, params))))
    dmax = float(np.max(diffusion_coefficient(h, hx, params)))
    dt = dt_cap
    if vmax > 0:
        dt = min(dt, dx / (2.0 * vmax))
    if dmax > 0:
        dt = min(dt, cd * dx * dx / dmax)
    return dt


def closure_residual(h0, h1, dx, params):
    """Residual of the inlet closure: q(h0, (h1-h0)/dx) - 1."""
    return flux(h0, (h1 - h0) / dx, params) - 1.0


def closure_lower_bound(h1, dx, params):
    half = 0.5 * (h1 - params.S * dx)
    return half + np.sqrt(half * half + params.B * dx)


def bisect_h0(h1, dx, params, halvings=80):
    """Inlet height by plain bisection on the closure residual."""
    lo = closure_lower_bound(h1, dx, params)
    w = max(dx, 1e-3 * lo, 1e-12)
    hi = lo + w
    for _ in range(300):
        if closure_residual(hi, h1, dx, params) > 0:
            break
        lo, hi = hi, lo + 2 * (hi - lo)
    else:
        raise RuntimeError("bisection oracle found no bracket")
    for _ in range(halvings):
        mid = 0.5 * (lo + hi)
        if closure_residual(mid, h1, dx, params) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def reference_step(h, dx, params, cd, dt_cap):
    """Straight-line restatement of one explicit step.

    Centered slopes -> fluxes with boundary overrides -> upwind divergence
    update on nodes >= 1 -> clamp -> inlet closure by bisection.
    """
    h = np.asarray(h, dtype=float)
    nx = h.shape[0]
    hx = all_slopes(h, dx)
    q = np.asarray(flux(h, hx, params), dtype=float)
    q[0] = 1.0
    q[-1] = 0.0
    dt = reference_dt(h, dx, params, cd, dt_cap)
    hn = h.copy()
    hn[1:] = h[1:] - dt * (q[1:] - q[:-1]) / dx
    hn = np.maximum(hn, 0.0)
    hn[0] = bisect_h0(hn[1], dx, params)
    return hn, dt

"""Compiled inner loops for the explicit cavity-filling solver.

Everything here is numba-jitted and operates on plain float64 arrays; the
public API lives in :mod:`cavityfill.solver`.  Status codes shared by the
kernels:

0  success
1  step budget exhausted before wall-touch
2  non-finite state (instability; lower Cd)
3  inlet closure: no sign change within the expansion budget
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_NOT_FINITE = 2
STATUS_NO_BRACKET = 3


@njit(cache=True, inline="always")
def _point(h, hx, B, S, n, inv_n):
    """Flux q, signed transport coefficient v, |diffusion coefficient| d
    at a single node.  All three vanish on unyielded material."""
    u = S - hx
    au = abs(u)
    if au <= 0.0 or h <= 0.0:
        return 0.0, 0.0, 0.0
    y = h - B / au
    if y <= 0.0:
        return 0.0, 0.0, 0.0
    if n == 1.0:
        pu = au
        py = y * y
    else:
        pu = au ** inv_n
        py = y ** (1.0 + inv_n)
    sgn = 1.0 if u > 0.0 else -1.0
    yin = py / y  # y^(1/n)
    prefac = n / ((n + 1.0) * (2.0 * n + 1.0))
    q = sgn * pu * prefac * py * ((2.0 * n + 1.0) * h - n * y)
    v = sgn * yin * pu * h
    d = (
        yin
        * (pu / au)
        * (2.0 * n * h * B / au + (n + 1.0) * h * h + 2.0 * n * n * B * B / (au * au))
        / ((1.0 + n) * (1.0 + 2.0 * n))
    )
    return q, v, d


@njit(cache=True)
def fluxes_pass(h, dx, B, S, n, q):
    """Fill q with nodal fluxes (inflow/wall overrides at the ends) and
    return (max |v|, max |d|) over all nodes.

    Interior slopes are centered; the end nodes use one-sided slopes that
    only feed the stability coefficients, never the flux update.
    """
    nx = h.shape[0]
    inv_n = 1.0 / n
    max_v = 0.0
    max_d = 0.0

    _, v, d = _point(h[0], (h[1] - h[0]) / dx, B, S, n, inv_n)
    if abs(v) > max_v:
        max_v = abs(v)
    if d > max_d:
        max_d = d
    q[0] = 1.0

    inv2dx = 0.5 / dx
    for i in range(1, nx - 1):
        hx = (h[i + 1] - h[i - 1]) * inv2dx
        qi, v, d = _point(h[i], hx, B, S, n, inv_n)
        q[i] = qi
        if abs(v) > max_v:
            max_v = abs(v)
        if d > max_d:
            max_d = d

    _, v, d = _point(h[nx - 1], (h[nx - 1] - h[nx - 2]) / dx, B, S, n, inv_n)
    if abs(v) > max_v:
        max_v = abs(v)
    if d > max_d:
        max_d = d
    q[nx - 1] = 0.0

    return max_v, max_d


@njit(cache=True, inline="always")
def _closure_f_df(x, h1, dx, B, S, n, inv_n):
    """Residual f = q(x, (h1-x)/dx) - 1 of the inlet closure and its
    derivative df/dx = v + d/dx."""
    hx = (h1 - x) / dx
    q, v, d = _point(x, hx, B, S, n, inv_n)
    return q - 1.0, v + d / dx


@njit(cache=True)
def solve_h0_kernel(h1, dx, B, S, n, tol, max_expand):
    """Solve the inlet closure for h0 given the neighbor value h1.

    Returns (h0, residual, status).  The left bracket end is the closed-form
    point where the material starts to yield (residual exactly -1 there);
    the right end grows geometrically until the residual changes sign, then
    a bracketed Newton iteration polishes the root.
    """
    inv_n = 1.0 / n
    half = 0.5 * (h1 - S * dx)
    lb = half + math.sqrt(half * half + B * dx)

    lo = lb
    hi = lb
    w = dx if dx > 1e-3 * lb else 1e-3 * lb
    if w <= 0.0:
        w = 1e-12
    found = False
    for _ in range(max_expand):
        hi = lb + w
        f_hi, _ = _closure_f_df(hi, h1, dx, B, S, n, inv_n)
        if not math.isfinite(f_hi):
            return math.nan, math.nan, STATUS_NOT_FINITE
        if f_hi > 0.0:
            found = True
            break
        lo = hi
        w *= 2.0
    if not found:
        return math.nan, math.nan, STATUS_NO_BRACKET

    x = 0.5 * (lo + hi)
    fx = -1.0
    for _ in range(200):
        fx, dfx = _closure_f_df(x, h1, dx, B, S, n, inv_n)
        if not math.isfinite(fx):
            return math.nan, math.nan, STATUS_NOT_FINITE
        if abs(fx) <= tol:
            return x, fx, STATUS_OK
        if fx > 0.0:
            hi = x
        else:
            lo = x
        if dfx > 0.0:
            xn = x - fx / dfx
            if xn <= lo or xn >= hi:
                xn = 0.5 * (lo + hi)
        else:
            xn = 0.5 * (lo + hi)
        if xn == x:
            # Bracket exhausted at machine precision; accept the best point.
            break
        x = xn
    return x, fx, STATUS_OK


@njit(cache=True, inline="always")
def _combine_dt(max_v, max_d, dx, cd, dt_cap):
    dt = dt_cap
    if max_v > 0.0:
        adv = dx / (2.0 * max_v)
        if adv < dt:
            dt = adv
    if max_d > 0.0:
        dif = cd * dx * dx / max_d
        if dif < dt:
            dt = dif
    return dt


@njit(cache=True)
def step_inplace(h, q, dx, B, S, n, cd, dt_cap, h0_tol):
    """One forward-Euler step, in place.

    Upwind divergence update on nodes >= 1, negative undershoots clamped,
    then the inlet node is closed against the fresh h1.  Returns
    (dt, clamped_mass, |closure residual|, status).
    """
    nx = h.shape[0]
    max_v, max_d = fluxes_pass(h, dx, B, S, n, q)
    dt = _combine_dt(max_v, max_d, dx, cd, dt_cap)

    clamped = 0.0
    r = dt / dx
    for i in range(1, nx):
        hn = h[i] - r * (q[i] - q[i - 1])
        if hn < 0.0:
            clamped -= hn
            hn = 0.0
        h[i] = hn

    h0, resid, status = solve_h0_kernel(h[1], dx, B, S, n, h0_tol, 200)
    if status != STATUS_OK:
        return dt, clamped * dx, math.nan, status
    h[0] = h0
    return dt, clamped * dx, abs(resid), STATUS_OK


@njit(cache=True)
def run_kernel(h, dx, B, S, n, cd, dt_cap, threshold, max_steps, h0_tol):
    """March from the current state until the last node reaches threshold.

    Returns (t, steps, dt_min, dt_max, dt_sum, clamped_mass,
    max_closure_residual, status).  The state h is advanced in place.
    """
    nx = h.shape[0]
    q = np.empty(nx)
    t = 0.0
    steps = 0
    dt_min = math.inf
    dt_max = 0.0
    dt_sum = 0.0
    clamped = 0.0
    max_resid = 0.0
    status = STATUS_MAX_STEPS

    while steps < max_steps:
        dt, cl, resid, st = step_inplace(h, q, dx, B, S, n, cd, dt_cap, h0_tol)
        if st != STATUS_OK:
            status = st
            break
        t += dt
        steps += 1
        dt_sum += dt
        clamped += cl
        if dt < dt_min:
            dt_min = dt
        if dt > dt_max:
            dt_max = dt
        if resid > max_resid:
            max_resid = resid
        if steps % 1000 == 0:
            s = 0.0
            for i in range(nx):
                s += h[i]
            if not math.isfinite(s):
                status = STATUS_NOT_FINITE
                break
        if h[nx - 1] >= threshold:
            status = STATUS_OK
            break

    if status == STATUS_OK or status == STATUS_MAX_STEPS:
        s = 0.0
        for i in range(nx):
            s += h[i]
        if not math.isfinite(s):
            status = STATUS_NOT_FINITE
    return t, steps, dt_min, dt_max, dt_sum, clamped, max_resid, status

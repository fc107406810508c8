"""Compiled fixed-step RK4 integration of the flow map.

Continuous vector layout: [x (nx) | e (np) | tau_e (N) | chi (N) | phi0 (N) | phi1 (N)].
The plant enters through its integer id ``pid`` (see _dynamics).
"""
from __future__ import annotations

import numba as nb
import numpy as np

from ._dynamics import plant_guards, plant_post, plant_rhs

DONE, CROSSED, DIVERGED = 0, 1, 2


@nb.njit(cache=True)
def flow_rhs(pid, y, nx, npp, N, logic, pp, blk0, blk1, wts, s, l,
             ca, cb, cc, phi_on, L0, L1, g0, g1, dy):
    x = y[:nx]
    e = y[nx:nx + npp]
    dx = dy[:nx]
    plant_rhs(pid, x, e, logic, pp, dx)
    for c in range(npp):
        dy[nx + c] = -dx[c]
    o = nx + npp
    for i in range(N):
        w2 = 0.0
        for c in range(blk0[i], blk1[i]):
            v = e[c] + l[i] * s[c]
            w2 += wts[c] * v * v
        dy[o + i] = 1.0
        dy[o + N + i] = ca[i] + cb[i] * w2 - cc[i] * y[o + N + i]
        if phi_on[i]:
            p0 = y[o + 2 * N + i]
            p1 = y[o + 3 * N + i]
            dy[o + 2 * N + i] = -2.0 * L0[i] * p0 - g0[i] * (p0 * p0 + 1.0)
            dy[o + 3 * N + i] = -2.0 * L1[i] * p1 - g1[i] * (p1 * p1 + 1.0)
        else:
            dy[o + 2 * N + i] = 0.0
            dy[o + 3 * N + i] = 0.0


@nb.njit(cache=True)
def rk4_step(pid, y, h, nx, npp, N, logic, pp, blk0, blk1, wts, s, l,
             ca, cb, cc, phi_on, L0, L1, g0, g1):
    n = y.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    flow_rhs(pid, y, nx, npp, N, logic, pp, blk0, blk1, wts, s, l, ca, cb, cc, phi_on, L0, L1, g0, g1, k1)
    for c in range(n):
        tmp[c] = y[c] + 0.5 * h * k1[c]
    flow_rhs(pid, tmp, nx, npp, N, logic, pp, blk0, blk1, wts, s, l, ca, cb, cc, phi_on, L0, L1, g0, g1, k2)
    for c in range(n):
        tmp[c] = y[c] + 0.5 * h * k2[c]
    flow_rhs(pid, tmp, nx, npp, N, logic, pp, blk0, blk1, wts, s, l, ca, cb, cc, phi_on, L0, L1, g0, g1, k3)
    for c in range(n):
        tmp[c] = y[c] + h * k3[c]
    flow_rhs(pid, tmp, nx, npp, N, logic, pp, blk0, blk1, wts, s, l, ca, cb, cc, phi_on, L0, L1, g0, g1, k4)
    out = np.empty(n)
    for c in range(n):
        out[c] = y[c] + (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
    plant_post(pid, out[:nx], out[nx:nx + npp], pp)
    return out


@nb.njit(cache=True)
def guard_values(pid, y, nx, npp, N, logic, pp, watch, ng, out):
    o = nx + npp + N
    for i in range(N):
        out[i] = y[o + i] if watch[i] else 1.0
    if ng > 0:
        plant_guards(pid, y[:nx], logic, pp, out[N:])


@nb.njit(cache=True)
def advance(pid, y, t, t_stop, dt, bound, nx, npp, N, logic, pp,
            blk0, blk1, wts, s, l, ca, cb, cc, phi_on, L0, L1, g0, g1, watch, ng, res):
    """Step from t toward t_stop; stop early at a guard crossing or blow-up.

    On return y holds the last accepted state; res = (t, h_of_rejected_step).
    """
    g_old = np.empty(N + ng)
    g_new = np.empty(N + ng)
    guard_values(pid, y, nx, npp, N, logic, pp, watch, ng, g_old)
    while t < t_stop:
        h = dt
        last = False
        if t_stop - t <= dt * (1.0 + 1e-9):
            h = t_stop - t
            last = True
        yn = rk4_step(pid, y, h, nx, npp, N, logic, pp, blk0, blk1, wts, s, l,
                      ca, cb, cc, phi_on, L0, L1, g0, g1)
        for c in range(yn.size):
            v = yn[c]
            if not np.isfinite(v) or abs(v) > bound:
                res[0] = t
                res[1] = h
                return DIVERGED
        guard_values(pid, yn, nx, npp, N, logic, pp, watch, ng, g_new)
        for c in range(N + ng):
            if g_old[c] > 0.0 and g_new[c] <= 0.0:
                res[0] = t
                res[1] = h
                return CROSSED
        y[:] = yn
        for c in range(N + ng):
            g_old[c] = g_new[c]
        if last:
            t = t_stop
        else:
            t = t + h
    res[0] = t
    res[1] = 0.0
    return DONE


@nb.njit(cache=True)
def _crossing(g_old, g, tol_g):
    """(any guard crossed, all crossed guards within tol_g of zero)."""
    hit = False
    tight = True
    for c in range(g.size):
        if g_old[c] > 0.0 and g[c] <= 0.0:
            hit = True
            if abs(g[c]) > tol_g:
                tight = False
    return hit, tight


@nb.njit(cache=True)
def localize(pid, y0, h, nx, npp, N, logic, pp, blk0, blk1, wts, s, l,
             ca, cb, cc, phi_on, L0, L1, g0, g1, watch, ng, t_tol, g_tol, y_out, res):
    """Bisect the step size in (0, h] for the first guard crossing from y0.

    Writes the accepted post-crossing state into y_out and res[0] = step.
    Returns 1 on success, 0 when the tolerance could not be met.
    """
    g_old = np.empty(N + ng)
    g = np.empty(N + ng)
    guard_values(pid, y0, nx, npp, N, logic, pp, watch, ng, g_old)
    lo = 0.0
    hi = h
    y_hi = rk4_step(pid, y0, hi, nx, npp, N, logic, pp, blk0, blk1, wts, s, l,
                    ca, cb, cc, phi_on, L0, L1, g0, g1)
    for _ in range(200):
        guard_values(pid, y_hi, nx, npp, N, logic, pp, watch, ng, g)
        hit, tight = _crossing(g_old, g, g_tol)
        if hi - lo <= t_tol and tight:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        ym = rk4_step(pid, y0, mid, nx, npp, N, logic, pp, blk0, blk1, wts, s, l,
                      ca, cb, cc, phi_on, L0, L1, g0, g1)
        guard_values(pid, ym, nx, npp, N, logic, pp, watch, ng, g)
        hit, tight = _crossing(g_old, g, g_tol)
        if hit:
            hi = mid
            y_hi = ym
        else:
            lo = mid
    guard_values(pid, y_hi, nx, npp, N, logic, pp, watch, ng, g)
    hit, tight = _crossing(g_old, g, g_tol)
    y_out[:] = y_hi
    res[0] = hi
    worst = 0.0
    for c in range(g.size):
        if g_old[c] > 0.0 and g[c] <= 0.0 and abs(g[c]) > worst:
            worst = abs(g[c])
    res[1] = worst
    return 1 if tight else 0


@nb.njit(cache=True)
def weights(k, node_of, n_nodes, is_rr, blk0, blk1, out):
    """Protocol weights w_c(k): 1 everywhere except round-robin ((node - k) mod nodes) + 1."""
    for i in range(blk0.size):
        for c in range(blk0[i], blk1[i]):
            if is_rr[i]:
                out[c] = ((node_of[c] - k[i]) % n_nodes[i]) + 1.0
            else:
                out[c] = 1.0


@nb.njit(cache=True)
def network_terms(e, s, k, l, phi, chi, node_of, n_nodes, is_rr, blk0, blk1, g0, g1):
    """Sum over networks of gamma_l * phi_l * W^2 + chi."""
    tot = 0.0
    for i in range(blk0.size):
        w2 = 0.0
        for c in range(blk0[i], blk1[i]):
            w = 1.0
            if is_rr[i]:
                w = ((node_of[c] - k[i]) % n_nodes[i]) + 1.0
            v = e[c] + l[i] * s[c]
            w2 += w * v * v
        g = g1[i] if l[i] else g0[i]
        tot += g * phi[i, l[i]] * w2 + chi[i]
    return tot

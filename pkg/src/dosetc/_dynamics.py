"""Compiled plant dynamics, selected inside the integrator by an integer plant id.

Callback signatures:
    rhs(x, e, logic, pp, dx)      writes dx; its first np entries are the networked rates
    post(x, e, pp)                in-place correction after each step
    guards(x, logic, pp, out)     zero-crossing functions, jump when value <= 0
Dispatching on an id (rather than passing functions) keeps the kernels cacheable.
"""
from __future__ import annotations

import math

import numba as nb

ATTITUDE, FROZEN, DECAY, LINEAR = 0, 1, 2, 3

BLOCK = 7
# attitude pp layout
P_KAPPA, P_J, P_K, P_DELTA = 0, 1, 4, 13


@nb.njit(cache=True)
def attitude_rhs(x, e, logic, pp, dx):
    kap = pp[P_KAPPA]
    for i in range(logic.size):
        o = BLOCK * i
        eta = x[o]
        e1, e2, e3 = x[o + 1], x[o + 2], x[o + 3]
        w1, w2, w3 = x[o + 4], x[o + 5], x[o + 6]
        h = logic[i]
        he1 = e1 + e[o + 1]
        he2 = e2 + e[o + 2]
        he3 = e3 + e[o + 3]
        hw1 = w1 + e[o + 4]
        hw2 = w2 + e[o + 5]
        hw3 = w3 + e[o + 6]
        u1 = -kap * h * he1 - (pp[P_K] * hw1 + pp[P_K + 1] * hw2 + pp[P_K + 2] * hw3)
        u2 = -kap * h * he2 - (pp[P_K + 3] * hw1 + pp[P_K + 4] * hw2 + pp[P_K + 5] * hw3)
        u3 = -kap * h * he3 - (pp[P_K + 6] * hw1 + pp[P_K + 7] * hw2 + pp[P_K + 8] * hw3)
        j1, j2, j3 = pp[P_J], pp[P_J + 1], pp[P_J + 2]
        a1, a2, a3 = j1 * w1, j2 * w2, j3 * w3
        # (J w) x w
        c1 = a2 * w3 - a3 * w2
        c2 = a3 * w1 - a1 * w3
        c3 = a1 * w2 - a2 * w1
        dx[o] = -0.5 * (e1 * w1 + e2 * w2 + e3 * w3)
        dx[o + 1] = 0.5 * (eta * w1 + e2 * w3 - e3 * w2)
        dx[o + 2] = 0.5 * (eta * w2 + e3 * w1 - e1 * w3)
        dx[o + 3] = 0.5 * (eta * w3 + e1 * w2 - e2 * w1)
        dx[o + 4] = (c1 + u1) / j1
        dx[o + 5] = (c2 + u2) / j2
        dx[o + 6] = (c3 + u3) / j3


@nb.njit(cache=True)
def attitude_post(x, e, pp):
    # renormalize each quaternion, shifting e so that x + e (the held value) is unchanged
    for i in range(x.size // BLOCK):
        o = BLOCK * i
        nrm = math.sqrt(x[o] ** 2 + x[o + 1] ** 2 + x[o + 2] ** 2 + x[o + 3] ** 2)
        for c in range(4):
            old = x[o + c]
            x[o + c] = old / nrm
            e[o + c] += old - x[o + c]


@nb.njit(cache=True)
def attitude_guards(x, logic, pp, out):
    for i in range(logic.size):
        out[i] = logic[i] * x[BLOCK * i] + pp[P_DELTA]


@nb.njit(cache=True)
def attitude_V(x, logic, pp):
    v = 0.0
    for i in range(logic.size):
        o = BLOCK * i
        v += 2.0 * pp[P_KAPPA] * (1.0 - logic[i] * x[o])
        for c in range(3):
            w = x[o + 4 + c]
            v += 0.5 * pp[P_J + c] * w * w
    return v


@nb.njit(cache=True)
def frozen_rhs(x, e, logic, pp, dx):
    dx[:] = 0.0


@nb.njit(cache=True)
def decay_rhs(x, e, logic, pp, dx):
    for c in range(x.size):
        dx[c] = -pp[0] * x[c]


@nb.njit(cache=True)
def linear_rhs(x, e, logic, pp, dx):
    # pp = [n, A (n*n), BK (n*n)] ; dx = A x - BK (x + e)
    n = int(pp[0])
    for r in range(n):
        acc = 0.0
        for c in range(n):
            acc += pp[1 + r * n + c] * x[c] - pp[1 + n * n + r * n + c] * (x[c] + e[c])
        dx[r] = acc


@nb.njit(cache=True)
def no_post(x, e, pp):
    pass


@nb.njit(cache=True)
def no_guards(x, logic, pp, out):
    pass


@nb.njit(cache=True)
def plant_rhs(pid, x, e, logic, pp, dx):
    if pid == ATTITUDE:
        attitude_rhs(x, e, logic, pp, dx)
    elif pid == DECAY:
        decay_rhs(x, e, logic, pp, dx)
    elif pid == LINEAR:
        linear_rhs(x, e, logic, pp, dx)
    else:
        frozen_rhs(x, e, logic, pp, dx)


@nb.njit(cache=True)
def plant_post(pid, x, e, pp):
    if pid == ATTITUDE:
        attitude_post(x, e, pp)


@nb.njit(cache=True)
def plant_guards(pid, x, logic, pp, out):
    if pid == ATTITUDE:
        attitude_guards(x, logic, pp, out)

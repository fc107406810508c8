"""Lyapunov certificate along traces, attack-time decomposition and decay fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .state import FLOW_SAMPLE, TRANSMISSION, UPDATE_FAIL, UPDATE_SUCCESS, HybridState


def certificate(state: HybridState, system) -> float:
    """U = V + sum_i (gamma_l * phi_l * W^2 + chi) with the live clock index l."""
    U = system.plant.V(state.x, state.logic)
    for i, net in enumerate(system.networks):
        l = int(state.l[i])
        W = state.W(i, net)
        U += net.timing.gamma(l) * state.phi[i, l] * W * W + state.chi[i]
    return float(U)


def _merge(intervals):
    out = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _complement(intervals, horizon):
    out, cur = [], 0.0
    for a, b in intervals:
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < horizon:
        out.append((cur, horizon))
    return out


@dataclass
class AttackDecomposition:
    active: list[tuple[float, float]]      # attack-active part
    over: list[tuple[float, float]]        # attack-over part
    attack_count: int
    failed_windows: int

    @property
    def active_time(self) -> float:
        return float(sum(b - a for a, b in self.active))


def decompose_attack_time(events, timeline, horizon: float, net: int) -> AttackDecomposition:
    """Split [0, horizon] for one network.

    Each failed cycle contributes [first attack in its transit window, next
    transmission of the network); the rest of the axis is attack-over time.
    """
    rows = [r for r in events if r.net == net and r.event in (TRANSMISSION, UPDATE_FAIL)]
    active = []
    n_fail = 0
    for idx, r in enumerate(rows):
        if r.event != UPDATE_FAIL:
            continue
        n_fail += 1
        tx = next((q for q in reversed(rows[:idx]) if q.event == TRANSMISSION), None)
        start = r.t if tx is None else (timeline.first_in(tx.t, r.t) if timeline is not None else None)
        if start is None:
            start = r.t
        nxt = next((q.t for q in rows[idx + 1:] if q.event == TRANSMISSION), horizon)
        active.append((start, min(nxt, horizon)))
    active = _merge(active)
    count = timeline.count(0.0, horizon) if timeline is not None else 0
    return AttackDecomposition(active, _complement(active, horizon), count, n_fail)


@dataclass
class CertificateTrace:
    t: np.ndarray
    j: np.ndarray
    U: np.ndarray
    unstable: np.ndarray
    decompositions: list[AttackDecomposition] = field(default_factory=list)


def certificate_trace(trace, samples_only: bool = False) -> CertificateTrace:
    recs = [r for r in trace.records if not samples_only or r.event == FLOW_SAMPLE]
    unstable = np.array([bool(np.any(r.state.m == 1)) if r.state is not None else False
                         for r in recs])
    decs = [decompose_attack_time(trace.events, trace.timelines[i] if trace.timelines else None,
                                  trace.horizon, i) for i in range(len(trace.networks))]
    return CertificateTrace(np.array([r.time.t for r in recs]), np.array([r.time.j for r in recs]),
                            np.array([r.certificate for r in recs]), unstable, decs)


@dataclass
class DecayEstimate:
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    rate: float | None
    beta_hat: float | None
    rate_ge_beta: bool | None
    monotone_trend: bool
    ratio_end: float | None

    def as_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(), "mean_U": self.mean.tolist(),
            "stderr": self.stderr.tolist(), "fitted_rate": self.rate,
            "beta_hat": self.beta_hat, "rate_ge_beta_hat": self.rate_ge_beta,
            "monotone_trend": self.monotone_trend, "U_end_over_U0": self.ratio_end,
        }


def sample_on_grid(ct: CertificateTrace, grid) -> np.ndarray:
    """U at each grid time, taking the last record at that t (post-jump value)."""
    idx = np.searchsorted(ct.t, grid, side="right") - 1
    return ct.U[np.clip(idx, 0, len(ct.U) - 1)]


def decay_estimate(ensemble, grid, beta_hat: float | None = None) -> DecayEstimate:
    """Mean U across runs on a grid and a least-squares fit of log(mean U)."""
    ensemble = list(ensemble)
    if not ensemble:
        raise ValueError("empty ensemble")
    grid = np.asarray(grid, dtype=float)
    M = np.array([sample_on_grid(c, grid) if isinstance(c, CertificateTrace) else np.asarray(c, float)
                  for c in ensemble])
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / math.sqrt(len(M)) if len(M) > 1 else np.zeros_like(mean)
    rate = None
    pos = mean > 0
    if pos.sum() >= 2:
        slope = np.polyfit(grid[pos], np.log(mean[pos]), 1)[0]
        rate = float(-slope)
    ratio = float(mean[-1] / mean[0]) if mean[0] > 0 else None
    # trend: fitted slope negative and the last fifth below the first fifth
    q = max(1, len(mean) // 5)
    monotone = bool(rate is not None and rate > 0 and mean[-q:].mean() < mean[:q].mean())
    cmp = None if (rate is None or beta_hat is None) else bool(rate >= beta_hat)
    return DecayEstimate(grid, mean, se, rate, beta_hat, cmp, monotone, ratio)


def transmission_jump_deltas(events) -> np.ndarray:
    return np.array([r.U_post - r.U_pre for r in events if r.event == TRANSMISSION])


def realized_jump_check(trace, tol: float = 1e-8) -> dict:
    """Compare U+ - U at transmissions with the realized-draw inequality.

    A draw is admissible when chi_reset <= (gamma0*phi0 - lam^2*gamma1*phi1(0,0)) W^2
    with phi0 the pre-jump clock.  Admissible draws must not raise U beyond tol.
    """
    recs = trace.records
    out = {"admissible": 0, "admissible_violations": 0, "inadmissible": 0}
    first_j, last_j = {}, {}
    for r in recs:
        first_j.setdefault(r.time.j, r)
        last_j[r.time.j] = r
    for ev in trace.events:
        if ev.event != TRANSMISSION:
            continue
        pre = last_j.get(ev.j)
        post = first_j.get(ev.j + 1)
        if pre is None or post is None or pre.state is None:
            continue
        i = ev.net
        net = trace.networks[i]
        W = pre.state.W(i, net)
        p = net.timing
        budget = (p.gamma0 * pre.state.phi[i, 0] - p.lam**2 * p.gamma1 * net.phi_init[1]) * W * W
        spent = post.state.chi[i] if not ev.window_hit else 0.0
        if spent <= budget + 1e-15:
            out["admissible"] += 1
            if ev.U_post - ev.U_pre > tol:
                out["admissible_violations"] += 1
        else:
            out["inadmissible"] += 1
    return out


@dataclass
class Discipline:
    """Zeno and small-delay checks for one trace."""

    transmissions: int
    min_gap_margin: float           # min over pairs of gap - tau_miet^m
    gap_violations: int
    order_violations: int           # a transmission while an update was still pending
    attack_bound: list[tuple[float, float]]   # per network (|Xi|, count * tau_miet1)

    def ok(self, tol: float = 1e-9) -> bool:
        return (self.gap_violations == 0 and self.order_violations == 0
                and all(a <= b + tol for a, b in self.attack_bound))


def event_discipline(trace, tol: float = 1e-9) -> Discipline:
    gaps, n_gap, n_order, n_tx = [], 0, 0, 0
    bounds = []
    for i, net in enumerate(trace.networks):
        p = net.timing
        last_tx = None
        mode = None          # mode set by the update of the current cycle
        pending = False
        for r in trace.network_events(i):
            if r.event == TRANSMISSION:
                n_tx += 1
                if pending:
                    n_order += 1
                if last_tx is not None:
                    g = (r.t - last_tx) - p.tau_miet(mode if mode is not None else 0)
                    gaps.append(g)
                    if g < -tol:
                        n_gap += 1
                last_tx, pending, mode = r.t, True, None
            elif r.event in (UPDATE_SUCCESS, UPDATE_FAIL):
                pending = False
                mode = r.m
        tl = trace.timelines[i] if trace.timelines else None
        dec = decompose_attack_time(trace.events, tl, trace.horizon, i)
        bounds.append((dec.active_time, dec.attack_count * p.tau_miet1))
    return Discipline(n_tx, min(gaps) if gaps else math.inf, n_gap, n_order, bounds)


@dataclass
class FlowRateCheck:
    intervals: int
    violations: int
    worst_excess: float          # max of (U_b - bound), negative when all hold

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def flow_rate_check(trace, rate: float, unstable: bool, tol: float = 1e-6) -> FlowRateCheck:
    """Check U_b <= U_a exp(rate dt) + tol (1 + U_a) dt over flow intervals of one mode.

    Pass rate = -varpi0 with unstable=False for the decay bound and rate = varpi1
    with unstable=True for the growth bound.  Consecutive records at the same jump
    index bound one flow interval; the mode must agree at both ends.
    """
    n = bad = 0
    worst = -math.inf
    recs = trace.records
    for a, b in zip(recs, recs[1:]):
        if a.time.j != b.time.j or a.state is None or b.time.t <= a.time.t:
            continue
        ua, ub = bool(np.any(a.state.m == 1)), bool(np.any(b.state.m == 1))
        if ua != unstable or ub != unstable:
            continue
        dt = b.time.t - a.time.t
        bound = a.certificate * math.exp(rate * dt) + tol * (1.0 + a.certificate) * dt
        n += 1
        ex = b.certificate - bound
        worst = max(worst, ex)
        bad += ex > 0
    return FlowRateCheck(n, bad, worst)

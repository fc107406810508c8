"""Hybrid simulator: flow with event detection, jumps in hybrid-time order."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .network import jump_transmit, jump_update_fail, jump_update_success, transmit_enabled
from .plants import Plant
from .protocol import RR
from .state import (FLOW_SAMPLE, HYSTERESIS, PH_A, PH_B, PH_RAMP, PH_TAIL, TRANSMISSION,
                    UPDATE_FAIL, UPDATE_SUCCESS, EventRow, HybridState, HybridTime,
                    NetworkSpec, SimTrace, TraceRecord)
from .stochastic import (AttackTimeline, DelayLaw, StreamSet, draw_interattack,
                         sample_attacks, sample_delay)
from .trigger import rate_coeffs


class DivergenceError(RuntimeError):
    pass


class EventLocalizationError(RuntimeError):
    pass


@dataclass
class System:
    plant: Plant
    networks: list[NetworkSpec]

    @property
    def N(self) -> int:
        return len(self.networks)

    @property
    def layout(self) -> "_Layout":
        lay = self.__dict__.get("_layout")
        if lay is None:
            lay = self.__dict__["_layout"] = _Layout(self)
        return lay


class _Layout:
    """Flat per-coordinate and per-network tables for the compiled kernels."""

    def __init__(self, system: System):
        nets = system.networks
        self.blk0 = np.array([n.block.start for n in nets], np.int64)
        self.blk1 = np.array([n.block.stop for n in nets], np.int64)
        self.node_of = np.zeros(system.plant.n_p, np.int64)
        for n in nets:
            b = n.partition.bounds
            for node in range(n.partition.n_nodes):
                self.node_of[n.block.start + b[node]:n.block.start + b[node + 1]] = node
        self.n_nodes = np.array([n.partition.n_nodes for n in nets], np.int64)
        self.is_rr = np.array([n.protocol.tag == RR for n in nets], np.int64)
        self.L0 = np.array([n.timing.L0 for n in nets])
        self.L1 = np.array([n.timing.L1 for n in nets])
        self.g0 = np.array([n.timing.gamma0 for n in nets])
        self.g1 = np.array([n.timing.gamma1 for n in nets])

    def certificate(self, plant, st) -> float:
        return float(plant.V(st.x, st.logic)) + _kernel.network_terms(
            st.e, st.s, st.k, st.l, st.phi, st.chi, self.node_of, self.n_nodes, self.is_rr,
            self.blk0, self.blk1, self.g0, self.g1)


@dataclass
class SimOptions:
    dt: float = 1e-4
    bound: float = 1e6
    sample_dt: float | None = 0.01
    event_tol: float = 1e-10
    chi_tol: float = 1e-9
    hysteresis_forces_tx: bool = True
    store_states: bool = True


class RandomSources:
    """Per-network attack timelines, delays and chi-reset draws from seeded streams."""

    def __init__(self, system: System, seed: int, horizon: float, attack_rates=None,
                 relax: bool = False, chi_reset_mode: str = "iid"):
        if chi_reset_mode not in ("iid", "timeline"):
            raise ValueError("chi_reset_mode must be iid or timeline")
        self.streams = StreamSet(seed, system.N)
        self.mode = chi_reset_mode
        self.relax = relax
        self.laws = [DelayLaw(n.timing.delay_rate, n.timing.tau_mad) for n in system.networks]
        self.rates = [n.timing.lambda_exp for n in system.networks]
        rates = attack_rates if attack_rates is not None else self.rates
        # cover windows that open just before the horizon
        span = horizon + max(n.timing.tau_mad for n in system.networks)
        self.timelines = [sample_attacks(r, span, self.streams.attack[i], i, relax=relax)
                          for i, r in enumerate(rates)]

    def delay(self, i: int) -> float:
        return sample_delay(self.laws[i], self.streams.delay[i])

    def delta(self, i: int, t: float) -> float:
        d = draw_interattack(self.rates[i], self.streams.reset[i], relax=self.relax)
        if self.mode == "timeline":
            g = self.timelines[i].gap_at(t)
            if g is not None:
                return g
        return d


class ScriptedSources:
    """Fixed delays (cycled per network), fixed attack instants and fixed Delta."""

    def __init__(self, delays, attacks, delta=1.0, horizon: float = math.inf):
        self.delays = [list(d) for d in delays]
        self.count = [0] * len(self.delays)
        self.timelines = [AttackTimeline(i, 0.0, np.array(sorted(a), dtype=float), horizon)
                          for i, a in enumerate(attacks)]
        self._delta = delta

    def delay(self, i: int) -> float:
        d = self.delays[i][self.count[i] % len(self.delays[i])]
        self.count[i] += 1
        return float(d)

    def delta(self, i: int, t: float) -> float:
        return float(self._delta(i, t) if callable(self._delta) else self._delta)


# ---------------------------------------------------------------- flow set / jump set

def in_flow_set(state: HybridState, networks: list[NetworkSpec]):
    per = []
    for i, net in enumerate(networks):
        p = net.timing
        tau, chi = state.tau_e[i], state.chi[i]
        if state.l[i] == 0:
            per.append(bool(tau <= p.tau_miet(int(state.m[i])) or chi >= 0))
        else:
            per.append(bool(0.0 <= tau <= p.tau_mad))
    return per, all(per)


def in_jump_set(state: HybridState, networks: list[NetworkSpec]):
    per = []
    for i, net in enumerate(networks):
        p = net.timing
        if state.l[i] == 1:
            per.append(True)
        else:
            per.append(bool(state.tau_e[i] >= p.tau_miet(int(state.m[i])) and state.chi[i] <= 0))
    return per, any(per)


# ---------------------------------------------------------------- packing helpers

class _Packer:
    def __init__(self, system: System):
        pl = system.plant
        self.system = system
        self.nx, self.np_, self.N = pl.nx, pl.n_p, system.N
        lay = system.layout
        self.lay = lay
        self.blk0, self.blk1 = lay.blk0, lay.blk1
        self.L0, self.L1, self.g0, self.g1 = lay.L0, lay.L1, lay.g0, lay.g1

    def pack(self, st: HybridState) -> np.ndarray:
        return np.concatenate((st.x, st.e, st.tau_e, st.chi, st.phi[:, 0], st.phi[:, 1]))

    def unpack(self, y: np.ndarray, st: HybridState) -> None:
        nx, np_, N = self.nx, self.np_, self.N
        st.x = y[:nx].copy()
        st.e = y[nx:nx + np_].copy()
        o = nx + np_
        st.tau_e = y[o:o + N].copy()
        st.chi = y[o + N:o + 2 * N].copy()
        st.phi = np.stack((y[o + 2 * N:o + 3 * N], y[o + 3 * N:o + 4 * N]), axis=1).copy()

    def segment(self, st: HybridState):
        nets = self.system.networks
        wts = np.empty(self.np_)
        lay = self.lay
        _kernel.weights(st.k, lay.node_of, lay.n_nodes, lay.is_rr, lay.blk0, lay.blk1, wts)
        ca = np.zeros(self.N)
        cb = np.zeros(self.N)
        cc = np.zeros(self.N)
        phi_on = np.zeros(self.N, np.int64)
        watch = np.zeros(self.N, np.int64)
        for i, net in enumerate(nets):
            ph = int(st.phase[i])
            ca[i], cb[i], cc[i] = rate_coeffs(ph, st.chi_armed[i], int(st.l[i]), net.psi)
            phi_on[i] = 1 if (ph == PH_A and st.m[i] == 0) else 0
            watch[i] = 1 if (st.l[i] == 0 and st.m[i] == 0 and ph == PH_B) else 0
        return (self.nx, self.np_, self.N, st.logic, self.system.plant.pp, self.blk0, self.blk1,
                wts, st.s, st.l, ca, cb, cc, phi_on, self.L0, self.L1, self.g0, self.g1), watch


def flow_step(state: HybridState, dt: float, system: System) -> HybridState:
    """One RK4 step of the flow map (no event handling)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    state.check_finite()
    pk = _Packer(system)
    args, _ = pk.segment(state)
    pl = system.plant
    y = _kernel.rk4_step(pl.pid, pk.pack(state), dt, *args)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite state after flow step")
    out = state.copy()
    pk.unpack(y, out)
    return out


# ---------------------------------------------------------------- simulator

class Simulator:
    def __init__(self, system: System, sources, options: SimOptions | None = None):
        self.system = system
        self.src = sources
        self.opt = options or SimOptions()
        self.pk = _Packer(system)
        self.j = 0

    # deadlines -------------------------------------------------------------

    def _deadlines(self, st: HybridState, i: int) -> list[float]:
        net = self.system.networks[i]
        p = net.timing
        out = []
        if st.l[i] == 1:
            out.append(st.pending_time[i])
        if st.phase[i] == PH_A:
            out.append(st.t_tx[i] + p.tau_miet0)
        if st.m[i] == 1:
            if st.phase[i] == PH_RAMP:
                out.append(st.t_tx[i] + (st.armed_delay[i] + net.psi.ramp_time))
            if st.tau_e[i] < p.tau_miet1:
                out.append(st.t_tx[i] + p.tau_miet1)
        return out

    def _apply_deadlines(self, st: HybridState, t: float) -> None:
        for i, net in enumerate(self.system.networks):
            p = net.timing
            if st.l[i] == 1 and st.pending_time[i] <= t:
                st.tau_e[i] = st.pending_delay[i]
            if st.phase[i] == PH_A and st.t_tx[i] + p.tau_miet0 <= t:
                st.tau_e[i] = p.tau_miet0
                st.phase[i] = PH_B
                st.phi[i] = (net.derived.phi_miet0, net.derived.phi_miet1)
            if st.m[i] == 1:
                ramp_t = st.armed_delay[i] + net.psi.ramp_time
                if st.phase[i] == PH_RAMP and st.t_tx[i] + ramp_t <= t:
                    st.chi[i] = 0.0
                    st.phase[i] = PH_TAIL
                    st.tau_e[i] = ramp_t
                if st.tau_e[i] < p.tau_miet1 and st.t_tx[i] + p.tau_miet1 <= t:
                    st.tau_e[i] = p.tau_miet1

    # jumps ------------------------------------------------------------------

    def _next_jump(self, st: HybridState, t: float):
        pl = self.system.plant
        gv = pl.guard_values(st.x, st.logic) if pl.n_guards else ()
        for i, net in enumerate(self.system.networks):
            for g in range(pl.n_guards):
                if pl.guard_network(g) == i and gv[g] <= 0.0:
                    return HYSTERESIS, i, g
            if st.l[i] == 1 and st.pending_time[i] <= t:
                return (UPDATE_SUCCESS if st.pending_success[i] else UPDATE_FAIL), i, None
            if transmit_enabled(st, i, net):
                return TRANSMISSION, i, None
        return None

    def _jump(self, st: HybridState, t: float, kind: str, i: int, g) -> tuple[HybridState, EventRow]:
        net = self.system.networks[i]
        U_pre = self.system.layout.certificate(self.system.plant, st)
        delay, hit = math.nan, False
        if kind == HYSTERESIS:
            out = st.copy()
            out.logic = np.asarray(self.system.plant.logic_jump(st.x, st.logic, g), np.int64)
            if self.opt.hysteresis_forces_tx:
                out.forced[i] = True
        elif kind == TRANSMISSION:
            delta = self.src.delta(i, t)
            delay = self.src.delay(i)
            hit = self.src.timelines[i].hits(t, t + delay)
            out = jump_transmit(st, i, delta, delay, hit, net=net, t=t)
        elif kind == UPDATE_SUCCESS:
            delay = float(st.pending_delay[i])
            out = jump_update_success(st, i, net=net)
        else:
            delay = float(st.pending_delay[i])
            hit = True
            out = jump_update_fail(st, i, net=net)
        U_post = self.system.layout.certificate(self.system.plant, out)
        row = EventRow(t, self.j, kind, i, int(out.k[i]), int(out.l[i]), int(out.m[i]),
                       delay, bool(hit), U_pre, U_post)
        self.j += 1
        return out, row

    def _record(self, trace: SimTrace, st: HybridState, t: float, event: str, net: int):
        snap = st.copy() if self.opt.store_states else None
        trace.records.append(TraceRecord(HybridTime(t, self.j), snap, event, net,
                                         self.system.layout.certificate(self.system.plant, st)))

    def _process_jumps(self, trace: SimTrace, st: HybridState, t: float) -> HybridState:
        for _ in range(1000 * self.system.N):
            nxt = self._next_jump(st, t)
            if nxt is None:
                return st
            last = trace.records[-1].time if trace.records else None
            if last != HybridTime(t, self.j):
                # close the flow interval: the arc point just before the jump
                self._record(trace, st, t, FLOW_SAMPLE, -1)
            st, row = self._jump(st, t, *nxt)
            trace.events.append(row)
            self._record(trace, st, t, row.event, row.net)
        raise RuntimeError("too many jumps at one instant")

    # flows ------------------------------------------------------------------

    def _localize(self, y0, h, args, watch):
        pl = self.system.plant
        y_out = np.empty_like(y0)
        res = np.zeros(2)
        tail = (*args, watch, pl.n_guards, self.opt.event_tol, self.opt.chi_tol, y_out, res)
        ok = _kernel.localize(pl.pid, y0, h, *tail)
        if not ok:
            raise EventLocalizationError(f"could not localize crossing within tolerance (|g|={res[1]})")
        return float(res[0]), y_out

    def run(self, initial: HybridState, horizon: float) -> SimTrace:
        if not horizon > 0:
            raise ValueError("horizon must be positive")
        trace = SimTrace(horizon=horizon, networks=self.system.networks,
                         timelines=list(getattr(self.src, "timelines", [])))
        st = initial.copy()
        st.check_finite()
        t = 0.0
        self.j = 0
        pl = self.system.plant
        sdt = self.opt.sample_dt
        n_sample = 1
        self._record(trace, st, t, FLOW_SAMPLE, -1)
        res = np.zeros(2)
        while True:
            st = self._process_jumps(trace, st, t)
            if t >= horizon:
                break
            T = horizon
            next_sample = None
            if sdt:
                next_sample = min(n_sample * sdt, horizon)
                T = min(T, next_sample)
            for i in range(self.system.N):
                for d in self._deadlines(st, i):
                    T = min(T, d)
            T = max(T, t)
            args, watch = self.pk.segment(st)
            y = self.pk.pack(st)
            head = (y, t, T, self.opt.dt, self.opt.bound)
            code = _kernel.advance(pl.pid, *head, *args, watch, pl.n_guards,
                                   res)
            if code == _kernel.DIVERGED:
                raise DivergenceError(f"state left the bound {self.opt.bound} near t={res[0]}")
            if code == _kernel.CROSSED:
                t0, h = float(res[0]), float(res[1])
                theta, y_ev = self._localize(y.copy(), h, args, watch)
                t = min(t0 + theta, T)
                self.pk.unpack(y_ev, st)
                continue
            self.pk.unpack(y, st)
            t = T
            self._apply_deadlines(st, t)
            if next_sample is not None and t == next_sample:
                self._record(trace, st, t, FLOW_SAMPLE, -1)
                n_sample += 1
        trace.final_state = st
        return trace


def run(initial: HybridState, horizon: float, streams, config: dict | None = None,
        system: System | None = None) -> SimTrace:
    """Convenience wrapper: ``streams`` is a sources object; ``config`` holds SimOptions fields."""
    if system is None:
        raise ValueError("system required")
    opts = SimOptions(**(config or {}))
    return Simulator(system, streams, opts).run(initial, horizon)

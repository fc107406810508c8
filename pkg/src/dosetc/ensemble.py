"""Seeded single runs and Monte-Carlo ensembles reduced to small per-run summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certify import (CertificateTrace, Discipline, certificate_trace, decay_estimate,
                      event_discipline, realized_jump_check, sample_on_grid,
                      transmission_jump_deltas)
from .config import RunConfig, build_initial, build_sources, build_system, sim_options
from .core import Simulator


@dataclass
class RunSummary:
    seed: int
    terminal: dict
    grid_U: np.ndarray
    jump_deltas: np.ndarray
    jump_check: dict
    discipline: Discipline
    counts: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = {"seed": self.seed, **self.terminal, "U_end": float(self.grid_U[-1]),
             "transmissions": self.discipline.transmissions,
             "min_gap_margin": self.discipline.min_gap_margin,
             "discipline_ok": self.discipline.ok()}
        d.update(self.counts)
        return d


def grid_for(horizon: float, step: float = 0.1) -> np.ndarray:
    n = int(round(horizon / step))
    return np.linspace(0.0, horizon, n + 1)


def simulate(cfg: RunConfig, seed: int | None = None, horizon: float | None = None,
             system=None, store_states: bool = True):
    system = system or build_system(cfg)
    seed = cfg.sim.seed if seed is None else seed
    horizon = cfg.sim.horizon if horizon is None else horizon
    src = build_sources(cfg, system, seed=seed, horizon=horizon)
    sim = Simulator(system, src, sim_options(cfg, store_states=store_states))
    return sim.run(build_initial(cfg, system), horizon), system


def summarize(trace, system, seed: int, grid) -> RunSummary:
    ct: CertificateTrace = certificate_trace(trace)
    st = trace.final_state
    counts = {}
    for r in trace.events:
        counts[r.event] = counts.get(r.event, 0) + 1
    return RunSummary(
        seed=seed,
        terminal=system.plant.terminal_errors(st.x, st.logic),
        grid_U=sample_on_grid(ct, grid),
        jump_deltas=transmission_jump_deltas(trace.events),
        jump_check=realized_jump_check(trace) if trace.records and trace.records[0].state is not None
        else {},
        discipline=event_discipline(trace),
        counts=counts)


class RunFailure(RuntimeError):
    def __init__(self, index: int, seed: int, exc: Exception):
        super().__init__(f"run {index} (seed {seed}): {type(exc).__name__}: {exc}")
        self.index, self.seed, self.cause = index, seed, exc


def run_ensemble(cfg: RunConfig, count: int | None = None, base_seed: int | None = None,
                 horizon: float | None = None, store_states: bool = True, progress=None):
    """Seeds base..base+count-1 in order; returns (summaries, decay estimate)."""
    count = int(cfg.mc.get("count", 1)) if count is None else count
    base = cfg.sim.seed if base_seed is None else base_seed
    horizon = cfg.sim.horizon if horizon is None else horizon
    system = build_system(cfg)
    grid = grid_for(horizon)
    out = []
    for idx in range(count):
        seed = base + idx
        try:
            trace, _ = simulate(cfg, seed, horizon, system, store_states=store_states)
        except Exception as exc:       # reported with the run index
            raise RunFailure(idx, seed, exc) from exc
        out.append(summarize(trace, system, seed, grid))
        if progress:
            progress(idx, out[-1])
    beta = system.networks[0].derived.beta_hat if system.networks else None
    est = decay_estimate([s.grid_U for s in out], grid, beta)
    return out, est


def pooled_jump_stats(summaries) -> dict:
    d = np.concatenate([s.jump_deltas for s in summaries]) if summaries else np.zeros(0)
    n = d.size
    mean = float(d.mean()) if n else math.nan
    se = float(d.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return {"n": n, "mean": mean, "stderr": se}

"""Triggering-function dynamics and the transmission rule."""
from __future__ import annotations

from dataclasses import dataclass, replace

from .state import PH_A, PH_B, PH_PRE, PH_RAMP, PH_TAIL, PHASE_NAMES
from .timing import DerivedConstants, PsiCoefficients, TimingParams, template_psi


@dataclass(frozen=True)
class TriggerState:
    chi: float
    mode: int = 0
    armed_delay: float | None = None
    chi_armed: float | None = None
    phase: int = PH_A

    @property
    def phase_name(self) -> str:
        return PHASE_NAMES[self.phase]


def resolve_psi(p: TimingParams, dc: DerivedConstants, *, delta=None, delta_pre=None,
                gammabar0=None, gammabar1=None, chi_reset=None, varrho=0.0) -> PsiCoefficients:
    """Template coefficients with optional per-field overrides."""
    base = template_psi(p, dc)
    over = {k: v for k, v in dict(delta=delta, gammabar0=gammabar0, gammabar1=gammabar1,
                                  chi_reset=chi_reset).items() if v is not None}
    psi = replace(base, varrho=float(varrho), **over)
    return replace(psi, delta_pre=psi.delta if delta_pre is None else delta_pre)


def rate_coeffs(phase: int, chi_armed: float, l: int, psi: PsiCoefficients) -> tuple[float, float, float]:
    """(a, b, c) with chi' = a + b*W^2 - c*chi on the current branch."""
    if phase == PH_A:
        return 0.0, psi.varrho, psi.delta
    if phase == PH_B:
        return 0.0, psi.varrho - psi.gammabar(l), psi.delta
    if phase == PH_PRE:
        return 0.0, psi.varrho, psi.delta_pre
    if phase == PH_RAMP:
        return -chi_armed / psi.ramp_time, 0.0, 0.0
    return psi.tail_rate, 0.0, 0.0


def phase_at(ts: TriggerState, tau_e: float, p: TimingParams, psi: PsiCoefficients) -> int:
    if ts.mode == 0:
        return PH_A if tau_e <= p.tau_miet0 else PH_B
    if ts.armed_delay is None or tau_e <= ts.armed_delay:
        return PH_PRE
    if tau_e <= ts.armed_delay + psi.ramp_time:
        return PH_RAMP
    return PH_TAIL


def chi_rate(ts: TriggerState, tau_e: float, plant_terms: tuple[float, float],
             p: TimingParams, psi: PsiCoefficients, l: int = 0) -> float:
    """Rate of chi given (varrho value, W value) at elapsed time tau_e."""
    varrho, W = plant_terms
    ph = phase_at(ts, tau_e, p, psi)
    if ph == PH_A:
        return varrho - psi.delta * ts.chi
    if ph == PH_B:
        return varrho - psi.gammabar(l) * W * W - psi.delta * ts.chi
    if ph == PH_PRE:
        return varrho - psi.delta_pre * ts.chi
    if ph == PH_RAMP:
        return -ts.chi_armed / psi.ramp_time
    return psi.tail_rate


def should_transmit(ts: TriggerState, tau_e: float, p: TimingParams) -> bool:
    return tau_e >= p.tau_miet(ts.mode) and ts.chi <= 0.0


def on_failed_update(ts: TriggerState, realized_delay: float) -> TriggerState:
    if ts.mode != 1:
        raise ValueError("failed-update rule needs mode 1")
    return replace(ts, armed_delay=float(realized_delay), chi_armed=ts.chi, phase=PH_RAMP)


def ramp_end(ts: TriggerState, psi: PsiCoefficients) -> float:
    """Elapsed time at which the post-attack ramp brings chi to zero."""
    return ts.armed_delay + psi.ramp_time

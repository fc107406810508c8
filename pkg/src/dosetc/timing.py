"""Timer-clock dynamics, transmission-interval bounds and design-condition checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

EQUAL_RTOL = 1e-12


@dataclass(frozen=True)
class TimingParams:
    """Constants of one network.  Index 0/1 refers to the clock pair l."""

    L0: float = 5.0
    L1: float = 10.0
    gamma0: float = 5.0
    gamma1: float = 10.0
    lam: float = 0.1
    rho0: float = 25.0
    rho1: float = 100.0
    rho_tilde: float = 1.0
    tau_miet0: float = 0.029
    tau_miet1: float = 0.016
    tau_mad: float = 0.012
    vartheta: float = 4.0
    lambda_exp: float = 1.0
    delay_rate: float = 100.0
    phi_miet_mode: str = "derived"
    phi_miet0: float | None = None
    phi_miet1: float | None = None

    def validate(self, relax_attack_rate: bool = False) -> None:
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0,1), got {self.lam}")
        for name in ("L0", "L1", "gamma0", "gamma1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.vartheta > 1.0:
            raise ValueError("vartheta must exceed 1")
        if self.gamma0**2 < self.rho0 or self.gamma1**2 < self.rho1:
            raise ValueError("need gamma_l^2 >= rho_l")
        if self.rho0 <= 0 or self.rho1 <= 0 or self.rho_tilde <= 0:
            raise ValueError("rho constants must be positive")
        if not (self.tau_miet0 > 0 and self.tau_miet1 > 0):
            raise ValueError("tau_miet values must be positive")
        if self.tau_mad < 0:
            raise ValueError("tau_mad must be nonnegative")
        if self.delay_rate <= 0:
            raise ValueError("delay_rate must be positive")
        if self.lambda_exp < 1.0 and not relax_attack_rate:
            raise ValueError("lambda_exp >= 1 required (set relax flag to override)")
        if self.lambda_exp < 0:
            raise ValueError("lambda_exp must be nonnegative")
        if self.phi_miet_mode not in ("derived", "override"):
            raise ValueError(f"phi_miet_mode must be derived|override, got {self.phi_miet_mode!r}")
        if self.phi_miet_mode == "override":
            if self.phi_miet0 is None or self.phi_miet1 is None:
                raise ValueError("override mode needs phi_miet0 and phi_miet1")

    def L(self, l: int) -> float:
        return self.L1 if l else self.L0

    def gamma(self, l: int) -> float:
        return self.gamma1 if l else self.gamma0

    def rho(self, l: int) -> float:
        return self.rho1 if l else self.rho0

    def tau_miet(self, m: int) -> float:
        return self.tau_miet1 if m else self.tau_miet0

    def phi_miet(self) -> tuple[float, float]:
        """Clock endpoint values (phi_miet^0, phi_miet^1) under the configured source."""
        if self.phi_miet_mode == "override":
            return float(self.phi_miet0), float(self.phi_miet1)
        return (phi_solution(self.L0, self.gamma0, self.lam, self.tau_miet0),
                phi_solution(self.L1, self.gamma1, self.lam, self.tau_miet0))

    def with_mode(self, mode: str) -> "TimingParams":
        return replace(self, phi_miet_mode=mode)


def _branch(L: float, gamma: float) -> int:
    if abs(gamma - L) <= EQUAL_RTOL * max(abs(gamma), abs(L)):
        return 0
    return 1 if gamma > L else -1


def _check_rates(L, gamma, lam):
    if not (L > 0 and gamma > 0):
        raise ValueError("L and gamma must be positive")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0,1), got {lam}")


def tau_mati(L: float, gamma: float, lam: float) -> float:
    """Time for the clock to fall from 1/lam to lam."""
    _check_rates(L, gamma, lam)
    b = _branch(L, gamma)
    if b == 0:
        return (1.0 / L) * (1.0 - lam) / (1.0 + lam)
    r = math.sqrt(abs(gamma**2 / L**2 - 1.0))
    g = r * (1.0 - lam) / ((2.0 * lam / (1.0 + lam)) * (gamma / L - 1.0) + 1.0 + lam)
    if b > 0:
        return math.atan(g) / (L * r)
    return math.atanh(g) / (L * r)


def phi_rhs(L: float, gamma: float, phi):
    return -2.0 * L * phi - gamma * (phi * phi + 1.0)


def phi_closed(L: float, gamma: float, phi0: float, t):
    """Riccati solution from phi0; no domain check.  Works elementwise on arrays."""
    t = np.asarray(t, dtype=float)
    b = _branch(L, gamma)
    if b == 0:
        out = -1.0 + 1.0 / (1.0 / (phi0 + 1.0) + L * t)
    elif b > 0:
        w = math.sqrt(1.0 - (L / gamma) ** 2)
        psi0 = phi0 + L / gamma
        out = w * np.tan(np.arctan(psi0 / w) - gamma * w * t) - L / gamma
    else:
        kap = math.sqrt((L / gamma) ** 2 - 1.0)
        psi0 = phi0 + L / gamma
        a = (psi0 - kap) / (psi0 + kap) * np.exp(-2.0 * gamma * kap * t)
        out = kap * (1.0 + a) / (1.0 - a) - L / gamma
    return out if out.ndim else float(out)


def phi_solution(L: float, gamma: float, lam: float, t: float) -> float:
    """Clock value at time t of the flow started from 1/lam (valid on [0, tau_mati])."""
    _check_rates(L, gamma, lam)
    T = tau_mati(L, gamma, lam)
    if t < 0 or t > T * (1.0 + 1e-9):
        raise ValueError(f"t={t} outside [0, tau_mati={T}]")
    if t == 0:
        return 1.0 / lam
    return phi_closed(L, gamma, 1.0 / lam, t)


@dataclass(frozen=True)
class DerivedConstants:
    tau_mati0: float
    tau_mati1: float
    phi_miet0: float
    phi_miet1: float
    gammabar0: float
    gammabar1: float
    varpi0: float
    varpi1: float
    beta_hat: float

    def gammabar(self, l: int) -> float:
        return self.gammabar1 if l else self.gammabar0


def gammabar(L: float, gamma: float, phi: float) -> float:
    return gamma * (2.0 * phi * L + gamma * (1.0 + phi * phi))


def _local(p: TimingParams):
    phis = p.phi_miet()
    gb = [gammabar(p.L(l), p.gamma(l), phis[l]) for l in (0, 1)]
    w0 = min(p.rho_tilde, min(p.lam * p.rho(l) / p.gamma(l) for l in (0, 1)))
    w1 = max((gb[l] - p.rho(l)) / (p.gamma(l) * phis[l]) for l in (0, 1))
    return phis, gb, w0, w1


def ensemble_constants(params: Sequence[TimingParams]) -> list[DerivedConstants]:
    """Derived constants for a set of networks; the decay/growth rates are global."""
    loc = [_local(p) for p in params]
    w0 = min(x[2] for x in loc)
    w1 = max(x[3] for x in loc)
    betas = [w0 - (w0 + w1) * p.lambda_exp * p.tau_miet1 for p in params]
    beta = min(betas)
    out = []
    for p, (phis, gb, _, _) in zip(params, loc):
        out.append(DerivedConstants(
            tau_mati0=tau_mati(p.L0, p.gamma0, p.lam),
            tau_mati1=tau_mati(p.L1, p.gamma1, p.lam),
            phi_miet0=phis[0], phi_miet1=phis[1],
            gammabar0=gb[0], gammabar1=gb[1],
            varpi0=w0, varpi1=w1, beta_hat=beta))
    return out


def derived_constants(params: TimingParams) -> DerivedConstants:
    return ensemble_constants([params])[0]


def truncated_exp_mean(rate: float, bound: float) -> float:
    """Mean of Exp(rate) conditioned on [0, bound]."""
    if bound <= 0:
        return 0.0
    if math.isinf(bound):
        return 1.0 / rate
    q = math.exp(-rate * bound)
    return 1.0 / rate - bound * q / (1.0 - q)


@dataclass
class ConditionEntry:
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"pass": bool(self.passed), "margin": float(self.margin), "detail": self.detail}


@dataclass
class ConditionsReport:
    entries: dict[str, ConditionEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def __getitem__(self, key: str) -> ConditionEntry:
        return self.entries[key]

    def as_dict(self) -> dict:
        return {k: v.as_dict() for k, v in self.entries.items()}

    def failed(self) -> list[str]:
        return [k for k, v in self.entries.items() if not v.passed]


@dataclass(frozen=True)
class PsiCoefficients:
    """Coefficients that the triggering-function flow actually uses.

    delta: linear decay coefficient of chi in mode 0.
    delta_pre: same, in mode 1 before the failed update is seen.
    gammabar0/1: coefficients on W^2 after tau_miet^0.
    chi_reset: coefficient c in chi_reset = c * Delta * W^2.
    ramp_time: duration of the post-attack ramp.
    tail_rate: rate of chi after the ramp.
    """

    delta: float
    delta_pre: float
    gammabar0: float
    gammabar1: float
    chi_reset: float
    ramp_time: float
    tail_rate: float = -1.0
    varrho: float = 0.0

    def gammabar(self, l: int) -> float:
        return self.gammabar1 if l else self.gammabar0


def template_psi(p: TimingParams, dc: DerivedConstants) -> PsiCoefficients:
    return PsiCoefficients(
        delta=dc.varpi0, delta_pre=dc.varpi0,
        gammabar0=dc.gammabar0, gammabar1=dc.gammabar1,
        chi_reset=10.0 * p.lam**2 * p.gamma1 * dc.phi_miet1,
        ramp_time=p.tau_miet1 / p.vartheta)


def c22_crossing(p: TimingParams, t_max: float | None = None, n: int = 10_000) -> float | None:
    """First sign change of gamma1*phi1 - gamma0*phi0 along the unclamped clock flow."""
    if t_max is None:
        t_max = min(tau_mati(p.L0, p.gamma0, p.lam), tau_mati(p.L1, p.gamma1, p.lam))
    f = _c22_gap(p)
    ts = np.linspace(0.0, t_max, n)
    v = f(ts)
    idx = np.nonzero((v[:-1] >= 0) & (v[1:] < 0))[0]
    if idx.size == 0:
        return None
    a, b = ts[idx[0]], ts[idx[0] + 1]
    return brentq(f, a, b, xtol=1e-12)


def _c22_gap(p: TimingParams):
    phi_init = 1.0 / p.lam

    def f(t):
        return (p.gamma1 * phi_closed(p.L1, p.gamma1, phi_init, t)
                - p.gamma0 * phi_closed(p.L0, p.gamma0, phi_init, t))
    return f


def check_conditions(p: TimingParams, tau_mati_pair: tuple[float, float] | None = None,
                     expected_delta: float | None = None,
                     psi: PsiCoefficients | None = None,
                     dc: DerivedConstants | None = None,
                     grid: int = 10_000) -> ConditionsReport:
    """Evaluate the four design conditions with numeric margins.

    ``dc`` may carry network-global decay rates; by default the single-network
    constants are used.
    """
    if dc is None:
        dc = derived_constants(p)
    if tau_mati_pair is None:
        tau_mati_pair = (dc.tau_mati0, dc.tau_mati1)
    if expected_delta is None:
        expected_delta = 1.0 / p.lambda_exp if p.lambda_exp > 0 else math.inf
    mati = min(tau_mati_pair)
    e_tau = truncated_exp_mean(p.delay_rate, p.tau_mad)
    entries: dict[str, ConditionEntry] = {}

    c1 = {
        "miet_le_mati": min(mati - p.tau_miet0, mati - p.tau_miet1),
        "miet_positive": min(p.tau_miet0, p.tau_miet1),
        "miet1_le_miet0": p.tau_miet0 - p.tau_miet1,
        "mad_reschedule": min(p.tau_miet(m) - p.tau_mad - p.tau_miet(m) / p.vartheta for m in (0, 1)),
        "attack_gap": expected_delta - (p.tau_miet1 - e_tau),
    }
    m1 = min(c1.values())
    c1_ok = c1["miet_positive"] > 0 and all(v >= -1e-12 for k, v in c1.items() if k != "miet_positive")
    entries["C1"] = ConditionEntry(c1_ok, m1, {**c1, "E_tau_delay": e_tau, "E_delta": expected_delta})

    phi_init = 1.0 / p.lam
    rhs = p.lam**2 * p.gamma1 * phi_init + 10.0 * p.lam**2 * p.gamma1 * dc.phi_miet1 * expected_delta
    lhs = p.gamma0 * dc.phi_miet0
    entries["C2-1"] = ConditionEntry(lhs - rhs >= 0, lhs - rhs, {"lhs": lhs, "rhs": rhs})

    f = _c22_gap(p)
    ts = np.linspace(0.0, p.tau_mad, grid)
    vals = f(ts)
    i_min = int(np.argmin(vals))
    gmin = float(vals[i_min])
    sc = np.nonzero((vals[:-1] >= 0) & (vals[1:] < 0))[0]
    inner = float(brentq(f, ts[sc[0]], ts[sc[0] + 1], xtol=1e-6)) if sc.size else None
    a, b, c = p.gamma1 * phi_init, p.gamma0 * phi_init, p.lam**2 * p.gamma1 * phi_init
    init_ok = a >= b > c > 0
    cross = c22_crossing(p)
    entries["C2-2"] = ConditionEntry(gmin >= 0 and init_ok, gmin, {
        "init_chain": [a, b, c], "init_ok": init_ok,
        "crossing": cross, "crossing_in_mad": inner, "argmin": float(ts[i_min])})

    c3 = dc.varpi0 / (dc.varpi0 + dc.varpi1) - p.lambda_exp * p.tau_miet1
    entries["C3"] = ConditionEntry(c3 > 0, c3, {
        "varpi0": dc.varpi0, "varpi1": dc.varpi1, "beta_hat": dc.beta_hat,
        "gammabar0": dc.gammabar0, "gammabar1": dc.gammabar1,
        "phi_miet0": dc.phi_miet0, "phi_miet1": dc.phi_miet1})

    tmpl = template_psi(p, dc)
    if psi is None:
        psi = tmpl
    tol = 1e-9
    d4 = {
        "delta": psi.delta - tmpl.delta,
        "delta_pre": psi.delta_pre - tmpl.delta_pre,
        "gammabar0": psi.gammabar0 - tmpl.gammabar0,
        "gammabar1": psi.gammabar1 - tmpl.gammabar1,
        "chi_reset": -abs(psi.chi_reset - tmpl.chi_reset),
        "ramp_time": -abs(psi.ramp_time - tmpl.ramp_time),
        "tail_rate": -abs(psi.tail_rate + 1.0),
        "varrho": -psi.varrho if psi.varrho < 0 else 0.0,
    }
    scale = {k: max(1.0, abs(getattr(tmpl, k))) for k in d4}
    ok4 = all(v >= -tol * scale[k] for k, v in d4.items())
    entries["C4"] = ConditionEntry(ok4, min(d4.values()), d4)
    return ConditionsReport(entries)

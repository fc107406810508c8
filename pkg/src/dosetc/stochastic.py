"""Seeded random streams, attack timelines and delay sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timing import truncated_exp_mean

# purpose ids for substreams; appear in the SeedSequence spawn key
ATTACK, DELAY, RESET = 0, 1, 2
_PURPOSES = {"attack": ATTACK, "delay": DELAY, "reset": RESET}


def make_stream(seed: int, network: int, purpose: str | int) -> np.random.Generator:
    """Independent PCG64 stream keyed by (master seed, purpose, network)."""
    pid = _PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(pid, int(network)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class StreamSet:
    seed: int
    n_networks: int

    def __post_init__(self):
        self.attack = [make_stream(self.seed, i, ATTACK) for i in range(self.n_networks)]
        self.delay = [make_stream(self.seed, i, DELAY) for i in range(self.n_networks)]
        self.reset = [make_stream(self.seed, i, RESET) for i in range(self.n_networks)]


@dataclass(frozen=True)
class AttackTimeline:
    network: int
    rate: float
    instants: np.ndarray
    horizon: float

    def count(self, a: float, b: float) -> int:
        """Number of instants in the closed interval [a, b]."""
        lo = np.searchsorted(self.instants, a, side="left")
        hi = np.searchsorted(self.instants, b, side="right")
        return int(hi - lo)

    def hits(self, a: float, b: float) -> bool:
        return self.count(a, b) > 0

    def first_in(self, a: float, b: float) -> float | None:
        lo = np.searchsorted(self.instants, a, side="left")
        if lo < len(self.instants) and self.instants[lo] <= b:
            return float(self.instants[lo])
        return None

    def gap_at(self, t: float) -> float | None:
        """Inter-attack gap of the interval [t_k, t_{k+1}) containing t (t_{-1} = 0)."""
        idx = np.searchsorted(self.instants, t, side="right")
        if idx >= len(self.instants):
            return None
        prev = self.instants[idx - 1] if idx > 0 else 0.0
        return float(self.instants[idx] - prev)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.instants)))

    def to_text(self) -> str:
        return "".join(f"{k},{float(t)!r}\n" for k, t in enumerate(self.instants))


def sample_attacks(rate: float, horizon: float, stream: np.random.Generator,
                   network: int = 0, relax: bool = False) -> AttackTimeline:
    """Poisson attack instants on [0, horizon] as partial sums of Exp(rate) gaps."""
    if rate < 1.0 and not relax:
        raise ValueError(f"attack rate {rate} < 1 (relax flag not set)")
    if rate < 0:
        raise ValueError("attack rate must be nonnegative")
    if horizon <= 0 or rate == 0:
        return AttackTimeline(network, rate, np.empty(0), max(horizon, 0.0))
    chunk = max(16, int(rate * horizon * 1.2) + 16)
    parts = []
    last = 0.0
    while True:
        t = last + np.cumsum(stream.exponential(1.0 / rate, size=chunk))
        if t[-1] > horizon:
            parts.append(t[t <= horizon])
            break
        parts.append(t)
        last = t[-1]
    return AttackTimeline(network, rate, np.concatenate(parts), horizon)


@dataclass(frozen=True)
class DelayLaw:
    rate: float
    bound: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("delay rate must be positive")
        if self.bound < 0:
            raise ValueError("delay bound must be nonnegative")

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.bound)
        if math.isinf(self.bound):
            return -np.expm1(-self.rate * t)
        return np.expm1(-self.rate * t) / math.expm1(-self.rate * self.bound)

    def mean(self) -> float:
        return truncated_exp_mean(self.rate, self.bound)


def delay_from_uniform(law: DelayLaw, u: float) -> float:
    if law.bound == 0:
        return 0.0
    if math.isinf(law.bound):
        return -math.log1p(-u) / law.rate
    t = -math.log1p(u * math.expm1(-law.rate * law.bound)) / law.rate
    return min(t, law.bound)


def sample_delay(law: DelayLaw, stream: np.random.Generator) -> float:
    """One truncated-exponential delay via the inverse CDF."""
    return delay_from_uniform(law, float(stream.random()))


def draw_interattack(rate: float, stream: np.random.Generator, relax: bool = False) -> float:
    if rate < 1.0 and not relax:
        raise ValueError(f"attack rate {rate} < 1 (relax flag not set)")
    if rate <= 0:
        return math.inf
    return float(stream.exponential(1.0 / rate))


def ks_critical(n: int) -> float:
    return 1.36 / math.sqrt(n)

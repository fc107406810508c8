"""Composite hybrid state, hybrid time and trace records."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .protocol import NodePartition, ProtocolKind, protocol_W
from .timing import DerivedConstants, PsiCoefficients, TimingParams

FLOW_SAMPLE = "flow-sample"
TRANSMISSION = "transmission"
UPDATE_SUCCESS = "update-success"
UPDATE_FAIL = "update-fail"
HYSTERESIS = "hysteresis-reset"
EVENT_TAGS = (FLOW_SAMPLE, TRANSMISSION, UPDATE_SUCCESS, UPDATE_FAIL, HYSTERESIS)

# trigger phases; A/B are mode 0 before/after tau_miet^0, the rest belong to mode 1
PH_A, PH_B, PH_PRE, PH_RAMP, PH_TAIL = range(5)
PHASE_NAMES = ("A", "B", "pre-detection", "ramp-down", "post-ramp")


@dataclass(frozen=True, order=True)
class HybridTime:
    t: float
    j: int


@dataclass
class NetworkSpec:
    """Everything the simulator needs to know about one network."""

    timing: TimingParams
    protocol: ProtocolKind
    partition: NodePartition
    block: slice
    derived: DerivedConstants
    psi: PsiCoefficients
    phi_init: tuple[float, float]

    @property
    def lam(self) -> float:
        return self.timing.lam


@dataclass
class HybridState:
    x: np.ndarray
    logic: np.ndarray
    e: np.ndarray
    tau_e: np.ndarray
    k: np.ndarray
    s: np.ndarray
    l: np.ndarray
    m: np.ndarray
    chi: np.ndarray
    phi: np.ndarray                 # shape (N, 2)
    # scheduling bookkeeping
    t_tx: np.ndarray = None
    pending_time: np.ndarray = None
    pending_delay: np.ndarray = None
    pending_success: np.ndarray = None
    phase: np.ndarray = None
    armed_delay: np.ndarray = None
    chi_armed: np.ndarray = None
    forced: np.ndarray = None

    def __post_init__(self):
        n = len(self.tau_e)
        nan = np.full(n, np.nan)
        defaults = {
            "t_tx": nan, "pending_time": nan, "pending_delay": nan,
            "pending_success": np.zeros(n, bool), "phase": np.zeros(n, np.int64),
            "armed_delay": nan, "chi_armed": nan, "forced": np.zeros(n, bool),
        }
        for name, val in defaults.items():
            if getattr(self, name) is None:
                setattr(self, name, val.copy())

    @property
    def n_networks(self) -> int:
        return len(self.tau_e)

    def copy(self) -> "HybridState":
        return HybridState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def check_finite(self) -> None:
        for name in ("x", "e", "tau_e", "s", "chi", "phi"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise FloatingPointError(f"non-finite component in {name}")

    def W(self, i: int, net: NetworkSpec) -> float:
        b = net.block
        return protocol_W(net.protocol, net.partition, int(self.k[i]), int(self.l[i]),
                          self.e[b], self.s[b])


def initial_state(x0, logic0, networks: list[NetworkSpec], e0=None) -> HybridState:
    """A state in the initial set: every clock past tau_miet^0, s = 0, chi = 0."""
    x0 = np.array(x0, dtype=float)
    n_p = sum(net.block.stop - net.block.start for net in networks)
    N = len(networks)
    e = np.zeros(n_p) if e0 is None else np.array(e0, dtype=float)
    phi = np.array([[net.derived.phi_miet0, net.derived.phi_miet1] for net in networks])
    return HybridState(
        x=x0, logic=np.array(logic0, dtype=np.int64), e=e,
        tau_e=np.array([net.timing.tau_miet0 for net in networks]),
        k=np.zeros(N, np.int64), s=np.zeros(n_p), l=np.zeros(N, np.int64),
        m=np.zeros(N, np.int64), chi=np.zeros(N), phi=phi,
        t_tx=np.array([-net.timing.tau_miet0 for net in networks]),
        phase=np.full(N, PH_B, np.int64))


@dataclass
class TraceRecord:
    time: HybridTime
    state: HybridState
    event: str
    net: int            # -1 for flow samples
    certificate: float


@dataclass
class EventRow:
    t: float
    j: int
    event: str
    net: int
    k: int
    l: int
    m: int
    tau_delay: float
    window_hit: bool
    U_pre: float
    U_post: float


@dataclass
class SimTrace:
    records: list[TraceRecord] = field(default_factory=list)
    events: list[EventRow] = field(default_factory=list)
    timelines: list = field(default_factory=list)
    horizon: float = 0.0
    networks: list[NetworkSpec] = field(default_factory=list)

    def transmissions(self, i: int) -> list[EventRow]:
        return [r for r in self.events if r.net == i and r.event == TRANSMISSION]

    def network_events(self, i: int) -> list[EventRow]:
        return [r for r in self.events if r.net == i and r.event != HYSTERESIS]

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

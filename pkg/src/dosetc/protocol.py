"""Medium-access protocols and their Lyapunov functions.

Every shipped protocol has a protocol Lyapunov function of weighted-norm form
W_p(k, v)^2 = sum_c w_c(k) v_c^2, and the hybrid W is W(k, l, e, s) = W_p(k, e + l*s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SAMPLED = "sampled-data"
RR = "round-robin"
TOD = "try-once-discard"
KINDS = (SAMPLED, RR, TOD)
_ALIASES = {"sd": SAMPLED, "sampled": SAMPLED, "rr": RR, "tod": TOD}


@dataclass(frozen=True)
class NodePartition:
    bounds: tuple[int, ...]

    def __post_init__(self):
        b = self.bounds
        if len(b) < 2 or b[0] != 0 or any(b1 <= b0 for b0, b1 in zip(b, b[1:])):
            raise ValueError(f"invalid node boundaries {b}")

    @classmethod
    def single(cls, size: int) -> "NodePartition":
        return cls((0, size))

    @classmethod
    def from_sizes(cls, sizes) -> "NodePartition":
        return cls(tuple(int(x) for x in np.concatenate(([0], np.cumsum(sizes)))))

    @property
    def n_nodes(self) -> int:
        return len(self.bounds) - 1

    @property
    def size(self) -> int:
        return self.bounds[-1]

    def node(self, n: int) -> slice:
        return slice(self.bounds[n], self.bounds[n + 1])

    def node_norms(self, v) -> np.ndarray:
        return np.array([np.linalg.norm(v[self.node(n)]) for n in range(self.n_nodes)])


@dataclass(frozen=True)
class ProtocolKind:
    tag: str
    lam: float | None = None

    def __post_init__(self):
        tag = _ALIASES.get(self.tag, self.tag)
        if tag not in KINDS:
            raise ValueError(f"unknown protocol {self.tag!r}")
        object.__setattr__(self, "tag", tag)


def default_lambda(tag: str, n_nodes: int) -> float | None:
    """Contraction constant of the weighted-norm W; None means any value works."""
    tag = _ALIASES.get(tag, tag)
    if tag == SAMPLED:
        return None
    if n_nodes < 2:
        raise ValueError(f"{tag} needs at least two nodes")
    return math.sqrt((n_nodes - 1) / n_nodes)


def granted_node(kind: ProtocolKind, part: NodePartition, k: int, e) -> int | None:
    if kind.tag == SAMPLED:
        return None
    if kind.tag == RR:
        return int(k % part.n_nodes)
    # argmax returns the first maximum, so ties go to the lowest index
    return int(np.argmax(part.node_norms(e)))


def apply_protocol(kind: ProtocolKind, part: NodePartition, k: int, e) -> np.ndarray:
    """Value h(k, e): the error left after the granted node is renewed."""
    e = np.asarray(e, dtype=float)
    if kind.tag == SAMPLED:
        return np.zeros_like(e)
    h = e.copy()
    h[part.node(granted_node(kind, part, k, e))] = 0.0
    return h


def protocol_weights(kind: ProtocolKind, part: NodePartition, k: int) -> np.ndarray:
    w = np.ones(part.size)
    if kind.tag == RR:
        for n in range(part.n_nodes):
            # node n is granted (n - k) mod nodes steps from now
            w[part.node(n)] = ((n - k) % part.n_nodes) + 1
    return w


def protocol_W(kind: ProtocolKind, part: NodePartition, k: int, l: int, e, s) -> float:
    v = np.asarray(e, dtype=float) + (np.asarray(s, dtype=float) if l else 0.0)
    w = protocol_weights(kind, part, k)
    return math.sqrt(float(np.dot(w, v * v)))


def contraction_violation(kind: ProtocolKind, part: NodePartition, lam: float,
                          rng: np.random.Generator, n: int = 1000) -> tuple[float, float]:
    """Largest excess over the transmission and update inequalities on random samples."""
    worst_tx = worst_up = -math.inf
    for _ in range(n):
        k = int(rng.integers(0, 1000))
        scale = 10.0 ** rng.uniform(-3, 3)
        e = rng.normal(size=part.size) * scale
        s = rng.normal(size=part.size) * scale
        h = apply_protocol(kind, part, k, e)
        lhs = protocol_W(kind, part, k + 1, 1, e, h - e)
        worst_tx = max(worst_tx, lhs - lam * protocol_W(kind, part, k, 0, e, s))
        lhs = protocol_W(kind, part, k, 0, s + e, np.zeros_like(s))
        worst_up = max(worst_up, lhs - protocol_W(kind, part, k, 1, e, s))
    return worst_tx, worst_up

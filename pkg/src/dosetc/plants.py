"""Plant interface plus small scripted plants used for testing."""
from __future__ import annotations

import numpy as np

from . import _dynamics


class Plant:
    """Continuous state x with its first ``n_p`` entries sent over the networks.

    Subclasses pick their compiled dynamics by ``pid`` (see _dynamics), expose the
    same functions as ``rhs``, ``post`` and ``guards``, and supply ``V`` and ``logic_jump``.
    """

    kind = "abstract"
    pid = -1            # selects the compiled dynamics, see _dynamics
    post = staticmethod(_dynamics.no_post)
    guards = staticmethod(_dynamics.no_guards)
    n_guards = 0

    def __init__(self, nx: int, n_p: int, blocks: list[tuple[int, int]], pp=None):
        self.nx = nx
        self.n_p = n_p
        self.blocks = blocks
        self.pp = np.zeros(1) if pp is None else np.asarray(pp, dtype=float)

    def initial_x(self) -> np.ndarray:
        raise NotImplementedError

    def initial_logic(self) -> np.ndarray:
        return np.zeros(0, np.int64)

    def V(self, x, logic) -> float:
        return 0.0

    def guard_network(self, g: int) -> int:
        return g

    def guard_values(self, x, logic) -> np.ndarray:
        out = np.empty(self.n_guards)
        if self.n_guards:
            self.guards(x, logic, self.pp, out)
        return out

    def logic_jump(self, x, logic, g: int) -> np.ndarray:
        raise NotImplementedError

    def state_columns(self) -> list[str]:
        return [f"x{c}" for c in range(self.nx)]

    def terminal_errors(self, x, logic) -> dict:
        return {"norm_x": float(np.linalg.norm(x))}


class FrozenPlant(Plant):
    """Plant that never moves; the error only changes at jumps."""

    kind = "frozen"
    pid = _dynamics.FROZEN
    rhs = staticmethod(_dynamics.frozen_rhs)

    def __init__(self, block_sizes, x0=None):
        blocks, o = [], 0
        for b in block_sizes:
            blocks.append((o, o + b))
            o += b
        super().__init__(o, o, blocks)
        self.x0 = np.zeros(o) if x0 is None else np.asarray(x0, dtype=float)

    def initial_x(self):
        return self.x0.copy()

    def V(self, x, logic):
        return 0.0


class DecayPlant(Plant):
    """x' = -a x, no feedback through the network."""

    kind = "decay"
    pid = _dynamics.DECAY
    rhs = staticmethod(_dynamics.decay_rhs)

    def __init__(self, n: int = 1, rate: float = 1.0, x0=None, n_networks: int = 1):
        size = n // n_networks
        blocks = [(i * size, (i + 1) * size) for i in range(n_networks)]
        super().__init__(n, n, blocks, pp=[rate])
        self.x0 = np.ones(n) if x0 is None else np.asarray(x0, dtype=float)

    def initial_x(self):
        return self.x0.copy()

    def V(self, x, logic):
        return 0.5 * float(np.dot(x, x))


class LinearPlant(Plant):
    """x' = A x - BK (x + e) with quadratic V = x' P x."""

    kind = "linear"
    pid = _dynamics.LINEAR
    rhs = staticmethod(_dynamics.linear_rhs)

    def __init__(self, A, BK, blocks, x0, P=None):
        A = np.asarray(A, float)
        BK = np.asarray(BK, float)
        n = A.shape[0]
        super().__init__(n, n, blocks, pp=np.concatenate(([n], A.ravel(), BK.ravel())))
        self.x0 = np.asarray(x0, float)
        self.P = np.eye(n) if P is None else np.asarray(P, float)

    def initial_x(self):
        return self.x0.copy()

    def V(self, x, logic):
        return float(x @ self.P @ x)

"""Quaternion attitude-error case study: N rigid bodies with hysteretic feedback.

Per vehicle the continuous state is (eta, eps[3], Theta[3]); all seven entries are
sent over that vehicle's network.  The logic variable h in {-1, +1} is held by the
controller and switched by a hysteresis jump when h*eta <= -delta_bar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._dynamics import ATTITUDE, BLOCK
from ._dynamics import attitude_V as _V
from ._dynamics import attitude_guards as _guards
from ._dynamics import attitude_post as _post
from ._dynamics import attitude_rhs as _rhs
from .plants import Plant


_UPS = np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0)
_S = math.sqrt(1.0 - 0.04)
DEFAULT_Q0 = (
    (-0.2, *(_S * _UPS)),
    (0.2, *(-_S * _UPS)),
    (0.2, *(_S * _UPS)),
    (-0.2, *(-_S * _UPS)),
)
DEFAULT_THETA0 = tuple(tuple(0.2 * _UPS) for _ in range(4))


def skew(a) -> np.ndarray:
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


@dataclass
class PlantParams:
    J: tuple[float, float, float] = (0.13, 0.13, 0.04)
    K: np.ndarray = field(default_factory=lambda: 0.013 * np.eye(3))
    kappa: float = 3.0
    delta_bar: float = 0.45
    q0: tuple = DEFAULT_Q0
    Theta0: tuple = DEFAULT_THETA0
    h0: tuple | None = None

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        if self.K.ndim == 0 or self.K.size == 1:
            self.K = float(self.K) * np.eye(3)
        if not all(j > 0 for j in self.J):
            raise ValueError("inertia entries must be positive")
        if not np.allclose(self.K, self.K.T) or np.min(np.linalg.eigvalsh(self.K)) <= 0:
            raise ValueError("K must be symmetric positive definite")
        if not 0.0 < self.delta_bar < 1.0:
            raise ValueError("delta_bar must lie in (0,1)")
        if len(self.q0) != len(self.Theta0):
            raise ValueError("q0 and Theta0 need one entry per vehicle")

    @property
    def n(self) -> int:
        return len(self.q0)

    def h_initial(self) -> np.ndarray:
        if self.h0 is not None:
            return np.array(self.h0, dtype=np.int64)
        return np.array([1 if q[0] >= 0 else -1 for q in self.q0], dtype=np.int64)

    def pp(self) -> np.ndarray:
        return np.concatenate(([self.kappa], self.J, self.K.ravel(), [self.delta_bar]))


@dataclass
class AttitudeState:
    q: np.ndarray        # (N, 4)
    Theta: np.ndarray    # (N, 3)
    h: np.ndarray        # (N,)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.concatenate((q, w)) for q, w in zip(self.q, self.Theta)])

    @classmethod
    def from_vector(cls, x, h) -> "AttitudeState":
        x = np.asarray(x, dtype=float).reshape(-1, BLOCK)
        return cls(x[:, :4].copy(), x[:, 4:].copy(), np.asarray(h, dtype=np.int64).copy())


class AttitudePlant(Plant):
    kind = "attitude"
    pid = ATTITUDE
    rhs = staticmethod(_rhs)
    post = staticmethod(_post)
    guards = staticmethod(_guards)

    def __init__(self, params: PlantParams | None = None):
        self.params = params or PlantParams()
        n = self.params.n
        super().__init__(BLOCK * n, BLOCK * n, [(BLOCK * i, BLOCK * (i + 1)) for i in range(n)],
                         pp=self.params.pp())
        self.n_guards = n

    def initial_x(self) -> np.ndarray:
        st = AttitudeState(np.array(self.params.q0, float), np.array(self.params.Theta0, float),
                           self.params.h_initial())
        return st.to_vector()

    def initial_logic(self) -> np.ndarray:
        return self.params.h_initial()

    def V(self, x, logic) -> float:
        return _V(x, logic, self.pp)

    def logic_jump(self, x, logic, g: int) -> np.ndarray:
        st = hysteresis_jump(AttitudeState.from_vector(x, logic), g, self.params)
        return st.h

    def terminal_errors(self, x, logic) -> dict:
        xb = np.asarray(x, float).reshape(-1, BLOCK)
        return {"max_eps": float(np.max(np.linalg.norm(xb[:, 1:4], axis=1))),
                "max_Theta": float(np.max(np.linalg.norm(xb[:, 4:7], axis=1)))}

    def state_columns(self) -> list[str]:
        names = ("eta", "eps1", "eps2", "eps3", "Theta1", "Theta2", "Theta3")
        cols = [f"{nm}_{i}" for i in range(self.params.n) for nm in names]
        return cols + [f"h_{i}" for i in range(self.params.n)]


def controller(q_hat, Theta_hat, h: int, params: PlantParams) -> np.ndarray:
    """Torque from networked values (zero desired angular velocity)."""
    eps = np.asarray(q_hat, float)[1:] if len(q_hat) == 4 else np.asarray(q_hat, float)
    return -params.kappa * h * eps - params.K @ np.asarray(Theta_hat, float)


def plant_flow(state: AttitudeState, u, params: PlantParams, Theta_d_bar=None,
               dTheta_d=None, R_tilde=None):
    """Derivatives (dq, dTheta), each shaped like the state arrays.

    The moving-reference terms are applied when ``Theta_d_bar`` is given.
    """
    if np.any(np.abs(np.linalg.norm(state.q, axis=1) - 1.0) > 1e-3):
        raise ValueError("quaternion not unit within 1e-3")
    u = np.asarray(u, float).reshape(-1, 3)
    J = np.diag(params.J)
    dq = np.empty_like(state.q)
    dW = np.empty_like(state.Theta)
    for i, (q, w) in enumerate(zip(state.q, state.Theta)):
        eta, eps = q[0], q[1:]
        dq[i, 0] = -0.5 * eps @ w
        dq[i, 1:] = 0.5 * (eta * np.eye(3) + skew(eps)) @ w
        rhs = skew(J @ w) @ w + u[i]
        if Theta_d_bar is not None:
            wd = np.asarray(Theta_d_bar, float).reshape(-1, 3)[i]
            sig = skew(J @ w) + skew(J @ wd) - skew(wd) @ J - J @ skew(wd)
            rhs = sig @ w - skew(wd) @ J @ wd + u[i]
            if dTheta_d is not None:
                R = np.eye(3) if R_tilde is None else np.asarray(R_tilde, float)[i]
                rhs = rhs - J @ R.T @ np.asarray(dTheta_d, float)
        dW[i] = np.linalg.solve(J, rhs)
    return dq, dW


def hysteresis_jump(state: AttitudeState, i: int, params: PlantParams) -> AttitudeState:
    if state.h[i] * state.q[i, 0] > -params.delta_bar:
        raise ValueError("hysteresis jump not enabled")
    h = state.h.copy()
    h[i] = -1 if h[i] > 0 else 1
    return AttitudeState(state.q.copy(), state.Theta.copy(), h)


def lyapunov_V(state: AttitudeState, params: PlantParams) -> float:
    J = np.asarray(params.J)
    v = 0.0
    for q, w, h in zip(state.q, state.Theta, state.h):
        v += 2.0 * params.kappa * (1.0 - h * q[0]) + 0.5 * float(w @ (J * w))
    return v


def V_dot(x, e, logic, params: PlantParams) -> float:
    """Directional derivative of V along the flow with networked errors e."""
    dx = np.empty_like(x)
    _rhs(x, e, logic, params.pp(), dx)
    J = np.asarray(params.J)
    out = 0.0
    for i in range(len(logic)):
        o = BLOCK * i
        out += -2.0 * params.kappa * logic[i] * dx[o] + float(x[o + 4:o + 7] @ (J * dx[o + 4:o + 7]))
    return out


def H_value(x_block) -> float:
    return 0.65 * float(np.linalg.norm(x_block[1:4])) + 0.2 * float(np.linalg.norm(x_block[4:7]))


@dataclass
class SpotCheckReport:
    item: str
    l: int
    n: int
    min_residual: float
    mean_residual: float
    violation_fraction: float

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def _random_unit_quat(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def growth_gain_spotcheck(params: PlantParams, n_samples: int, rng: np.random.Generator,
                          timing, theta_box: float = 1.0, e_box: float = 0.1,
                          rho_tilde: float | None = None) -> list[SpotCheckReport]:
    """Empirical residuals of the error-growth bound and the dissipation (gain) bound.

    ``timing`` supplies L_l, gamma_l, rho_l (one TimingParams shared by all networks).
    Negative residuals are violations.
    """
    N = params.n
    pp = params.pp()
    rho_t = timing.rho_tilde if rho_tilde is None else rho_tilde
    out = []
    r_growth = {0: [], 1: []}
    r_gain = {0: [], 1: []}
    for _ in range(n_samples):
        q = _random_unit_quat(rng, N)
        w = rng.uniform(-theta_box, theta_box, size=(N, 3))
        h = rng.choice(np.array([-1, 1]), size=N).astype(np.int64)
        x = np.concatenate([np.concatenate((qi, wi)) for qi, wi in zip(q, w)])
        e = rng.uniform(-e_box, e_box, size=x.size)
        dx = np.empty_like(x)
        _rhs(x, e, h, pp, dx)
        V = lyapunov_V(AttitudeState(q, w, h), params)
        vdot = V_dot(x, e, h, params)
        for l in (0, 1):
            L, g, rho = timing.L(l), timing.gamma(l), timing.rho(l)
            rhs6 = -rho_t * V
            for i in range(N):
                sl = slice(BLOCK * i, BLOCK * (i + 1))
                W = float(np.linalg.norm(e[sl]))
                H = H_value(x[sl])
                grad = e[sl] / W if W > 0 else np.zeros(BLOCK)
                r_growth[l].append(L * W + H - abs(float(grad @ (-dx[sl]))))
                rhs6 += -H * H - rho * W * W + g * g * W * W
            r_gain[l].append(rhs6 - vdot)
    for item, res in (("growth", r_growth), ("gain", r_gain)):
        for l in (0, 1):
            a = np.asarray(res[l])
            out.append(SpotCheckReport(item, l, a.size, float(a.min()), float(a.mean()),
                                       float(np.mean(a < 0))))
    return out


def ideal_closed_loop(params: PlantParams, horizon: float = 20.0, dt: float = 1e-3):
    """Closed loop with a perfect network (e = 0): RK4 with renormalization and hysteresis.

    Returns (times, states (n_steps+1, 7N), logic at the end, hysteresis jump count).
    """
    pp = params.pp()
    x = AttitudeState(np.array(params.q0, float), np.array(params.Theta0, float),
                      params.h_initial()).to_vector()
    h = params.h_initial()
    e = np.zeros_like(x)
    n = int(round(horizon / dt))
    out = np.empty((n + 1, x.size))
    out[0] = x
    k1, k2, k3, k4 = (np.empty_like(x) for _ in range(4))
    jumps = 0
    for s in range(n):
        _rhs(x, e, h, pp, k1)
        _rhs(x + 0.5 * dt * k1, e, h, pp, k2)
        _rhs(x + 0.5 * dt * k2, e, h, pp, k3)
        _rhs(x + dt * k3, e, h, pp, k4)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xb = x.reshape(-1, BLOCK)
        xb[:, :4] /= np.linalg.norm(xb[:, :4], axis=1, keepdims=True)
        for i in range(h.size):
            if h[i] * xb[i, 0] <= -params.delta_bar:
                h[i] = -h[i]
                jumps += 1
        out[s + 1] = x
    return np.linspace(0.0, n * dt, n + 1), out, h, jumps

"""Per-network jump maps: transmission, successful update and failed update."""
from __future__ import annotations

import numpy as np

from .protocol import apply_protocol, protocol_W
from .state import PH_A, PH_RAMP, HybridState, NetworkSpec


class JumpError(RuntimeError):
    pass


def transmit_enabled(state: HybridState, i: int, net: NetworkSpec) -> bool:
    if state.l[i] != 0:
        return False
    if state.tau_e[i] < net.timing.tau_miet(int(state.m[i])):
        return False
    return state.chi[i] <= 0.0 or bool(state.forced[i])


def jump_transmit(state: HybridState, i: int, delta_draw: float, delay_draw: float,
                  attack_window_hit: bool, *, net: NetworkSpec, t: float) -> HybridState:
    if not transmit_enabled(state, i, net):
        raise JumpError(f"network {i} not in the transmission jump set")
    if not 0.0 <= delay_draw <= net.timing.tau_mad:
        raise JumpError(f"delay {delay_draw} outside [0, tau_mad]")
    out = state.copy()
    b = net.block
    k = int(state.k[i])
    e_i = state.e[b]
    h = apply_protocol(net.protocol, net.partition, k, e_i)
    if not attack_window_hit:
        W = protocol_W(net.protocol, net.partition, k, 0, e_i, state.s[b])
        out.chi[i] = net.psi.chi_reset * delta_draw * W * W
    out.s[b] = h - e_i
    out.tau_e[i] = 0.0
    out.k[i] = k + 1
    out.l[i] = 1
    out.m[i] = 0
    out.phi[i] = net.phi_init
    out.t_tx[i] = t
    out.pending_time[i] = t + delay_draw
    out.pending_delay[i] = delay_draw
    out.pending_success[i] = not attack_window_hit
    out.phase[i] = PH_A
    out.armed_delay[i] = np.nan
    out.chi_armed[i] = np.nan
    out.forced[i] = False
    return out


def _check_pending(state: HybridState, i: int):
    if state.l[i] != 1 or np.isnan(state.pending_time[i]):
        raise JumpError(f"network {i} has no pending update")


def _clear_pending(out: HybridState, i: int):
    out.l[i] = 0
    out.pending_time[i] = np.nan
    out.pending_success[i] = False


def jump_update_success(state: HybridState, i: int, *, net: NetworkSpec) -> HybridState:
    _check_pending(state, i)
    out = state.copy()
    b = net.block
    out.e[b] = state.s[b] + state.e[b]
    out.s[b] = 0.0
    out.m[i] = 0
    _clear_pending(out, i)
    return out


def jump_update_fail(state: HybridState, i: int, *, net: NetworkSpec) -> HybridState:
    _check_pending(state, i)
    out = state.copy()
    b = net.block
    e_i = state.e[b]
    out.s[b] = apply_protocol(net.protocol, net.partition, int(state.k[i]), e_i) - e_i
    out.m[i] = 1
    out.armed_delay[i] = state.pending_delay[i]
    out.chi_armed[i] = state.chi[i]
    out.phase[i] = PH_RAMP
    out.phi[i] = (net.derived.phi_miet0, net.derived.phi_miet1)
    _clear_pending(out, i)
    return out

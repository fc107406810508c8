"""Run configuration: loading, validation, round-trip serialization, system assembly."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .attitude import DEFAULT_Q0, DEFAULT_THETA0, AttitudePlant, PlantParams
from .core import RandomSources, SimOptions, System
from .plants import DecayPlant, FrozenPlant, LinearPlant
from .protocol import SAMPLED, NodePartition, ProtocolKind, default_lambda
from .state import NetworkSpec, initial_state
from .timing import TimingParams, ensemble_constants
from .trigger import resolve_psi


class ConfigError(ValueError):
    pass


_TIMING_KEYS = {
    "L0": "L0", "L1": "L1", "gamma0": "gamma0", "gamma1": "gamma1", "lambda": "lam",
    "rho0": "rho0", "rho1": "rho1", "rho_tilde": "rho_tilde", "tau_miet0": "tau_miet0",
    "tau_miet1": "tau_miet1", "tau_mad": "tau_mad", "vartheta": "vartheta",
    "lambda_exp": "lambda_exp", "delay_rate": "delay_rate", "phi_miet_mode": "phi_miet_mode",
    "phi_miet0": "phi_miet0", "phi_miet1": "phi_miet1",
}
_PSI_KEYS = ("delta", "delta_pre", "gammabar0", "gammabar1", "chi_reset", "varrho")


@dataclass
class NetworkConfig:
    timing: TimingParams
    protocol: str = SAMPLED
    nodes: list[int] | None = None          # node sizes; None = one node
    attack_rate: float | None = None        # None = lambda_exp
    psi: dict = field(default_factory=dict)
    phi_init: list[float] | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self.timing, attr) for k, attr in _TIMING_KEYS.items()}
        d.update(protocol=self.protocol, nodes=self.nodes, attack_rate=self.attack_rate,
                 psi={k: self.psi.get(k) for k in _PSI_KEYS}, phi_init=self.phi_init)
        return d


@dataclass
class SimConfig:
    seed: int = 0
    horizon: float = 20.0
    dt: float = 1e-4
    sample_dt: float | None = 0.01
    bound: float = 1e6
    relax_attack_rate: bool = False
    chi_reset: str = "iid"
    hysteresis_forces_tx: bool = True


@dataclass
class RunConfig:
    networks: list[NetworkConfig]
    plant: dict
    sim: SimConfig = field(default_factory=SimConfig)
    mc: dict = field(default_factory=lambda: {"count": 100})
    out: str = "out"

    def to_dict(self) -> dict:
        return {
            "networks": [n.to_dict() for n in self.networks],
            "plant": copy.deepcopy(self.plant),
            "sim": asdict(self.sim),
            "mc": dict(self.mc),
            "out": self.out,
        }

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def with_phi_mode(self, mode: str) -> "RunConfig":
        from dataclasses import replace
        cfg = copy.deepcopy(self)
        for n in cfg.networks:
            n.timing = replace(n.timing, phi_miet_mode=mode)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.networks:
            raise ConfigError("at least one network required")
        if not self.sim.horizon > 0:
            raise ConfigError("sim.horizon must be positive")
        if not self.sim.dt > 0:
            raise ConfigError("sim.dt must be positive")
        if self.sim.chi_reset not in ("iid", "timeline"):
            raise ConfigError("sim.chi_reset must be iid or timeline")
        if int(self.mc.get("count", 1)) < 1:
            raise ConfigError("mc.count must be >= 1")
        for i, n in enumerate(self.networks):
            try:
                n.timing.validate(relax_attack_rate=self.sim.relax_attack_rate)
                ProtocolKind(n.protocol)
                if n.attack_rate is not None and n.attack_rate < 1 and not self.sim.relax_attack_rate:
                    raise ValueError("attack_rate < 1 needs sim.relax_attack_rate")
            except ValueError as exc:
                raise ConfigError(f"networks[{i}]: {exc}") from None
        kind = self.plant.get("kind")
        if kind not in ("attitude", "frozen", "decay", "linear"):
            raise ConfigError(f"unknown plant.kind {kind!r}")


def _num(v):
    return None if v is None else float(v)


def parse_network(d: dict) -> NetworkConfig:
    unknown = set(d) - set(_TIMING_KEYS) - {"protocol", "nodes", "attack_rate", "psi", "phi_init"}
    if unknown:
        raise ConfigError(f"unknown network keys {sorted(unknown)}")
    kw = {}
    for k, attr in _TIMING_KEYS.items():
        if k in d and d[k] is not None:
            kw[attr] = d[k] if attr == "phi_miet_mode" else float(d[k])
    psi = dict(d.get("psi") or {})
    bad = set(psi) - set(_PSI_KEYS)
    if bad:
        raise ConfigError(f"unknown psi keys {sorted(bad)}")
    try:
        timing = TimingParams(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return NetworkConfig(
        timing=timing, protocol=d.get("protocol", SAMPLED),
        nodes=None if d.get("nodes") is None else [int(x) for x in d["nodes"]],
        attack_rate=_num(d.get("attack_rate")),
        psi={k: _num(psi.get(k)) for k in _PSI_KEYS},
        phi_init=None if d.get("phi_init") is None else [float(x) for x in d["phi_init"]])


def _plant_defaults(p: dict) -> dict:
    p = copy.deepcopy(p)
    if p.get("kind") == "attitude":
        p.setdefault("J", [0.13, 0.13, 0.04])
        p.setdefault("K", 0.013)
        p.setdefault("kappa", 3.0)
        p.setdefault("delta_bar", 0.45)
        p.setdefault("q0", [list(map(float, q)) for q in DEFAULT_Q0])
        p.setdefault("Theta0", [list(map(float, w)) for w in DEFAULT_THETA0])
        p.setdefault("h0", None)
    p.setdefault("e0", None)
    return p


def from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(d) - {"networks", "plant", "sim", "mc", "out"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    nets = d.get("networks")
    if not isinstance(nets, list):
        raise ConfigError("networks must be a list")
    sim_d = dict(d.get("sim") or {})
    names = {f.name for f in fields(SimConfig)}
    if set(sim_d) - names:
        raise ConfigError(f"unknown sim keys {sorted(set(sim_d) - names)}")
    try:
        sim = SimConfig(**sim_d)
        sim.seed = int(sim.seed)
        sim.horizon = float(sim.horizon)
        sim.dt = float(sim.dt)
        sim.bound = float(sim.bound)
        sim.sample_dt = _num(sim.sample_dt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    plant = d.get("plant")
    if not isinstance(plant, dict):
        raise ConfigError("plant must be a mapping")
    cfg = RunConfig(networks=[parse_network(n) for n in nets], plant=_plant_defaults(plant),
                    sim=sim, mc=dict(d.get("mc") or {"count": 100}), out=str(d.get("out", "out")))
    cfg.mc.setdefault("count", 100)
    cfg.validate()
    return cfg


def load(path) -> RunConfig:
    try:
        d = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return from_dict(d)


def loads(text: str) -> RunConfig:
    try:
        return from_dict(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------- assembly

def build_plant(p: dict, n_networks: int):
    kind = p["kind"]
    if kind == "attitude":
        pp = PlantParams(J=tuple(p["J"]), K=p["K"], kappa=float(p["kappa"]),
                         delta_bar=float(p["delta_bar"]),
                         q0=tuple(tuple(q) for q in p["q0"]),
                         Theta0=tuple(tuple(w) for w in p["Theta0"]),
                         h0=None if p.get("h0") is None else tuple(p["h0"]))
        plant = AttitudePlant(pp)
    elif kind == "frozen":
        plant = FrozenPlant(p["block_sizes"], p.get("x0"))
    elif kind == "decay":
        plant = DecayPlant(int(p.get("n", n_networks)), float(p.get("rate", 1.0)), p.get("x0"),
                           n_networks=n_networks)
    else:
        plant = LinearPlant(p["A"], p["BK"], [tuple(b) for b in p["blocks"]], p["x0"], p.get("P"))
    if len(plant.blocks) != n_networks:
        raise ConfigError(f"plant has {len(plant.blocks)} blocks but {n_networks} networks")
    return plant


def build_system(cfg: RunConfig) -> System:
    try:
        plant = build_plant(cfg.plant, len(cfg.networks))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"plant: {exc}") from None
    dcs = ensemble_constants([n.timing for n in cfg.networks])
    specs = []
    for nc, dc, (a, b) in zip(cfg.networks, dcs, plant.blocks):
        size = b - a
        sizes = nc.nodes or [size]
        if sum(sizes) != size:
            raise ConfigError(f"node sizes {sizes} do not cover a block of size {size}")
        part = NodePartition.from_sizes(sizes)
        kind = ProtocolKind(nc.protocol, nc.timing.lam)
        if kind.tag != SAMPLED:
            default_lambda(kind.tag, part.n_nodes)
        psi = resolve_psi(nc.timing, dc, **{k: v for k, v in nc.psi.items() if v is not None})
        phi_init = tuple(nc.phi_init) if nc.phi_init else (1.0 / nc.timing.lam,) * 2
        specs.append(NetworkSpec(nc.timing, kind, part, slice(a, b), dc, psi, phi_init))
    return System(plant, specs)


def build_initial(cfg: RunConfig, system: System):
    e0 = cfg.plant.get("e0")
    return initial_state(system.plant.initial_x(), system.plant.initial_logic(), system.networks,
                         e0=e0)


def sim_options(cfg: RunConfig, **over) -> SimOptions:
    kw = dict(dt=cfg.sim.dt, bound=cfg.sim.bound, sample_dt=cfg.sim.sample_dt,
              hysteresis_forces_tx=cfg.sim.hysteresis_forces_tx)
    kw.update(over)
    return SimOptions(**kw)


def build_sources(cfg: RunConfig, system: System, seed: int | None = None,
                  horizon: float | None = None) -> RandomSources:
    rates = [n.attack_rate if n.attack_rate is not None else n.timing.lambda_exp
             for n in cfg.networks]
    return RandomSources(system, cfg.sim.seed if seed is None else seed,
                         cfg.sim.horizon if horizon is None else horizon, attack_rates=rates,
                         relax=cfg.sim.relax_attack_rate, chi_reset_mode=cfg.sim.chi_reset)


def case_study_config(phi_mode: str = "override", n: int = 4) -> RunConfig:
    """The case-study configuration."""
    nets = []
    for _ in range(n):
        d = {"phi_miet_mode": phi_mode}
        if phi_mode == "override":
            d.update(phi_miet0=1.928, phi_miet1=0.6869)
        nets.append(d)
    return from_dict({"networks": nets, "plant": {"kind": "attitude"}})

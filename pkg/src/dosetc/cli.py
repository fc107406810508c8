"""Command-line entry point: check, run, mc, bounds.

Exit codes: 0 ok, 1 condition failure, 2 bad config, 3 simulation failure.
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import config as cfgmod
from .certify import certificate_trace
from .core import DivergenceError, EventLocalizationError
from .ensemble import RunFailure, run_ensemble, simulate
from .state import PHASE_NAMES
from .timing import check_conditions, tau_mati

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3


def _f(v) -> str:
    # shortest round-trip decimal
    return repr(float(v))


def _load(path, phi_miet, seed=None, horizon=None) -> cfgmod.RunConfig:
    try:
        if path is None:
            cfg = cfgmod.case_study_config(phi_miet or "override")
        else:
            cfg = cfgmod.load(path)
            if phi_miet:
                cfg = cfg.with_phi_mode(phi_miet)
        if seed is not None:
            cfg.sim.seed = int(seed)
        if horizon is not None:
            cfg.sim.horizon = float(horizon)
        cfg.validate()
        return cfg
    except (cfgmod.ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _system(cfg):
    try:
        return cfgmod.build_system(cfg)
    except (cfgmod.ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def conditions_for(cfg, system) -> dict:
    out = {}
    for i, nc in enumerate(cfg.networks):
        net = system.networks[i]
        rep = check_conditions(nc.timing, psi=net.psi, dc=net.derived)
        out[i] = rep
    return out


_config_arg = click.argument("config", required=False, type=click.Path(dir_okay=False))
_phi_opt = click.option("--phi-miet", type=click.Choice(["derived", "override"]), default=None,
                        help="Source of the clock values at tau_miet.")


@click.group()
def main():
    """Event-triggered networked control under DoS attacks: bounds, checks and simulation."""


@main.command()
@_config_arg
@_phi_opt
@click.option("--out", type=click.Path(file_okay=False), default=None)
def check(config, phi_miet, out):
    """Evaluate the design conditions; exit 1 if any fails."""
    cfg = _load(config, phi_miet)
    system = _system(cfg)
    reps = conditions_for(cfg, system)
    ok = True
    for i, rep in reps.items():
        for name, ent in rep.entries.items():
            click.echo(f"net {i} {name:5s} {'pass' if ent.passed else 'FAIL'} margin={ent.margin:.6g}")
        ok &= rep.passed
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        doc = {str(i): rep.as_dict() for i, rep in reps.items()}
        (d / "conditions.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    sys.exit(EXIT_OK if ok else EXIT_FAIL)


def write_trace(trace, system, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    N = system.N
    plant = system.plant
    head = ["t", "j", "event", "net", "U"]
    for i in range(N):
        head += [f"tau_e_{i}", f"k_{i}", f"l_{i}", f"m_{i}", f"chi_{i}"]
    head += plant.state_columns()
    with open(outdir / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head)
        for r in trace.records:
            st = r.state
            row = [_f(r.time.t), r.time.j, r.event, r.net, _f(r.certificate)]
            for i in range(N):
                row += [_f(st.tau_e[i]), int(st.k[i]), int(st.l[i]), int(st.m[i]), _f(st.chi[i])]
            row += [_f(v) for v in st.x] + [int(v) for v in st.logic]
            w.writerow(row)
    with open(outdir / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "event", "net", "k", "l", "m", "tau_delay", "window_hit",
                    "U_pre", "U_post"])
        for e in trace.events:
            w.writerow([_f(e.t), e.j, e.event, e.net, e.k, e.l, e.m, _f(e.tau_delay),
                        int(e.window_hit), _f(e.U_pre), _f(e.U_post)])
    with open(outdir / "chi.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j"] + [f"{c}_{i}" for i in range(N) for c in ("chi", "phase")])
        for r in trace.records:
            row = [_f(r.time.t), r.time.j]
            for i in range(N):
                row += [_f(r.state.chi[i]), PHASE_NAMES[int(r.state.phase[i])]]
            w.writerow(row)
    (outdir / "attacks.txt").write_text("".join(tl.to_text() for tl in trace.timelines))
    ct = certificate_trace(trace)
    with open(outdir / "certificate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "U", "mode"])
        for t, j, U, uns in zip(ct.t, ct.j, ct.U, ct.unstable):
            w.writerow([_f(t), int(j), _f(U), "unstable" if uns else "stable"])
    with open(outdir / "attack_intervals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["net", "part", "start", "end"])
        for i, dec in enumerate(ct.decompositions):
            for a, b in dec.active:
                w.writerow([i, "attack-active", _f(a), _f(b)])
            for a, b in dec.over:
                w.writerow([i, "attack-over", _f(a), _f(b)])


@main.command()
@_config_arg
@_phi_opt
@click.option("--seed", type=int, default=None)
@click.option("--horizon", type=float, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def run(config, phi_miet, seed, horizon, out):
    """Simulate one seeded run and write trace files."""
    cfg = _load(config, phi_miet, seed, horizon)
    system = _system(cfg)
    failed = sorted({f"net {i}: {k}" for i, rep in conditions_for(cfg, system).items()
                     for k in rep.failed()})
    if failed:
        click.echo("warning: design conditions fail (" + ", ".join(failed) + ")", err=True)
    try:
        trace, _ = simulate(cfg, system=system)
    except (DivergenceError, EventLocalizationError, FloatingPointError) as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(EXIT_SIM)
    outdir = Path(out or cfg.out)
    write_trace(trace, system, outdir)
    click.echo(f"{len(trace.events)} events, {len(trace.records)} records -> {outdir}")


@main.command()
@_config_arg
@_phi_opt
@click.option("--seed", type=int, default=None, help="Base seed.")
@click.option("--horizon", type=float, default=None)
@click.option("--count", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def mc(config, phi_miet, seed, horizon, count, out):
    """Monte-Carlo ensemble over consecutive seeds; writes summary.json and runs.csv."""
    cfg = _load(config, phi_miet, seed, horizon)
    if count is not None:
        if count < 1:
            click.echo("config error: count must be >= 1", err=True)
            sys.exit(EXIT_CONFIG)
        cfg.mc["count"] = count
    _system(cfg)
    try:
        runs, est = run_ensemble(cfg, store_states=False)
    except RunFailure as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(EXIT_SIM)
    outdir = Path(out or cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = [r.row() for r in runs]
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(outdir / "runs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n", restval=0)
        w.writeheader()
        w.writerows(rows)
    summary = {"count": len(runs), "base_seed": cfg.sim.seed, "horizon": cfg.sim.horizon,
               "decay": est.as_dict()}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    click.echo(f"{len(runs)} runs; mean U(end)={est.mean[-1]:.6g}; fitted rate={est.rate}")


@main.command()
@_config_arg
@_phi_opt
@click.option("--triple", "triples", type=(float, float, float), multiple=True,
              metavar="L GAMMA LAMBDA", help="Print tau_mati for an explicit rate triple.")
def bounds(config, phi_miet, triples):
    """Print tau_mati, clock values, decay/growth rates and beta_hat."""
    if triples:
        click.echo(f"{'L':>8} {'gamma':>8} {'lambda':>8} {'tau_mati':>10}")
        for L, g, lam in triples:
            try:
                T = tau_mati(L, g, lam)
            except ValueError as exc:
                click.echo(f"config error: {exc}", err=True)
                sys.exit(EXIT_CONFIG)
            click.echo(f"{L:8g} {g:8g} {lam:8g} {T:10.6f}")
        return
    cfg = _load(config, phi_miet)
    system = _system(cfg)
    click.echo("net tau_mati0 tau_mati1 phi_miet0 phi_miet1 gammabar0 gammabar1 "
               "varpi0 varpi1 beta_hat")
    for i, net in enumerate(system.networks):
        dc = net.derived
        vals = (dc.tau_mati0, dc.tau_mati1, dc.phi_miet0, dc.phi_miet1,
                dc.gammabar0, dc.gammabar1, dc.varpi0, dc.varpi1, dc.beta_hat)
        click.echo(f"{i:3d} " + " ".join(f"{v:.6f}" for v in vals))


if __name__ == "__main__":
    main()

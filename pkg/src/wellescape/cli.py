"""Batch command-line runner: experiments from config files, CSV reports.

Two subcommands::

    wellescape run <config> [--key value ...]
    wellescape validate <config> [--key value ...]

``run`` executes the configured experiment mode and writes a CSV report
when ``out`` is set; ``validate`` checks the change-of-measure hypotheses
for the configured potential pair and reports pass/fail per hypothesis
without aborting.  Exit codes: 0 success, 1 configuration error, 2
runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace

import numpy as np

from .action import minimize_exit_action
from .config import ExperimentConfig
from .density import bounds
from .errors import ConfigurationError, WellEscapeError
from .estimators import (
    EscapeEvent,
    csv_row,
    diagnostics,
    run_importance,
    run_importance_meshes,
    run_plain,
    small_noise_sweep,
    write_csv,
)
from .fokker_planck import escape_probability
from .sde import RngPolicy


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _echo(cfg):
    print("# resolved configuration")
    print(cfg.dump(), end="")
    print("# ---")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ------------------------------------------------------------------ modes


def _summary_line(tag, s):
    parts = [f"{tag}: mean={_fmt(s.mean)}", f"std_error={_fmt(s.std_error)}",
             f"variance={_fmt(s.variance)}", f"hits={s.hits}", f"n={s.n}"]
    return "  ".join(parts)


def _run_plain(cfg):
    V = cfg.build_potential()
    event = EscapeEvent(cfg.build_region(), cfg.T)
    s = run_plain(V, cfg.noise(), cfg.x0, event, cfg.h, cfg.N,
                  RngPolicy(cfg.seed), cfg.workers)
    print(_summary_line("plain", s))
    rows = [csv_row(s, potential_label=V.label, tau=None, h=cfg.h,
                    seed=cfg.seed)]
    return rows


def _run_importance(cfg):
    V = cfg.build_potential()
    ref = cfg.build_sampling_potential()
    region = cfg.build_region()
    noise = cfg.noise()
    event = EscapeEvent(region, cfg.T)
    imp = run_importance(V, ref, noise, cfg.x0, event, cfg.h, cfg.tau,
                         cfg.N, RngPolicy(cfg.seed), cfg.workers)
    plain = run_plain(V, noise, cfg.x0, event, cfg.h, cfg.N,
                      RngPolicy(cfg.seed + 1), cfg.workers)
    diag = diagnostics(plain, imp, V, ref, region, noise, cfg.T, cfg.x0)
    print(_summary_line("importance", imp))
    print(_summary_line("plain baseline", plain))
    print(f"lambda={_fmt(diag.lambda_factor)}  "
          f"variance_ratio={_fmt(diag.variance_ratio)}  "
          f"theorem3_bound={_fmt(diag.theorem3_bound)}")
    rows = [
        csv_row(imp, potential_label=ref.label, tau=cfg.tau, h=cfg.h,
                seed=cfg.seed, diag=diag),
        csv_row(plain, potential_label=V.label, tau=None, h=cfg.h,
                seed=cfg.seed + 1),
    ]
    return rows


def _run_table5(cfg):
    """The seven-row escape table: one plain run, two reweighted potentials
    evaluated at three Riemann meshes (100h, 10h, h) each."""
    V = cfg.build_potential()
    region = cfg.build_region()
    noise = cfg.noise()
    event = EscapeEvent(region, cfg.T)
    taus = (100 * cfg.h, 10 * cfg.h, cfg.h)
    plain = run_plain(V, noise, cfg.x0, event, cfg.h, cfg.N,
                      RngPolicy(cfg.seed), cfg.workers)
    rows = [csv_row(plain, potential_label=V.label, tau=None, h=cfg.h,
                    seed=cfg.seed)]
    print(_summary_line("plain", plain))
    for i, sampling in enumerate(("flatten", "invert")):
        ref = replace(cfg, sampling=sampling).build_sampling_potential()
        seed = cfg.seed + 1 + i
        summaries = run_importance_meshes(
            V, ref, noise, cfg.x0, event, cfg.h, taus, cfg.N,
            RngPolicy(seed), cfg.workers,
        )
        for tau in taus:
            s = summaries[tau]
            diag = diagnostics(plain, s, V, ref, region, noise, cfg.T, cfg.x0)
            print(_summary_line(f"{sampling} tau={tau:g}", s))
            rows.append(csv_row(s, potential_label=ref.label, tau=tau,
                                h=cfg.h, seed=seed, diag=diag))
    return rows


def _run_density(cfg):
    V = cfg.build_potential()
    t = cfg.t if cfg.t is not None else cfg.T
    est = bounds(V, cfg.noise(), cfg.x0, cfg.y, t, delta=cfg.delta)
    pairs = [
        ("value", est.value), ("lower", est.lower), ("upper", est.upper),
        ("kernel", est.kernel), ("delta", est.delta),
        ("lipschitz", est.lipschitz), ("m1", est.m1), ("m2", est.m2),
        ("gamma", est.gamma),
    ]
    for k, v in pairs:
        print(f"{k}={_fmt(v)}")
    if cfg.out:
        _write_rows(cfg.out, ("quantity", "value"), pairs)
    return None


def _run_fp(cfg):
    V = cfg.build_potential()
    p, grid = escape_probability(
        V, cfg.noise(), cfg.x0, cfg.build_region(), cfg.T,
        n_cells=cfg.n_cells, dt=cfg.dt, return_grid=True,
    )
    print(f"escape_probability={_fmt(p)}")
    print(f"mass={_fmt(grid.mass)}  cells={len(grid.x)}  dx={_fmt(grid.dx)}")
    if cfg.out:
        _write_rows(cfg.out, ("x", "density"),
                    list(zip(grid.x.tolist(), grid.density.tolist())))
    return None


def _run_action(cfg):
    V = cfg.build_potential()
    res = minimize_exit_action(V, cfg.x0, cfg.build_region(), cfg.T,
                               cfg.segments)
    print(f"action={_fmt(res.value)}  converged={res.converged}  "
          f"iterations={res.iterations}  grad_norm={_fmt(res.grad_norm)}")
    if cfg.out:
        _write_rows(cfg.out, ("time", "position"),
                    list(zip(res.path.times.tolist(),
                             np.asarray(res.path.knots).tolist())))
    return None


def _run_sweep(cfg):
    V = cfg.build_potential()
    ref = cfg.build_sampling_potential()
    ns = list(cfg.sweep_n) if cfg.sweep_n else cfg.N
    rows = small_noise_sweep(V, ref, cfg.build_region(), cfg.x0, cfg.T,
                             cfg.h, cfg.tau, cfg.epsilons, ns, cfg.seed,
                             cfg.workers)
    header = ("epsilon", "n", "hits", "probability", "lambda",
              "eps_log_lambda")
    table = [(r.epsilon, r.n, r.hits, r.probability, r.lambda_factor,
              r.eps_log_lambda) for r in rows]
    for row in table:
        print("  ".join(f"{k}={_fmt(v)}" for k, v in zip(header, row)))
    if cfg.out:
        _write_rows(cfg.out, header, table)
    return None


def _cmd_run(cfg):
    _echo(cfg)
    runner = {
        "plain": _run_plain,
        "importance": _run_importance,
        "table5": _run_table5,
        "density": _run_density,
        "fp": _run_fp,
        "action": _run_action,
        "sweep": _run_sweep,
    }[cfg.mode]
    rows = runner(cfg)
    if rows is not None and cfg.out:
        write_csv(cfg.out, rows)
    if cfg.out:
        print(f"wrote {cfg.out}")
    return 0


# --------------------------------------------------------------- validate


def _report(label, measured, ok, note=""):
    verdict = "PASS" if ok else "FAIL"
    tail = f"  ({note})" if note else ""
    print(f"{label}: {measured} -> {verdict}{tail}")
    return ok


def _cmd_validate(cfg):
    """Check the change-of-measure hypotheses for the configured pair.

    Reports the flattened-well hypotheses (start-point lift, gradient
    domination, agreement outside the region) and the inverted-well
    hypotheses (flat boundary, second-derivative continuity, determinstic
    escape of the noise-free flow).  Informational: always exits 0.
    """
    _echo(cfg)
    if cfg.sampling == "none":
        print("sampling=none: no reference potential to validate")
        return 0
    V = cfg.build_potential()
    ref = cfg.build_sampling_potential()
    region = cfg.build_region()
    noise = cfg.noise()
    a, b = region.bounding_box[0]
    inside = np.linspace(a + 1e-9, b - 1e-9, 4001)
    ring = np.concatenate([np.linspace(a - 2.0, a - 1e-9, 1001),
                           np.linspace(b + 1e-9, b + 2.0, 1001)])

    print("[variance-ratio bound hypotheses]")
    v0, r0 = float(V.value(cfg.x0)), float(ref.value(cfg.x0))
    _report("(i) start-point lift V(x0) < Vref(x0)",
            f"V(x0)={_fmt(v0)} Vref(x0)={_fmt(r0)}", v0 < r0)
    gap = np.max(np.abs(np.asarray(ref.gradient(inside)))
                 - np.abs(np.asarray(V.gradient(inside))))
    _report("(ii) gradient domination on D",
            f"sup(|grad Vref| - |grad V|)={_fmt(float(gap))}", gap <= 1e-9)
    outside_gap = float(np.max(np.abs(np.asarray(ref.value(ring))
                                      - np.asarray(V.value(ring)))))
    _report("(iii) agreement outside D",
            f"max|Vref - V|={_fmt(outside_gap)}", outside_gap <= 1e-12)
    lap_gap = 0.5 * float(np.max(np.asarray(V.laplacian(inside))
                                 - np.asarray(ref.laplacian(inside))))
    eps = noise.epsilon
    lhs, rhs = r0 - v0, eps * cfg.T * lap_gap
    print(f"M = sup(lap V - lap Vref)/2 = {_fmt(lap_gap)}")
    _report("noise condition Vref(x0)-V(x0) >= eps*T*M",
            f"{_fmt(lhs)} >= {_fmt(rhs)}", lhs >= rhs)

    print("[inverted-well hypotheses]")
    flat = max(
        max(abs(float(V.value(z))) for z in (a, b)),
        max(abs(float(np.asarray(V.gradient(z)))) for z in (a, b)),
    )
    _report("flat boundary V=0, grad V=0 on dD",
            f"max boundary |V|,|grad V|={_fmt(flat)}", flat <= 1e-8)
    step = 1e-6
    jump = max(
        abs(float(ref.laplacian(a + step)) - float(ref.laplacian(a - step))),
        abs(float(ref.laplacian(b - step)) - float(ref.laplacian(b + step))),
    )
    _report("Vref twice differentiable across dD",
            f"second-derivative jump={_fmt(jump)}", jump <= 1e-6,
            note="" if jump <= 1e-6 else "C^1 only")

    n_steps = 4000
    dt = cfg.T / n_steps
    y = float(cfg.x0)
    exit_time = None
    f = lambda z: -float(np.asarray(ref.gradient(z)))
    for i in range(n_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        if not region.indicator(y):
            exit_time = (i + 1) * dt
            break
    if exit_time is None:
        note = ""
        if abs(f(float(cfg.x0))) == 0.0:
            note = "x0 is an equilibrium of the noise-free flow"
        _report("noise-free flow exits D by T",
                f"y(T)={_fmt(y)} still in D", False, note=note)
    else:
        _report("noise-free flow exits D by T",
                f"exit at t={_fmt(exit_time)}", True)
    return 0


# ------------------------------------------------------------------- main


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="wellescape",
        description="Rare-event escape estimators for Langevin dynamics.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "execute the configured experiment"),
        ("validate", "check change-of-measure hypotheses, report per item"),
    ):
        p = sub.add_parser(name, help=helptext, allow_abbrev=False)
        p.add_argument("config", help="path to a key=value config file")
    args, extra = parser.parse_known_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config, overrides=extra)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            return _cmd_run(cfg)
        return _cmd_validate(cfg)
    except WellEscapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

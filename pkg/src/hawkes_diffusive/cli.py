"""Command-line driver.

    hawkes-diffusive [SUBCOMMAND] --config run.cfg [--seed S] [--out DIR]
                     [--workers K] [--emit-paths]

Each run writes ``summary.json`` ({config_echo, seed, tables, assertions})
and ``config.resolved`` into the output directory, plus CSV tables.
Exit status: 0 all assertions pass, 1 an assertion failed, 2 config error,
3 runtime abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import generators, hawkes_engine, limit_engine, mc_lab, model, parallel, stationary
from . import rng as _rng
from .config import (EXPERIMENTS, ALIASES, ConfigError, RunConfig, build_spec, config_to_dict,
                     emit_config, parse_config, resolved)
from .hawkes_engine import SimulationAbort, fmt17
from .quadrature import QuadratureError

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

EXPERIMENT_DEFAULTS = {
    "simulate-n": {"T": 10.0, "cap": hawkes_engine.DEFAULT_EVENT_CAP},
    "simulate-limit": {"T": 10.0},
    "generator-gap": {"g": "sin, tanh, gaussian_bump", "x_grid": [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
                      "n_grid": [10, 100, 1000, 10000]},
    "semigroup-rate": {"g": "sin", "x": 1.0, "t": 2.0, "n_grid": [10, 40, 160, 640],
                       "reps": 400_000, "control_variate": True},
    "invariant-law": {"t": 30.0, "reps": 10_000, "threshold": 0.05},
    "chaos-test": {"T": 2.0, "k": 2, "reps": 100_000},
    "joint-limit": {"schedule": [(2.0, 25), (5.0, 100), (10.0, 400)], "reps": 40_000},
    "constants": {"T_grid": [1.0, 10.0]},
    "validate": {},
}


def with_defaults(cfg: RunConfig) -> RunConfig:
    """Resolved config: generic defaults plus those of the experiment."""
    r = resolved(cfg)
    for k, v in EXPERIMENT_DEFAULTS.get(r.name, {}).items():
        r.experiment.setdefault(k, v)
    r.output.setdefault("out", "hawkes_out")
    return r


def _assertion(name, lhs, rhs, tol=0.0, op="<="):
    lhs = None if lhs is None else float(lhs)
    rhs = float(rhs)
    if lhs is None or not math.isfinite(lhs):
        ok = False
    elif op == "<=":
        ok = lhs <= rhs + tol
    elif op == ">=":
        ok = lhs >= rhs - tol
    elif op == "==":
        ok = abs(lhs - rhs) <= tol
    else:
        raise ValueError(op)
    return {"name": name, "pass": bool(ok), "lhs": lhs, "rhs": rhs, "tol": float(tol), "op": op}


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt17(v) if isinstance(v, float) else v for v in row])


def _path_second_moment(times, values, alpha, horizon):
    """Time average of X^2 over [0, horizon] along exponential decay."""
    dt = np.diff(np.append(times, horizon))
    seg = values ** 2 * (-np.expm1(-2.0 * alpha * dt)) / (2.0 * alpha)
    return float(seg.sum() / horizon)


def _reference_m2(spec):
    try:
        return float(stationary.invariant_density(spec).moment(2))
    except (ArithmeticError, QuadratureError):
        return float("inf")


# ---------------------------------------------------------------------------
# experiments: each returns (tables, assertions)


def _simulate_n(spec, e, seed, out, emit):
    stream = _rng.Stream(seed, _rng.TAG_HAWKES, 0)
    path, log = hawkes_engine.simulate(spec, e["T"], stream, cap=e["cap"])
    path.to_csv(os.path.join(out, "path.csv"))
    log.to_csv(os.path.join(out, "events.csv"))
    m2 = _path_second_moment(path.times, path.values, spec.alpha, e["T"])
    ref = max(_reference_m2(spec), spec.x0 ** 2, 1.0)
    tables = {"n_events": len(log), "x_final": float(path.values[-1]) * math.exp(
        -spec.alpha * (e["T"] - float(path.times[-1]))),
        "max_abs_x": float(np.max(np.abs(path.values))), "time_avg_x2": m2,
        "counts": [int(c) for c in np.bincount(log.components, minlength=spec.n_components + 1)[1:]]}
    return tables, [_assertion("second_moment_bounded", m2, 10.0 * ref)]


def _simulate_limit(spec, e, seed, out, emit):
    path = limit_engine.simulate_em(spec, e["T"], e["h"], _rng.Stream(seed, _rng.TAG_BROWNIAN, 0))
    path.to_csv(os.path.join(out, "path.csv"))
    tables = {"steps": len(path.values) - 1, "x_final": float(path.values[-1]),
              "max_abs_x": float(np.max(np.abs(path.values))),
              "time_avg_x2": float(np.mean(path.values[:-1] ** 2))}
    if "k" in e:
        cox = limit_engine.cox_counts(path, e["k"], _rng.Stream(seed, _rng.TAG_COX, 0))
        cox.to_csv(os.path.join(out, "cox_events.csv"))
        tables["cox_counts"] = [int(c) for c in cox.counts()]
    ref = max(_reference_m2(spec), spec.x0 ** 2, 1.0)
    return tables, [_assertion("second_moment_bounded", tables["time_avg_x2"], 10.0 * ref)]


def _generator_gap(spec, e, seed, out, emit):
    tables, asserts = {}, []
    for name in [s.strip() for s in e["g"].split(",") if s.strip()]:
        g = generators.test_function(name)
        rep = generators.gap_check(g, spec, e["x_grid"], e["n_grid"])
        tables[name] = rep.to_json()
        excess = max(gp - bd for _, _, gp, bd in rep.table)
        asserts.append(_assertion("gap_within_bound[%s]" % name, excess, 0.0, 1e-10))
        asserts.append(_assertion("worst_ratio[%s]" % name, rep.worst_ratio, 1.0))
        # the leading term is E[U^3] g'''/(6 sqrt N); with symmetric marks it vanishes
        if spec.mu.third_moment != 0.0 and rep.slope is not None:
            asserts.append(_assertion("slope[%s]" % name, rep.slope, -0.5, 0.05, "=="))
        if emit:
            _write_rows(os.path.join(out, "gap_%s.csv" % name.replace("^", "")),
                        ["x", "N", "gap", "bound"], rep.table)
    return tables, asserts


def _semigroup_rate(spec, e, seed, out, emit):
    g = generators.test_function(e["g"])
    rep = mc_lab.rate_experiment(spec, g, e["x"], e["t"], e["n_grid"], e["reps"], seed, e["h"],
                                 strict=False, control_variate=e["control_variate"])
    tables = {"rate": rep.to_json()}
    asserts = [_assertion("resolvable_rows", len(rep.resolvable), 3, 0.0, ">=")]
    if rep.slope is not None:
        asserts.append(_assertion("slope_in_band", rep.slope, -0.5, 0.2, "=="))
        min_err = min(err for n, err, _ in rep.table if n in rep.resolvable)
        asserts.append(_assertion("richardson_guard", abs(rep.limit.richardson_diff),
                                  min_err / 5.0))
    if emit:
        _write_rows(os.path.join(out, "rate.csv"), ["N", "error", "sem"], rep.table)
    return tables, asserts


def _invariant_law(spec, e, seed, out, emit):
    dens = stationary.invariant_density(spec)
    dens.to_csv(os.path.join(out, "density.csv"))
    xs = stationary.long_run_law(spec, e["t"], e["reps"], seed)
    w, sem = stationary.wasserstein1_with_sem(xs, dens, seed=_rng.derive_seed(seed, "boot"))
    # trapezoid mass of the tabulated pdf (the CDF table is normalized by construction)
    mass = float(np.sum(np.diff(dens.grid) * 0.5 * (dens.pdf_grid[1:] + dens.pdf_grid[:-1])))
    tables = {"Z": dens.Z, "radius": dens.radius, "p0": dens.pdf(0.0), "w1": w, "w1_sem": sem,
              "N": spec.n_components, "t": e["t"], "reps": e["reps"],
              "sample_mean": float(np.mean(xs)), "sample_m2": float(np.mean(xs ** 2))}
    asserts = [_assertion("unit_mass", mass, 1.0, 1e-8, "=="),
               _assertion("w1_long_run", w, e["threshold"])]
    if emit:
        _write_rows(os.path.join(out, "long_run_samples.csv"), ["x"], [[float(v)] for v in xs])
    return tables, asserts


def _chaos_test(spec, e, seed, out, emit):
    rep = mc_lab.chaos_covariance(spec, e["T"], e["k"], e["reps"], seed, e["h"])
    return ({"chaos": rep.to_json()},
            [_assertion("chaos_covariance", rep.gap, 0.0, 4.0 * rep.combined_sem)])


def _joint_limit(spec, e, seed, out, emit):
    rep = mc_lab.joint_limit_experiment(spec, e["schedule"], e["reps"], seed)
    asserts = []
    for a, b in zip(rep.rows, rep.rows[1:]):
        asserts.append(_assertion("w1_decreasing[(%g,%d)->(%g,%d)]" % (a[0], a[1], b[0], b[1]),
                                  b[2], a[2], a[3]))
    if emit:
        _write_rows(os.path.join(out, "joint_limit.csv"), ["t", "N", "w1", "sem"], rep.rows)
    return {"joint": rep.to_json()}, asserts


def _constants(spec, e, seed, out, emit):
    a = spec.alpha
    s2 = e.get("sigma2", spec.sigma2)
    L = e.get("L", spec.L)
    eps = e["epsilon"]
    b = model.beta(a, s2, L)
    K = {fmt17(float(T)): model.k_T(a, s2, L, float(T), eps) for T in e["T_grid"]}
    tables = {"alpha": a, "sigma2": s2, "L": L, "beta": b, "epsilon": eps,
              "sharp_regime": model.is_sharp_regime(a, s2, L), "K": K}
    asserts = [_assertion("epsilon_positive", eps, 0.0, 0.0, ">=")]
    asserts += [_assertion("k_T_nonnegative[%s]" % T, v, 0.0, 0.0, ">=") for T, v in K.items()]
    return tables, asserts


def _validate(spec, e, seed, out, emit):
    rep = model.validate(spec, radius=e["R"], seed=seed)
    tables = {"validation": rep.to_dict()}
    asserts = [_assertion(d.name, 1.0 if d.passed else 0.0, 1.0, 0.0, "==")
               for d in rep.diagnostics]
    return tables, asserts


RUNNERS = {
    "simulate-n": _simulate_n,
    "simulate-limit": _simulate_limit,
    "generator-gap": _generator_gap,
    "semigroup-rate": _semigroup_rate,
    "invariant-law": _invariant_law,
    "chaos-test": _chaos_test,
    "joint-limit": _joint_limit,
    "constants": _constants,
    "validate": _validate,
}


def _jsonable(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError("not serializable: %r" % type(o))


def summary_bytes(summary: dict) -> bytes:
    return (json.dumps(summary, sort_keys=True, indent=2, default=_jsonable) + "\n").encode()


def run(subcommand, cfg: RunConfig, out=None, emit_paths=None):
    """Execute one experiment; returns (exit status, summary dict).

    Raises ConfigError for configuration problems (exit 2 in :func:`main`).
    """
    if subcommand is not None:
        subcommand = ALIASES.get(subcommand, subcommand)
        if subcommand not in EXPERIMENTS:
            raise ConfigError("unknown subcommand %r" % subcommand)
        cfg = RunConfig(dict(cfg.model), dict(cfg.experiment, experiment=subcommand),
                        dict(cfg.output), cfg.seed)
    if cfg.name is None:
        raise ConfigError("no experiment given (config key 'experiment' or a subcommand)",
                          key="experiment")
    if out is not None:
        cfg.output["out"] = out
    if emit_paths is not None:
        cfg.output["emit_paths"] = bool(emit_paths)
    r = with_defaults(cfg)
    spec = build_spec(r)
    out_dir = r.output["out"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.resolved"), "w") as fh:
        fh.write(emit_config(r))
    tables, asserts = RUNNERS[r.name](spec, r.experiment, r.seed, out_dir, r.output["emit_paths"])
    echo = config_to_dict(r)
    # the output location is not part of the experiment; leaving it out keeps
    # summaries byte-comparable across directories
    del echo["output"]["out"]
    summary = {"experiment": r.name, "config_echo": echo, "seed": r.seed,
               "tables": tables, "assertions": asserts}
    with open(os.path.join(out_dir, "summary.json"), "wb") as fh:
        fh.write(summary_bytes(summary))
    status = EXIT_OK if all(a["pass"] for a in asserts) else EXIT_ASSERT
    return status, summary


def _parser():
    p = argparse.ArgumentParser(prog="hawkes-diffusive", description=__doc__.split("\n")[0])
    p.add_argument("subcommand", nargs="?", choices=list(EXPERIMENTS) + list(ALIASES))
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=int, help="unsigned 64-bit master seed (overrides config)")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--workers", type=int, help="worker threads (default: $%s or 1)"
                   % parallel.ENV_VAR)
    p.add_argument("--emit-paths", action="store_true", default=None,
                   help="also write per-row CSV tables")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.seed is not None:
            if not 0 <= args.seed < 1 << 64:
                raise ConfigError("seed must be an unsigned 64-bit integer", key="seed")
            cfg.seed = args.seed
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        parallel.set_workers(args.workers)
        status, summary = run(args.subcommand, cfg, args.out, args.emit_paths)
    except (ValueError, OSError) as exc:  # ConfigError and bad experiment parameters
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationAbort, stationary.TailDivergence, QuadratureError,
            generators.QuadratureGuardError) as exc:
        print("aborted: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return EXIT_ABORT
    finally:
        parallel.set_workers(None)
    for a in summary["assertions"]:
        print("%-4s %s: %r %s %r (tol %g)" % ("PASS" if a["pass"] else "FAIL", a["name"],
                                             a["lhs"], a["op"], a["rhs"], a["tol"]))
    return status


if __name__ == "__main__":
    sys.exit(main())

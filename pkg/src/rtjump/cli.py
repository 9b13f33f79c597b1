"""Command-line interface: ``rtjump <subcommand> [--config FILE] [flags]``.

Exit status 0 when every check passes, 1 when an experiment fails, 2 on a
configuration error.  Output files contain no timings, so identical
configurations (with any worker count) give byte-identical files; timings go
to the log on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .estimators import fingerprint
from .experiments import (diffusion_experiment, generator_convergence_experiment, green_kubo_experiment,
                          invariant_measure_experiment, moment_decay_experiment,
                          peaked_moment_experiment, truncation_robustness_experiment)
from .harmonics import SpectralTable, multiplier_constant
from .io import write_csv, write_json
from .kernel import DivergentIntegralError, KernelDomainError, KernelSpec, auto_eta, mathfrak_C
from .process import JumpBudgetError, ProcessConfig, simulate
from .sphere import InvalidDimensionError

log = logging.getLogger("rtjump")

SUBCOMMANDS = ("spectrum", "simulate", "moments", "diffusion", "peaked", "invariant", "validate")

# flag -> config key
FLAGS = {
    "d": ("kernel.d", "sphere dimension d >= 1"),
    "beta": ("kernel.beta", "singularity exponent in (0, 1)"),
    "a1": ("kernel.a1", "singularity amplitude (default: unit mean rate)"),
    "family": ("kernel.family", "pure | smooth_plus_singular | mollified | peaked"),
    "f1": ("kernel.f1", "constant smooth part F1 (smooth_plus_singular)"),
    "n_mollify": ("kernel.n_mollify", "mollification index n"),
    "base_family": ("kernel.base_family", "family that is mollified (pure | smooth_plus_singular)"),
    "epsilon": ("kernel.epsilon", "peaked-kernel scale"),
    "profile": ("kernel.profile", "peaked profile: default | power"),
    "eta": ("process.eta", "truncation (s <= 1 - eta) or 'auto'"),
    "t_max": ("process.t_max", "simulation horizon"),
    "k0": ("process.k0", "initial momentum, comma separated, or 'uniform'"),
    "x0": ("process.x0", "initial position, comma separated"),
    "seed": ("process.seed", "master seed"),
    "paths": ("experiment.paths", "number of Monte Carlo paths"),
    "nmax": ("experiment.nmax", "largest degree in the spectrum table"),
    "degrees": ("experiment.degrees", "harmonic degrees, comma separated"),
    "t_grid": ("experiment.t_grid", "observation times, comma separated"),
    "eps": ("experiment.eps_list", "diffusive epsilon sequence, comma separated"),
    "peaked_eps": ("experiment.peaked_eps", "peaked epsilon sequence, comma separated"),
    "t": ("experiment.t", "observation time of the diffusion experiment"),
    "lags": ("experiment.lags", "Green-Kubo lags, comma separated"),
    "t_large": ("experiment.t_large", "horizon of the invariant-measure experiment"),
    "k_samples": ("experiment.k_samples", "sampled momenta for generator errors"),
    "robustness": ("experiment.robustness", "1 to add the truncation-robustness check"),
    "out": ("run.out", "output directory"),
    "workers": ("run.workers", "worker processes (default: $RTJUMP_WORKERS or all cores)"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [kernel], [process], [experiment], [run]")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    for flag, (_, help_text) in FLAGS.items():
        common.add_argument("--" + flag.replace("_", "-"), dest=flag, default=None, help=help_text)
    parser = argparse.ArgumentParser(prog="rtjump", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rtjump {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "spectrum": "Funk-Hecke eigenvalues and multipliers (spectrum.csv)",
        "simulate": "simulate paths (paths.csv, positions.csv)",
        "moments": "exact degree-n moment decay (moments.csv)",
        "diffusion": "diffusion limit and Green-Kubo check (diffusion.csv)",
        "peaked": "peaked-forward generator convergence (generator.csv)",
        "invariant": "invariant measure and spectral gap (invariant.csv)",
        "validate": "run the invariant suite",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _overrides(args) -> dict:
    return {key: getattr(args, flag) for flag, (key, _) in FLAGS.items() if getattr(args, flag) is not None}


def _summary(rc: RunConfig, reports, extra=None) -> dict:
    semantic = rc.semantic()
    out = {
        "version": __version__,
        "config": semantic,
        "provenance": dict(sorted(rc.provenance.items())),
        "config_fingerprint": fingerprint(semantic),
        "pass": all(r.passed for r in reports),
        "experiments": [{"experiment": r.name, "params": r.params, "points": r.points, "pass": r.passed,
                         "summary": r.summary, "total_jumps": r.total_jumps} for r in reports],
    }
    if len(reports) == 1:
        out.update({"experiment": reports[0].name, "params": reports[0].params,
                    "points": reports[0].points})
    if extra:
        out.update(extra)
    return out


def _eta(rc: RunConfig, rel_target: float, horizon: float, n_paths: int, spec=None) -> float:
    spec = rc.kernel() if spec is None else spec
    if rc["process.eta"] is not None:
        return float(rc["process.eta"])
    eta = auto_eta(spec, rel_target, horizon, n_paths)
    rc.set("process.eta", eta, "auto")
    return eta


def _out(rc, name):
    return os.path.join(rc["run.out"], name)


def _log_report(rep):
    log.info("%s: %s, %d jumps, %.1f s", rep.name, "pass" if rep.passed else "FAIL",
             rep.total_jumps, rep.wall_clock)
    for line in rep.table():
        log.debug(line)


# -- subcommands ----------------------------------------------------------------------


def cmd_spectrum(rc: RunConfig) -> bool:
    spec = rc.kernel()
    eta = _eta(rc, 1 / math.sqrt(rc["experiment.paths"]), rc["process.t_max"], rc["experiment.paths"])
    table = SpectralTable.build(spec, rc["experiment.nmax"], eta)
    rows = zip(table.n, table.lam, table.mult, table.mu, table.mu_eta, table.R, table.mu_peaked)
    write_csv(_out(rc, "spectrum.csv"), ["n", "lambda_n", "mult_n", "mu_n", "mu_n_eta", "R_n", "mu_peaked_n"], rows)
    c = mathfrak_C(spec)
    ratio = table.mu[1:33] / table.R[1:33]
    checks = {
        "mu_0 == 0": table.mu[0] == 0.0,
        "mu_1 == C": abs(table.mu[1] / c - 1) <= 1e-10,
        "R_0 == 0": table.R[0] == 0.0,
        "mu_n >= mu_1": bool(np.all(table.mu[1:] >= table.mu[1] * (1 - 1e-12))),
    }
    if spec.family == "pure":
        checks["mu_n / R_n constant"] = float(np.ptp(ratio) / ratio[0]) <= 1e-6
    sand = table.sandwich_ratio()
    extra = {"experiment": "spectrum", "params": {"nmax": table.n_max, "eta": eta},
             "checks": checks, "C": c, "gap_mu_1": table.gap,
             "kappa": multiplier_constant(spec.d, spec.beta),
             "sandwich_min": float(sand.min()), "sandwich_max": float(sand.max()),
             "points": [{"x": name, "pass": bool(ok)} for name, ok in checks.items()]}
    ok = all(checks.values())
    summary = _summary(rc, [], extra)
    summary["pass"] = ok
    write_json(_out(rc, "spectrum.json"), summary)
    return ok


def cmd_simulate(rc: RunConfig) -> bool:
    n = rc["experiment.paths"]
    t_max = rc["process.t_max"]
    eta = _eta(rc, 1 / math.sqrt(n), t_max, n)
    base = rc.process(eta)
    grid = sorted({0.0, t_max} | {t for t in rc["experiment.t_grid"] if t <= t_max})
    d = base.kernel.d
    path_rows, pos_rows, jumps = [], [], 0
    for i in range(n):
        tr = simulate(base.with_path(i))
        jumps += tr.n_jumps
        times = np.concatenate([[0.0], tr.times])
        for t, k in zip(times, tr.momenta):
            path_rows.append([i, t, *k])
        for t, x, k in zip(grid, tr.position(np.array(grid)), tr.momentum(np.array(grid))):
            pos_rows.append([i, t, *x, *k])
    comp = [f"k{j}" for j in range(d + 1)]
    write_csv(_out(rc, "paths.csv"), ["path_id", "t_event", *comp], path_rows)
    write_csv(_out(rc, "positions.csv"), ["path_id", "t", *[f"x{j}" for j in range(d + 1)], *comp], pos_rows)
    extra = {"experiment": "simulate", "params": {"paths": n, "eta": eta, "t_max": t_max, "grid": grid},
             "points": [], "total_jumps": jumps}
    summary = _summary(rc, [], extra)
    summary["pass"] = True
    write_json(_out(rc, "simulate.json"), summary)
    log.info("simulate: %d paths, %d jumps", n, jumps)
    return True


def cmd_moments(rc: RunConfig) -> bool:
    n = rc["experiment.paths"]
    grid = rc["experiment.t_grid"]
    eta = _eta(rc, 1 / math.sqrt(n), max(grid), n)
    rep = moment_decay_experiment(rc.process(eta, max(grid)), rc["experiment.degrees"], grid, n,
                                  workers=rc.workers)
    _log_report(rep)
    write_csv(_out(rc, "moments.csv"), ["n", "t", "estimate", "stderr", "oracle", "pass"],
              [[p["x"]["n"], p["x"]["t"], p["estimate"], p["stderr"], p["oracle"], p["pass"]] for p in rep.points])
    write_json(_out(rc, "moments.json"), _summary(rc, [rep]))
    return rep.passed


def cmd_diffusion(rc: RunConfig) -> bool:
    n = rc["experiment.paths"]
    eps = rc["experiment.eps_list"]
    t = rc["experiment.t"]
    eta = _eta(rc, math.sqrt(2 / n), t / min(eps) ** 2, n)
    cfg = rc.process(eta, t)
    reps = [diffusion_experiment(cfg, eps, t, n, workers=rc.workers)]
    gk = rc.process(eta, max(rc["experiment.lags"]), k0=None)
    reps.append(green_kubo_experiment(gk, rc["experiment.lags"], n, workers=rc.workers))
    if rc["experiment.robustness"]:
        reps.append(truncation_robustness_experiment(cfg, epsilon=min(eps), t=t, n_paths=n, workers=rc.workers))
    for r in reps:
        _log_report(r)
    rows = []
    for p in reps[0].points:
        j, l = p["x"]["entry"]
        rows.append(["cov", p["x"]["epsilon"], j, l, p["estimate"], p["stderr"], p["oracle"], p["pass"]])
    for p in reps[1].points:
        j, l = p["x"]["entry"]
        rows.append(["autocorr", p["x"]["u"], j, l, p["estimate"], p["stderr"], p["oracle"], p["pass"]])
    if len(reps) > 2:
        for p in reps[2].points:
            rows.append(["eta_halving", p["x"]["eta"], "", "", p["estimate"], p["stderr"], p["oracle"], p["pass"]])
    write_csv(_out(rc, "diffusion.csv"), ["kind", "x", "j", "l", "estimate", "stderr", "oracle", "pass"], rows)
    write_json(_out(rc, "diffusion.json"), _summary(rc, reps))
    return all(r.passed for r in reps)


def cmd_peaked(rc: RunConfig) -> bool:
    k = rc.values["kernel"]
    d, beta = k["d"], k["beta"]
    a1 = k["a1"] if k["a1"] is not None else KernelSpec.pure(d, beta).a1
    eps = rc["experiment.peaked_eps"]
    reps = [generator_convergence_experiment(k["profile"], beta, a1, d, eps, tuple(rc["experiment.degrees"]),
                                             rc["experiment.k_samples"], rc["process.seed"])]
    n = rc["experiment.paths"]
    t = rc["experiment.t"]
    if n >= 2:
        x0 = rc["process.x0"]
        eta = rc["process.eta"]
        cfg = ProcessConfig(KernelSpec.peaked(d, beta, a1, eps[0], k["profile"]), 1.0 if eta is None else eta, t,
                            None if x0 is None else tuple(x0), rc.k0(), rc["process.seed"])
        reps.append(peaked_moment_experiment(cfg, eps, t, n, workers=rc.workers, auto_truncation=eta is None))
    for r in reps:
        _log_report(r)
    write_csv(_out(rc, "generator.csv"), ["n", "epsilon", "sup_error", "pass"],
              [[p["x"]["n"], p["x"]["epsilon"], p["estimate"], p["pass"]] for p in reps[0].points])
    if len(reps) > 1:
        write_csv(_out(rc, "peaked.csv"), ["epsilon", "t", "estimate", "stderr", "oracle", "C_eps", "eta", "pass"],
                  [[p["x"]["epsilon"], p["x"]["t"], p["estimate"], p["stderr"], p["oracle"], p["C_eps"], p["eta"],
                    p["pass"]] for p in reps[1].points])
    write_json(_out(rc, "peaked.json"), _summary(rc, reps))
    return all(r.passed for r in reps)


def cmd_invariant(rc: RunConfig) -> bool:
    n = rc["experiment.paths"]
    spec = rc.kernel()
    c = mathfrak_C(spec)
    T = rc["experiment.t_large"] or 10.0 / c
    eta = _eta(rc, 1 / math.sqrt(n), T, n)
    k0 = rc.k0()
    if k0 is None:
        raise ConfigError("the invariant experiment needs a fixed process.k0")
    rep = invariant_measure_experiment(rc.process(eta, T), T, n, workers=rc.workers)
    _log_report(rep)
    rows = []
    for p in rep.points:
        if "fitted_rate" in p["x"]:
            rows.append(["fitted_rate", "", "", p["estimate"], p["stderr"], p["oracle"], p["pass"]])
        else:
            rows.append([f"G{p['x']['n']}", " ".join(repr(v) for v in p["x"]["axis"]), p["x"]["t"],
                         p["estimate"], p["stderr"], p["oracle"], p["pass"]])
    write_csv(_out(rc, "invariant.csv"), ["observable", "axis", "t", "estimate", "stderr", "oracle", "pass"], rows)
    write_json(_out(rc, "invariant.json"), _summary(rc, [rep]))
    return rep.passed


def cmd_validate(rc: RunConfig) -> bool:
    from .validation import run_suite
    rows, reps = run_suite(rc)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    write_csv(_out(rc, "validate.csv"), ["check", "pass", "detail"], rows)
    summary = _summary(rc, reps, {"checks": [{"check": n, "pass": ok, "detail": d} for n, ok, d in rows]})
    summary["pass"] = all(ok for _, ok, _ in rows)
    write_json(_out(rc, "validate.json"), summary)
    failed = [r for r in rows if not r[1]]
    if failed:
        print(f"{len(failed)} of {len(rows)} checks failed", file=sys.stderr)
    return not failed


COMMANDS = {"spectrum": cmd_spectrum, "simulate": cmd_simulate, "moments": cmd_moments,
            "diffusion": cmd_diffusion, "peaked": cmd_peaked, "invariant": cmd_invariant,
            "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        rc = parse_config(args.config, _overrides(args))
        ok = COMMANDS[args.command](rc)
    except (ConfigError, KernelDomainError, InvalidDimensionError, DivergentIntegralError,
            JumpBudgetError) as exc:
        print(f"rtjump {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

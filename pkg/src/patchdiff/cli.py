"""Command line entry point: ``patchdiff <experiment> --config FILE``.

Exit status: 0 when every check passes, 1 when a check fails or the run hits
an internal fault, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .absorption import (check_delta_bound, estimate_absorption, estimate_mean_hitting_time,
                         optional_stopping_check)
from .config import EXPERIMENTS, ExperimentConfig, build_model, grid_resolution, load_config
from .coupling import coupled_expectation
from .diffusion import SdeConfig, simulate_sde
from .errors import AdmissibilityError, ConfigurationError, DomainError, PatchdiffError
from .model import dbar, validate_model
from .montecarlo import default_workers
from .polynomial import parse_polynomial
from .semigroup import (apply_generator, discrete_generator_apply, semigroup_matexp,
                        sup_error_on_grid, trotter_product)
from .trajectory import corner_targets, delta_targets
from .wfchain import ChainConfig, simulate_chain

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class Table:
    name: str
    header: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class RunResult:
    checks: list[dict] = field(default_factory=list)
    tables: list[Table] = field(default_factory=list)
    trajectories: list = field(default_factory=list)

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return __version__


def _sde_cfg(cfg: ExperimentConfig, t_max_default: float = 1.0) -> SdeConfig:
    try:
        return SdeConfig(dt=float(cfg.param("dt", 1e-3)),
                         t_max=float(cfg.param("t_max", t_max_default)),
                         corner_tol=float(cfg.param("corner_tol", 1e-6)))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from None


def _reps(cfg: ExperimentConfig, default: int) -> int:
    return cfg.reps if cfg.reps is not None else default


def _ints(value) -> list[int]:
    return [int(v) for v in (value if isinstance(value, (list, tuple)) else [value])]


def _targets(cfg: ExperimentConfig):
    tg = corner_targets()
    if cfg.param("alpha") is not None:
        tg += delta_targets(float(cfg.param("alpha")))
    return tg


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _validate(cfg, res):
    spec = build_model(cfg.model, validate=False)
    report = validate_model(spec, grid_resolution(cfg.model))
    tab = Table("checks", ["check", "passed", "required", "detail"])
    for c in report.checks:
        tab.rows.append([c.name, c.passed, c.required, c.detail])
        res.check(c.name, c.passed or not c.required, c.detail)
    res.tables.append(tab)


def _simulate_chain(cfg, res):
    spec = build_model(cfg.model)
    ccfg = ChainConfig(int(cfg.param("N")), str(cfg.param("clock", "embedded")))
    tr = simulate_chain(cfg.param("x0"), ccfg, spec, float(cfg.param("t_max", 1.0)),
                        _targets(cfg), rng=cfg.master_seed)
    res.trajectories.append(("trajectory", tr))
    res.check("states_in_K", bool(np.all((tr.states >= 0) & (tr.states <= 1))))


def _simulate_sde(cfg, res):
    spec = build_model(cfg.model)
    scfg = _sde_cfg(cfg)
    tr = simulate_sde(cfg.param("x0"), spec, scfg, _targets(cfg), rng=cfg.master_seed,
                      record_every=int(cfg.param("record_every", 1)))
    res.trajectories.append(("trajectory", tr))
    res.tables.append(Table("summary", ["Dbar_initial", "Dbar_final"],
                            [[float(dbar(tr.states[0], spec)), float(dbar(tr.states[-1], spec))]]))
    res.check("states_in_K", bool(np.all((tr.states >= 0) & (tr.states <= 1))))


def _generator_check(cfg, res):
    spec = build_model(cfg.model)
    f = parse_polynomial(str(cfg.param("f")), spec.m)
    resolution = int(cfg.param("grid", 100))
    Lf = apply_generator(f, spec, "L")
    tab = Table("errors", ["N", "sup_error"])
    errs = []
    for N in _ints(cfg.param("N")):
        e = sup_error_on_grid(discrete_generator_apply(f, spec, N), Lf, resolution)
        errs.append(e)
        tab.rows.append([N, e])
    res.tables.append(tab)
    res.check("decreasing", all(b < a for a, b in zip(errs, errs[1:])),
              " > ".join(f"{e:.6g}" for e in errs))


def _semigroup_check(cfg, res):
    spec = build_model(cfg.model)
    f = parse_polynomial(str(cfg.param("f")), spec.m)
    t = float(cfg.param("t"))
    scfg = SdeConfig(dt=float(cfg.param("dt", 1e-3)), t_max=t,
                     corner_tol=float(cfg.param("corner_tol", 1e-6)))
    tol = float(cfg.param("tolerance", 0.01))
    est = coupled_expectation(f, spec, cfg.param("x0"), scfg, _reps(cfg, 100_000),
                              cfg.master_seed)
    tab = Table("estimates", ["level", "dt", "exact", "plain_mean", "plain_stderr", "cv_mean",
                              "cv_stderr"])
    tab.rows.append(["coarse", scfg.dt, est.exact, est.coarse_plain.mean, est.coarse_plain.stderr,
                     est.coarse_cv.mean, est.coarse_cv.stderr])
    tab.rows.append(["fine", scfg.dt / 2, est.exact, est.fine_plain.mean, est.fine_plain.stderr,
                     est.fine_cv.mean, est.fine_cv.stderr])
    res.tables.append(tab)
    gap = abs(est.coarse_plain.mean - est.exact)
    res.check("oracle_agreement", gap <= 3 * est.coarse_plain.stderr + tol,
              f"|gap| = {gap:.3g}, allowed {3 * est.coarse_plain.stderr + tol:.3g}")
    res.check("dt_halving_shrinks", est.shrinks,
              f"{est.coarse_error:.3g} -> {est.fine_error:.3g}")


def _trotter_check(cfg, res):
    spec = build_model(cfg.model)
    f = parse_polynomial(str(cfg.param("f")), spec.m)
    t = float(cfg.param("t"))
    resolution = int(cfg.param("grid", 100))
    exact = semigroup_matexp(f, spec, t, "L")
    tab = Table("errors", ["n_steps", "sup_error"])
    errs = []
    for n in _ints(cfg.param("n_steps")):
        e = sup_error_on_grid(trotter_product(f, spec, t, n), exact, resolution)
        errs.append(e)
        tab.rows.append([n, e])
    res.tables.append(tab)
    res.check("decreasing", all(b < a for a, b in zip(errs, errs[1:])),
              " > ".join(f"{e:.6g}" for e in errs))


def _absorption(cfg, res):
    spec = build_model(cfg.model)
    scfg = _sde_cfg(cfg)
    ab = estimate_absorption(cfg.param("x0"), spec, scfg, _reps(cfg, 10_000), cfg.master_seed)
    tab = Table("absorption", ["corner", "mean", "stderr", "reps", "censored_fraction"])
    for name, e in (("corner-0", ab.corner0), ("corner-1", ab.corner1)):
        tab.rows.append([name, e.mean, e.stderr, e.reps, e.censored_fraction])
    res.tables.append(tab)
    need = float(cfg.param("min_absorbed", 0.99))
    total = 1.0 - ab.censored_fraction
    res.check("absorbed_fraction", total >= need, f"{total:.4f} (need {need})")


def _bound_table(report):
    rec = report.to_record()
    header = ["experiment", "kind", "bound_value", "estimate", "stderr", "reps", "seed",
              "censored_fraction", "tolerance", "satisfied"]
    extra = sorted(rec["extra_bounds"])
    row = [rec[k] for k in header] + [rec["extra_bounds"][k] for k in extra]
    return Table("report", header + [f"{k}_bound" for k in extra], [row]), rec


def _bound_check(cfg, res):
    spec = build_model(cfg.model)
    rep = check_delta_bound(cfg.param("x0"), spec, float(cfg.param("alpha")), _sde_cfg(cfg, 200.0),
                            _reps(cfg, 10_000), cfg.master_seed)
    tab, rec = _bound_table(rep)
    res.tables.append(tab)
    res.check("lower_bound", rep.satisfied,
              f"estimate {rec['estimate']:.4f} +- {rec['stderr']:.4f} vs bound {rec['bound_value']:.4f}")


def _hitting_time(cfg, res):
    spec = build_model(cfg.model)
    scfg = _sde_cfg(cfg) if cfg.param("t_max") is not None else None
    rep = estimate_mean_hitting_time(cfg.param("x0"), spec, float(cfg.param("alpha")), scfg,
                                     _reps(cfg, 10_000), cfg.master_seed)
    tab, rec = _bound_table(rep)
    tab.header.insert(3, "sharper_bound")
    tab.rows[0].insert(3, rec["bound_value"])
    res.tables.append(tab)
    res.check("mean_exit_time_bound", rep.satisfied,
              f"E[T] {rec['estimate']:.4f} +- {rec['stderr']:.4f}; sharper {rec['bound_value']:.4f}, "
              f"stated {rec['extra_bounds']['stated']:.4f}")


def _stopping_check(cfg, res):
    spec = build_model(cfg.model)
    rep = optional_stopping_check(cfg.param("x0"), spec, float(cfg.param("alpha")),
                                  _sde_cfg(cfg, 50.0), _reps(cfg, 10_000), cfg.master_seed,
                                  tolerance=float(cfg.param("tolerance", 0.01)))
    tab, rec = _bound_table(rep)
    res.tables.append(tab)
    res.check("optional_stopping", rep.satisfied,
              f"alpha*p = {float(cfg.param('alpha')) * rec['estimate']:.4f} vs {rec['bound_value']:.4f}")


DISPATCH = {
    "validate": _validate, "simulate-chain": _simulate_chain, "simulate-sde": _simulate_sde,
    "generator-check": _generator_check, "semigroup-check": _semigroup_check,
    "trotter-check": _trotter_check, "absorption": _absorption, "bound-check": _bound_check,
    "hitting-time": _hitting_time, "stopping-check": _stopping_check,
}


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def emit_report(cfg: ExperimentConfig, manifest: dict, result: RunResult | None) -> list[Path]:
    """Write tables, trajectories and the manifest; return the paths written."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.experiment}_seed{cfg.master_seed}"
    written = []
    if result is not None:
        for tab in result.tables:
            p = out / f"{stem}_{tab.name}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(tab.header)
                w.writerows([[_cell(v) for v in row] for row in tab.rows])
            written.append(p)
        for name, tr in result.trajectories:
            p = out / f"{stem}_{name}.csv"
            tr.to_csv(p)
            written.append(p)
    manifest["artifacts"] = [p.name for p in written]
    mp = out / f"{stem}_manifest.json"
    mp.write_text(json.dumps(manifest, indent=2, default=_cell) + "\n")
    return written + [mp]


def run_experiment(cfg: ExperimentConfig) -> tuple[int, dict]:
    started = time.perf_counter()
    manifest = {
        "config": cfg.echo(), "master_seed": cfg.master_seed, "tool_version": _version(),
        "python": platform.python_version(), "numpy": np.__version__,
        "workers": default_workers(),
        "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    result = RunResult()
    status = EXIT_OK
    try:
        DISPATCH[cfg.experiment](cfg, result)
        if not all(c["passed"] for c in result.checks):
            status = EXIT_FAIL
    except (ConfigurationError, DomainError, AdmissibilityError) as exc:
        manifest["error"] = f"configuration: {exc}"
        status = EXIT_USAGE
    except (PatchdiffError, ArithmeticError, RuntimeError) as exc:
        manifest["error"] = f"internal: {type(exc).__name__}: {exc}"
        status = EXIT_FAIL
    manifest["checks"] = result.checks
    manifest["passed"] = status == EXIT_OK
    manifest["exit_status"] = status
    manifest["wall_time_s"] = round(time.perf_counter() - started, 3)
    emit_report(cfg, manifest, result)
    return status, manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patchdiff", description="Patch Wright-Fisher model experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="YAML model + parameter file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--reps", type=int, default=None, help="Monte Carlo replicates")
    p.add_argument("--out", default=None, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment, seed=args.seed, reps=args.reps, out=args.out)
    except ConfigurationError as exc:
        print(f"patchdiff: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        status, manifest = run_experiment(cfg)
    except OSError as exc:
        print(f"patchdiff: cannot write report: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for c in manifest["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  {c['detail']}")
    if "error" in manifest:
        print(f"patchdiff: {manifest['error']}", file=sys.stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command-line entry point.

    slgbsde <command> --config FILE [--out DIR] [--seed INT] [--paths INT] [--quiet]

Commands: validate, simulate, solve, scheme, girsanov, dominate, oracle,
report (all stages), list.  Exit status: 0 success, 2 configuration error,
3 validation failure, 4 solver or simulation failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys

import numpy as np
import scipy
import yaml

from . import __version__
from .catalogue import CATALOGUE, list_scenarios
from .config import ScenarioConfig, load_config
from .domination import domination_study, write_norm_csv
from .errors import (CertificationError, ConfigError, DimensionalityError, SimulationError,
                     SolverError, ValidationError)
from .forward import TimeGrid, moment_estimate_check, simulate
from .girsanov import (comparison_check, dominating_integrand, p0_moment, solve_dominating_bsde,
                       stochastic_exponential, write_moment_csv)
from .model import validate_problem
from .mollifier import mollify
from .oracles import ORACLE_DIR, X_HALF_WIDTH, build_oracle, load_oracle, oracle_file_exists, oracle_path
from .scheme import default_probe_grid, run_scheme
from .solver import solve_backward

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3, 4


class _Run:
    """Output directory, logging and the list of written artifacts."""

    def __init__(self, cfg: ScenarioConfig, quiet):
        self.cfg = cfg
        self.quiet = quiet
        self.out = cfg.output_dir
        os.makedirs(self.out, exist_ok=True)
        self.files = []

    def log(self, msg):
        if not self.quiet:
            print(msg, flush=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in r])


def _check_finite_rows(name, rows):
    for r in rows:
        for v in r:
            if isinstance(v, (float, np.floating)) and not np.isfinite(v):
                raise SolverError(f"non-finite value in report {name}")


def _ensemble(cfg: ScenarioConfig):
    p = cfg.problem
    grid = TimeGrid.uniform(p.horizon_T, cfg.steps_N)
    return simulate(p.diffusion, grid, p.start_t, p.start_x, cfg.paths, cfg.seed,
                    workers=cfg.workers)


def _oracle(cfg):
    sc = cfg.scenario
    if sc is None or not sc.has_oracle or not oracle_file_exists(sc.name):
        return None
    return load_oracle(sc.name)


# --------------------------------------------------------------------------
# stages

def stage_validate(run: _Run):
    cfg = run.cfg
    rep = validate_problem(cfg.problem, cfg.diagnostics["validate_samples"], cfg.seed)
    run.csv("validation.csv", ["check", "margin", "passed"], rep.rows())
    for name in rep.failures():
        run.log(f"assumption check failed: {name} (margin {rep.checks[name].margin:.3g})")
    if not rep.passed:
        raise ValidationError("problem failed the sampled assumption checks")
    run.log(f"validation passed ({rep.sample_count} samples)")
    return rep


def stage_simulate(run: _Run, save=True):
    ens = _ensemble(run.cfg)
    if save:
        ens.save(run.path("ensemble.bin"))
    rows = [(p, moment_estimate_check(ens, p)) for p in (2.0, 4.0)]
    run.csv("moments.csv", ["p", "normalised_moment"], rows)
    run.log(f"simulated {ens.path_count} paths on {ens.grid.N} steps")
    return ens


def _probe_rows(fields, probes, oracle):
    rows = []
    for k, xs in probes:
        y, z = fields.evaluate(k, xs)
        t = float(fields.grid.nodes[k])
        tab = oracle is not None and oracle.covers(t)
        for j in range(xs.shape[0]):
            for i in range(fields.n_components):
                inside = tab and abs(xs[j, 0]) <= X_HALF_WIDTH
                ref = float(oracle.value(t, xs[j, 0], i)) if inside else ""
                err = abs(float(y[j, i]) - ref) if inside else ""
                rows.append([t, " ".join(repr(float(c)) for c in xs[j]), i + 1,
                             float(y[j, i]), float(np.linalg.norm(z[j, i])), ref, err])
    return rows


def stage_solve(run: _Run, ens):
    cfg = run.cfg
    p = cfg.problem
    if cfg.mollify_n is not None:
        p = p.with_generator(mollify(p.generator, cfg.mollify_n, p.m, cfg.solver.quad_order))
    s = cfg.solver
    fields, stats = solve_backward(p, ens, s.basis, s.picard_tol, s.picard_max, s.alpha,
                                   s.control_variate)
    fields.write_text(run.path("fields.json"))
    run.csv("solve_stats.csv", ["k", "t", "picard_iterations", "final_residual"],
            [(k, float(ens.grid.nodes[k]), stats.picard_iterations[k],
              float(stats.picard_residuals[k][-1])) for k in range(ens.grid.N)])
    oracle = _oracle(cfg) if p.m == 1 else None
    probes = default_probe_grid(ens, cfg.probe_times, cfg.probe_states, cfg.probe_span)
    rows = _probe_rows(fields, probes, oracle)
    run.csv("solve_probes.csv", ["t", "x", "component", "y", "z_norm", "oracle", "abs_error"],
            rows)
    run.log(f"solved: Y0 = {fields.evaluate(0, p.start_x[None, :])[0][0].tolist()}")
    return fields, stats


def stage_scheme(run: _Run, ens):
    cfg = run.cfg
    probes = default_probe_grid(ens, cfg.probe_times, cfg.probe_states, cfg.probe_span)
    res = run_scheme(cfg.problem, cfg.schedule, cfg.solver, probes, cfg.seed, ensemble=ens,
                     identification=cfg.identification, log=None if run.quiet else run.log)
    rep = res.report
    for r in rep.n_rows:
        vals = [r.growth.C_hat, r.growth.lambda_hat, *r.y_moment, *r.z_energy]
        if r.identification is not None:
            vals += [r.identification.i1, r.identification.i2, r.identification.i3]
        _check_finite_rows("scheme_per_n", [vals])
    rep.write_csv(run.out)
    run.files += ["scheme_per_n.csv", "scheme_pairs.csv", "scheme_gap_vs_n.dat"]
    res.final_fields.write_text(run.path("fields_final.json"))
    oracle = _oracle(cfg) if cfg.problem.m == 1 else None
    run.csv("scheme_probes.csv", ["t", "x", "component", "y", "z_norm", "oracle", "abs_error"],
            _probe_rows(res.final_fields, probes, oracle))
    run.log(f"scheme gaps {[f'{g:.3g}' for g in rep.gaps()]}; converged={rep.converged}")
    return res


def stage_girsanov(run: _Run, res):
    cfg = run.cfg
    p = cfg.problem
    ens = res.ensemble
    basis = cfg.solver.basis
    kw = dict(picard_tol=cfg.solver.picard_tol, picard_max=cfg.solver.picard_max)
    moments, comp_rows = [], []
    bound_scale = p.generator.growth_C2
    for n in cfg.schedule.n_values:
        upper = solve_dominating_bsde(p, n, ens, basis, 1, **kw)
        lower = solve_dominating_bsde(p, n, ens, basis, -1, **kw)
        for i in range(p.n):
            cmp = comparison_check(res.fields[n], upper, res.probes, lower, component=i)
            for t, x, y, yb, v in cmp.rows:
                comp_rows.append([n, i + 1, t, " ".join(repr(c) for c in x), y, yb, v])
        h = dominating_integrand(upper, p, n)
        bound = bound_scale * (1.0 + n * np.sqrt(p.m)) + 1e-9
        sample = stochastic_exponential(ens, h, bound, f"dominating integrand, n={n}")
        moments += [(n, p0_moment(sample, q)) for q in cfg.diagnostics["p0_grid"]]
    write_moment_csv(run.path("girsanov_moments.csv"), moments)
    run.csv("comparison.csv", ["n", "component", "t", "x", "y", "ybar", "violation"], comp_rows)
    worst = max(r[-1] for r in comp_rows)
    run.log(f"comparison: max violation {worst:.3g}")
    return moments, worst


def stage_dominate(run: _Run):
    cfg = run.cfg
    p = cfg.problem
    d = cfg.diagnostics
    grid = TimeGrid.uniform(p.horizon_T, cfg.steps_N)
    t = float(grid.nodes[grid.first_index_at_or_after(d["domination_t"])])
    P = d["domination_paths"]
    ens0 = simulate(p.diffusion, grid, 0.0, p.start_x, P, cfg.seed, workers=cfg.workers)
    enst = simulate(p.diffusion, grid, t, p.start_x, P, cfg.seed + 1, workers=cfg.workers)
    study = domination_study(enst, ens0, t, d["domination_delta"])
    study.write_ratio_csv(run.path("domination_ratio.csv"))
    norm = study.norm(d["domination_q"], d["domination_k"])
    write_norm_csv(run.path("domination_norm.csv"),
                   [(d["domination_q"], d["domination_delta"], d["domination_k"], norm)])
    run.log(f"domination: L^{d['domination_q']:g} norm {norm:.4g}")
    return study, norm


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(run: _Run, command, status):
    cfg = run.cfg
    files = sorted(set(run.files))
    man = {
        "command": command,
        "status": status,
        "scenario": cfg.name,
        "config_sha256": cfg.digest,
        "config": cfg.raw,
        "seed": cfg.seed,
        "paths": cfg.paths,
        "versions": {"slgbsde": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "pyyaml": yaml.__version__, "python": platform.python_version()},
        "outputs": {f: _sha(os.path.join(run.out, f)) for f in files
                    if os.path.isfile(os.path.join(run.out, f))},
    }
    with open(os.path.join(run.out, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")


def run_scenario(config_path, out=None, seed=None, paths=None, quiet=True, command="report"):
    """Load a config and run the requested pipeline; returns the exit status."""
    try:
        cfg = load_config(config_path, seed=seed, paths=paths, out=out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = _Run(cfg, quiet)
    status = EXIT_OK
    try:
        if command == "validate":
            stage_validate(run)
        elif command == "simulate":
            stage_simulate(run)
        elif command == "solve":
            stage_solve(run, stage_simulate(run, save=False))
        elif command == "scheme":
            stage_scheme(run, stage_simulate(run, save=False))
        elif command == "girsanov":
            res = stage_scheme(run, stage_simulate(run, save=False))
            stage_girsanov(run, res)
        elif command == "dominate":
            stage_dominate(run)
        elif command == "report":
            stage_validate(run)
            ens = stage_simulate(run, save=False)
            res = stage_scheme(run, ens)
            if cfg.diagnostics["girsanov"]:
                stage_girsanov(run, res)
            if cfg.diagnostics["domination"]:
                stage_dominate(run)
        else:
            raise ConfigError(f"unknown command {command!r}", "command")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except (ValidationError, DimensionalityError) as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except (SolverError, SimulationError, CertificationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        status = EXIT_SOLVER
    write_manifest(run, command, status)
    return status


def run_oracle(config_path=None, scenario=None, out=None, quiet=False):
    names = []
    if scenario:
        names = [scenario]
    elif config_path:
        try:
            cfg = load_config(config_path, out=out)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if cfg.scenario is None:
            print("config error: scenario: oracle tables need a catalogue scenario",
                  file=sys.stderr)
            return EXIT_CONFIG
        names = [cfg.scenario.name]
    else:
        names = [s.name for s in CATALOGUE.values() if s.has_oracle]
    directory = out if out and not config_path else (out or ORACLE_DIR)
    for name in names:
        sc = CATALOGUE.get(name)
        if sc is None or not sc.has_oracle:
            print(f"config error: scenario: {name!r} has no reference solution", file=sys.stderr)
            return EXIT_CONFIG
        build_oracle(sc).write_csv(oracle_path(name, directory))
        if not quiet:
            print(f"wrote {oracle_path(name, directory)}")
    return EXIT_OK


def _parser():
    ap = argparse.ArgumentParser(prog="slgbsde", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("validate", "simulate", "solve", "scheme", "girsanov", "dominate", "report"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--paths", type=int)
        sp.add_argument("--quiet", action="store_true")
    sp = sub.add_parser("oracle", help="tabulate reference solutions")
    sp.add_argument("--config")
    sp.add_argument("--scenario")
    sp.add_argument("--out")
    sp.add_argument("--quiet", action="store_true")
    sub.add_parser("list", help="list catalogue scenarios")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, desc, has in list_scenarios():
            print(f"{name:32s} oracle={'yes' if has else 'no ':3s} {desc}")
        return EXIT_OK
    if args.command == "oracle":
        return run_oracle(args.config, args.scenario, args.out, args.quiet)
    return run_scenario(args.config, args.out, args.seed, args.paths, args.quiet, args.command)


if __name__ == "__main__":
    sys.exit(main())

"""Scenario configuration files (YAML).

Every section is optional except ``ensemble.seed`` and a problem source
(``scenario`` or ``problem``).  Unknown keys are rejected so that a
misspelt tolerance cannot silently fall back to its default.

Schema (defaults in brackets)::

    scenario: <catalogue name>
    problem:                      # inline alternative to ``scenario``
      diffusion: unit | bounded-elliptic
      generator: zero | linear | coupled | demo | damped-sine
      terminal: zero | identity | one | cos | square | arctan
      n_components: int [1]
      constants: {C2, Ch, gamma, Cg, gamma_g}
      T: float [1.0]
      x0: [floats] [0.0]
    grid: {N: int [scenario]}
    ensemble: {paths: int [scenario], seed: int (required), workers: int [1]}
    schedule: {n_values: [ints] [scenario], reuse_paths: bool [true]}
    solver: {basis: poly | pwlinear [poly], degree: int [scenario],
             ridge: float [1e-8], picard_tol: float [1e-10],
             picard_max: int [50], quad_order: int [scenario],
             control_variate: bool [true], mollify_n: int | null [null]}
    scheme: {tol: float [1e-2], truncation_k: float [10], alpha: float [2],
             ident_paths: int [10000], identification: bool [true]}
    probes: {times: int [5], states: int [21], span: float [3]}
    diagnostics: {validate_samples: int [10000], girsanov: bool [false],
                  domination: bool [false], p0_grid: [floats],
                  domination_t: float [0.5], domination_delta: float [0.1],
                  domination_q: float [2], domination_k: float [3],
                  domination_paths: int [100000]}
    output: {dir: path [out]}
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np
import yaml

from . import catalogue as cat
from .errors import ConfigError
from .girsanov import P0_GRID
from .model import GeneratorSpec, ProblemSpec, TerminalSpec
from .regression import BASIS_KINDS, BasisSpec
from .scheme import ApproximationSchedule, SolverConfig

_SCHEMA = {
    "scenario": None,
    "problem": {"diffusion", "generator", "terminal", "n_components", "constants", "T", "x0"},
    "grid": {"N"},
    "ensemble": {"paths", "seed", "workers"},
    "schedule": {"n_values", "reuse_paths"},
    "solver": {"basis", "degree", "ridge", "picard_tol", "picard_max", "quad_order",
               "control_variate", "mollify_n"},
    "scheme": {"tol", "truncation_k", "alpha", "ident_paths", "identification"},
    "probes": {"times", "states", "span"},
    "diagnostics": {"validate_samples", "girsanov", "domination", "p0_grid", "domination_t",
                    "domination_delta", "domination_q", "domination_k", "domination_paths"},
    "output": {"dir"},
}
_CONSTANTS = {"C2", "Ch", "gamma", "Cg", "gamma_g"}

_DIFFUSIONS = {"unit": lambda: cat.unit_diffusion(1),
               "bounded-elliptic": cat.bounded_elliptic_diffusion}
_GENERATORS = {"zero": cat._zero_gen, "linear": cat._linear_gen, "coupled": cat._coupled_gen,
               "demo": cat._demo_gen, "damped-sine": cat._elliptic_gen}
_TERMINALS = {"zero": cat._zero_terminal,
              "identity": lambda x, i: x[:, 0],
              "one": lambda x, i: np.ones(x.shape[0]),
              "cos": lambda x, i: np.cos(x[:, 0]),
              "square": lambda x, i: x[:, 0] ** 2,
              "arctan": lambda x, i: np.arctan(x[:, 0])}


@dataclass
class ScenarioConfig:
    name: str
    problem: ProblemSpec
    steps_N: int
    paths: int
    seed: int
    workers: int
    schedule: ApproximationSchedule
    solver: SolverConfig
    mollify_n: object
    probe_times: int
    probe_states: int
    probe_span: float
    identification: bool
    diagnostics: dict
    output_dir: str
    scenario: object  # catalogue entry or None
    raw: dict
    digest: str


def _need(cond, msg, field):
    if not cond:
        raise ConfigError(f"{field}: {msg}", field)


def _num(d, key, field, default, kind=float, lo=None, hi=None, open_lo=False):
    if key not in d or d[key] is None:
        if default is ConfigError:
            raise ConfigError(f"{field}.{key}: required field missing", f"{field}.{key}")
        return default
    v = d[key]
    if kind is int:
        _need(isinstance(v, int) and not isinstance(v, bool), "must be an integer", f"{field}.{key}")
    elif kind is bool:
        _need(isinstance(v, bool), "must be true or false", f"{field}.{key}")
        return v
    else:
        _need(isinstance(v, (int, float)) and not isinstance(v, bool), "must be a number",
              f"{field}.{key}")
        v = float(v)
    if lo is not None:
        _need(v > lo if open_lo else v >= lo, f"must be {'>' if open_lo else '>='} {lo}",
              f"{field}.{key}")
    if hi is not None:
        _need(v <= hi, f"must be <= {hi}", f"{field}.{key}")
    return v


def _check_keys(raw):
    _need(isinstance(raw, dict), "top level must be a mapping", "<root>")
    for key, val in raw.items():
        _need(key in _SCHEMA, "unknown key", key)
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        _need(isinstance(val, dict), "must be a mapping", key)
        for sub in val:
            _need(sub in allowed, "unknown key", f"{key}.{sub}")
    cons = raw.get("problem", {}).get("constants", {})
    _need(isinstance(cons, dict), "must be a mapping", "problem.constants")
    for sub in cons:
        _need(sub in _CONSTANTS, "unknown key", f"problem.constants.{sub}")


def _inline_problem(p):
    f = "problem"
    for key, reg in (("diffusion", _DIFFUSIONS), ("generator", _GENERATORS),
                     ("terminal", _TERMINALS)):
        _need(key in p, "required field missing", f"{f}.{key}")
        _need(p[key] in reg, f"unknown id {p[key]!r}; choose from {sorted(reg)}", f"{f}.{key}")
    nc = _num(p, "n_components", f, 1, int, 1)
    c = p.get("constants", {})
    cf = "problem.constants"
    C2 = _num(c, "C2", cf, 0.0, float, 0.0)
    Ch = _num(c, "Ch", cf, 1.0, float, 0.0)
    gam = _num(c, "gamma", cf, 1.0, float, 0.0, open_lo=True)
    Cg = _num(c, "Cg", cf, 1.0, float, 0.0)
    gam_g = _num(c, "gamma_g", cf, 1.0, float, 0.0)
    T = _num(p, "T", f, 1.0, float, 0.0, open_lo=True)
    dif = _DIFFUSIONS[p["diffusion"]]()
    x0 = p.get("x0", [0.0] * dif.dim_m)
    _need(isinstance(x0, list) and len(x0) == dif.dim_m, f"must list {dif.dim_m} numbers",
          f"{f}.x0")
    if p["generator"] == "coupled" or p["generator"] == "demo":
        _need(nc == 2, "this generator needs n_components = 2", f"{f}.n_components")
    gen = GeneratorSpec(_GENERATORS[p["generator"]], nc, C2, Ch, gam, None, p["generator"])
    term = TerminalSpec(_TERMINALS[p["terminal"]], Cg, gam_g, p["terminal"])
    return ProblemSpec(dif, gen, term, T, np.array(x0, dtype=float), name="inline")


def parse_config(raw: dict, text: str = "") -> ScenarioConfig:
    _check_keys(raw)
    sc = None
    if "problem" in raw:
        _need("scenario" not in raw, "give either scenario or problem, not both", "scenario")
        problem = _inline_problem(raw["problem"])
        name = "inline"
    else:
        _need("scenario" in raw, "required field missing (or give problem)", "scenario")
        try:
            sc = cat.get_scenario(raw["scenario"])
        except KeyError as exc:
            raise ConfigError(f"scenario: {exc.args[0]}", "scenario") from None
        problem, name = sc.problem, sc.name

    d_N = sc.steps_N if sc else 50
    d_paths = sc.paths if sc else 100_000
    d_deg = sc.basis_degree if sc else 5
    d_sched = sc.schedule if sc else (2, 4, 8, 16, 32)
    d_quad = sc.quad_order if sc else 8

    grid = raw.get("grid", {})
    N = _num(grid, "N", "grid", d_N, int, 1)
    ens = raw.get("ensemble")
    _need(isinstance(ens, dict) and "seed" in ens, "required field missing", "ensemble.seed")
    seed = _num(ens, "seed", "ensemble", ConfigError, int, 0)
    paths = _num(ens, "paths", "ensemble", d_paths, int, 2)
    workers = _num(ens, "workers", "ensemble", 1, int, 1)

    sch = raw.get("schedule", {})
    nv = sch.get("n_values", list(d_sched))
    _need(isinstance(nv, list) and all(isinstance(v, int) for v in nv), "must be a list of integers",
          "schedule.n_values")
    try:
        schedule = ApproximationSchedule(tuple(nv), _num(sch, "reuse_paths", "schedule", True, bool))
    except ValueError as exc:
        raise ConfigError(f"schedule.n_values: {exc}", "schedule.n_values") from None

    so = raw.get("solver", {})
    kind = so.get("basis", "poly")
    _need(kind in BASIS_KINDS, f"must be one of {BASIS_KINDS}", "solver.basis")
    basis = BasisSpec(kind, _num(so, "degree", "solver", d_deg, int, 1),
                      _num(so, "ridge", "solver", 1e-8, float, 0.0))
    mollify_n = so.get("mollify_n")
    if mollify_n is not None:
        mollify_n = _num(so, "mollify_n", "solver", None, int, 1)
    sm = raw.get("scheme", {})
    solver = SolverConfig(
        steps_N=N, paths=paths, basis=basis,
        picard_tol=_num(so, "picard_tol", "solver", 1e-10, float, 0.0, open_lo=True),
        picard_max=_num(so, "picard_max", "solver", 50, int, 1),
        quad_order=_num(so, "quad_order", "solver", d_quad, int, 2),
        workers=workers,
        alpha=_num(sm, "alpha", "scheme", 2.0, float, 1.0, open_lo=True),
        control_variate=_num(so, "control_variate", "solver", True, bool),
        tol=_num(sm, "tol", "scheme", 1e-2, float, 0.0, open_lo=True),
        truncation_k=_num(sm, "truncation_k", "scheme", 10.0, float, 0.0, open_lo=True),
        ident_paths=_num(sm, "ident_paths", "scheme", 10_000, int, 1))
    pr = raw.get("probes", {})
    dg = raw.get("diagnostics", {})
    p0 = dg.get("p0_grid", list(P0_GRID))
    _need(isinstance(p0, list) and all(isinstance(v, (int, float)) and 1 < v < 2 for v in p0),
          "must list numbers in (1, 2)", "diagnostics.p0_grid")
    diagnostics = {
        "validate_samples": _num(dg, "validate_samples", "diagnostics", 10_000, int, 1),
        "girsanov": _num(dg, "girsanov", "diagnostics", False, bool),
        "domination": _num(dg, "domination", "diagnostics", False, bool),
        "p0_grid": tuple(float(v) for v in p0),
        "domination_t": _num(dg, "domination_t", "diagnostics", 0.5, float, 0.0),
        "domination_delta": _num(dg, "domination_delta", "diagnostics", 0.1, float, 0.0,
                                 open_lo=True),
        "domination_q": _num(dg, "domination_q", "diagnostics", 2.0, float, 1.0, open_lo=True),
        "domination_k": _num(dg, "domination_k", "diagnostics", 3.0, float, 0.0, open_lo=True),
        "domination_paths": _num(dg, "domination_paths", "diagnostics", 100_000, int, 2),
    }
    out = raw.get("output", {}).get("dir", "out")
    _need(isinstance(out, str) and out, "must be a non-empty path", "output.dir")
    return ScenarioConfig(
        name, problem, N, paths, seed, workers, schedule, solver, mollify_n,
        _num(pr, "times", "probes", 5, int, 1), _num(pr, "states", "probes", 21, int, 1),
        _num(pr, "span", "probes", 3.0, float, 0.0, open_lo=True),
        _num(sm, "identification", "scheme", True, bool), diagnostics, out, sc, raw,
        hashlib.sha256(text.encode()).hexdigest())


def load_config(path, seed=None, paths=None, out=None) -> ScenarioConfig:
    """Read, validate and apply command-line overrides."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "<file>") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}", "<file>") from None
    if seed is not None or paths is not None:
        raw = dict(raw)
        raw["ensemble"] = dict(raw.get("ensemble") or {})
        if seed is not None:
            raw["ensemble"]["seed"] = int(seed)
        if paths is not None:
            raw["ensemble"]["paths"] = int(paths)
    cfg = parse_config(raw, text)
    if out is not None:
        cfg = replace(cfg, output_dir=out)
    return cfg

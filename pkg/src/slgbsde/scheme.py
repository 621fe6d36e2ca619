"""The approximation scheme across a mollification schedule.

For every index ``n`` the driver is replaced by its Lipschitz approximant,
the system is solved backward, and the resulting fields are compared:

* pointwise Cauchy behaviour of ``Y^n`` on a finite probe grid,
* ``L^2`` distance of the ``Z`` fields along the paths,
* a power-law growth fit of ``|Y^n(t, x)|`` in ``1 + |x|``,
* the empirical uniform estimates ``E[sup|Y|^alpha]`` and ``E[int |Z|^2]``,
* identification residuals splitting ``H_n - H`` at the ``n``-solution
  into a bounded part and a tail, plus the drift of ``H`` between the
  ``n``-solution and the largest-``n`` solution.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forward import PathEnsemble, TimeGrid, simulate
from .model import ProblemSpec
from .mollifier import mollify
from .regression import BasisSpec
from .solver import ValueFields, solve_backward

_IDENT_CHUNK = 1 << 15


@dataclass(frozen=True)
class ApproximationSchedule:
    n_values: tuple = (2, 4, 8, 16, 32)
    reuse_paths: bool = True

    def __post_init__(self):
        vals = tuple(int(v) for v in self.n_values)
        if not vals:
            raise ValueError("schedule must be non-empty")
        if any(v < 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("schedule must be strictly increasing positive integers")
        object.__setattr__(self, "n_values", vals)


@dataclass(frozen=True)
class SolverConfig:
    steps_N: int = 50
    paths: int = 100_000
    basis: BasisSpec = BasisSpec()
    picard_tol: float = 1e-10
    picard_max: int = 50
    quad_order: int = 8
    workers: int = 1
    alpha: float = 2.0
    control_variate: bool = True
    tol: float = 1e-2  # convergence threshold on the probe sup-gap
    truncation_k: float = 10.0
    ident_paths: Optional[int] = 10_000


@dataclass
class ProbeGrid:
    """Time indices and, per index, the probed states ``(Q, m)``."""

    ks: tuple
    xs: tuple

    def __iter__(self):
        return iter(zip(self.ks, self.xs))


def default_probe_grid(ensemble: PathEnsemble, times=5, states=21, span=3.0) -> ProbeGrid:
    """``times`` nodes ``k = j N / times`` and ``states`` points over
    ``mean +- span * std`` of ``X_{t_k}`` along the diagonal direction."""
    N = ensemble.grid.N
    ks, xs = [], []
    for j in range(times):
        k = int(round(j * N / times))
        x = ensemble.states[k]
        mu, sd = x.mean(axis=0), x.std(axis=0)
        off = np.linspace(-span, span, states)[:, None] * sd[None, :]
        ks.append(k)
        xs.append(mu[None, :] + off)
    return ProbeGrid(tuple(ks), tuple(xs))


def probe_values(fields: ValueFields, probes: ProbeGrid):
    """Stacked ``Y`` values ``(times, states, n)`` at the probes."""
    return np.stack([fields.evaluate(k, x)[0] for k, x in probes])


@dataclass
class GrowthFit:
    C_hat: float
    lambda_hat: float
    degenerate: bool = False


def growth_bound_fit(fields: ValueFields, probe_xs, t, component=0) -> GrowthFit:
    """Least-squares fit ``log|Y(t, x)| ~ log C + lambda log(1 + |x|)``."""
    k = fields.grid.index_of(t)
    xs = np.asarray(probe_xs, dtype=float).reshape(-1, fields.dim_m)
    v = np.abs(fields.y_at(k, xs, component))
    keep = v > 1e-12
    if not keep.any():
        return GrowthFit(0.0, 0.0, True)
    r = np.log1p(np.linalg.norm(xs[keep], axis=1))
    if keep.sum() < 2 or np.ptp(r) == 0:
        raise ValueError("growth fit needs at least two distinct |x| with nonzero values")
    slope, icpt = np.polyfit(r, np.log(v[keep]), 1)
    return GrowthFit(float(np.exp(icpt)), float(slope), False)


def default_growth_probes(ensemble: PathEnsemble, k, points=8):
    """One decade of distances from the mean, up to three standard deviations."""
    x = ensemble.states[k]
    mu, sd = x.mean(axis=0), x.std(axis=0)
    return mu[None, :] + np.geomspace(0.3, 3.0, points)[:, None] * sd[None, :]


def _fields_along(fields: ValueFields, X):
    """``(Y (N+1, P, n), Z (N, P, n, m))`` evaluated along the states."""
    N = fields.grid.N
    Y = np.stack([fields.evaluate(k, X[k])[0] for k in range(N + 1)])
    Z = np.stack([fields.evaluate(k, X[k])[1] for k in range(N)])
    return Y, Z


def uniform_estimates_check(fields: ValueFields, ensemble: PathEnsemble, alpha=2.0):
    """Empirical ``E[sup_k |Y^i_k|^alpha]`` and ``E[sum_k |Z^i_k|^2 dt]``."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if not np.array_equal(fields.grid.nodes, ensemble.grid.nodes):
        raise ValueError("fields and ensemble must share the grid")
    Y, Z = _fields_along(fields, ensemble.states)
    y_moment = np.mean(np.max(np.abs(Y) ** alpha, axis=0), axis=0)
    dt = ensemble.grid.dt
    z_energy = np.mean(np.einsum("k,kpi->pi", dt, np.sum(Z ** 2, axis=3)), axis=0)
    return y_moment, z_energy


@dataclass
class IdentificationResidual:
    i1: float
    i2: float
    i3: float

    @property
    def total(self):
        return self.i1 + self.i2 + self.i3


def driver_identification_residual(fields_n: ValueFields, gen_n, final_fields: ValueFields,
                                   gen_raw, ensemble: PathEnsemble, truncation_k,
                                   max_paths=None) -> IdentificationResidual:
    """Empirical ``E int`` of the three parts of ``H_n(Y^n) - H(Y*)``.

    ``i1``: ``|H_n - H|`` at the ``n``-solution on ``{|Y| + |Z| < k}``;
    ``i2``: the same on the complement; ``i3``: ``|H(Y^n) - H(Y*)|`` with
    ``Y*`` the largest-``n`` fields.  Each is summed over components.
    """
    X = ensemble.states
    if max_paths is not None:
        X = X[:, :max_paths]
    grid = ensemble.grid
    N, P = grid.N, X.shape[1]
    i1 = i2 = i3 = 0.0
    for k in range(N):
        dt = float(grid.dt[k])
        t = float(grid.nodes[k])
        y, z = fields_n.evaluate(k, X[k])
        ys, zs = final_fields.evaluate(k, X[k])
        size = np.abs(y).sum(axis=1) + np.abs(z).reshape(P, -1).sum(axis=1)
        small = size < truncation_k
        for lo in range(0, P, _IDENT_CHUNK):
            sl = slice(lo, min(P, lo + _IDENT_CHUNK))
            x = X[k][sl]
            h_n = gen_n.evaluate_all(t, x, y[sl], z[sl])
            h = gen_raw.evaluate_all(t, x, y[sl], z[sl])
            h_s = gen_raw.evaluate_all(t, x, ys[sl], zs[sl])
            d = np.abs(h_n - h).sum(axis=1)
            i1 += dt * float(np.sum(d[small[sl]]))
            i2 += dt * float(np.sum(d[~small[sl]]))
            i3 += dt * float(np.sum(np.abs(h - h_s)))
    return IdentificationResidual(i1 / P, i2 / P, i3 / P)


@dataclass
class PairRow:
    n_a: int
    n_b: int
    sup_gap: np.ndarray  # per component
    z_gap: np.ndarray  # per component


@dataclass
class NRow:
    n: int
    growth: GrowthFit
    y_moment: np.ndarray
    z_energy: np.ndarray
    identification: IdentificationResidual = None
    picard_max_iterations: int = 0


@dataclass
class ConvergenceReport:
    n_rows: list
    pair_rows: list
    probe_values: dict = field(repr=False)
    tol: float = 1e-2
    converged: bool = False

    @property
    def final_gap(self):
        return float(self.pair_rows[-1].sup_gap.max()) if self.pair_rows else float("nan")

    def gaps(self):
        return [float(r.sup_gap.max()) for r in self.pair_rows]

    def write_csv(self, out_dir, prefix="scheme"):
        os.makedirs(out_dir, exist_ok=True)
        nc = len(self.n_rows[0].y_moment)
        with open(os.path.join(out_dir, f"{prefix}_per_n.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "C_hat", "lambda_hat", "degenerate"]
                       + [f"y_moment_{i + 1}" for i in range(nc)]
                       + [f"z_energy_{i + 1}" for i in range(nc)]
                       + ["i1", "i2", "i3", "picard_max_iterations"])
            for r in self.n_rows:
                idr = r.identification or IdentificationResidual(0.0, 0.0, 0.0)
                w.writerow([r.n, repr(r.growth.C_hat), repr(r.growth.lambda_hat),
                            int(r.growth.degenerate)]
                           + [repr(float(v)) for v in r.y_moment]
                           + [repr(float(v)) for v in r.z_energy]
                           + [repr(idr.i1), repr(idr.i2), repr(idr.i3), r.picard_max_iterations])
        with open(os.path.join(out_dir, f"{prefix}_pairs.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_a", "n_b"] + [f"sup_gap_{i + 1}" for i in range(nc)]
                       + [f"z_gap_{i + 1}" for i in range(nc)])
            for r in self.pair_rows:
                w.writerow([r.n_a, r.n_b] + [repr(float(v)) for v in r.sup_gap]
                           + [repr(float(v)) for v in r.z_gap])
        with open(os.path.join(out_dir, f"{prefix}_gap_vs_n.dat"), "w") as fh:
            for r in self.pair_rows:
                fh.write(f"{r.n_b} {float(r.sup_gap.max())!r}\n")


@dataclass
class SchemeResult:
    final_fields: ValueFields
    report: ConvergenceReport
    fields: dict  # n -> ValueFields
    ensemble: PathEnsemble
    probes: ProbeGrid


def _ensemble(problem, config, seed):
    grid = TimeGrid.uniform(problem.horizon_T, config.steps_N)
    return simulate(problem.diffusion, grid, problem.start_t, problem.start_x, config.paths,
                    seed, workers=config.workers)


def _z_gap(fa: ValueFields, fb: ValueFields, ensemble: PathEnsemble):
    X, dt = ensemble.states, ensemble.grid.dt
    tot = np.zeros(fa.n_components)
    for k in range(ensemble.grid.N):
        za = fa.evaluate(k, X[k])[1]
        zb = fb.evaluate(k, X[k])[1]
        tot += dt[k] * np.mean(np.sum((za - zb) ** 2, axis=2), axis=0)
    return np.sqrt(tot)


def run_scheme(problem: ProblemSpec, schedule: ApproximationSchedule = ApproximationSchedule(),
               config: SolverConfig = SolverConfig(), eval_grid: Optional[ProbeGrid] = None,
               seed=0, ensemble: Optional[PathEnsemble] = None, growth_t=None,
               growth_xs=None, identification=True, log=None) -> SchemeResult:
    """Solve for every ``n`` of the schedule and assemble the report.

    With ``reuse_paths`` all solves share one ensemble (common random
    numbers); otherwise index ``j`` of the schedule uses seed ``seed + j``
    and cross-``n`` quantities are evaluated on the first ensemble.
    """
    base = ensemble if ensemble is not None else _ensemble(problem, config, seed)
    probes = eval_grid if eval_grid is not None else default_probe_grid(base)
    grid = base.grid
    k_growth = grid.index_of(growth_t) if growth_t is not None else grid.N // 2
    gxs = growth_xs if growth_xs is not None else default_growth_probes(base, k_growth)

    fields, stats, gens = {}, {}, {}
    for j, n in enumerate(schedule.n_values):
        ens = base if schedule.reuse_paths else _ensemble(problem, config, seed + j)
        gen_n = mollify(problem.generator, n, problem.m, config.quad_order)
        f, st = solve_backward(problem.with_generator(gen_n), ens, config.basis,
                               config.picard_tol, config.picard_max, config.alpha,
                               config.control_variate)
        fields[n], stats[n], gens[n] = f, st, gen_n
        if log:
            log(f"n={n}: max Picard iterations {max(st.picard_iterations, default=0)}")

    ns = schedule.n_values
    final = fields[ns[-1]]
    pv = {n: probe_values(fields[n], probes) for n in ns}
    pairs = []
    for a, b in zip(ns, ns[1:]):
        gap = np.abs(pv[a] - pv[b]).max(axis=(0, 1))
        pairs.append(PairRow(a, b, gap, _z_gap(fields[a], fields[b], base)))

    rows = []
    t_g = float(grid.nodes[k_growth])
    for n in ns:
        fit = growth_bound_fit(fields[n], gxs, t_g)
        ym, ze = uniform_estimates_check(fields[n], base, config.alpha)
        idr = None
        if identification:
            idr = driver_identification_residual(fields[n], gens[n], final, problem.generator,
                                                 base, config.truncation_k, config.ident_paths)
        rows.append(NRow(n, fit, ym, ze, idr, max(stats[n].picard_iterations, default=0)))

    converged = bool(pairs) and float(pairs[-1].sup_gap.max()) < config.tol
    if not pairs:
        converged = False
    report = ConvergenceReport(rows, pairs, pv, config.tol, converged)
    return SchemeResult(final, report, fields, base, probes)

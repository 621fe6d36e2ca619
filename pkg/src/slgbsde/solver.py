"""Backward regression Monte Carlo for coupled Lipschitz BSDE systems.

On the grid ``t_0 < ... < t_N`` the scheme is

    Y_N   = g(X_N)
    Z_k   = E[(Y_{k+1} - E[Y_{k+1} | X_k]) dB_k | X_k] / dt_k
    Y_k   = E[Y_{k+1} | X_k] + dt_k H(t_k, X_k, Y_k, Z_k)

explicit in ``Z`` and implicit in ``Y``; the implicit relation is solved by
a Picard loop over all components jointly.  Conditional expectations are
ridge regressions on a per-node basis (see :mod:`.regression`), and the
fitted coefficients are kept as the deterministic fields ``(t_k, x) ->
(Y, Z)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, StepFailure, ValidationError
from .forward import PathEnsemble, TimeGrid
from .model import ProblemSpec
from .regression import BasisSpec, NodeBasis, fit_node_basis, fit_regression

FORMAT_TAG = "slgbsde-value-fields-1"


@dataclass
class NodeFields:
    basis: NodeBasis
    y_coef: np.ndarray  # (K, n)
    z_coef: np.ndarray  # (K, n*m)


@dataclass
class ValueFields:
    """Coefficients of ``Y`` and ``Z`` per time node.

    The terminal node carries the fit of ``g``; its ``Z`` coefficients are
    zero since the scheme never estimates ``Z`` at ``T``.
    """

    grid: TimeGrid
    basis: BasisSpec
    n_components: int
    dim_m: int
    nodes: list

    def evaluate(self, k, x):
        """Batch evaluation: ``x (P, m) -> (y (P, n), z (P, n, m))``."""
        if not 0 <= k <= self.grid.N:
            raise IndexError(f"time index {k} outside 0..{self.grid.N}")
        node = self.nodes[k]
        A = node.basis.design(np.asarray(x, dtype=float))
        y = A @ node.y_coef
        z = (A @ node.z_coef).reshape(-1, self.n_components, self.dim_m)
        return y, z

    def y_at(self, k, x, i=0):
        return self.evaluate(k, x)[0][:, i]

    def to_dict(self):
        return {
            "format": FORMAT_TAG,
            "nodes_t": [float(t) for t in self.grid.nodes],
            "basis": {"kind": self.basis.kind, "degree_or_bins": self.basis.degree_or_bins,
                      "ridge_lambda": self.basis.ridge_lambda},
            "n_components": self.n_components,
            "dim_m": self.dim_m,
            "fields": [{"k": k, "basis": nd.basis.to_dict(),
                        "y_coef": nd.y_coef.tolist(), "z_coef": nd.z_coef.tolist()}
                       for k, nd in enumerate(self.nodes)],
        }

    def write_text(self, path):
        """JSON text; floats are written with round-trip precision."""
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read_text(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        if d.get("format") != FORMAT_TAG:
            raise ValidationError(f"{path} is not a value-field file")
        b = d["basis"]
        nodes = []
        for f in d["fields"]:
            nb = NodeBasis.from_dict(f["basis"])
            nodes.append(NodeFields(nb, np.array(f["y_coef"], dtype=float).reshape(nb.size, -1),
                                    np.array(f["z_coef"], dtype=float).reshape(nb.size, -1)))
        return cls(TimeGrid(np.array(d["nodes_t"])),
                   BasisSpec(b["kind"], int(b["degree_or_bins"]), float(b["ridge_lambda"])),
                   int(d["n_components"]), int(d["dim_m"]), nodes)


def evaluate_fields(fields: ValueFields, k, x):
    """``(y (n,), z (n, m))`` at a single state; states outside the sampled
    hull of node ``k`` are clamped to it."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, fields.dim_m)
    y, z = fields.evaluate(k, x)
    return y[0], z[0]


@dataclass
class SolutionStats:
    picard_iterations: list
    picard_residuals: list  # residual history per step
    max_residual: float
    condition_numbers: list
    y_moment: np.ndarray  # E[sup_k |Y^i_k|^alpha]
    z_energy: np.ndarray  # E[sum_k |Z^i_k|^2 dt_k]
    alpha: float = 2.0
    pathwise_y0: np.ndarray = field(default=None, repr=False)


def _picard(E, dt, drive, Y0, tol, max_iter, k):
    """Fixed point of ``Y = E + dt * drive(Y)``."""
    Y = Y0
    hist = []
    for _ in range(max_iter):
        Y_new = E + dt * drive(Y)
        r = float(np.max(np.abs(Y_new - Y))) if Y.size else 0.0
        hist.append(r)
        if not np.isfinite(r):
            raise StepFailure(f"non-finite Picard iterate at step {k}", k, hist)
        Y = Y_new
        if r <= tol:
            return Y, hist
        if len(hist) >= 4 and hist[-1] > hist[-2] > hist[-3] > hist[-4]:
            raise StepFailure(f"Picard residual grows at step {k}; reduce dt", k, hist)
    raise StepFailure(f"Picard iteration did not reach {tol:g} in {max_iter} "
                      f"iterations at step {k}", k, hist)


def solve_backward(problem: ProblemSpec, ensemble: PathEnsemble, basis: BasisSpec = BasisSpec(),
                   picard_tol=1e-10, picard_max=50, alpha=2.0, control_variate=True):
    """Run the backward scheme on ``ensemble``; returns ``(fields, stats)``.

    The generator of ``problem`` must be Lipschitz in ``(y, z)`` (a
    mollified generator, or a raw one the caller vouches for).  With
    ``control_variate`` the conditional expectation of ``Y_{k+1}`` is
    regressed a second time with the martingale term ``Z_k dB_k`` removed.
    """
    grid = ensemble.grid
    T = problem.horizon_T
    if abs(grid.T - T) > 1e-12 * max(1.0, T):
        raise ValidationError(f"ensemble horizon {grid.T} differs from problem horizon {T}")
    if ensemble.m != problem.m:
        raise ValidationError("ensemble and problem disagree on the state dimension")
    gen = problem.generator
    n, m, N = problem.n, problem.m, grid.N
    X, dB = ensemble.states, ensemble.increments
    P = ensemble.path_count

    Y = problem.terminal_values(X[N])
    if not np.all(np.isfinite(Y)):
        raise SolverError("terminal condition is not finite on the ensemble")
    term = fit_regression(X[N], Y, basis)
    nodes = [None] * (N + 1)
    nodes[N] = NodeFields(term.node_basis, term.coef, np.zeros((term.coef.shape[0], n * m)))
    conds = [term.condition]
    iters, hists = [0] * N, [[] for _ in range(N)]
    sup_y = np.abs(Y) ** alpha
    z_en = np.zeros(n)

    for k in range(N - 1, -1, -1):
        dt = float(grid.dt[k])
        tk = float(grid.nodes[k])
        xk = X[k]
        nb = fit_node_basis(xk, basis)
        A = nb.design(xk)
        fe = fit_regression(xk, Y, basis, nb, A)
        resid = Y - A @ fe.coef
        zt = (resid[:, :, None] * dB[k][:, None, :] / dt).reshape(P, n * m)
        fz = fit_regression(xk, zt, basis, nb, A)
        Z = (A @ fz.coef).reshape(P, n, m)
        if control_variate:
            # Z . dB has zero conditional mean; removing it shrinks the
            # residual variance of the E[Y_{k+1} | X_k] regression
            fe = fit_regression(xk, Y - np.einsum("pij,pj->pi", Z, dB[k]), basis, nb, A)
        E = A @ fe.coef

        if hasattr(gen, "freeze"):
            drive = gen.freeze(tk, xk, Z)
        else:
            def drive(Yc, tk=tk, xk=xk, Z=Z):
                return gen.evaluate_all(tk, xk, Yc, Z)
        Y, hist = _picard(E, dt, drive, Y, picard_tol, picard_max, k)
        fy = fit_regression(xk, Y, basis, nb, A)
        nodes[k] = NodeFields(nb, fy.coef, fz.coef)
        iters[k], hists[k] = len(hist), hist
        conds.append(fe.condition)
        sup_y = np.maximum(sup_y, np.abs(Y) ** alpha)
        z_en += np.mean(np.sum(Z ** 2, axis=2), axis=0) * dt

    fields = ValueFields(grid, basis, n, m, nodes)
    final_res = [h[-1] if h else 0.0 for h in hists]
    stats = SolutionStats(iters, hists, float(max(final_res, default=0.0)), conds,
                          sup_y.mean(axis=0), z_en, float(alpha), Y)
    return fields, stats

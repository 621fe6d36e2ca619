"""Least-squares estimators of conditional expectations ``E[. | X_tk]``.

Two bases are available.  ``poly``: total-degree products of normalised
probabilists' Hermite polynomials in the standardised state (orthonormal
under a standard Gaussian, which keeps the design well conditioned).
``pwlinear``: an intercept plus additive hat functions on per-dimension
quantile knots.  States are clamped to the sampled hull before either
basis is evaluated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import hermite_e

from .errors import SolverError

BASIS_KINDS = ("poly", "pwlinear")


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "poly"
    degree_or_bins: int = 5
    ridge_lambda: float = 1e-8

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"basis kind must be one of {BASIS_KINDS}")
        if self.degree_or_bins < 1:
            raise ValueError("degree_or_bins must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")


@dataclass(frozen=True)
class NodeBasis:
    """A basis fitted to the states of one time node."""

    kind: str
    degree_or_bins: int
    center: np.ndarray
    scale: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    active: np.ndarray
    knots: tuple = field(default=())

    @property
    def multi_indices(self):
        return _multi_indices(int(self.active.sum()), self.degree_or_bins)

    @property
    def size(self):
        if self.kind == "poly":
            return len(self.multi_indices)
        return 1 + sum(len(k) - 1 for k in self.knots)

    def clamp(self, x):
        return np.clip(x, self.lo, self.hi)

    def design(self, x):
        x = self.clamp(np.asarray(x, dtype=float))
        P = x.shape[0]
        act = np.flatnonzero(self.active)
        if self.kind == "poly":
            xi = (x[:, act] - self.center[act]) / self.scale[act]
            deg = self.degree_or_bins
            # He_j(xi) / sqrt(j!) for every active dimension
            tables = []
            for c in range(len(act)):
                cols = [hermite_e.hermeval(xi[:, c], np.eye(deg + 1)[j]) / math.sqrt(math.factorial(j))
                        for j in range(deg + 1)]
                tables.append(np.stack(cols, axis=1))
            out = np.ones((P, self.size))
            for col, alpha in enumerate(self.multi_indices):
                for c, a in enumerate(alpha):
                    if a:
                        out[:, col] *= tables[c][:, a]
            return out
        cols = [np.ones(P)]
        for c, knots in zip(act, self.knots):
            cols.extend(_hats(x[:, c], knots)[:, 1:].T)
        return np.stack(cols, axis=1)

    def to_dict(self):
        return {
            "kind": self.kind, "degree_or_bins": self.degree_or_bins,
            "center": self.center.tolist(), "scale": self.scale.tolist(),
            "lo": self.lo.tolist(), "hi": self.hi.tolist(),
            "active": [bool(a) for a in self.active],
            "knots": [k.tolist() for k in self.knots],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["degree_or_bins"]),
                   np.array(d["center"], dtype=float), np.array(d["scale"], dtype=float),
                   np.array(d["lo"], dtype=float), np.array(d["hi"], dtype=float),
                   np.array(d["active"], dtype=bool),
                   tuple(np.array(k, dtype=float) for k in d["knots"]))


def _multi_indices(dim, degree):
    if dim == 0:
        return [()]
    idx = [a for a in itertools.product(range(degree + 1), repeat=dim) if sum(a) <= degree]
    return sorted(idx, key=lambda a: (sum(a), tuple(-v for v in a)))


def _hats(v, knots):
    """Linear B-splines on ``knots`` evaluated at ``v`` (already clamped)."""
    K = len(knots)
    out = np.zeros((v.size, K))
    j = np.clip(np.searchsorted(knots, v, side="right") - 1, 0, K - 2)
    left, right = knots[j], knots[j + 1]
    frac = (v - left) / (right - left)
    rows = np.arange(v.size)
    out[rows, j] = 1.0 - frac
    out[rows, j + 1] += frac
    return out


def fit_node_basis(features, basis: BasisSpec) -> NodeBasis:
    """Standardisation, hull and knots for the states at one node.

    Dimensions with (numerically) no spread are dropped, so a node where all
    paths sit at the same state gets a constant-only basis.
    """
    x = np.asarray(features, dtype=float)
    center = x.mean(axis=0)
    scale = x.std(axis=0)
    lo, hi = x.min(axis=0), x.max(axis=0)
    active = (hi - lo) > 1e-12 * np.maximum(1.0, np.abs(center))
    scale = np.where(active, scale, 1.0)
    knots = ()
    if basis.kind == "pwlinear":
        qs = np.linspace(0.0, 1.0, basis.degree_or_bins + 1)
        knots = tuple(np.unique(np.quantile(x[:, c], qs)) for c in np.flatnonzero(active))
        if any(len(k) < 2 for k in knots):
            raise SolverError("quantile knots collapsed; too few distinct states")
    return NodeBasis(basis.kind, basis.degree_or_bins, center, scale, lo, hi, active, knots)


@dataclass
class RegressionResult:
    node_basis: NodeBasis
    coef: np.ndarray
    condition: float


def fit_regression(features, targets, basis: BasisSpec, node_basis=None,
                   design=None) -> RegressionResult:
    """Ridge least squares of ``targets`` on the basis at ``features``.

    The intercept is not penalised.  ``targets`` may be ``(P,)`` or
    ``(P, r)``; the coefficients follow the same layout.
    """
    nb = node_basis if node_basis is not None else fit_node_basis(features, basis)
    A = nb.design(features) if design is None else design
    P, K = A.shape
    if P <= K:
        raise SolverError(f"{P} samples cannot fit a basis of size {K}")
    y = np.asarray(targets, dtype=float)
    single = y.ndim == 1
    Y = y[:, None] if single else y
    lam = basis.ridge_lambda
    scale = 1.0 / math.sqrt(P)
    if lam > 0 and K > 1:
        pen = np.zeros((K - 1, K))
        pen[:, 1:] = math.sqrt(lam) * np.eye(K - 1)
        A_aug = np.vstack([A * scale, pen])
        Y_aug = np.vstack([Y * scale, np.zeros((K - 1, Y.shape[1]))])
    else:
        A_aug, Y_aug = A * scale, Y * scale
    coef, _, rank, sv = np.linalg.lstsq(A_aug, Y_aug, rcond=None)
    if rank < K:
        raise SolverError(f"rank-deficient design (rank {rank} < {K}) after ridge")
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return RegressionResult(nb, coef[:, 0] if single else coef, cond)


def regress_conditional_expectation(features, targets, basis: BasisSpec):
    """Coefficients of the estimated ``E[targets | features]``."""
    return fit_regression(features, targets, basis).coef

"""Histogram checks of the domination of transition laws.

For a start ``(t, x)`` the law of ``X_s`` is compared with the law of the
same diffusion started from ``(0, x0)``; the binwise mass ratio plays the
role of the density ``phi(s, .)`` and its ``L^q`` norm against the
reference law, over ``s`` in ``[t + delta, T]`` and a box ``[-k, k]^m``,
should stay finite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionalityError, ValidationError
from .forward import PathEnsemble

DEFAULT_BINS = 101
DEFAULT_SPAN = 5.0


@dataclass(frozen=True)
class EmpiricalLaw:
    s: float
    edges: tuple  # one edge array per dimension
    masses: np.ndarray
    outside_mass: float
    sample_count: int

    @property
    def centers(self):
        return tuple(0.5 * (e[1:] + e[:-1]) for e in self.edges)

    def mean(self):
        """Mean of the binned law (bin centres), normalised by the inside mass."""
        c = self.centers
        inside = self.masses.sum()
        if len(c) == 1:
            return np.array([np.dot(c[0], self.masses) / inside])
        g = np.meshgrid(*c, indexing="ij")
        return np.array([np.sum(gi * self.masses) / inside for gi in g])


@dataclass(frozen=True)
class RatioField:
    s: float
    edges: tuple
    ratio: np.ndarray
    violation: np.ndarray  # bool, zero reference mass under positive mass
    reference_mass: np.ndarray


def bins_for(ensemble: PathEnsemble, s, count=DEFAULT_BINS, span=DEFAULT_SPAN):
    """Uniform edges over ``mean +- span * std`` of ``X_s`` per dimension."""
    x = ensemble.states[ensemble.grid.index_of(s)]
    mu, sd = x.mean(axis=0), x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return tuple(np.linspace(mu[j] - span * sd[j], mu[j] + span * sd[j], count + 1)
                 for j in range(x.shape[1]))


def estimate_law(ensemble: PathEnsemble, s, bins) -> EmpiricalLaw:
    """Normalised histogram of ``X_s``; ``s`` must be a grid node."""
    if ensemble.m > 2:
        raise DimensionalityError("histogram laws are limited to m <= 2")
    k = ensemble.grid.index_of(s)
    x = ensemble.states[k]
    edges = tuple(np.asarray(e, dtype=float) for e in bins)
    if len(edges) != ensemble.m:
        raise ValidationError("need one edge array per state dimension")
    counts, _ = np.histogramdd(x, bins=edges)
    P = ensemble.path_count
    masses = counts / P
    return EmpiricalLaw(float(ensemble.grid.nodes[k]), edges, masses,
                        float(max(0.0, 1.0 - counts.sum() / P)), P)


def density_ratio(law_tx: EmpiricalLaw, law_0x0: EmpiricalLaw) -> RatioField:
    if len(law_tx.edges) != len(law_0x0.edges) or not all(
            np.array_equal(a, b) for a, b in zip(law_tx.edges, law_0x0.edges)):
        raise ValidationError("laws use different bin partitions")
    if law_tx.s != law_0x0.s:
        raise ValidationError("laws are taken at different times")
    num, den = law_tx.masses, law_0x0.masses
    ratio = np.zeros_like(num)
    pos = den > 0
    ratio[pos] = num[pos] / den[pos]
    violation = (~pos) & (num > 0)
    ratio[violation] = np.inf
    return RatioField(law_tx.s, law_tx.edges, ratio, violation, den)


def reconstruct(field: RatioField):
    """``phi * nu0`` masses; equals the numerator law on occupied bins."""
    out = field.ratio * field.reference_mass
    out[field.violation] = np.nan
    return out


def lq_norm(entries, q, compact_k):
    """``(sum_s w_s sum_{bins in box} |phi|^q nu0-mass)^(1/q)``.

    ``entries`` is a sequence of ``(RatioField, weight)``.  A violation bin
    inside the box makes the norm ``+inf``.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    total = 0.0
    for field, weight in entries:
        centers = [0.5 * (e[1:] + e[:-1]) for e in field.edges]
        grids = np.meshgrid(*centers, indexing="ij")
        inside = np.ones(field.ratio.shape, dtype=bool)
        for g in grids:
            inside &= np.abs(g) <= compact_k
        if np.any(field.violation & inside):
            return float("inf")
        r = np.where(inside, field.ratio, 0.0)
        total += weight * float(np.sum(np.abs(r) ** q * field.reference_mass))
    return total ** (1.0 / q)


def trapezoid_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size == 1:
        return np.zeros(1)
    w = np.zeros_like(nodes)
    d = np.diff(nodes)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


@dataclass
class DominationStudy:
    t: float
    delta: float
    fields: list
    weights: np.ndarray

    def norm(self, q, compact_k):
        return lq_norm(list(zip(self.fields, self.weights)), q, compact_k)

    def write_ratio_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "bin_center", "ratio"])
            for f in self.fields:
                centers = [0.5 * (e[1:] + e[:-1]) for e in f.edges]
                for idx in np.ndindex(f.ratio.shape):
                    c = " ".join(repr(float(centers[d][j])) for d, j in enumerate(idx))
                    w.writerow([repr(f.s), c, repr(float(f.ratio[idx]))])


def domination_study(ens_tx: PathEnsemble, ens_0: PathEnsemble, t, delta,
                     bin_count=DEFAULT_BINS, span=DEFAULT_SPAN) -> DominationStudy:
    """Ratio fields at every grid node ``s >= t + delta``.

    Both ensembles must share the grid; bins follow the reference law at
    each ``s``; time weights are trapezoidal over the retained nodes.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not np.array_equal(ens_tx.grid.nodes, ens_0.grid.nodes):
        raise ValidationError("ensembles must share the time grid")
    grid = ens_0.grid
    j0 = grid.first_index_at_or_after(t + delta)
    fields = []
    for s in grid.nodes[j0:]:
        b = bins_for(ens_0, s, bin_count, span)
        fields.append(density_ratio(estimate_law(ens_tx, s, b), estimate_law(ens_0, s, b)))
    return DominationStudy(float(t), float(delta), fields, trapezoid_weights(grid.nodes[j0:]))


def write_norm_csv(path, rows):
    """``rows`` of ``(q, delta, k, norm)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "delta", "k", "norm"])
        for q, d, k, v in rows:
            w.writerow([repr(float(q)), repr(float(d)), repr(float(k)), repr(float(v))])

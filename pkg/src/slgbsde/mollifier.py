"""Lipschitz approximations of a continuous driver.

For an index ``n`` the approximant of ``H_i`` is

    H_in(t, x, w) = psi(w / n) * sum_j c_j H_i(t, trunc_n(x), w - u_j / n)

where ``w = (y, z)`` is the flattened backward argument, ``trunc_n`` clamps
every state coordinate to ``[-n, n]``, ``(u_j, c_j)`` is a tensor Gauss
rule for the normalised bump density ``exp(-1/(1-u^2))`` on ``(-1, 1)``,
and ``psi`` is a smooth radial cutoff equal to 1 on the unit ball and 0
outside the ball of radius 2.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .errors import CertificationError, DimensionalityError
from .model import GeneratorSpec, flat_args, sample_points, unflatten_args

MAX_QUADRATURE_DIM = 6
_CHUNK_ROWS = 1 << 17
_FREEZE_ROWS = 1 << 23
_CDF_NODES, _CDF_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _bump_unnormalised(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


@lru_cache(maxsize=None)
def bump_mass():
    """``int_{-1}^{1} exp(-1/(1-v^2)) dv``."""
    val, _ = quad(lambda v: np.exp(-1.0 / (1.0 - v * v)), -1.0, 1.0,
                  epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def bump_kernel(u):
    """Unit-mass bump density, zero outside ``(-1, 1)``."""
    return _bump_unnormalised(u) / bump_mass()


def product_kernel(w):
    """Multivariate kernel: product of univariate bumps over the last axis."""
    return np.prod(bump_kernel(w), axis=-1)


def bump_cdf(s):
    """``int_{-1}^{s} bump(u) du`` for ``s`` clipped to ``[-1, 1]``."""
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    half = 0.5 * (s + 1.0)
    nodes = -1.0 + half[..., None] * (_CDF_NODES + 1.0)
    vals = (_bump_unnormalised(nodes) * _CDF_WEIGHTS).sum(axis=-1) * half
    return vals / _cdf_total()


@lru_cache(maxsize=None)
def _cdf_total():
    return float((_bump_unnormalised(_CDF_NODES) * _CDF_WEIGHTS).sum())


@lru_cache(maxsize=None)
def bump_gauss_rule(Q):
    """Q-point Gauss rule for the bump density (weights sum to one).

    Recurrence coefficients come from the discretised Stieltjes procedure on
    a 2000-node Gauss–Legendre grid; nodes and weights are symmetrised so
    odd moments vanish exactly.
    """
    if Q < 1:
        raise ValueError("Q must be positive")
    xs, ws = np.polynomial.legendre.leggauss(2000)
    ws = ws * _bump_unnormalised(xs)
    ws = ws / ws.sum()
    alpha, beta = np.zeros(Q), np.zeros(Q)
    p_prev, p_cur = np.zeros_like(xs), np.ones_like(xs)
    norm_prev = 1.0
    for k in range(Q):
        norm = np.sum(ws * p_cur ** 2)
        alpha[k] = np.sum(ws * xs * p_cur ** 2) / norm
        beta[k] = norm / norm_prev if k > 0 else norm
        p_next = (xs - alpha[k]) * p_cur - (beta[k] if k > 0 else 0.0) * p_prev
        p_prev, p_cur, norm_prev = p_cur, p_next, norm
    jac = np.diag(alpha) + np.diag(np.sqrt(beta[1:]), 1) + np.diag(np.sqrt(beta[1:]), -1)
    nodes, vecs = np.linalg.eigh(jac)
    weights = vecs[0] ** 2
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights / weights.sum()


@lru_cache(maxsize=None)
def tensor_rule(Q, d):
    """Tensor product of :func:`bump_gauss_rule` in ``d`` dimensions."""
    nodes, weights = bump_gauss_rule(Q)
    if d == 0:
        return np.zeros((1, 0)), np.ones(1)
    pts = np.array(list(itertools.product(nodes, repeat=d)))
    wts = np.prod(np.array(list(itertools.product(weights, repeat=d))), axis=1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def truncate(x, n):
    """Componentwise clamp of the state to ``[-n, n]``."""
    return np.clip(np.asarray(x, dtype=float), -n, n)


def cutoff(y, z, scale_n):
    """Smooth radial cutoff evaluated at ``(y, z) / n``.

    Equals 1 when the squared scaled norm is at most 1 and 0 when it is at
    least 4; in between it decreases along the integrated bump profile.
    Accepts a single point (``y`` of shape ``(n,)``) or a batch.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    single = y.ndim == 1
    if single:
        y, z = y[None, :], z[None, ...]
    r = (np.sum(y ** 2, axis=1) + np.sum(z.reshape(z.shape[0], -1) ** 2, axis=1)) / scale_n ** 2
    out = np.where(r <= 1.0, 1.0, 0.0)
    band = (r > 1.0) & (r < 4.0)
    if band.any():
        out[band] = 1.0 - bump_cdf((2.0 * r[band] - 5.0) / 3.0)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class MollificationParams:
    index_n: int
    quad_order_Q: int = 8
    kernel_id: str = "bump"

    def __post_init__(self):
        if self.index_n < 1:
            raise ValueError("index_n must be positive")
        if self.quad_order_Q < 2:
            raise ValueError("quad_order_Q must be >= 2")
        if self.kernel_id != "bump":
            raise ValueError(f"unknown kernel {self.kernel_id!r}")


@dataclass(frozen=True)
class MollifiedGenerator:
    """Generator-compatible wrapper evaluating the n-th approximant."""

    base: GeneratorSpec
    params: MollificationParams
    dim_m: int = 1
    sup_bound_cn: Optional[float] = None
    lipschitz_hat: Optional[float] = None
    _dims: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        dims = []
        for i in range(self.base.n_components):
            if self.base.depends_on is None:
                d = tuple(range(self.flat_size))
            else:
                d = tuple(sorted(set(int(j) for j in self.base.depends_on[i])))
            if len(d) > MAX_QUADRATURE_DIM:
                raise DimensionalityError(
                    f"convolution for component {i + 1} needs a {len(d)}-dimensional "
                    f"quadrature (limit {MAX_QUADRATURE_DIM})")
            dims.append(d)
        object.__setattr__(self, "_dims", tuple(dims))

    @property
    def n_components(self):
        return self.base.n_components

    @property
    def flat_size(self):
        return self.base.n_components * (1 + self.dim_m)

    @property
    def n(self):
        return self.params.index_n

    @property
    def growth_C2(self):
        return self.base.growth_C2

    @property
    def growth_Ch(self):
        return self.base.growth_Ch

    @property
    def growth_gamma(self):
        return self.base.growth_gamma

    @property
    def depends_on(self):
        return self.base.depends_on

    @property
    def name(self):
        return f"{self.base.name}[n={self.n}]"

    def convolved(self, t, x, y, z, i):
        """Kernel average without the cutoff factor."""
        n_idx = self.params.index_n
        P, nc = y.shape
        m = z.shape[2]
        xt = truncate(x, n_idx)
        dims = self._dims[i]
        if not dims:
            return self.base(t, xt, y, z, i)
        pts, wts = tensor_rule(self.params.quad_order_Q, len(dims))
        J = len(wts)
        w = flat_args(y, z)
        scalar_t = np.ndim(t) == 0
        out = np.empty(P)
        step = max(1, _CHUNK_ROWS // J)
        offsets = np.zeros((J, w.shape[1]))
        offsets[:, list(dims)] = pts / n_idx
        for lo in range(0, P, step):
            hi = min(P, lo + step)
            b = hi - lo
            wb = np.empty((b, J, w.shape[1]))
            for c in range(w.shape[1]):
                np.subtract(w[lo:hi, c, None], offsets[None, :, c], out=wb[:, :, c])
            yb, zb = unflatten_args(wb.reshape(b * J, -1), nc, m)
            xb = np.repeat(xt[lo:hi], J, axis=0)
            tb = t if scalar_t else np.repeat(t[lo:hi], J)
            vals = self.base(tb, xb, yb, zb, i).reshape(b, J)
            out[lo:hi] = vals @ wts
        return out

    def _evaluate(self, t, x, y, z, comps):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        psi = cutoff(y, z, self.params.index_n)
        active = psi > 0.0
        out = np.zeros((y.shape[0], len(comps)))
        if active.any():
            if np.ndim(t) != 0:
                t = np.broadcast_to(np.asarray(t, dtype=float), (y.shape[0],))[active]
            xa, ya, za, pa = x[active], y[active], z[active], psi[active]
            for c, i in enumerate(comps):
                out[active, c] = pa * self.convolved(t, xa, ya, za, i)
        return out

    def evaluate(self, t, x, y, z, i):
        return self._evaluate(t, x, y, z, (i,))[:, 0]

    __call__ = evaluate

    def evaluate_all(self, t, x, y, z):
        return self._evaluate(t, x, y, z, tuple(range(self.n_components)))

    def freeze(self, t, x, z):
        """All components as a function of ``y`` alone, for fixed ``(t, x, z)``.

        The shifted state and volatility arguments are built once, which
        pays off inside the Picard loop of the backward solver.  Falls back
        to :meth:`evaluate_all` when the expanded arrays would be too large.
        """
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        J = max(len(tensor_rule(self.params.quad_order_Q, len(d))[1]) for d in self._dims)
        if x.shape[0] * J > _FREEZE_ROWS:
            return lambda y: self.evaluate_all(t, x, y, z)
        return _Frozen(self, t, x, z)

    def growth_bound(self, x, y, z, i):
        """Right-hand side of the growth property with truncated state."""
        return self.base.growth_bound(truncate(x, self.params.index_n), y, z, i)


class _Frozen:
    """Cached arguments of a mollified generator at fixed ``(t, x, z)``."""

    def __init__(self, gen: MollifiedGenerator, t, x, z):
        self.gen, self.z = gen, z
        n_idx = gen.params.index_n
        P, nc, m = z.shape
        self.P, self.nc = P, nc
        xt = truncate(x, n_idx)
        zf = z.reshape(P, -1)
        t_arr = None if np.ndim(t) == 0 else np.broadcast_to(t, (P,))
        self.parts = []
        for i, dims in enumerate(gen._dims):
            if not dims:
                self.parts.append((i, None, None, [(slice(0, P), xt, t, z)]))
                continue
            pts, wts = tensor_rule(gen.params.quad_order_Q, len(dims))
            J = len(wts)
            off = np.zeros((J, nc + nc * m))
            off[:, list(dims)] = pts / n_idx
            chunks = []
            step = max(1, _CHUNK_ROWS // J)
            for lo in range(0, P, step):
                sl = slice(lo, min(P, lo + step))
                b = sl.stop - lo
                zb = (zf[sl, None, :] - off[None, :, nc:]).reshape(b * J, nc, m)
                xb = np.repeat(xt[sl], J, axis=0)
                tb = t if t_arr is None else np.repeat(t_arr[sl], J)
                chunks.append((sl, xb, tb, zb))
            self.parts.append((i, off[:, :nc], wts, chunks))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        psi = cutoff(y, self.z, self.gen.params.index_n)
        out = np.empty((self.P, self.nc))
        for i, off_y, wts, chunks in self.parts:
            vals = np.empty(self.P)
            for sl, xb, tb, zb in chunks:
                if off_y is None:
                    vals[sl] = self.gen.base(tb, xb, y[sl], zb, i)
                    continue
                b, J = sl.stop - sl.start, len(wts)
                yb = np.empty((b, J, self.nc))
                for c in range(self.nc):
                    np.subtract(y[sl, c, None], off_y[None, :, c], out=yb[:, :, c])
                vals[sl] = self.gen.base(tb, xb, yb.reshape(b * J, self.nc), zb, i).reshape(b, J) @ wts
            out[:, i] = np.where(psi > 0.0, psi * vals, 0.0)
        return out


def mollify(gen: GeneratorSpec, n, m, quad_order=8) -> MollifiedGenerator:
    """Build the n-th approximant of ``gen`` for states of dimension ``m``."""
    return MollifiedGenerator(gen, MollificationParams(int(n), int(quad_order)), int(m))


def mollify_eval(gen: MollifiedGenerator, t, x, y, z, i):
    """Evaluate the approximant at a single point or a batch of points."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        y = np.asarray(y, dtype=float)[None, :]
        z = np.asarray(z, dtype=float)[None, ...]
        return float(gen.evaluate(t, x[None, :], y, z, i)[0])
    return gen.evaluate(t, x, y, z, i)


# --------------------------------------------------------------------------
# certification of the approximation properties

@dataclass
class PropertyRow:
    n: int
    lipschitz_hat: float
    c_n: float
    growth_margin: float
    uniform_gap: float


@dataclass
class PropertyReport:
    rows: list
    compact_K: float
    sample_count: int
    seed: int

    def row(self, n):
        return next(r for r in self.rows if r.n == n)

    @property
    def growth_ok(self):
        return all(r.growth_margin <= 1e-12 for r in self.rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "lipschitz_hat", "c_n", "growth_margin", "uniform_gap"])
            for r in self.rows:
                w.writerow([r.n, repr(r.lipschitz_hat), repr(r.c_n),
                            repr(r.growth_margin), repr(r.uniform_gap)])


def _finite_or_raise(values, what, n):
    if not np.all(np.isfinite(values)):
        raise CertificationError(f"non-finite {what} for n={n}")


def certify_properties(gen_raw: GeneratorSpec, n_list, compact_K, sample_count, seed,
                       m=1, x_radius=1.0, horizon=1.0, quad_order=8,
                       fd_step=1e-4) -> PropertyReport:
    """Sampled check of the four approximation properties for each ``n``.

    * Lipschitz constant in ``(y, z)``: largest finite-difference quotient
      along random unit directions, step ``fd_step``.
    * growth margin: largest excess of ``|H_in|`` over the growth bound with
      truncated state, over points in ``K`` and in the cutoff support.
    * ``c_n``: largest sampled ``|H_in|``.
    * uniform gap: ``sup |H_in - H_i|`` over ``(y, z)`` in ``K``.

    Points are shared by all ``n``.  States are drawn in
    ``[-x_radius, x_radius]^m``.
    """
    if not n_list:
        raise ValueError("n_list must be non-empty")
    nc = gen_raw.n_components
    S = int(sample_count)
    rs = np.random.SeedSequence(seed).spawn(3)
    t, x, y, z = sample_points(np.random.default_rng(rs[0]), S, m, nc, horizon,
                               x_radius, compact_K)
    dirs = np.random.default_rng(rs[1]).standard_normal((S, nc + nc * m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dy, dz = unflatten_args(fd_step * dirs, nc, m)
    su = np.random.default_rng(rs[2]).random((S, nc + nc * m))

    raw = [gen_raw(t, x, y, z, i) for i in range(nc)]
    for v in raw:
        _finite_or_raise(v, "raw generator value", 0)

    rows = []
    for n in n_list:
        g = mollify(gen_raw, n, m, quad_order)
        ys, zs = unflatten_args((2 * su - 1) * 2.0 * n, nc, m)
        lip, cn, margin, gap = 0.0, 0.0, -np.inf, 0.0
        for i in range(nc):
            hk = g.evaluate(t, x, y, z, i)
            hp = g.evaluate(t, x, y + dy, z + dz, i)
            hs = g.evaluate(t, x, ys, zs, i)
            for v in (hk, hp, hs):
                _finite_or_raise(v, f"H_{i + 1}n", n)
            lip = max(lip, float(np.max(np.abs(hp - hk)) / fd_step))
            cn = max(cn, float(np.max(np.abs(hk))), float(np.max(np.abs(hs))))
            margin = max(margin,
                         float(np.max(np.abs(hk) - g.growth_bound(x, y, z, i))),
                         float(np.max(np.abs(hs) - g.growth_bound(x, ys, zs, i))))
            gap = max(gap, float(np.max(np.abs(hk - raw[i]))))
        rows.append(PropertyRow(int(n), lip, cn, margin, gap))
    return PropertyReport(rows, float(compact_K), S, seed)


def with_bounds(gen: MollifiedGenerator, report: PropertyReport) -> MollifiedGenerator:
    """Attach certified ``c_n`` and Lipschitz estimates to ``gen``."""
    r = report.row(gen.n)
    return replace(gen, sup_bound_cn=r.c_n, lipschitz_hat=r.lipschitz_hat)

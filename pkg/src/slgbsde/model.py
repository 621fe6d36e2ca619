"""Problem definition for coupled Markovian BSDE systems and sampled checks
of the standing assumptions.

Array conventions used throughout the package (``P`` = number of points):

* states ``x``: ``(P, m)``
* backward values ``y``: ``(P, n)``
* volatility values ``z``: ``(P, n, m)``; row ``z[:, i, :]`` is the
  volatility process of component ``i``.

Callables are vectorised over the leading axis.  Time ``t`` is passed
either as a float or as an array of shape ``(P,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

EQUALITY_TOL = 1e-12


@dataclass(frozen=True)
class DiffusionSpec:
    """Volatility ``sigma(t, x) -> (P, m, m)`` and its assumed constants."""

    sigma: Callable
    dim_m: int
    lipschitz_C1: float
    bound_Csigma: float
    ellipticity_eps: float
    name: str = "custom"

    def __post_init__(self):
        if self.dim_m < 1:
            raise ValidationError("dim_m must be positive")
        if self.ellipticity_eps <= 0:
            raise ValidationError("ellipticity_eps must be positive")
        if self.lipschitz_C1 < 0 or self.bound_Csigma < 0:
            raise ValidationError("diffusion constants must be nonnegative")

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.sigma(t, x), dtype=float)
        return np.broadcast_to(out, (x.shape[0], self.dim_m, self.dim_m))


@dataclass(frozen=True)
class GeneratorSpec:
    """Drivers ``H_i(t, x, y, z)`` with the growth constants of
    ``|H_i| <= C2 (1+|x|) |z^i| + Ch (1 + |x|^gamma + |y^i|)``.

    ``depends_on`` optionally lists, per component, which entries of the
    flattened argument ``(y^1..y^n, z^1_1..z^n_m)`` the driver actually
    reads.  The mollifier convolves only over those coordinates.
    """

    evaluate: Callable
    n_components: int
    growth_C2: float
    growth_Ch: float
    growth_gamma: float
    depends_on: Optional[tuple] = None
    name: str = "custom"

    def __post_init__(self):
        if self.n_components < 1:
            raise ValidationError("n_components must be positive")
        if self.growth_gamma <= 0:
            raise ValidationError("growth_gamma must be positive")
        if self.growth_C2 < 0 or self.growth_Ch < 0:
            raise ValidationError("growth constants must be nonnegative")
        if self.depends_on is not None and len(self.depends_on) != self.n_components:
            raise ValidationError("depends_on needs one entry per component")

    def __call__(self, t, x, y, z, i):
        return np.asarray(self.evaluate(t, x, y, z, i), dtype=float)

    def evaluate_all(self, t, x, y, z):
        """All components stacked to shape ``(P, n)``."""
        return np.stack([self(t, x, y, z, i) for i in range(self.n_components)], axis=1)

    def growth_bound(self, x, y, z, i):
        xn = np.linalg.norm(x, axis=1)
        zn = np.linalg.norm(z[:, i, :], axis=1)
        return (self.growth_C2 * (1.0 + xn) * zn
                + self.growth_Ch * (1.0 + xn ** self.growth_gamma + np.abs(y[:, i])))


@dataclass(frozen=True)
class TerminalSpec:
    """Terminal functions ``g^i(x)`` with ``|g^i(x)| <= Cg (1 + |x|^gamma)``."""

    evaluate: Callable
    growth_Cg: float
    growth_gamma: float
    name: str = "custom"

    def __post_init__(self):
        if self.growth_Cg < 0 or self.growth_gamma < 0:
            raise ValidationError("terminal growth constants must be nonnegative")

    def __call__(self, x, i):
        return np.asarray(self.evaluate(x, i), dtype=float)


@dataclass(frozen=True)
class ProblemSpec:
    diffusion: DiffusionSpec
    generator: GeneratorSpec
    terminal: TerminalSpec
    horizon_T: float
    start_x: np.ndarray
    start_t: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        sx = np.atleast_1d(np.asarray(self.start_x, dtype=float))
        object.__setattr__(self, "start_x", sx)
        if self.horizon_T <= 0:
            raise ValidationError("horizon_T must be positive")
        if not 0.0 <= self.start_t <= self.horizon_T:
            raise ValidationError(f"start_t={self.start_t} outside [0, {self.horizon_T}]")
        if sx.shape != (self.diffusion.dim_m,):
            raise ValidationError(
                f"start_x has shape {sx.shape}, diffusion has m={self.diffusion.dim_m}")

    @property
    def m(self):
        return self.diffusion.dim_m

    @property
    def n(self):
        return self.generator.n_components

    def terminal_values(self, x):
        """``g(x)`` for all components, shape ``(P, n)``."""
        return np.stack([self.terminal(x, i) for i in range(self.n)], axis=1)

    def with_generator(self, generator):
        return replace(self, generator=generator)


# --------------------------------------------------------------------------
# sampled assumption checks

@dataclass
class AssumptionCheck:
    name: str
    margin: float
    passed: bool
    worst_point: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    checks: dict
    diagnostics: dict
    sample_count: int
    seed: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def failures(self):
        return [c.name for c in self.checks.values() if not c.passed]

    def rows(self):
        return [(c.name, c.margin, int(c.passed)) for c in self.checks.values()]


def _check_finite(values, function, points):
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.argwhere(bad)[0][0])
        point = {k: np.asarray(v)[idx].tolist() for k, v in points.items()}
        raise ValidationError(f"non-finite value of {function} at {point}",
                              function=function, point=point)


def _unit_rows(rng_block):
    norms = np.linalg.norm(rng_block, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return rng_block / norms


def _finish(name, excess, points):
    idx = int(np.argmax(excess))
    margin = float(excess[idx])
    worst = {k: np.asarray(v)[idx].tolist() for k, v in points.items()}
    return AssumptionCheck(name, margin, margin <= EQUALITY_TOL, worst)


def _frobenius_inverse(sig):
    sv = np.linalg.svd(sig, compute_uv=False)
    with np.errstate(divide="ignore"):
        inv = np.where(sv > 0, 1.0 / np.where(sv > 0, sv, 1.0) ** 2, np.inf)
    return np.sqrt(inv.sum(axis=1)), sv


def validate_problem(spec: ProblemSpec, sample_count: int, seed: int,
                     box_radius: float = 10.0) -> ValidationReport:
    """Falsification test of the standing assumptions by uniform sampling.

    Points are drawn over ``[-R, R]^m x [0, T]`` (and ``[-R, R]`` for each
    y and z entry).  Every check uses its own child stream and draws all
    coordinates in a single block, so a run with fewer samples sees a
    prefix of the points of a longer run.
    """
    if sample_count < 1:
        raise ValidationError("sample_count must be >= 1")
    m, n, T, R = spec.m, spec.n, spec.horizon_T, float(box_radius)
    S = int(sample_count)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(6)]
    dif, gen, term = spec.diffusion, spec.generator, spec.terminal
    checks, diagnostics = {}, {}

    # sigma Lipschitz in x
    u = streams[0].random((S, 1 + 2 * m))
    t = u[:, 0] * T
    x1 = (2 * u[:, 1:1 + m] - 1) * R
    x2 = (2 * u[:, 1 + m:] - 1) * R
    s1, s2 = dif(t, x1), dif(t, x2)
    _check_finite(s1, "sigma", {"t": t, "x": x1})
    _check_finite(s2, "sigma", {"t": t, "x": x2})
    lhs = np.linalg.norm((s1 - s2).reshape(S, -1), axis=1)
    rhs = dif.lipschitz_C1 * np.linalg.norm(x1 - x2, axis=1)
    checks["sigma lipschitz"] = _finish("sigma lipschitz", lhs - rhs,
                                              {"t": t, "x": x1, "x_prime": x2})

    # bound on sigma and its inverse, and the elliptic bounds
    u = streams[1].random((S, 1 + m))
    t = u[:, 0] * T
    x = (2 * u[:, 1:] - 1) * R
    sig = dif(t, x)
    _check_finite(sig, "sigma", {"t": t, "x": x})
    inv_norm, sv = _frobenius_inverse(sig)
    total = np.linalg.norm(sig.reshape(S, -1), axis=1) + inv_norm
    checks["sigma bound"] = _finish("sigma bound", total - dif.bound_Csigma,
                                           {"t": t, "x": x})
    eig = sv ** 2
    eps = dif.ellipticity_eps
    excess = np.maximum(eps - eig.min(axis=1), eig.max(axis=1) - 1.0 / eps)
    checks["ellipticity"] = _finish("ellipticity", excess, {"t": t, "x": x})

    # terminal growth
    u = streams[2].random((S, m))
    x = (2 * u - 1) * R
    gv = spec.terminal_values(x)
    _check_finite(gv, "g", {"x": x})
    bound = term.growth_Cg * (1.0 + np.linalg.norm(x, axis=1) ** term.growth_gamma)
    checks["terminal growth"] = _finish("terminal growth",
                                           np.abs(gv).max(axis=1) - bound, {"x": x})

    # generator growth, diagonal components only
    D = 1 + m + n + n * m
    u = streams[3].random((S, D))
    t, x, y, z = _split_generator_sample(u, T, R, m, n)
    worst = np.full(S, -np.inf)
    for i in range(n):
        h = gen(t, x, y, z, i)
        _check_finite(h, f"H_{i + 1}", {"t": t, "x": x, "y": y, "z": z})
        worst = np.maximum(worst, np.abs(h) - gen.growth_bound(x, y, z, i))
    checks["generator growth"] = _finish("generator growth", worst,
                                               {"t": t, "x": x, "y": y, "z": z})

    # continuity in (y, z): diagnostic modulus only
    u = streams[4].random((S, D + n + n * m))
    t, x, y, z = _split_generator_sample(u[:, :D], T, R, m, n)
    direction = _unit_rows(2 * u[:, D:] - 1)
    moduli = {}
    for h_size in (1e-1, 1e-2, 1e-3, 1e-4):
        dy = h_size * direction[:, :n]
        dz = h_size * direction[:, n:].reshape(S, n, m)
        mod = 0.0
        for i in range(n):
            diff = gen(t, x, y + dy, z + dz, i) - gen(t, x, y, z, i)
            _check_finite(diff, f"H_{i + 1}", {"t": t, "x": x, "y": y, "z": z})
            mod = max(mod, float(np.abs(diff).max()))
        moduli[h_size] = mod
    vals = list(moduli.values())
    diagnostics["continuity_modulus"] = moduli
    diagnostics["continuity_shrinks"] = bool(vals[-1] <= vals[0])
    return ValidationReport(checks, diagnostics, S, seed)


def _split_generator_sample(u, T, R, m, n, yz_radius=None):
    S = u.shape[0]
    Ryz = R if yz_radius is None else yz_radius
    t = u[:, 0] * T
    x = (2 * u[:, 1:1 + m] - 1) * R
    y = (2 * u[:, 1 + m:1 + m + n] - 1) * Ryz
    z = ((2 * u[:, 1 + m + n:] - 1) * Ryz).reshape(S, n, m)
    return t, x, y, z


def sample_points(rng, S, m, n, T, x_radius, yz_radius):
    """Uniform ``(t, x, y, z)`` samples; shared by the certification code."""
    u = rng.random((S, 1 + m + n + n * m))
    return _split_generator_sample(u, T, x_radius, m, n, yz_radius)


def flat_args(y, z):
    """Concatenate ``(y, z)`` into the flat argument used by ``depends_on``."""
    return np.concatenate([y, z.reshape(z.shape[0], -1)], axis=1)


def unflatten_args(w, n, m):
    return w[:, :n], w[:, n:].reshape(w.shape[0], n, m)


def as_states(x, m):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, m) if m > 1 else x.reshape(-1, 1)
    return x


__all__ = [
    "DiffusionSpec", "GeneratorSpec", "TerminalSpec", "ProblemSpec",
    "AssumptionCheck", "ValidationReport", "validate_problem",
]

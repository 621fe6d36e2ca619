"""Curated test problems.

Each entry bundles a :class:`ProblemSpec` with run defaults and, where one
exists, a reference solution.  Closed-form references are exposed as
callables; every reference is also tabulated to a data file by the
``oracle`` CLI subcommand (see :mod:`.oracles`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import DiffusionSpec, GeneratorSpec, ProblemSpec, TerminalSpec


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    problem: ProblemSpec
    steps_N: int = 50
    paths: int = 100_000
    basis_degree: int = 5
    schedule: tuple = (2, 4, 8, 16, 32)
    quad_order: int = 8
    oracle_kind: Optional[str] = None  # "closed-form" | "pde" | None
    closed_form: Optional[Callable] = field(default=None, compare=False)

    @property
    def has_oracle(self):
        return self.oracle_kind is not None


def unit_diffusion(m=1):
    eye = np.eye(m)
    return DiffusionSpec(lambda t, x: eye, m, 0.0, 2.0 * np.sqrt(m), 1.0, "unit")


def bounded_elliptic_diffusion():
    def sigma(t, x):
        return (1.0 / (1.0 + x[:, 0] ** 2 / 4.0) + 0.5)[:, None, None]
    # sup |sigma'| = 3 sqrt(3) / 16 < 0.33; |sigma| + 1/|sigma| < 2.5
    return DiffusionSpec(sigma, 1, 0.33, 2.5, 0.25, "bounded-elliptic")


def _zero_gen(t, x, y, z, i):
    return np.zeros(y.shape[0])


def _zero_terminal(x, i):
    return np.zeros(x.shape[0])


def _linear_gen(t, x, y, z, i):
    return -y[:, i]


def _coupled_gen(t, x, y, z, i):
    # the other component, clipped so the diagonal growth bound holds
    return np.clip(y[:, 1 - i], -3.0, 3.0)


def _demo_gen(t, x, y, z, i):
    xn = np.abs(x[:, 0])
    return (1.0 + xn) * np.abs(z[:, i, 0]) + np.arctan(y[:, 1 - i])


def _elliptic_gen(t, x, y, z, i):
    return -0.5 * y[:, i] + 0.5 * np.sin(z[:, i, 0])


def _linear_solution(t, x, T=1.0):
    x = np.asarray(x, dtype=float)
    y = np.exp(-(T - t)) * x
    return y[..., None], np.full(np.shape(x) + (1, 1), np.exp(-(T - t)))


def _coupled_solution(t, x, T=1.0):
    x = np.asarray(x, dtype=float)
    v = np.exp(T - t) * np.ones(np.shape(x) + (2,))
    return v, np.zeros(np.shape(x) + (2, 1))


def _quadratic_solution(t, x, T=1.0):
    x = np.asarray(x, dtype=float)
    return (x ** 2 + (T - t))[..., None], (2.0 * x)[..., None, None]


def _zero_solution(t, x, T=1.0):
    x = np.asarray(x, dtype=float)
    return np.zeros(np.shape(x) + (1,)), np.zeros(np.shape(x) + (1, 1))


def _build():
    unit = unit_diffusion(1)
    zero0 = np.zeros(1)
    out = {}

    out["zero"] = Scenario(
        "zero", "g = 0, H = 0: every field vanishes",
        ProblemSpec(unit, GeneratorSpec(_zero_gen, 1, 0.0, 0.0, 1.0, ((),), "zero"),
                    TerminalSpec(_zero_terminal, 0.0, 1.0, "zero"), 1.0, zero0, name="zero"),
        steps_N=20, paths=4096, schedule=(2, 4), oracle_kind="closed-form",
        closed_form=_zero_solution)

    out["linear-1d"] = Scenario(
        "linear-1d", "g(x) = x, H = -y: Y_t = exp(-(T-t)) X_t",
        ProblemSpec(unit, GeneratorSpec(_linear_gen, 1, 0.0, 1.0, 1.0, ((0,),), "linear"),
                    TerminalSpec(lambda x, i: x[:, 0], 1.0, 1.0, "identity"), 1.0, zero0,
                    name="linear-1d"),
        steps_N=50, oracle_kind="closed-form", closed_form=_linear_solution)

    out["coupled-ode"] = Scenario(
        "coupled-ode", "two components driving each other, g = 1: Y = exp(T-t)",
        ProblemSpec(unit, GeneratorSpec(_coupled_gen, 2, 0.0, 3.0, 1.0, ((1,), (0,)), "coupled"),
                    TerminalSpec(lambda x, i: np.ones(x.shape[0]), 1.0, 1.0, "one"), 1.0, zero0,
                    name="coupled-ode"),
        steps_N=200, paths=20_000, oracle_kind="closed-form", closed_form=_coupled_solution)

    out["stochastic-linear-growth-demo"] = Scenario(
        "stochastic-linear-growth-demo",
        "H_i = (1+|x|)|z^i| + arctan(y^j), g = cos x: state-dependent growth in z",
        ProblemSpec(unit, GeneratorSpec(_demo_gen, 2, 1.0, 2.0, 1.0, ((1, 2), (0, 3)), "demo"),
                    TerminalSpec(lambda x, i: np.cos(x[:, 0]), 1.0, 1.0, "cos"), 1.0, zero0,
                    name="stochastic-linear-growth-demo"),
        steps_N=50, basis_degree=12, quad_order=4, oracle_kind="pde")

    out["quadratic-terminal"] = Scenario(
        "quadratic-terminal", "g(x) = x^2, H = 0: Y_t = X_t^2 + T - t",
        ProblemSpec(unit, GeneratorSpec(_zero_gen, 1, 0.0, 0.0, 1.0, ((),), "zero"),
                    TerminalSpec(lambda x, i: x[:, 0] ** 2, 1.0, 2.0, "square"), 1.0, zero0,
                    name="quadratic-terminal"),
        steps_N=50, oracle_kind="closed-form", closed_form=_quadratic_solution)

    out["bounded-elliptic"] = Scenario(
        "bounded-elliptic", "state-dependent elliptic volatility, no reference solution",
        ProblemSpec(bounded_elliptic_diffusion(),
                    GeneratorSpec(_elliptic_gen, 1, 0.5, 0.5, 1.0, ((0, 1),), "damped-sine"),
                    TerminalSpec(lambda x, i: np.arctan(x[:, 0]), 1.6, 1.0, "arctan"), 1.0,
                    zero0, name="bounded-elliptic"),
        steps_N=50, basis_degree=9)
    return out


CATALOGUE = _build()


def get_scenario(name) -> Scenario:
    try:
        return CATALOGUE[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(CATALOGUE)}") from None


def list_scenarios():
    """``(name, description, oracle available)`` for every entry."""
    from .oracles import oracle_file_exists
    return [(s.name, s.description, s.has_oracle and oracle_file_exists(s.name))
            for s in CATALOGUE.values()]

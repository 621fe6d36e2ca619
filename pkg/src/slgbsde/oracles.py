"""Reference tables for the catalogue.

A table lists ``Y^i(t, x)`` for ``t = 0, 0.1, ..., T`` and ``x`` on a
uniform grid of ``[-5, 5]`` with step 0.025 (``m = 1`` only).  Closed-form
references are tabulated directly; the demo reference comes from the
finite-difference solver.  Files are CSV with columns
``t, x, component, value`` (component is 1-based) and are written by the
``oracle`` CLI subcommand into the package data directory.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

ORACLE_DIR = os.path.join(os.path.dirname(__file__), "data", "oracles")
TIME_STEP = 0.1
X_HALF_WIDTH = 5.0
X_STEP = 0.025
PDE_RESOLUTION = (8001, 8000)  # (space nodes, time steps) on [-15, 15] x [0, T]


def oracle_path(name, directory=None):
    return os.path.join(directory or ORACLE_DIR, f"{name}.csv")


def oracle_file_exists(name, directory=None):
    return os.path.isfile(oracle_path(name, directory))


def table_axes(T=1.0):
    steps = int(round(T / TIME_STEP))
    times = np.round(np.arange(steps + 1) * TIME_STEP, 12)
    nx = int(round(2 * X_HALF_WIDTH / X_STEP)) + 1
    xs = np.round(np.linspace(-X_HALF_WIDTH, X_HALF_WIDTH, nx), 12)
    return times, xs


@dataclass
class OracleTable:
    times: np.ndarray
    xs: np.ndarray
    values: np.ndarray  # (times, components, xs)

    def covers(self, t):
        return bool(np.min(np.abs(self.times - t)) <= 1e-9)

    def value(self, t, x, component=0):
        """Values at a tabulated time, linearly interpolated in ``x``."""
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-9:
            raise ValidationError(f"t={t} is not a tabulated time")
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > X_HALF_WIDTH + 1e-12):
            raise ValidationError("x outside the tabulated range")
        return np.interp(x, self.xs, self.values[j, component])

    def write_csv(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "component", "value"])
            for j, t in enumerate(self.times):
                for i in range(self.values.shape[1]):
                    for x, v in zip(self.xs, self.values[j, i]):
                        w.writerow([repr(float(t)), repr(float(x)), i + 1, repr(float(v))])


def load_oracle(name, directory=None) -> OracleTable:
    path = oracle_path(name, directory)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no oracle table for {name!r} at {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    times = np.unique(data[:, 0])
    xs = np.unique(data[:, 1])
    nc = int(data[:, 2].max())
    values = data[:, 3].reshape(len(times), nc, len(xs))
    return OracleTable(times, xs, values)


def build_oracle(scenario, pde_resolution=PDE_RESOLUTION) -> OracleTable:
    """Tabulate the reference solution of a catalogue scenario."""
    problem = scenario.problem
    T = problem.horizon_T
    times, xs = table_axes(T)
    nc = problem.n
    if scenario.oracle_kind == "closed-form":
        values = np.stack([scenario.closed_form(t, xs, T)[0].T for t in times])
    elif scenario.oracle_kind == "pde":
        from .pde import solve_pde
        nx, nt = pde_resolution
        every = nt // (len(times) - 1)
        sol = solve_pde(problem, nx=nx, nt=nt, store_every=every)
        values = np.stack([[sol.at(t, xs, i) for i in range(nc)] for t in times])
    else:
        raise ValidationError(f"scenario {scenario.name!r} has no reference solution")
    return OracleTable(times, xs, np.asarray(values, dtype=float).reshape(len(times), nc, len(xs)))

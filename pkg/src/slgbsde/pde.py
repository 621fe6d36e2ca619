"""Finite-difference reference solver for one-dimensional Markovian systems.

With ``m = 1`` the deterministic fields ``u_i(t, x) = Y^i_t`` solve the
semilinear system

    d_t u_i + 1/2 sigma(t, x)^2 d_xx u_i + H_i(t, x, u, sigma d_x u) = 0,
    u_i(T, x) = g^i(x).

Marching backward from ``T``: diffusion is implicit (tridiagonal solve),
the driver is explicit.  A component's dependence on its own gradient is
discretised with the Godunov numerical Hamiltonian built from the one-sided
differences ``a = D^- u_i`` and ``b = D^+ u_i``: the driver is maximised
over ``[a, b]`` when ``a <= b`` and minimised over ``[b, a]`` otherwise
(extrema are searched over the endpoints, zero and a few interior points).
Gradients of the other components enter through central differences.
Zero-flux boundaries are imposed at ``+-L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ValidationError
from .model import ProblemSpec

_INTERIOR = np.linspace(0.0, 1.0, 7)[1:-1]


@dataclass
class PDESolution:
    times: np.ndarray  # (nt+1,)
    xs: np.ndarray  # (nx,)
    values: np.ndarray  # (nt+1, n, nx)

    def at(self, t, x, i=0):
        """Linear interpolation in ``x`` at a stored time."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise ValidationError(f"t={t} is not a stored time")
        return np.interp(x, self.xs, self.values[k, i])


def _godunov(F, a, b):
    """Monotone numerical Hamiltonian for ``u_tau = F(u_x)``."""
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    cand = [F(a), F(b)] + [F(lo + s * (hi - lo)) for s in _INTERIOR]
    zero_in = (lo <= 0.0) & (hi >= 0.0)
    f0 = F(np.zeros_like(a))
    cand_max = np.max(cand, axis=0)
    cand_min = np.min(cand, axis=0)
    cand_max = np.where(zero_in, np.maximum(cand_max, f0), cand_max)
    cand_min = np.where(zero_in, np.minimum(cand_min, f0), cand_min)
    return np.where(a <= b, cand_max, cand_min)


def solve_pde(problem: ProblemSpec, half_width=15.0, nx=2001, nt=2000, store_every=None):
    """Fine-grid solution on ``[-L, L] x [start_t, T]``.

    ``store_every`` thins the stored time levels (default: keep ``nt/100``
    evenly spaced levels plus ``T``).
    """
    if problem.m != 1:
        raise ValidationError("the finite-difference reference needs m = 1")
    T = problem.horizon_T
    n = problem.n
    gen = problem.generator
    xs = np.linspace(-half_width, half_width, nx)
    h = xs[1] - xs[0]
    dt = T / nt
    X = xs[:, None]
    u = problem.terminal_values(X).T.copy()  # (n, nx)
    every = store_every or max(1, nt // 100)
    times, stored = [T], [u.copy()]

    for step in range(nt, 0, -1):
        t = step * dt
        t_new = t - dt
        sig = problem.diffusion(t_new, X)[:, 0, 0]
        # ghost-node Neumann differences
        up = np.concatenate([u[:, 1:], u[:, -2:-1]], axis=1)
        um = np.concatenate([u[:, 1:2], u[:, :-1]], axis=1)
        dplus = (up - u) / h
        dminus = (u - um) / h
        dcent = 0.5 * (dplus + dminus)
        y_all = u.T  # (nx, n)
        z_cent = (sig[:, None] * dcent.T)[:, :, None]  # (nx, n, 1)
        rhs = np.empty_like(u)
        for i in range(n):
            def F(p, i=i):
                z = z_cent.copy()
                z[:, i, 0] = sig * p
                return gen(t, X, y_all, z, i)
            rhs[i] = u[i] + dt * _godunov(F, dminus[i], dplus[i])
        # implicit diffusion: (I - dt/2 sig^2 D2) u_new = rhs
        c = 0.5 * dt * sig ** 2 / h ** 2
        ab = np.zeros((3, nx))
        ab[1] = 1.0 + 2.0 * c
        ab[0, 1:] = -c[:-1]
        ab[2, :-1] = -c[1:]
        ab[0, 1] = -2.0 * c[0]  # reflecting ghost node
        ab[2, -2] = -2.0 * c[-1]
        u = solve_banded((1, 1), ab, rhs.T).T
        if not np.all(np.isfinite(u)):
            raise ValidationError(f"reference solve produced non-finite values at t={t_new}")
        if (nt - step + 1) % every == 0 or step == 1:
            times.append(t_new)
            stored.append(u.copy())
    order = np.argsort(times)
    return PDESolution(np.asarray(times)[order], xs, np.asarray(stored)[order])

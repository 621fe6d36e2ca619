"""Euler–Maruyama simulation of the driftless forward diffusion
``dX = sigma(t, X) dB`` and related moment diagnostics.

Randomness is organised in fixed-size path blocks.  Block ``b`` draws from
a Philox stream keyed by ``SeedSequence(seed, spawn_key=(b,))``, so the
ensemble only depends on ``(seed, path_count)`` and never on how blocks
are distributed over workers.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import SimulationError, ValidationError
from .model import DiffusionSpec

BLOCK_SIZE = 4096
_MAGIC = b"SLGENS01"


@dataclass(frozen=True)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValidationError("time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValidationError("time grid must start at 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValidationError("time grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T, N):
        if N < 1:
            raise ValidationError("N must be positive")
        return cls(np.linspace(0.0, float(T), int(N) + 1))

    @property
    def N(self):
        return self.nodes.size - 1

    @property
    def T(self):
        return float(self.nodes[-1])

    @property
    def dt(self):
        return np.diff(self.nodes)

    def index_of(self, t, tol=1e-12):
        k = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[k] - t) > tol * max(1.0, self.T):
            raise ValidationError(f"t={t} is not a grid node")
        return k

    def first_index_at_or_after(self, t, tol=1e-12):
        return int(np.searchsorted(self.nodes, t - tol * max(1.0, self.T)))


@dataclass(frozen=True)
class PathEnsemble:
    """States ``[node, path, dim]`` and increments ``[step, path, dim]``."""

    states: np.ndarray
    increments: np.ndarray
    grid: TimeGrid
    seed: int
    start_t: float
    start_x: np.ndarray

    @property
    def path_count(self):
        return self.states.shape[1]

    @property
    def m(self):
        return self.states.shape[2]

    @property
    def start_index(self):
        return self.grid.index_of(self.start_t)

    def tail(self, j):
        """Sub-ensemble on nodes ``j..N`` with time origin kept at 0."""
        nodes = self.grid.nodes[j:] - self.grid.nodes[j]
        return PathEnsemble(self.states[j:], self.increments[j:], TimeGrid(nodes),
                            self.seed, max(0.0, self.start_t - self.grid.nodes[j]),
                            self.start_x)

    def save(self, path):
        """Write the binary dump.

        Layout (little endian): 8-byte magic ``SLGENS01``; header
        ``<iiiqd`` = (m, N, P, seed, start_t); ``N+1`` float64 grid nodes;
        ``m`` float64 start state (NaN when starts differ per path); then
        states ``(N+1, P, m)`` and increments ``(N, P, m)`` row-major float64.
        """
        m, N, P = self.m, self.grid.N, self.path_count
        sx = np.asarray(self.start_x, dtype=float)
        head = sx if sx.ndim == 1 else np.full(m, np.nan)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<iiiqd", m, N, P, int(self.seed), float(self.start_t)))
            fh.write(np.asarray(self.grid.nodes, dtype="<f8").tobytes())
            fh.write(np.asarray(head, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.states, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                raise ValidationError(f"{path} is not an ensemble dump")
            m, N, P, seed, start_t = struct.unpack("<iiiqd", fh.read(struct.calcsize("<iiiqd")))
            nodes = np.frombuffer(fh.read(8 * (N + 1)), dtype="<f8")
            sx = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
            states = np.frombuffer(fh.read(8 * (N + 1) * P * m), dtype="<f8").reshape(N + 1, P, m)
            incs = np.frombuffer(fh.read(8 * N * P * m), dtype="<f8").reshape(N, P, m)
        if np.isnan(sx).any():
            sx = states[0].copy()
        return cls(states.copy(), incs.copy(), TimeGrid(nodes.copy()), seed, start_t, sx)


def euler_paths(spec: DiffusionSpec, grid: TimeGrid, start_index, x0, increments, path_offset=0):
    """Run the Euler recursion on given increments ``(N, P, m)``.

    Nodes up to ``start_index`` hold ``x0``.  ``x0`` is ``(m,)`` or
    ``(P, m)``.
    """
    N, P, m = increments.shape
    states = np.empty((N + 1, P, m))
    states[: start_index + 1] = np.broadcast_to(x0, (P, m))
    x = states[start_index].copy()
    for k in range(start_index, N):
        sig = spec(grid.nodes[k], x)
        x = x + np.einsum("pij,pj->pi", sig, increments[k])
        bad = ~np.isfinite(x)
        if bad.any():
            p = int(np.argwhere(bad)[0][0])
            raise SimulationError(f"non-finite state at step {k}, path {p + path_offset}",
                                  step=k, path=p + path_offset)
        states[k + 1] = x
    return states


def simulate(spec: DiffusionSpec, grid: TimeGrid, start_t, start_x, path_count, seed,
             workers=1, block_size=BLOCK_SIZE) -> PathEnsemble:
    """Simulate ``path_count`` Euler paths started at ``(start_t, start_x)``.

    ``start_x`` may be a single state ``(m,)`` or per-path states
    ``(path_count, m)``.  Increments are drawn for every step (also those
    before ``start_t``, where the state stays frozen) so that a restart
    from a later time with the same seed reuses the same noise.
    """
    if path_count < 1:
        raise ValidationError("path_count must be >= 1")
    m = spec.dim_m
    x0 = np.asarray(start_x, dtype=float)
    if x0.ndim == 1 and x0.shape != (m,):
        raise ValidationError(f"start_x must have shape ({m},)")
    if x0.ndim == 2 and x0.shape != (path_count, m):
        raise ValidationError(f"per-path start_x must have shape ({path_count}, {m})")
    k0 = grid.index_of(start_t)
    sqdt = np.sqrt(grid.dt)
    bounds = [(b, s, min(s + block_size, path_count))
              for b, s in enumerate(range(0, path_count, block_size))]

    def run_block(item):
        b, lo, hi = item
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))
        # (paths, steps, dim) draw order keeps each path's noise prefix-stable
        z = rng.standard_normal((hi - lo, grid.N, m))
        dB = np.ascontiguousarray(z.transpose(1, 0, 2)) * sqdt[:, None, None]
        xb = x0 if x0.ndim == 1 else x0[lo:hi]
        return euler_paths(spec, grid, k0, xb, dB, path_offset=lo), dB

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_block, bounds))
    else:
        results = [run_block(b) for b in bounds]
    states = np.concatenate([r[0] for r in results], axis=1)
    increments = np.concatenate([r[1] for r in results], axis=1)
    return PathEnsemble(states, increments, grid, int(seed), float(start_t),
                        x0.copy() if x0.ndim == 1 else x0.copy())


def moment_estimate_check(ensemble: PathEnsemble, p) -> float:
    """Empirical ``E[sup_s |X_s|^p] / (1 + |x|^p)``."""
    if ensemble.path_count == 0:
        raise ValidationError("empty ensemble")
    if not np.isfinite(ensemble.states).all():
        raise SimulationError("ensemble holds non-finite states")
    sup = np.linalg.norm(ensemble.states, axis=2).max(axis=0)
    x0 = np.asarray(ensemble.start_x, dtype=float)
    x0n = np.linalg.norm(np.broadcast_to(x0, (ensemble.path_count, ensemble.m)), axis=1)
    return float(np.mean(sup ** p / (1.0 + x0n ** p)))


def ellipticity_probe(spec: DiffusionSpec, sample_count, seed, box_radius=10.0, horizon=1.0):
    """Extreme eigenvalues of ``sigma sigma^T`` over uniform samples."""
    if sample_count < 1:
        raise ValidationError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random((int(sample_count), 1 + spec.dim_m))
    t = u[:, 0] * horizon
    x = (2 * u[:, 1:] - 1) * box_radius
    sig = spec(t, x)
    eig = np.linalg.svd(sig, compute_uv=False) ** 2
    return float(max(eig.min(), 0.0)), float(eig.max())

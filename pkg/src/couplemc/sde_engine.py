"""Euler-Maruyama simulation of the time-reversed diffusion with
counter-based, partition-invariant randomness.

The Gaussian increment used by path p at step k is a pure function of
(master seed, p, k): each path owns a Philox stream keyed by (seed, p),
and the doubles at positions [k*d, (k+1)*d) of that stream feed the
inverse normal CDF.  Workers and block sizes therefore never change the
numbers.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

from .coefficients import CoefficientField, sqrt_spd
from .errors import SimulationDivergedError, ValidationError

# keep per-chunk increment buffers around this many doubles
_CHUNK_BUDGET = 4_000_000
_DEFAULT_BLOCK = 16_384


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with the given number of steps."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValidationError("horizon must be positive")
        if self.steps < 1:
            raise ValidationError("need at least one step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


@dataclass
class SamplePath:
    """One discretized trajectory with the running Feynman-Kac exponent."""

    grid: TimeGrid
    states: np.ndarray      # (steps+1, d)
    weight_log: np.ndarray  # (steps+1,), left-endpoint sum of c(T-t, X) dt


class RngStream:
    """Counter-based Gaussian increments keyed by (seed, path, step)."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def _raw_uniforms(self, path_index: int, lo: int, count: int) -> np.ndarray:
        # one counter unit is one 4-double output block
        blocks, rem = divmod(lo, 4)
        key = np.array([self.seed, path_index], dtype=np.uint64)
        u = Generator(Philox(key=key, counter=blocks)).random(rem + count)
        return u[rem:]

    def uniforms(self, path_indices, step_lo: int, step_hi: int, dim: int) -> np.ndarray:
        """Uniform[0, 1) draws, shape (paths, steps, dim)."""
        path_indices = np.asarray(path_indices, dtype=np.uint64)
        n_steps = step_hi - step_lo
        count = n_steps * dim
        out = np.empty((len(path_indices), count))
        lo = step_lo * dim
        for i, p in enumerate(path_indices):
            out[i] = self._raw_uniforms(int(p), lo, count)
        return out.reshape(len(path_indices), n_steps, dim)

    def normals(self, path_indices, step_lo: int, step_hi: int, dim: int) -> np.ndarray:
        """Standard normal increments, shape (paths, steps, dim)."""
        u = self.uniforms(path_indices, step_lo, step_hi, dim)
        # shift into (0, 1) so ndtri never sees an endpoint
        return ndtri(u + 2.0**-54)


def sigma_batch(field: CoefficientField, t: float, x: np.ndarray) -> np.ndarray:
    """sigma(t, x) for a batch of points, shape (n, d, d)."""
    if field.sigma is not None:
        return np.asarray(field.sigma(t, x), dtype=float)
    A = np.asarray(field.a(t, x), dtype=float)
    if field.dim == 1:
        return np.sqrt(A)
    return sqrt_spd(A)


def _chunk_edges(steps: int, block: int, dim: int) -> list[tuple[int, int]]:
    chunk = max(1, _CHUNK_BUDGET // max(1, block * dim))
    edges = []
    k = 0
    while k < steps:
        nxt = min(steps, k + chunk)
        edges.append((k, nxt))
        k = nxt
    return edges


def simulate_terminal(field: CoefficientField, x0: np.ndarray, grid: TimeGrid,
                      rng: RngStream, path_lo: int, path_hi: int):
    """Vectorized Euler-Maruyama over a block of paths.

    Returns (X_T, weight_log) with shapes (n, d) and (n,).  States are not
    recorded; use simulate_path for full trajectories.
    """
    d = field.dim
    n = path_hi - path_lo
    dt, T = grid.dt, grid.horizon
    sq_dt = np.sqrt(dt)
    X = np.broadcast_to(np.asarray(x0, dtype=float), (n, d)).copy()
    w = np.zeros(n)
    paths = np.arange(path_lo, path_hi, dtype=np.uint64)
    # overflow is handled by the finite check, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k_lo, k_hi in _chunk_edges(grid.steps, n, d):
            dW = rng.normals(paths, k_lo, k_hi, d) * sq_dt
            for k in range(k_lo, k_hi):
                t_rev = T - k * dt
                sig = sigma_batch(field, t_rev, X)
                w += field.c(t_rev, X) * dt
                X = X + np.einsum("nij,nj->ni", sig, dW[:, k - k_lo]) \
                    + field.b(t_rev, X) * dt
                if not np.all(np.isfinite(X)):
                    raise SimulationDivergedError(k + 1)
    return X, w


def simulate_path(field: CoefficientField, x0, grid: TimeGrid, rng: RngStream,
                  path_index: int = 0, increments: np.ndarray | None = None) -> SamplePath:
    """Simulate a single path, recording every node.

    increments optionally supplies the Brownian increments Delta-B
    (shape (steps, d), distributed N(0, dt I)) directly, bypassing the
    rng; used for grid-refinement checks.
    """
    d = field.dim
    dt, T = grid.dt, grid.horizon
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (d,):
        raise ValidationError(f"x0 must have shape ({d},)")
    if increments is None:
        dB = rng.normals([path_index], 0, grid.steps, d)[0] * np.sqrt(dt)
    else:
        dB = np.asarray(increments, dtype=float)
        if dB.shape != (grid.steps, d):
            raise ValidationError("increments must have shape (steps, dim)")
    states = np.empty((grid.steps + 1, d))
    weight = np.empty(grid.steps + 1)
    states[0] = x0
    weight[0] = 0.0
    X = x0[None, :].copy()
    w = 0.0
    for k in range(grid.steps):
        t_rev = T - k * dt
        sig = sigma_batch(field, t_rev, X)
        w += float(field.c(t_rev, X)[0]) * dt
        X = X + sig[0] @ dB[k] + field.b(t_rev, X) * dt
        if not np.all(np.isfinite(X)):
            raise SimulationDivergedError(k + 1)
        states[k + 1] = X[0]
        weight[k + 1] = w
    return SamplePath(grid=grid, states=states, weight_log=weight)


def feynman_kac_weight(path: SamplePath) -> float:
    """exp of the accumulated c-integral at the final node."""
    return float(np.exp(path.weight_log[-1]))


def simulate_brownian_running_max(t: float, n_paths: int, steps: int,
                                  rng: RngStream, path_offset: int = 0) -> np.ndarray:
    """Exact-in-law samples of sup_{s<=t} B_s for standard 1D Brownian
    motion, via per-step Brownian-bridge maxima.

    Consumes two uniforms per (path, step): one for the endpoint increment
    and one for the bridge maximum.
    """
    if t <= 0.0 or steps < 1 or n_paths < 1:
        raise ValidationError("need t > 0, steps >= 1, n_paths >= 1")
    dt = t / steps
    paths = np.arange(path_offset, path_offset + n_paths, dtype=np.uint64)
    run_max = np.zeros(n_paths)
    endpoint = np.zeros(n_paths)
    chunk = max(1, _CHUNK_BUDGET // max(1, 2 * n_paths))
    k = 0
    while k < steps:
        k_hi = min(steps, k + chunk)
        u = rng.uniforms(paths, k, k_hi, 2) + 2.0**-54
        dB = ndtri(u[:, :, 0]) * np.sqrt(dt)
        for j in range(k_hi - k):
            a = endpoint
            b = endpoint + dB[:, j]
            # max of a Brownian bridge from a to b over a step of length dt
            bridge = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * dt * np.log(u[:, j, 1])))
            run_max = np.maximum(run_max, bridge)
            endpoint = b
        k = k_hi
    return run_max


def run_path_blocks(n_paths: int, worker, n_workers: int = 1,
                    path_offset: int = 0, block_size: int = _DEFAULT_BLOCK):
    """Evaluate worker(path_lo, path_hi) over a fixed block partition and
    concatenate the per-path result arrays in path order.

    The partition depends only on block_size, never on n_workers, and the
    worker must be a pure function of the path range, so results are
    byte-identical for any worker count.
    """
    edges = []
    lo = path_offset
    while lo < path_offset + n_paths:
        hi = min(path_offset + n_paths, lo + block_size)
        edges.append((lo, hi))
        lo = hi
    if n_workers <= 1 or len(edges) == 1:
        parts = [worker(lo, hi) for lo, hi in edges]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda e: worker(*e), edges))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)


def mean_stderr(values: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error (pairwise summation via numpy)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return mean, 0.0
    var = float(np.sum((values - mean) ** 2)) / (n - 1)
    return mean, float(np.sqrt(var / n))

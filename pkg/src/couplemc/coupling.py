"""Reflection coupling of two diffusions started at nearby points.

The second process Z is driven by the Brownian increments of X reflected
across sigma(Z)^-1 (X - Z) until the pair meets, then fused with X.  On a
discrete grid the meeting is declared when |X - Z| falls below a tolerance
or, in one dimension, when the separation changes sign between nodes or a
Brownian-bridge test says it crossed zero inside the step.  The bridge
test removes the O(sqrt(dt)) bias of endpoint-only detection; 1D pairs
consume two uniforms per step (increment + bridge) for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .coefficients import CoefficientField, ModulusOfContinuity, require_dini
from .errors import DegenerateDirectionError, SimulationDivergedError, ValidationError
from .sde_engine import (RngStream, SamplePath, TimeGrid, _chunk_edges,
                         mean_stderr, run_path_blocks, sigma_batch)


@dataclass
class CoupledPath:
    """A coupled pair of trajectories with the declared coupling time.

    tau_index is None when the pair has not coupled by the horizon, in
    which case tau_time equals the horizon.
    """

    path_x: SamplePath
    path_z: SamplePath
    tau_index: int | None
    tau_time: float


@dataclass(frozen=True)
class LyapunovParams:
    """Parameters of the comparison function used to bound coupling times
    under a Dini modulus."""

    gamma: float
    rho: ModulusOfContinuity

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValidationError("gamma must be positive")


@dataclass(frozen=True)
class CouplingEstimate:
    mean: float
    stderr: float
    fraction_coupled: float


# draw-buffer size (in doubles) for the compacted coupling loop; larger
# buffers amortize per-path generator setup over more steps
_TAUS_CHUNK_BUDGET = 40_000_000

# tau-only runs use one big block: per-path results never depend on the
# partition, and a single block minimizes Python-loop overhead
_TAUS_BLOCK = 1 << 22


def default_couple_tol(grid: TimeGrid, field: CoefficientField) -> float:
    """Increment-scale coupling tolerance: sqrt(dt) / (10 sqrt(lam))."""
    return np.sqrt(grid.dt) / np.sqrt(field.lam) / 10.0


def reflection_matrix(sigma_z: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Householder reflector across v = sigma_z^-1 xi.

    Orthogonal, symmetric, and maps v to -v; batched over leading axes.
    """
    sigma_z = np.asarray(sigma_z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    norms = np.linalg.norm(xi, axis=-1)
    if np.any(norms < 1e-300):
        raise DegenerateDirectionError(
            "reflection direction undefined for zero separation"
        )
    v = np.linalg.solve(sigma_z, xi[..., None])[..., 0]
    vv = np.sum(v * v, axis=-1)[..., None, None]
    d = sigma_z.shape[-1]
    return np.eye(d) - 2.0 * v[..., :, None] * v[..., None, :] / vv


def _reflect_increments(v: np.ndarray, dW: np.ndarray) -> np.ndarray:
    """H dW without forming H: dW - 2 v (v . dW) / |v|^2."""
    proj = np.sum(v * dW, axis=-1) / np.sum(v * v, axis=-1)
    return dW - 2.0 * v * proj[..., None]


def simulate_coupled_block(field: CoefficientField, x, z, grid: TimeGrid,
                           rng: RngStream, path_lo: int, path_hi: int,
                           couple_tol: float, stop_step: int | None = None,
                           want_terminal: bool = False):
    """Vectorized coupled pairs over the path-index range [path_lo, path_hi).

    Returns (tau_step, x_final, wx, z_final, wz):

      * tau_step -- node index at which coupling was declared, -1 if the
        pair did not couple before ``stop_step`` (terminal mode always
        watches the full grid);
      * terminal arrays (zero-filled unless want_terminal): state and
        c-integral of each leg at the horizon; after coupling the Z leg
        equals the X leg and its c-integral differs by the discrepancy
        accumulated before the coupling time.

    Per-path results depend only on (seed, path index) and the arguments,
    never on block boundaries, so any partitioning reproduces them.
    """
    d = field.dim
    n = path_hi - path_lo
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (d,))
    z = np.broadcast_to(np.atleast_1d(np.asarray(z, dtype=float)), (d,))
    if want_terminal:
        return _coupled_terminal_block(field, x, z, grid, rng,
                                       path_lo, path_hi, couple_tol)
    detect_until = grid.steps if stop_step is None \
        else min(stop_step, grid.steps)
    tau_step = _coupled_taus_block(field, x, z, grid, rng, path_lo, path_hi,
                                   couple_tol, detect_until)
    zero_s = np.zeros((n, d))
    zero_w = np.zeros(n)
    return tau_step, zero_s, zero_w, zero_s.copy(), zero_w.copy()


def _bridge_hit(av, bv, s_loc, dt, bridge_u, couple_tol):
    """1D meeting test: endpoint tolerance, sign change, or a crossing of
    the bridge between the separation endpoints (probability
    exp(-2ab / (s^2 dt)) when both endpoints share a sign)."""
    p_cross = np.exp(np.minimum(0.0, -2.0 * av * bv / (s_loc**2 * dt)))
    return (np.abs(bv) <= couple_tol) | (av * bv <= 0.0) | (bridge_u < p_cross)


def _coupled_taus_block(field, x, z, grid, rng, path_lo, path_hi,
                        couple_tol, detect_until):
    """Coupling node indices only; active pairs are kept in compacted
    arrays so per-step cost scales with the number of survivors."""
    d = field.dim
    if d == 1:
        return _coupled_taus_block_1d(field, x, z, grid, rng, path_lo,
                                      path_hi, couple_tol, detect_until)
    n = path_hi - path_lo
    dt, T = grid.dt, grid.horizon
    sq_dt = np.sqrt(dt)
    tau_step = np.full(n, -1, dtype=np.int64)
    if float(np.linalg.norm(x - z)) <= couple_tol:
        tau_step[:] = 0
        return tau_step
    paths = np.arange(path_lo, path_hi, dtype=np.uint64)
    rows = np.arange(n)  # local ids of still-uncoupled pairs
    X = np.tile(x, (n, 1))
    Z = np.tile(z, (n, 1))
    has_drift = field.b_sup > 0.0
    # adaptive chunking: the fewer survivors, the longer the lookahead, so
    # the per-path generator setup cost stays sublinear in step count
    k = 0
    while k < detect_until and len(rows):
        chunk = max(16, _TAUS_CHUNK_BUDGET // (d * len(rows)))
        k_hi = min(detect_until, k + chunk)
        dW_chunk = rng.normals(paths[rows], k, k_hi, d) * sq_dt
        dpos = np.arange(len(rows))  # row into this chunk's draws
        for kk in range(k, k_hi):
            if not len(rows):
                break
            t_rev = T - kk * dt
            dW = dW_chunk[dpos, kk - k]
            sig_x = sigma_batch(field, t_rev, X)
            sig_z = sigma_batch(field, t_rev, Z)
            v = np.linalg.solve(sig_z, (X - Z)[..., None])[..., 0]
            hdw = _reflect_increments(v, dW)
            X_next = X + np.einsum("nij,nj->ni", sig_x, dW)
            Z_next = Z + np.einsum("nij,nj->ni", sig_z, hdw)
            if has_drift:
                X_next += field.b(t_rev, X) * dt
                Z_next += field.b(t_rev, Z) * dt
            xi_new = X_next - Z_next
            # a blow-up of either leg surfaces in the separation
            if not np.all(np.isfinite(xi_new)):
                raise SimulationDivergedError(kk + 1)
            hit = np.linalg.norm(xi_new, axis=-1) <= couple_tol
            if hit.any():
                tau_step[rows[hit]] = kk + 1
                keep = ~hit
                rows, dpos = rows[keep], dpos[keep]
                X, Z = X_next[keep], Z_next[keep]
            else:
                X, Z = X_next, Z_next
        k = k_hi
    return tau_step


def _coupled_taus_block_1d(field, x, z, grid, rng, path_lo, path_hi,
                           couple_tol, detect_until):
    """Flat scalar-state version of the tau loop for one dimension, with
    the bridge-crossing test folded into a single exponential bound: for
    same-sign separation endpoints a, b the crossing fires with
    probability exp(-2ab / (s^2 dt)); for opposite signs the bound exceeds
    one and fires surely."""
    n = path_hi - path_lo
    dt, T = grid.dt, grid.horizon
    sq_dt = np.sqrt(dt)
    tau_step = np.full(n, -1, dtype=np.int64)
    if abs(float(x[0] - z[0])) <= couple_tol:
        tau_step[:] = 0
        return tau_step
    paths = np.arange(path_lo, path_hi, dtype=np.uint64)
    rows = np.arange(n)
    xs = np.full(n, float(x[0]))
    zs = np.full(n, float(z[0]))
    has_drift = field.b_sup > 0.0
    neg_inv = -2.0 / dt
    k = 0
    # non-finite states propagate NaN into the separation and fail every
    # comparison, so they survive to the chunk-boundary check below
    with np.errstate(over="ignore", invalid="ignore"):
        while k < detect_until and rows.size:
            chunk = max(16, _TAUS_CHUNK_BUDGET // (2 * rows.size))
            k_hi = min(detect_until, k + chunk)
            u = rng.uniforms(paths[rows], k, k_hi, 2)
            dW_chunk = ndtri(u[:, :, 0] + 2.0**-54) * sq_dt
            bridge_chunk = u[:, :, 1]
            dpos = np.arange(rows.size)
            for kk in range(k, k_hi):
                if not rows.size:
                    break
                t_rev = T - kk * dt
                j = kk - k
                dW = dW_chunk[dpos, j]
                sx = sigma_batch(field, t_rev, xs[:, None])[:, 0, 0]
                sz = sigma_batch(field, t_rev, zs[:, None])[:, 0, 0]
                x_next = xs + sx * dW
                z_next = zs - sz * dW
                if has_drift:
                    x_next = x_next + field.b(t_rev, xs[:, None])[:, 0] * dt
                    z_next = z_next + field.b(t_rev, zs[:, None])[:, 0] * dt
                bv = x_next - z_next
                p_cross = np.exp((xs - zs) * bv * neg_inv / (sx + sz) ** 2)
                hit = (np.abs(bv) <= couple_tol) | (bridge_chunk[dpos, j] < p_cross)
                if hit.any():
                    tau_step[rows[hit]] = kk + 1
                    keep = ~hit
                    rows, dpos = rows[keep], dpos[keep]
                    xs, zs = x_next[keep], z_next[keep]
                else:
                    xs, zs = x_next, z_next
            if not np.all(np.isfinite(xs - zs)):
                raise SimulationDivergedError(k_hi)
            k = k_hi
    return tau_step


def _coupled_terminal_block(field, x, z, grid, rng, path_lo, path_hi,
                            couple_tol):
    """Coupled pairs carried to the horizon with their c-integrals."""
    d = field.dim
    n = path_hi - path_lo
    dt, T = grid.dt, grid.horizon
    sq_dt = np.sqrt(dt)
    paths = np.arange(path_lo, path_hi, dtype=np.uint64)
    tau_step = np.full(n, -1, dtype=np.int64)
    X = np.tile(x, (n, 1))
    Z = np.tile(z, (n, 1))
    wx = np.zeros(n)
    wz = np.zeros(n)
    wz_off = np.zeros(n)
    live = np.ones(n, dtype=bool)

    if float(np.linalg.norm(x - z)) <= couple_tol:
        tau_step[:] = 0
        live[:] = False

    draw_dim = 2 if d == 1 else d
    for k_lo, k_hi in _chunk_edges(grid.steps, n, draw_dim):
        if d == 1:
            u_chunk = rng.uniforms(paths, k_lo, k_hi, 2)
            dW_chunk = ndtri(u_chunk[:, :, :1] + 2.0**-54) * sq_dt
            bridge_u = u_chunk[:, :, 1]
        else:
            dW_chunk = rng.normals(paths, k_lo, k_hi, d) * sq_dt
        for k in range(k_lo, k_hi):
            t_rev = T - k * dt
            j = k - k_lo
            sig_x = sigma_batch(field, t_rev, X)
            wx += field.c(t_rev, X) * dt
            X_new = X + np.einsum("nij,nj->ni", sig_x, dW_chunk[:, j]) \
                + field.b(t_rev, X) * dt
            if not np.all(np.isfinite(X_new)):
                raise SimulationDivergedError(k + 1)
            rows = np.nonzero(live)[0]
            if len(rows):
                dW = dW_chunk[rows, j]
                Zr = Z[rows]
                X_next = X_new[rows]
                sig_z = sigma_batch(field, t_rev, Zr)
                wz[rows] += field.c(t_rev, Zr) * dt
                if d == 1:
                    hdw = -dW
                else:
                    v = np.linalg.solve(sig_z, (X[rows] - Zr)[..., None])[..., 0]
                    hdw = _reflect_increments(v, dW)
                Z_next = Zr + np.einsum("nij,nj->ni", sig_z, hdw) \
                    + field.b(t_rev, Zr) * dt
                if not np.all(np.isfinite(Z_next)):
                    raise SimulationDivergedError(k + 1)
                xi_new = X_next - Z_next
                if d == 1:
                    hit = _bridge_hit((X[rows] - Zr)[:, 0], xi_new[:, 0],
                                      sig_x[rows][:, 0, 0] + sig_z[:, 0, 0],
                                      dt, bridge_u[rows, j], couple_tol)
                else:
                    hit = np.linalg.norm(xi_new, axis=-1) <= couple_tol
                Z[rows] = Z_next
                if np.any(hit):
                    gidx = rows[hit]
                    tau_step[gidx] = k + 1
                    live[gidx] = False
                    # freeze the pre-coupling c-integral discrepancy;
                    # both legs accrue identically afterwards
                    wz_off[gidx] = wz[gidx] - wx[gidx]
            X = X_new

    coupled = tau_step >= 0
    z_final = np.where(coupled[:, None], X, Z)
    wz_final = np.where(coupled, wx + wz_off, wz)
    return tau_step, X, wx, z_final, wz_final


def simulate_coupled(field: CoefficientField, x, z, grid: TimeGrid, rng: RngStream,
                     couple_tol: float | None = None, path_index: int = 0) -> CoupledPath:
    """Simulate one coupled pair, recording both trajectories node by node."""
    if couple_tol is None:
        couple_tol = default_couple_tol(grid, field)
    if couple_tol < 0.0:
        raise ValidationError("couple_tol must be >= 0")
    d = field.dim
    dt, T = grid.dt, grid.horizon
    x = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), (d,)).astype(float)
    z = np.broadcast_to(np.atleast_1d(np.asarray(z, dtype=float)), (d,)).astype(float)

    if d == 1:
        u = rng.uniforms([path_index], 0, grid.steps, 2)[0]
        dB = ndtri(u[:, :1] + 2.0**-54) * np.sqrt(dt)
        bridge_u = u[:, 1]
    else:
        dB = rng.normals([path_index], 0, grid.steps, d)[0] * np.sqrt(dt)
    states_x = np.empty((grid.steps + 1, d))
    states_z = np.empty((grid.steps + 1, d))
    wx = np.zeros(grid.steps + 1)
    wz = np.zeros(grid.steps + 1)
    states_x[0], states_z[0] = x, z
    tau_index = 0 if float(np.linalg.norm(x - z)) <= couple_tol else None

    for k in range(grid.steps):
        t_rev = T - k * dt
        Xk = states_x[k][None, :]
        Zk = states_z[k][None, :]
        sig_x = sigma_batch(field, t_rev, Xk)[0]
        wx[k + 1] = wx[k] + float(field.c(t_rev, Xk)[0]) * dt
        wz[k + 1] = wz[k] + float(field.c(t_rev, Zk)[0]) * dt
        x_next = states_x[k] + sig_x @ dB[k] + field.b(t_rev, Xk)[0] * dt
        if not np.all(np.isfinite(x_next)):
            raise SimulationDivergedError(k + 1)
        states_x[k + 1] = x_next
        if tau_index is not None:
            states_z[k + 1] = x_next
            continue
        sig_z = sigma_batch(field, t_rev, Zk)[0]
        H = reflection_matrix(sig_z, states_x[k] - states_z[k])
        z_next = states_z[k] + sig_z @ (H @ dB[k]) + field.b(t_rev, Zk)[0] * dt
        if not np.all(np.isfinite(z_next)):
            raise SimulationDivergedError(k + 1)
        xi_old = states_x[k] - states_z[k]
        xi_new = x_next - z_next
        hit = float(np.linalg.norm(xi_new)) <= couple_tol
        if d == 1:
            av, bv = float(xi_old[0]), float(xi_new[0])
            s_loc = float(sig_x[0, 0]) + float(sig_z[0, 0])
            p_cross = np.exp(min(0.0, -2.0 * av * bv / (s_loc**2 * dt)))
            hit = hit or av * bv <= 0.0 or bridge_u[k] < p_cross
        if hit:
            tau_index = k + 1
            z_next = x_next.copy()
        states_z[k + 1] = z_next

    tau_time = min(tau_index * dt, T) if tau_index is not None else T
    return CoupledPath(
        path_x=SamplePath(grid=grid, states=states_x, weight_log=wx),
        path_z=SamplePath(grid=grid, states=states_z, weight_log=wz),
        tau_index=tau_index,
        tau_time=tau_time,
    )


def coupling_times(field: CoefficientField, x, z, grid: TimeGrid, rng: RngStream,
                   n_paths: int, couple_tol: float | None = None,
                   stop_step: int | None = None, n_workers: int = 1,
                   path_offset: int = 0) -> np.ndarray:
    """Coupling node indices for n_paths independent pairs (-1 marks pairs
    not coupled before stop_step)."""
    if couple_tol is None:
        couple_tol = default_couple_tol(grid, field)
    if couple_tol < 0.0:
        raise ValidationError("couple_tol must be >= 0")

    def worker(lo, hi):
        tau, _, _, _, _ = simulate_coupled_block(
            field, x, z, grid, rng, lo, hi, couple_tol, stop_step=stop_step)
        return tau

    return run_path_blocks(n_paths, worker, n_workers=n_workers,
                           path_offset=path_offset, block_size=_TAUS_BLOCK)


def coupling_time_expectation(field: CoefficientField, x, z, t: float,
                              grid: TimeGrid, n_paths: int, rng: RngStream,
                              couple_tol: float | None = None, n_workers: int = 1,
                              path_offset: int = 0) -> CouplingEstimate:
    """Monte Carlo estimate of E[t ^ tau] with its standard error and the
    fraction of pairs coupled by t."""
    if n_paths < 2:
        raise ValidationError("need at least 2 paths")
    if not 0.0 < t <= grid.horizon + 1e-12:
        raise ValidationError("t must lie in (0, horizon]")
    n_t = min(grid.steps, int(round(t / grid.dt)))
    tau_steps = coupling_times(field, x, z, grid, rng, n_paths,
                               couple_tol=couple_tol, stop_step=n_t,
                               n_workers=n_workers, path_offset=path_offset)
    capped = np.where(tau_steps >= 0, np.minimum(tau_steps * grid.dt, t), t)
    mean, se = mean_stderr(capped)
    frac = float(np.mean(tau_steps >= 0))
    return CouplingEstimate(mean=mean, stderr=se, fraction_coupled=frac)


def lyapunov_f(params: LyapunovParams, eta: float) -> float:
    """Comparison function f(eta) = Integral_0^eta exp(-Integral_0^s
    2 gamma^3 rho(r)/r dr) ds, by nested adaptive quadrature.

    Raises DiniDivergenceError when the inner integral diverges (non-Dini
    modulus)."""
    from scipy.integrate import quad

    if eta < 0.0:
        raise ValidationError("eta must be >= 0")
    if eta == 0.0:
        return 0.0
    rho = params.rho
    g = 2.0 * params.gamma**3
    if getattr(rho, "kind", None) == "zero":
        return float(eta)
    require_dini(rho)

    def inner(s):
        val, _ = quad(lambda r: g * rho(r) / r, 0.0, s,
                      epsrel=1e-10, epsabs=1e-14, limit=200)
        return val

    val, _ = quad(lambda s: np.exp(-inner(s)), 0.0, eta,
                  epsrel=1e-10, epsabs=0.0, limit=200)
    return val

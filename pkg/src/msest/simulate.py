"""Trajectory ensembles with streaming moment accumulation.

Stochastic systems are advanced with Euler-Maruyama at the observation step
``h``; the deterministic fast/slow system uses classical RK4 with ``n_sub``
internal steps per observation. Each trajectory draws from its own
counter-based stream (see :mod:`msest.rng`), and each initial condition's
paths are folded into the moment sums in ascending path order by a single
worker, so the output is bit-identical for any number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit, uint64

from .core import (EnsembleConfig, IntegrationDivergedError, InvalidInputError,
                   ModelSpec, MomentTable, MonomialParam)
from .rng import BUFFER_SIZE, fill_normals, stream_key

# offsets keep long single-trajectory streams disjoint from ensemble streams
LONG_PATH_IC_BASE = 1 << 30


# ---------------------------------------------------------------------------
# jitted steppers
# ---------------------------------------------------------------------------

@njit(nogil=True)
def _em_step(drift, diffusion, s, params, h, sqrt_h, noise, off, f, G):
    drift(s, params, f)
    nd = G.shape[1]
    if nd > 0:
        diffusion(s, params, G)
    for a in range(s.shape[0]):
        acc = f[a] * h
        for b in range(nd):
            acc += G[a, b] * sqrt_h * noise[off + b]
        s[a] += acc


@njit(nogil=True)
def _rk4_advance(drift, s, params, dt, n_sub, k1, k2, k3, k4, tmp):
    d = s.shape[0]
    for _ in range(n_sub):
        drift(s, params, k1)
        for a in range(d):
            tmp[a] = s[a] + 0.5 * dt * k1[a]
        drift(tmp, params, k2)
        for a in range(d):
            tmp[a] = s[a] + 0.5 * dt * k2[a]
        drift(tmp, params, k3)
        for a in range(d):
            tmp[a] = s[a] + dt * k3[a]
        drift(tmp, params, k4)
        for a in range(d):
            s[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])


@njit(nogil=True)
def _all_finite(s):
    for a in range(s.shape[0]):
        if not np.isfinite(s[a]):
            return False
    return True


@njit(nogil=True)
def _em_step_py(drift, diffusion, s, params, h, noise, dim, noise_dim):
    f = np.empty(dim)
    G = np.zeros((dim, noise_dim))
    _em_step(drift, diffusion, s, params, h, np.sqrt(h), noise, 0, f, G)


@njit(nogil=True)
def _rk4_py(drift, s, params, dt, n_sub):
    d = s.shape[0]
    _rk4_advance(drift, s, params, dt, n_sub, np.empty(d), np.empty(d),
                 np.empty(d), np.empty(d), np.empty(d))


@njit(nogil=True)
def _noop_sampler(s, params, normals):
    pass


# ---------------------------------------------------------------------------
# ensemble kernel
# ---------------------------------------------------------------------------

@njit(nogil=True)
def _ensemble_kernel(drift, diffusion, sampler, is_ode, params, ics, i_lo, i_hi,
                     n_paths, n, h, n_sub, dim, noise_dim, ic_normals, seed,
                     mom_c, mom_e, bas_c, bas_e, rec_index, keep_terminal,
                     moments, cross, terminal, fail):
    slow = ics.shape[1]
    n_mom = mom_c.shape[0]
    n_bas = bas_c.shape[0]
    nz = slow + n_bas
    max_e = 1
    for e in range(n_mom):
        max_e = max(max_e, mom_e[e])
    for b in range(n_bas):
        max_e = max(max_e, bas_e[b])

    buf = np.empty(BUFFER_SIZE)
    s = np.empty(dim)
    f = np.empty(dim)
    G = np.zeros((dim, noise_dim))
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    pw = np.empty((slow, max_e + 1))
    u0 = np.empty(n_bas)
    ssum = np.empty(n_bas)
    z = np.empty(nz)
    sqrt_h = np.sqrt(h)
    dt = h / n_sub

    for i in range(i_lo, i_hi):
        for path in range(n_paths):
            key0, key1 = stream_key(seed, i, path)
            ctr = fill_normals(key0, key1, uint64(0), buf)
            pos = 0
            for c in range(slow):
                s[c] = ics[i, c]
            if dim > slow:
                sampler(s, params, buf[:ic_normals])
                pos = ic_normals
            for b in range(n_bas):
                u0[b] = ics[i, bas_c[b]] ** bas_e[b]
                ssum[b] = u0[b]

            for k in range(1, n + 1):
                if is_ode:
                    _rk4_advance(drift, s, params, dt, n_sub, k1, k2, k3, k4, tmp)
                else:
                    if pos + noise_dim > BUFFER_SIZE:
                        ctr = fill_normals(key0, key1, ctr, buf)
                        pos = 0
                    # inlined by hand: a jitted helper call here costs ~40% throughput
                    drift(s, params, f)
                    if noise_dim > 0:
                        diffusion(s, params, G)
                    for a in range(dim):
                        acc = f[a] * h
                        for b in range(noise_dim):
                            acc += G[a, b] * sqrt_h * buf[pos + b]
                        s[a] += acc
                    pos += noise_dim
                if not _all_finite(s):
                    fail[0] = 1
                    fail[1] = i
                    fail[2] = path
                    fail[3] = k
                    return

                for c in range(slow):
                    pw[c, 0] = 1.0
                    for j in range(1, max_e + 1):
                        pw[c, j] = pw[c, j - 1] * s[c]
                for e in range(n_mom):
                    moments[i, k, e] += pw[mom_c[e], mom_e[e]]
                for b in range(n_bas):
                    ssum[b] += pw[bas_c[b], bas_e[b]]

                r = rec_index[k]
                last = keep_terminal and k == n
                if r >= 0 or last:
                    for c in range(slow):
                        z[c] = s[c] - ics[i, c]
                    for b in range(n_bas):
                        z[slow + b] = h * (ssum[b] - 0.5 * (u0[b] + pw[bas_c[b], bas_e[b]]))
                    if r >= 0:
                        for a in range(nz):
                            for bb in range(nz):
                                cross[i, r, a, bb] += z[a] * z[bb]
                    if last:
                        for a in range(nz):
                            terminal[i, path, a] = z[a]


def default_threads() -> int:
    env = os.environ.get("MSEST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError(f"MSEST_THREADS must be an integer, got {env!r}") from None
    return 1


def substeps(model: ModelSpec, h: float) -> int:
    if not model.is_ode:
        return 1
    h_int = model.h_int if model.h_int else h
    if h_int > h:
        raise InvalidInputError(f"internal step {h_int} exceeds observation step {h}")
    return max(1, int(math.ceil(h / h_int - 1e-9)))


def _terms(slow_dim, exponents):
    return tuple((c, int(j)) for c in range(slow_dim) for j in sorted(set(exponents)))


def generate_moment_table(model: ModelSpec, cfg: EnsembleConfig, exponents,
                          drift_for_residuals: MonomialParam | None = None,
                          quadrature_exponents=None, record_steps=None,
                          keep_terminal: bool = True, threads: int | None = None) -> MomentTable:
    """Simulate ``cfg.N`` paths from each initial condition and reduce them.

    ``exponents`` selects the moment curves (exponents 0 and 1 are always
    included). Per-path trapezoid integrals are accumulated for each exponent
    in ``quadrature_exponents`` (default: ``exponents``) plus the support of
    ``drift_for_residuals``; for multi-dimensional slow states every exponent
    is applied to every component. ``record_steps`` limits where the
    cross-moment table is kept (default: every step).
    """
    if cfg.ics.shape[1] != model.slow_dim:
        raise InvalidInputError(
            f"initial conditions have dimension {cfg.ics.shape[1]}, model expects {model.slow_dim}")
    n, N, m, h = int(cfg.n), int(cfg.N), cfg.m, float(cfg.h)
    exps = set(int(j) for j in exponents) | {0, 1}
    qexps = set(exps if quadrature_exponents is None else (int(j) for j in quadrature_exponents))
    if drift_for_residuals is not None:
        qexps |= set(drift_for_residuals.index_set)
    if any(j < 0 for j in exps | qexps):
        raise InvalidInputError("exponents must be non-negative")
    mom_terms = _terms(model.slow_dim, exps)
    bas_terms = _terms(model.slow_dim, qexps)

    if record_steps is None:
        rec = np.arange(1, n + 1)
    else:
        rec = np.unique(np.asarray(record_steps, dtype=np.int64))
        if rec.size == 0 or rec[0] < 1 or rec[-1] > n:
            raise InvalidInputError(f"record steps must lie in [1, {n}]")
    rec_index = np.full(n + 1, -1, dtype=np.int64)
    rec_index[rec] = np.arange(rec.size)

    nz = model.slow_dim + len(bas_terms)
    moments = np.zeros((m, n + 1, len(mom_terms)))
    cross = np.zeros((m, rec.size, nz, nz))
    terminal = np.zeros((m, N, nz)) if keep_terminal else np.zeros((1, 1, nz))
    mom_c = np.array([t[0] for t in mom_terms], dtype=np.int64)
    mom_e = np.array([t[1] for t in mom_terms], dtype=np.int64)
    bas_c = np.array([t[0] for t in bas_terms], dtype=np.int64).reshape(-1)
    bas_e = np.array([t[1] for t in bas_terms], dtype=np.int64).reshape(-1)
    n_sub = substeps(model, h)
    ics = np.ascontiguousarray(cfg.ics)
    params = np.ascontiguousarray(model.params)
    seed = np.uint64(cfg.master_seed)
    sampler = model.fast_ic_sampler if model.fast_dim > 0 else _noop_sampler
    if model.fast_ic_normals > BUFFER_SIZE:
        raise InvalidInputError("fast initial-condition sampler needs too many normals")

    threads = default_threads() if threads is None else max(1, int(threads))
    bounds = np.linspace(0, m, min(threads, m) + 1).astype(int)
    fails = [np.zeros(4, dtype=np.int64) for _ in range(len(bounds) - 1)]

    def work(c):
        _ensemble_kernel(model.drift, model.diffusion, sampler, model.is_ode, params, ics,
                         bounds[c], bounds[c + 1], N, n, h, n_sub, model.dim, model.noise_dim,
                         model.fast_ic_normals, seed, mom_c, mom_e, bas_c, bas_e, rec_index,
                         keep_terminal, moments, cross, terminal, fails[c])

    if len(fails) == 1:
        work(0)
    else:
        with ThreadPoolExecutor(max_workers=len(fails)) as pool:
            list(pool.map(work, range(len(fails))))
    for fl in fails:
        if fl[0]:
            raise IntegrationDivergedError(fl[1], fl[2], fl[3],
                                           f"model {model.name}, seed {cfg.master_seed}")

    moments /= N
    cross /= N
    for e, (c, j) in enumerate(mom_terms):
        moments[:, 0, e] = ics[:, c] ** j
    return MomentTable(h=h, n=n, N=N, ics=ics.copy(), moment_terms=mom_terms, moments=moments,
                       basis_terms=bas_terms, record_steps=rec, cross=cross,
                       terminal=terminal if keep_terminal else None)


# ---------------------------------------------------------------------------
# single steps (reference entry points)
# ---------------------------------------------------------------------------

def em_step(model: ModelSpec, state, h: float, noise) -> np.ndarray:
    """One Euler-Maruyama step of the full state."""
    if not h > 0:
        raise InvalidInputError(f"h must be positive, got {h}")
    s = np.array(state, dtype=np.float64).reshape(-1)
    z = np.array(noise, dtype=np.float64).reshape(-1)
    if z.shape[0] != model.noise_dim:
        raise InvalidInputError(f"expected {model.noise_dim} noise values, got {z.shape[0]}")
    if s.shape[0] != model.dim:
        raise InvalidInputError(f"expected state of length {model.dim}, got {s.shape[0]}")
    _em_step_py(model.drift, model.diffusion, s, model.params, h, z, model.dim, model.noise_dim)
    if not np.all(np.isfinite(s)):
        raise IntegrationDivergedError(-1, -1, 1, f"model {model.name}")
    return s


def rk4_substep_integrate(model: ModelSpec, state, h: float, h_int: float) -> np.ndarray:
    """Advance the deterministic system by ``h`` with RK4 at internal step <= ``h_int``."""
    if not (h > 0 and h_int > 0):
        raise InvalidInputError("steps must be positive")
    if h_int > h:
        raise InvalidInputError(f"internal step {h_int} exceeds {h}")
    n_sub = max(1, int(math.ceil(h / h_int - 1e-9)))
    s = np.array(state, dtype=np.float64).reshape(-1)
    _rk4_py(model.drift, s, model.params, h / n_sub, n_sub)
    if not np.all(np.isfinite(s)):
        raise IntegrationDivergedError(-1, -1, 1, f"model {model.name}")
    return s


# ---------------------------------------------------------------------------
# long single trajectories (classical estimators)
# ---------------------------------------------------------------------------

@njit(nogil=True)
def _path_kernel(drift, diffusion, sampler, is_ode, params, x0, n, h, n_sub, dim,
                 noise_dim, ic_normals, seed, ic_index, path, out, fail):
    slow = x0.shape[0]
    buf = np.empty(BUFFER_SIZE)
    s = np.empty(dim)
    f = np.empty(dim)
    G = np.zeros((dim, noise_dim))
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    key0, key1 = stream_key(seed, ic_index, path)
    ctr = fill_normals(key0, key1, uint64(0), buf)
    pos = 0
    for c in range(slow):
        s[c] = x0[c]
    if dim > slow:
        sampler(s, params, buf[:ic_normals])
        pos = ic_normals
    n_out = out.shape[1]
    for c in range(n_out):
        out[0, c] = s[c]
    sqrt_h = np.sqrt(h)
    dt = h / n_sub
    for k in range(1, n + 1):
        if is_ode:
            _rk4_advance(drift, s, params, dt, n_sub, k1, k2, k3, k4, tmp)
        else:
            if pos + noise_dim > BUFFER_SIZE:
                ctr = fill_normals(key0, key1, ctr, buf)
                pos = 0
            drift(s, params, f)
            if noise_dim > 0:
                diffusion(s, params, G)
            for a in range(dim):
                acc = f[a] * h
                for b in range(noise_dim):
                    acc += G[a, b] * sqrt_h * buf[pos + b]
                s[a] += acc
            pos += noise_dim
        if not _all_finite(s):
            fail[0] = 1
            fail[1] = k
            return
        for c in range(n_out):
            out[k, c] = s[c]


def simulate_path(model: ModelSpec, x0, h: float, n: int, seed: int, path_index: int = 0,
                  ic_index: int = LONG_PATH_IC_BASE, full_state: bool = False) -> np.ndarray:
    """One trajectory of the slow components, shape (n+1,) or (n+1, slow_dim).

    Uses the same stream contract as the ensembles. By default the stream
    lives on an initial-condition index reserved for long paths; passing the
    ensemble's ``ic_index`` (with ``x0`` equal to that initial condition)
    replays exactly the trajectory that entered the moment table.
    ``full_state=True`` also returns the fast components, shape (n+1, dim).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0.shape[0] != model.slow_dim:
        raise InvalidInputError("x0 has the wrong dimension")
    if int(n) < 1:
        raise InvalidInputError("n must be at least 1")
    out = np.empty((int(n) + 1, model.dim if full_state else model.slow_dim))
    fail = np.zeros(2, dtype=np.int64)
    sampler = model.fast_ic_sampler if model.fast_dim > 0 else _noop_sampler
    _path_kernel(model.drift, model.diffusion, sampler, model.is_ode, model.params, x0,
                 int(n), float(h), substeps(model, h), model.dim, model.noise_dim,
                 model.fast_ic_normals, np.uint64(seed), int(ic_index), int(path_index),
                 out, fail)
    if fail[0]:
        raise IntegrationDivergedError(ic_index, path_index, fail[1],
                                       f"model {model.name}, seed {seed}")
    return out[:, 0] if out.shape[1] == 1 else out


@njit(nogil=True)
def _window_kernel(drift, diffusion, sampler, params, x0, n, h, dim, noise_dim, ic_normals,
                   seed, p_lo, p_hi, deltas, win_len, exps, qv, quad, fail):
    # per path, per delta, per window: sum of squared subsampled increments and
    # trapezoid integrals of x**j on the subsampled grid of that window
    buf = np.empty(BUFFER_SIZE)
    s = np.empty(dim)
    f = np.empty(dim)
    G = np.zeros((dim, noise_dim))
    n_d = deltas.shape[0]
    n_w = qv.shape[2]
    n_e = exps.shape[0]
    last = np.empty(n_d)
    sqrt_h = np.sqrt(h)
    for path in range(p_lo, p_hi):
        key0, key1 = stream_key(seed, LONG_PATH_IC_BASE, path)
        ctr = fill_normals(key0, key1, uint64(0), buf)
        pos = 0
        s[0] = x0
        if dim > 1:
            sampler(s, params, buf[:ic_normals])
            pos = ic_normals
        for d in range(n_d):
            last[d] = s[0]
        for k in range(1, n + 1):
            if pos + noise_dim > BUFFER_SIZE:
                ctr = fill_normals(key0, key1, ctr, buf)
                pos = 0
            drift(s, params, f)
            diffusion(s, params, G)
            for a in range(dim):
                acc = f[a] * h
                for b in range(noise_dim):
                    acc += G[a, b] * sqrt_h * buf[pos + b]
                s[a] += acc
            pos += noise_dim
            if not _all_finite(s):
                fail[0] = 1
                fail[1] = path
                fail[2] = k
                return
            x = s[0]
            for d in range(n_d):
                dl = deltas[d]
                if k % dl != 0:
                    continue
                inc = k // dl
                w = (inc - 1) // win_len[d]
                if w >= n_w:
                    continue
                dx = x - last[d]
                qv[path - p_lo, d, w] += dx * dx
                step = dl * h
                for e in range(n_e):
                    quad[path - p_lo, d, w, e] += 0.5 * step * (last[d] ** exps[e] + x ** exps[e])
                last[d] = x


def window_statistics(model: ModelSpec, x0: float, h: float, n: int, seed: int, n_paths: int,
                      deltas, n_windows: int, exponents, threads: int | None = None):
    """Streaming per-window quadratic variation of long scalar paths.

    Returns ``(qv, quad, spans)``: ``qv[p, d, w]`` is the sum of squared
    increments of path ``p`` subsampled by ``deltas[d]`` inside window ``w``;
    ``quad[p, d, w, e]`` the matching trapezoid integral of ``x**exponents[e]``;
    ``spans[d]`` the window duration. Windows tile the first
    ``n_windows * (n // (delta * n_windows))`` subsampled increments.
    """
    if model.slow_dim != 1 or model.is_ode:
        raise InvalidInputError("window statistics need a scalar stochastic model")
    deltas = np.asarray(deltas, dtype=np.int64)
    win_len = (int(n) // deltas) // int(n_windows)
    if np.any(deltas < 1) or np.any(win_len < 1):
        raise InvalidInputError("each delta must leave at least one increment per window")
    exps = np.asarray(exponents, dtype=np.int64)
    qv = np.zeros((n_paths, deltas.size, n_windows))
    quad = np.zeros((n_paths, deltas.size, n_windows, exps.size))
    sampler = model.fast_ic_sampler if model.fast_dim > 0 else _noop_sampler
    threads = default_threads() if threads is None else max(1, int(threads))
    bounds = np.linspace(0, n_paths, min(threads, n_paths) + 1).astype(int)
    fails = [np.zeros(3, dtype=np.int64) for _ in range(len(bounds) - 1)]

    def work(c):
        lo, hi = bounds[c], bounds[c + 1]
        _window_kernel(model.drift, model.diffusion, sampler, model.params, float(x0), int(n),
                       float(h), model.dim, model.noise_dim, model.fast_ic_normals,
                       np.uint64(seed), lo, hi, deltas, win_len, exps, qv[lo:hi], quad[lo:hi],
                       fails[c])

    if len(fails) == 1:
        work(0)
    else:
        with ThreadPoolExecutor(max_workers=len(fails)) as pool:
            list(pool.map(work, range(len(fails))))
    for fl in fails:
        if fl[0]:
            raise IntegrationDivergedError(LONG_PATH_IC_BASE, fl[1], fl[2], f"model {model.name}")
    return qv, quad, win_len * deltas * h

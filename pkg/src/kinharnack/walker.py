"""Monte Carlo for the kinetic stable-driven process killed on leaving ``B``.

A step of length ``dt`` first transports the position with the current
velocity, ``y <- y - v dt``, then adds a stable increment to the velocity.
The exit test runs after each sub-step, so an exit caused by a jump is seen
at the post-jump state. With the transport sign chosen this way the
generator is ``-(v . grad_x + (-Delta_v)^s)`` and ``f(Y_t, V_t)`` is a
martingale for solutions of the stationary equation.

Two estimators of ``f_eps`` share the simulator:

* exit: the fraction of paths that leave ``B`` by landing in ``E_eps``;
* occupation: the mean of ``int g_eps(Y_t, V_t) dt`` up to the exit time.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np
from scipy import integrate, special

from kinharnack.core import (
    DomainError,
    Geometry,
    InvalidParameterError,
    Params,
    PhaseBox,
    PhasePoint,
    as_point,
    contains,
)
from kinharnack.rng import STATE_SIZE, stream_init
from kinharnack.stable import stable_increment, symmetric_stable_1d

CHUNK = 8192
EXIT_STREAMS = 0
OCCUPATION_STREAMS = 1 << 48
CENSOR_FLAG_LEVEL = 1e-3
TRACE_CAP = 1000
_CHEB_DEGREE = 48


def jump_constant(params: Params) -> float:
    """``c_{d,s}`` such that ``c_{d,s} |z|^{-d-2s}`` is the Levy density of the symbol ``|xi|^{2s}``."""
    d, s = params.d, params.s
    return 4.0**s * s * math.gamma(d / 2 + s) / (math.pi ** (d / 2) * math.gamma(1 - s))


def ball_jump_integral(dist: float, radius: float, params: Params) -> float:
    """``int_{B_radius(c)} |v - w|^{-d-2s} dw`` for ``|v - c| = dist > radius``.

    Integrates over spheres around ``v``: the sphere of radius ``rho`` meets the
    ball in a cap whose area fraction is ``I_{sin^2 theta}((d-1)/2, 1/2) / 2``.
    """
    d, s = params.d, params.s
    if not dist > radius:
        raise DomainError(f"velocity lies in the jump target ball (distance {dist} <= radius {radius})")
    if d == 1:
        return ((dist - radius) ** (-2 * s) - (dist + radius) ** (-2 * s)) / (2 * s)

    def integrand(rho):
        cos_t = (rho * rho + dist * dist - radius * radius) / (2 * rho * dist)
        sin2 = max(0.0, 1.0 - cos_t * cos_t)
        return rho ** (-1 - 2 * s) * special.betainc((d - 1) / 2, 0.5, sin2)

    val, _ = integrate.quad(integrand, dist - radius, dist + radius, epsabs=0.0, epsrel=1e-13, limit=200)
    sphere = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return 0.5 * sphere * val


def g_eps(p: PhasePoint, geom: Geometry, params: Params) -> float:
    """Source term ``-(-Delta_v)^s 1_{E_eps}`` restricted to ``B``.

    ``c_{d,s} 1_{B_{eps^{1+2s}}}(x) int_{B_1(3 e_d)} |v - w|^{-d-2s} dw``.
    """
    p = as_point(p)
    if not contains(geom.domain, p):
        raise DomainError(f"g_eps is defined on the domain B only, got {p}")
    tgt = geom.exterior_target
    if math.dist(p.x, tgt.x_center) >= tgt.x_radius:
        return 0.0
    return jump_constant(params) * ball_jump_integral(math.dist(p.v, tgt.v_center), tgt.v_radius, params)


@dataclass(frozen=True)
class _SourceTable:
    """Compiled-kernel form of ``g_eps``: closed form (d = 1) or a Chebyshev fit in ``|v - c|``."""

    mode: int
    const: float
    radius: float
    lo: float
    hi: float
    coeffs: np.ndarray


def _source_table(geom: Geometry, params: Params, occ_box: PhaseBox) -> _SourceTable:
    tgt = geom.exterior_target
    c = jump_constant(params)
    if params.d == 1:
        return _SourceTable(0, c, tgt.v_radius, 0.0, 0.0, np.zeros(1))
    sep = math.dist(tgt.v_center, occ_box.v_center)
    lo, hi = sep - occ_box.v_radius, sep + occ_box.v_radius
    if lo <= tgt.v_radius:
        raise InvalidParameterError("occupation region overlaps the jump target in velocity")

    def f(u):
        dist = 0.5 * (hi - lo) * np.asarray(u) + 0.5 * (hi + lo)
        return np.array([ball_jump_integral(float(r), tgt.v_radius, params) for r in np.atleast_1d(dist)])

    coeffs = np.polynomial.chebyshev.chebinterpolate(f, _CHEB_DEGREE)
    return _SourceTable(1, c, tgt.v_radius, lo, hi, coeffs)


# --------------------------------------------------------------------------
# compiled kernels


@nb.njit(cache=True)
def _in_box(box, y, v):
    d = y.shape[0]
    acc = 0.0
    for j in range(d):
        z = y[j] - box[j]
        acc += z * z
    if not acc < box[d] * box[d]:
        return False
    acc = 0.0
    for j in range(d):
        z = v[j] - box[d + 1 + j]
        acc += z * z
    return acc < box[2 * d + 1] * box[2 * d + 1]


@nb.njit(cache=True)
def _in_xball(box, y):
    d = y.shape[0]
    acc = 0.0
    for j in range(d):
        z = y[j] - box[j]
        acc += z * z
    return acc < box[d] * box[d]


@nb.njit(cache=True)
def _ball_term(dist, radius, s2):
    """``((dist - radius)^{-2s} - (dist + radius)^{-2s}) / (2s)``; reciprocals when ``2s = 1``."""
    if s2 == 1.0:
        return 1.0 / (dist - radius) - 1.0 / (dist + radius)
    return ((dist - radius) ** (-s2) - (dist + radius) ** (-s2)) / s2


@nb.njit(cache=True)
def _source_value(v, tgt, mode, const, radius, lo, hi, coeffs, s2):
    d = v.shape[0]
    acc = 0.0
    for j in range(d):
        z = v[j] - tgt[d + 1 + j]
        acc += z * z
    dist = math.sqrt(acc)
    if mode == 0:
        return const * _ball_term(dist, radius, s2)
    u = (2.0 * dist - (hi + lo)) / (hi - lo)
    b1 = 0.0
    b2 = 0.0
    for k in range(coeffs.shape[0] - 1, 0, -1):
        b1, b2 = 2.0 * u * b1 - b2 + coeffs[k], b1
    return const * (u * b1 - b2 + coeffs[0])


@nb.njit(cache=True)
def _run_path(state, y, v, inc, dom, tgt, occ, mode, const, radius, lo, hi, coeffs, s2, alpha, dt, scale,
              max_steps, trace):
    """Advance one path until exit or ``max_steps``; returns (steps, exited, hit, occupation)."""
    d = y.shape[0]
    record = trace.shape[0] > 0
    if record:
        for j in range(d):
            trace[0, j] = y[j]
            trace[0, d + j] = v[j]
    occupation = 0.0
    k = 0
    exited = False
    hit = False
    while k < max_steps:
        if _in_xball(tgt, y) and _in_box(occ, y, v):
            occupation += _source_value(v, tgt, mode, const, radius, lo, hi, coeffs, s2) * dt
        for j in range(d):
            y[j] -= v[j] * dt
        k += 1
        if not _in_box(dom, y, v):
            exited = True
            hit = _in_box(tgt, y, v)
        else:
            stable_increment(state, alpha, scale, inc)
            for j in range(d):
                v[j] += inc[j]
            if not _in_box(dom, y, v):
                exited = True
                hit = _in_box(tgt, y, v)
        if record:
            for j in range(d):
                trace[k, j] = y[j]
                trace[k, d + j] = v[j]
        if exited:
            break
    return k, exited, hit, occupation


@nb.njit(nogil=True, cache=True)
def _walk_chunk(start, dom, tgt, occ, mode, const, radius, lo, hi, coeffs, s2, alpha, dt, max_steps, seed,
                stream0, out_steps, out_state, out_hit, out_occ, out_cens):
    d = start.shape[0] // 2
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    y = np.empty(d)
    v = np.empty(d)
    inc = np.empty(d)
    no_trace = np.empty((0, 2 * d))
    scale = dt ** (1.0 / alpha)
    for i in range(out_steps.shape[0]):
        stream_init(state, seed, stream0 + np.uint64(i))
        for j in range(d):
            y[j] = start[j]
            v[j] = start[d + j]
        k, exited, hit, occupation = _run_path(state, y, v, inc, dom, tgt, occ, mode, const, radius, lo, hi,
                                               coeffs, s2, alpha, dt, scale, max_steps, no_trace)
        out_steps[i] = k
        out_hit[i] = hit
        out_occ[i] = occupation
        out_cens[i] = not exited
        for j in range(d):
            out_state[i, j] = y[j]
            out_state[i, d + j] = v[j]


@nb.njit(nogil=True, cache=True)
def _walk_chunk_1d(start, dom, tgt, occ, mode, const, radius, lo, hi, coeffs, s2, alpha, dt, max_steps, seed,
                   stream0, out_steps, out_state, out_hit, out_occ, out_cens):
    # Scalar copy of _walk_chunk for d = 1; same arithmetic in the same order, so results are identical.
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    scale = dt ** (1.0 / alpha)
    dxc, dxr2, dvc, dvr2 = dom[0], dom[1] * dom[1], dom[2], dom[3] * dom[3]
    txc, txr2, tvc, tvr2 = tgt[0], tgt[1] * tgt[1], tgt[2], tgt[3] * tgt[3]
    oxc, oxr2, ovc, ovr2 = occ[0], occ[1] * occ[1], occ[2], occ[3] * occ[3]
    for i in range(out_steps.shape[0]):
        stream_init(state, seed, stream0 + np.uint64(i))
        y = start[0]
        v = start[1]
        occupation = 0.0
        k = 0
        exited = False
        hit = False
        while k < max_steps:
            if (y - txc) * (y - txc) < txr2 and (y - oxc) * (y - oxc) < oxr2 and (v - ovc) * (v - ovc) < ovr2:
                dist = math.sqrt((v - tvc) * (v - tvc))
                occupation += const * _ball_term(dist, radius, s2) * dt
            y -= v * dt
            k += 1
            if not ((y - dxc) * (y - dxc) < dxr2 and (v - dvc) * (v - dvc) < dvr2):
                exited = True
            else:
                v += scale * symmetric_stable_1d(state, alpha)
                if not ((y - dxc) * (y - dxc) < dxr2 and (v - dvc) * (v - dvc) < dvr2):
                    exited = True
            if exited:
                hit = (y - txc) * (y - txc) < txr2 and (v - tvc) * (v - tvc) < tvr2
                break
        out_steps[i] = k
        out_hit[i] = hit
        out_occ[i] = occupation
        out_cens[i] = not exited
        out_state[i, 0] = y
        out_state[i, 1] = v


@nb.njit(cache=True)
def _trace_one(start, dom, tgt, occ, mode, const, radius, lo, hi, coeffs, s2, alpha, dt, max_steps, seed,
               stream_id, trace):
    d = start.shape[0] // 2
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    stream_init(state, seed, stream_id)
    y = start[:d].copy()
    v = start[d:].copy()
    inc = np.empty(d)
    scale = dt ** (1.0 / alpha)
    return _run_path(state, y, v, inc, dom, tgt, occ, mode, const, radius, lo, hi, coeffs, s2, alpha, dt,
                     scale, max_steps, trace)


@nb.njit(nogil=True, cache=True)
def _free_chunk(start, alpha, dt, n_steps, seed, stream0, out_state):
    d = start.shape[0] // 2
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    y = np.empty(d)
    v = np.empty(d)
    inc = np.empty(d)
    scale = dt ** (1.0 / alpha)
    for i in range(out_state.shape[0]):
        stream_init(state, seed, stream0 + np.uint64(i))
        for j in range(d):
            y[j] = start[j]
            v[j] = start[d + j]
        for _ in range(n_steps):
            for j in range(d):
                y[j] -= v[j] * dt
            stable_increment(state, alpha, scale, inc)
            for j in range(d):
                v[j] += inc[j]
        for j in range(d):
            out_state[i, j] = y[j]
            out_state[i, d + j] = v[j]


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class WalkConfig:
    dt: float = 1e-3
    max_time: float = 64.0
    n_paths: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidParameterError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.max_time) and self.max_time >= self.dt):
            raise InvalidParameterError(f"max_time must be at least dt, got {self.max_time!r}")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidParameterError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt - 1e-9))


@dataclass(frozen=True)
class PathRecord:
    exit_time: float
    exit_state: PhasePoint
    hit_target: bool
    occupation: float
    censored: bool


@dataclass(frozen=True)
class PathBatch:
    """Array form of many :class:`PathRecord` (one row per path, in stream order)."""

    dt: float
    steps: np.ndarray
    state: np.ndarray
    hit: np.ndarray
    occupation: np.ndarray
    censored: np.ndarray

    @property
    def exit_time(self) -> np.ndarray:
        return self.steps * self.dt

    def __len__(self):
        return self.steps.shape[0]

    def record(self, i: int) -> PathRecord:
        d = self.state.shape[1] // 2
        return PathRecord(
            float(self.steps[i] * self.dt),
            PhasePoint(self.state[i, :d], self.state[i, d:]),
            bool(self.hit[i]),
            float(self.occupation[i]),
            bool(self.censored[i]),
        )


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    censored_fraction: float = 0.0

    @property
    def flagged(self) -> bool:
        return self.censored_fraction > CENSOR_FLAG_LEVEL

    @classmethod
    def from_samples(cls, samples: np.ndarray, censored_fraction: float = 0.0) -> Estimate:
        n = samples.shape[0]
        sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
        return cls(float(np.mean(samples)), sd / math.sqrt(n), int(n), float(censored_fraction))


def combined_sigma(a: Estimate, b: Estimate) -> float:
    return math.hypot(a.stderr, b.stderr)


# --------------------------------------------------------------------------
# drivers


def _kernel_args(geom: Geometry, params: Params, occ_box: PhaseBox | None):
    occ_box = occ_box or geom.domain
    table = _source_table(geom, params, occ_box)
    return (
        geom.domain.packed(),
        geom.exterior_target.packed(),
        occ_box.packed(),
        table.mode,
        table.const,
        table.radius,
        table.lo,
        table.hi,
        table.coeffs,
        2.0 * params.s,
        params.alpha,
    )


def _start_vector(p: PhasePoint, params: Params) -> np.ndarray:
    if p.d != params.d:
        raise InvalidParameterError(f"point has d={p.d}, params have d={params.d}")
    return np.array([*p.x, *p.v])


def simulate_paths(
    start: PhasePoint,
    geom: Geometry,
    params: Params,
    cfg: WalkConfig,
    stream_base: int = EXIT_STREAMS,
    workers: int = 1,
    occ_box: PhaseBox | None = None,
) -> PathBatch:
    """Run ``cfg.n_paths`` killed paths; path ``i`` uses stream ``(cfg.seed, stream_base + i)``.

    Paths are split into fixed chunks handed to ``workers`` threads, so the
    result does not depend on the worker count.
    """
    start = as_point(start)
    if not contains(geom.domain, start):
        raise DomainError(f"start point {start} lies outside the domain")
    d = params.d
    n = int(cfg.n_paths)
    steps = np.empty(n, dtype=np.int64)
    state = np.empty((n, 2 * d))
    hit = np.empty(n, dtype=np.bool_)
    occ = np.empty(n)
    cens = np.empty(n, dtype=np.bool_)
    args = _kernel_args(geom, params, occ_box)
    sv = _start_vector(start, params)
    seed = np.uint64(cfg.seed)

    kernel = _walk_chunk_1d if d == 1 else _walk_chunk

    def job(lo):
        hi = min(lo + CHUNK, n)
        kernel(sv, *args, cfg.dt, cfg.max_steps, seed, np.uint64(stream_base + lo),
                    steps[lo:hi], state[lo:hi], hit[lo:hi], occ[lo:hi], cens[lo:hi])

    _run_chunks(job, n, workers)
    return PathBatch(cfg.dt, steps, state, hit, occ, cens)


def _run_chunks(job, n, workers):
    starts = range(0, n, CHUNK)
    if workers <= 1 or n <= CHUNK:
        for lo in starts:
            job(lo)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(job, starts))


def simulate_path(start: PhasePoint, geom: Geometry, params: Params, cfg: WalkConfig, stream_id: int) -> PathRecord:
    one = WalkConfig(cfg.dt, cfg.max_time, 1, cfg.seed)
    return simulate_paths(start, geom, params, one, stream_base=stream_id).record(0)


def trace_path(start: PhasePoint, geom: Geometry, params: Params, cfg: WalkConfig, stream_id: int) -> np.ndarray:
    """States after each step of one path, shape ``(steps + 1, 2d)``; row 0 is the start."""
    start = as_point(start)
    if not contains(geom.domain, start):
        raise DomainError(f"start point {start} lies outside the domain")
    k = simulate_path(start, geom, params, cfg, stream_id).exit_time / cfg.dt
    trace = np.empty((int(round(k)) + 1, 2 * params.d))
    _trace_one(_start_vector(start, params), *_kernel_args(geom, params, None), cfg.dt, cfg.max_steps,
               np.uint64(cfg.seed), np.uint64(stream_id), trace)
    return trace


def dump_traces(path, start: PhasePoint, geom: Geometry, params: Params, cfg: WalkConfig, n_paths: int,
                stream_base: int = EXIT_STREAMS) -> Path:
    """Debug CSV ``path_id, step, y..., v..., alive`` for the first ``n_paths`` streams (at most 1000)."""
    if n_paths > TRACE_CAP:
        raise InvalidParameterError(f"trace dump is capped at {TRACE_CAP} paths, got {n_paths}")
    d = params.d
    path = Path(path)
    names = ["y", "v"] if d == 1 else [f"y{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "step", *names, "alive"])
        for i in range(n_paths):
            tr = trace_path(start, geom, params, cfg, stream_base + i)
            for k, row in enumerate(tr):
                alive = contains(geom.domain, PhasePoint(row[:d], row[d:]))
                w.writerow([i, k, *(repr(float(c)) for c in row), int(alive)])
    return path


def simulate_free(start: PhasePoint, t: float, params: Params, dt: float, n_paths: int, seed: int,
                  workers: int = 1) -> np.ndarray:
    """Unkilled process at time ``t`` (rounded to a whole number of steps); shape ``(n_paths, 2d)``."""
    start = as_point(start)
    n_steps = int(round(t / dt))
    if n_steps < 1 or not math.isclose(n_steps * dt, t, rel_tol=1e-9):
        raise InvalidParameterError(f"t={t} must be a positive multiple of dt={dt}")
    out = np.empty((int(n_paths), 2 * params.d))
    sv = _start_vector(start, params)

    def job(lo):
        hi = min(lo + CHUNK, out.shape[0])
        _free_chunk(sv, params.alpha, dt, n_steps, np.uint64(seed), np.uint64(lo), out[lo:hi])

    _run_chunks(job, out.shape[0], workers)
    return out


def galilean_coordinates(start: PhasePoint, t: float, states: np.ndarray) -> np.ndarray:
    """Map end states ``(y, w)`` to ``(x - y - t w, v - w)``, which are distributed as ``P_t``."""
    start = as_point(start)
    d = start.d
    x0, v0 = start.arrays()
    y, w = states[:, :d], states[:, d:]
    return np.concatenate([x0 - y - t * w, v0 - w], axis=1)


def _warn_censored(est: Estimate, what: str):
    if est.flagged:
        warnings.warn(f"{what}: censored fraction {est.censored_fraction:.2e} exceeds {CENSOR_FLAG_LEVEL:g}",
                      RuntimeWarning, stacklevel=3)


def estimate_f_exit(point: PhasePoint, geom: Geometry, params: Params, cfg: WalkConfig, workers: int = 1) -> Estimate:
    """Probability that the killed process started at ``point`` leaves ``B`` into ``E_eps``.

    Outside ``B`` this is the exterior datum ``1_{E_eps}``. Censored paths count as misses.
    """
    point = as_point(point)
    if not contains(geom.domain, point):
        return Estimate(float(contains(geom.exterior_target, point)), 0.0, 1, 0.0)
    batch = simulate_paths(point, geom, params, cfg, EXIT_STREAMS, workers)
    est = Estimate.from_samples(batch.hit.astype(float), float(batch.censored.mean()))
    _warn_censored(est, "exit estimator")
    return est


def estimate_f_occupation(point: PhasePoint, geom: Geometry, params: Params, cfg: WalkConfig,
                          workers: int = 1) -> Estimate:
    """Expected ``int_0^tau g_eps(Y_t, V_t) dt`` before the exit time ``tau`` of ``B``."""
    point = as_point(point)
    if not contains(geom.domain, point):
        raise DomainError(f"occupation estimator needs a point inside B, got {point}")
    batch = simulate_paths(point, geom, params, cfg, OCCUPATION_STREAMS, workers)
    est = Estimate.from_samples(batch.occupation, float(batch.censored.mean()))
    _warn_censored(est, "occupation estimator")
    return est


def coupled_occupations(point, geom_small: Geometry, geom_large: Geometry, params: Params, cfg: WalkConfig,
                        workers: int = 1) -> tuple[PathBatch, PathBatch]:
    """Same streams run in both domains; the integrand is ``g_eps`` on the smaller domain."""
    if not geom_small.domain.is_subset_of(geom_large.domain):
        raise InvalidParameterError("domains are not nested")
    if (geom_small.exterior_target, geom_small.source) != (geom_large.exterior_target, geom_large.source):
        raise InvalidParameterError("coupled geometries must share source and target sets")
    occ_box = geom_small.domain
    small = simulate_paths(point, geom_small, params, cfg, EXIT_STREAMS, workers, occ_box)
    large = simulate_paths(point, geom_large, params, cfg, EXIT_STREAMS, workers, occ_box)
    return small, large


def coupled_domain_monotonicity(point, geom_small: Geometry, geom_large: Geometry, params: Params,
                                cfg: WalkConfig, workers: int = 1) -> bool:
    """True iff every coupled path accumulates no more occupation in the smaller domain."""
    small, large = coupled_occupations(point, geom_small, geom_large, params, cfg, workers)
    return bool(np.all(small.occupation <= large.occupation))

"""Increments of the rotationally symmetric ``2s``-stable process.

The increment over a time step ``dt`` has characteristic function
``exp(-dt |xi|^{2s})``. In one dimension it is drawn with the symmetric
Chambers-Mallows-Stuck transform (a plain Cauchy tangent when ``2s = 1``).
In higher dimensions it is drawn as a Gaussian scale mixture
``sqrt(2 A) G`` with ``A`` positive ``s``-stable (Laplace transform
``exp(-lambda^s)``, Kanter's representation) and ``G`` standard normal.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from kinharnack.core import InvalidParameterError, Params
from kinharnack.rng import RngStream, next_exponential, next_uniform


@nb.njit(inline="always", cache=True)
def positive_stable(state, a):
    """Positive ``a``-stable variate with ``E exp(-lam A) = exp(-lam^a)``, ``0 < a < 1``."""
    u = math.pi * next_uniform(state)
    e = next_exponential(state)
    return (math.sin(a * u) / math.sin(u) ** (1.0 / a)) * (math.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)


@nb.njit(inline="always", cache=True)
def symmetric_stable_1d(state, alpha):
    """Symmetric ``alpha``-stable variate with characteristic function ``exp(-|xi|^alpha)``."""
    u = math.pi * (next_uniform(state) - 0.5)
    if alpha == 1.0:
        return math.tan(u)
    w = next_exponential(state)
    return (math.sin(alpha * u) / math.cos(u) ** (1.0 / alpha)) * (
        math.cos((1.0 - alpha) * u) / w
    ) ** ((1.0 - alpha) / alpha)


@nb.njit(inline="always", cache=True)
def stable_increment(state, alpha, scale, out):
    """Write one isotropic increment scaled by ``scale = dt^{1/alpha}`` into ``out``."""
    d = out.shape[0]
    if scale == 0.0:
        for k in range(d):
            out[k] = 0.0
        return
    if d == 1:
        out[0] = scale * symmetric_stable_1d(state, alpha)
        return
    r = scale * math.sqrt(2.0 * positive_stable(state, 0.5 * alpha))
    k = 0
    while k < d:
        rad = math.sqrt(-2.0 * math.log(next_uniform(state)))
        ang = 2.0 * math.pi * next_uniform(state)
        out[k] = r * rad * math.cos(ang)
        if k + 1 < d:
            out[k + 1] = r * rad * math.sin(ang)
        k += 2


@nb.njit(cache=True)
def _fill_increments(state, alpha, scale, out):
    for i in range(out.shape[0]):
        stable_increment(state, alpha, scale, out[i])


def step_scale(params: Params, dt: float) -> float:
    return float(dt) ** (1.0 / params.alpha) if dt > 0 else 0.0


def _check_dt(dt):
    if not (math.isfinite(dt) and dt >= 0):
        raise InvalidParameterError(f"dt must be a finite nonnegative number, got {dt!r}")


def sample_increment(params: Params, dt: float, rng: RngStream) -> np.ndarray:
    """One increment of the stable process over a step ``dt``, shape ``(d,)``."""
    return sample_increments(params, dt, rng, 1)[0]


def sample_increments(params: Params, dt: float, rng: RngStream, size: int) -> np.ndarray:
    """``size`` consecutive increments from ``rng``, shape ``(size, d)``."""
    _check_dt(dt)
    out = np.empty((int(size), params.d))
    _fill_increments(rng.state, params.alpha, step_scale(params, dt), out)
    return out


def stable_symbol(params: Params, dt: float, xi) -> float:
    """Exact characteristic function ``exp(-dt |xi|^{2s})``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return math.exp(-dt * float(np.linalg.norm(xi)) ** params.alpha)


def _phases(samples, xi):
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empirical_charfn needs at least one sample")
    if samples.ndim == 1:
        samples = samples[:, None]
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape[0] != samples.shape[1]:
        raise ValueError(f"xi has length {xi.shape[0]}, samples have dimension {samples.shape[1]}")
    return samples @ xi


def empirical_charfn(samples, xi) -> complex:
    """``(1/N) sum_k exp(i xi . X_k)``."""
    ph = _phases(samples, xi)
    return complex(np.mean(np.cos(ph)), np.mean(np.sin(ph)))


def empirical_charfn_stderr(samples, xi) -> tuple[float, float]:
    """Monte Carlo standard errors of the real and imaginary parts of :func:`empirical_charfn`."""
    ph = _phases(samples, xi)
    n = ph.shape[0]
    if n < 2:
        return 0.0, 0.0
    return float(np.std(np.cos(ph), ddof=1) / math.sqrt(n)), float(np.std(np.sin(ph), ddof=1) / math.sqrt(n))

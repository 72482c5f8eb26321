"""Parameters, phase-space points and the product-of-balls sets of the
counterexample.

All sets are products ``B_rx(xc) x B_rv(vc)`` of open Euclidean balls in
position and velocity. Membership is strict, so states on the topological
boundary count as exterior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class InvalidParameterError(ValueError):
    """A numeric parameter lies outside its admissible range."""


class DomainError(ValueError):
    """A phase-space point lies outside the set an operation requires."""


class ResolutionError(ValueError):
    """A spectral grid is too coarse or too small for the requested kernel."""


def _as_tuple(vec, name: str) -> tuple[float, ...]:
    arr = np.asarray(vec, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} must be finite, got {vec!r}")
    return tuple(float(c) for c in arr)


@dataclass(frozen=True)
class Params:
    """Dimension ``d`` of position and velocity, stability index ``s``."""

    d: int
    s: float

    def __post_init__(self):
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise InvalidParameterError(f"d must be a positive integer, got {self.d!r}")
        if not (isinstance(self.s, (int, float)) and 0.0 < self.s < 1.0):
            raise InvalidParameterError(f"s must lie in (0, 1), got {self.s!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "s", float(self.s))

    @property
    def alpha(self) -> float:
        """Stability index ``2s`` of the velocity driver."""
        return 2.0 * self.s

    @property
    def kx(self) -> float:
        """Kinetic scaling exponent of position, ``1 + 2s``."""
        return 1.0 + 2.0 * self.s

    @property
    def kt(self) -> float:
        """Kinetic scaling exponent of time, ``2s``."""
        return 2.0 * self.s


@dataclass(frozen=True)
class PhasePoint:
    x: tuple[float, ...]
    v: tuple[float, ...]

    def __post_init__(self):
        x = _as_tuple(self.x, "x")
        v = _as_tuple(self.v, "v")
        if len(x) != len(v) or len(x) == 0:
            raise InvalidParameterError(
                f"x and v must have the same positive length, got {len(x)} and {len(v)}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return len(self.x)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.x), np.array(self.v)


@dataclass(frozen=True)
class PhaseBox:
    """``B_{x_radius}(x_center) x B_{v_radius}(v_center)``."""

    x_center: tuple[float, ...]
    x_radius: float
    v_center: tuple[float, ...]
    v_radius: float

    def __post_init__(self):
        xc = _as_tuple(self.x_center, "x_center")
        vc = _as_tuple(self.v_center, "v_center")
        if len(xc) != len(vc):
            raise InvalidParameterError("x_center and v_center must have equal length")
        for name in ("x_radius", "v_radius"):
            r = getattr(self, name)
            if not (math.isfinite(r) and r > 0):
                raise InvalidParameterError(f"{name} must be positive and finite, got {r!r}")
            object.__setattr__(self, name, float(r))
        object.__setattr__(self, "x_center", xc)
        object.__setattr__(self, "v_center", vc)

    @property
    def d(self) -> int:
        return len(self.x_center)

    def packed(self) -> np.ndarray:
        """Flat layout ``[xc..., xr, vc..., vr]`` consumed by the compiled walker."""
        return np.array([*self.x_center, self.x_radius, *self.v_center, self.v_radius])

    def is_subset_of(self, other: PhaseBox) -> bool:
        dx = math.dist(self.x_center, other.x_center)
        dv = math.dist(self.v_center, other.v_center)
        return dx + self.x_radius <= other.x_radius and dv + self.v_radius <= other.v_radius

    def is_disjoint_from(self, other: PhaseBox) -> bool:
        dx = math.dist(self.x_center, other.x_center)
        dv = math.dist(self.v_center, other.v_center)
        return dx >= self.x_radius + other.x_radius or dv >= self.v_radius + other.v_radius


def contains(box: PhaseBox, p: PhasePoint) -> bool:
    if box.d != p.d:
        raise InvalidParameterError(f"dimension mismatch: box has d={box.d}, point has d={p.d}")
    # squared distances, matching the compiled walker bit for bit
    dx = sum((a - b) * (a - b) for a, b in zip(p.x, box.x_center))
    dv = sum((a - b) * (a - b) for a, b in zip(p.v, box.v_center))
    return dx < box.x_radius * box.x_radius and dv < box.v_radius * box.v_radius


@dataclass(frozen=True)
class Geometry:
    """Domain ``B``, source ``G_eps`` and exterior target ``E_eps``."""

    domain: PhaseBox
    source: PhaseBox
    exterior_target: PhaseBox
    eps: float

    def __post_init__(self):
        if not self.source.is_subset_of(self.domain):
            raise InvalidParameterError("source set must lie inside the domain")
        if not math.isclose(self.source.x_radius, self.exterior_target.x_radius, rel_tol=1e-15):
            raise InvalidParameterError("source and target must share the same x-radius")

    @property
    def d(self) -> int:
        return self.domain.d

    def with_domain(self, domain: PhaseBox) -> Geometry:
        """Same source and target, killed on a different domain."""
        return Geometry(domain, self.source, self.exterior_target, self.eps)


def unit_vector(d: int) -> tuple[float, ...]:
    return (0.0,) * (d - 1) + (1.0,)


def make_geometry(eps: float, params: Params) -> Geometry:
    if not (isinstance(eps, (int, float)) and 0.0 < eps < 1.0):
        raise InvalidParameterError(f"eps must lie in (0, 1), got {eps!r}")
    d = params.d
    zero = (0.0,) * d
    r = float(eps) ** params.kx
    domain = PhaseBox(zero, 1.0, zero, 1.0)
    source = PhaseBox(zero, r, zero, 1.0)
    target = PhaseBox(zero, r, tuple(3.0 * c for c in unit_vector(d)), 1.0)
    geom = Geometry(domain, source, target, float(eps))
    assert target.is_disjoint_from(domain)
    return geom


def scaled_domain(eps: float, params: Params) -> PhaseBox:
    """``B^eps = B_{eps^{-1-2s}} x B_{eps^{-1}}``, the unit domain blown up by the kinetic scaling."""
    if not (0.0 < eps <= 1.0):
        raise InvalidParameterError(f"eps must lie in (0, 1], got {eps!r}")
    zero = (0.0,) * params.d
    return PhaseBox(zero, eps ** (-params.kx), zero, 1.0 / eps)


def evaluation_points(params: Params) -> tuple[PhasePoint, PhasePoint]:
    """The origin and ``zeta = (e_d / 2, 0)``."""
    d = params.d
    zero = (0.0,) * d
    zeta_x = tuple(0.5 * c for c in unit_vector(d))
    return PhasePoint(zero, zero), PhasePoint(zeta_x, zero)


def as_point(p: PhasePoint | Sequence) -> PhasePoint:
    if isinstance(p, PhasePoint):
        return p
    x, v = p
    return PhasePoint(x, v)

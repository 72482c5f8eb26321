"""Epsilon sweeps of the counterexample and power-law verdicts.

For each ``eps`` the sweep estimates ``f_eps`` at the origin and at
``zeta = (e_d / 2, 0)`` with both walker estimators. The exit estimator is
the primary value; the occupation estimator is kept as a cross-check. Three
one-sided slope inequalities are then tested on log-log fits:

* ``f_eps(0)`` decays no faster than ``eps^{2s}``;
* ``f_eps(zeta)`` decays at least like ``eps^{d(1+2s)}``;
* the ratio ``f_eps(zeta) / f_eps(0)`` decays at least like ``eps^{d(1+2s)-2s}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from kinharnack.core import InvalidParameterError, Params, evaluation_points, make_geometry
from kinharnack.walker import (
    Estimate,
    WalkConfig,
    combined_sigma,
    estimate_f_exit,
    estimate_f_occupation,
)

UPPER_EPS_LIMIT = 0.25
DEFAULT_EPS = (0.25, 0.2, 0.15, 0.1, 0.07, 0.05)


class InsufficientDataError(ValueError):
    """Too few usable sweep rows (or fit points) for a verdict."""


@dataclass(frozen=True)
class Tolerances:
    lower: float = 0.3
    upper: float = 0.3
    theorem: float = 0.35

    def __post_init__(self):
        for name in ("lower", "upper", "theorem"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise InvalidParameterError(f"tolerance {name} must be finite and nonnegative, got {val!r}")


@dataclass(frozen=True)
class SweepConfig:
    params: Params = field(default_factory=lambda: Params(1, 0.5))
    eps_list: tuple[float, ...] = DEFAULT_EPS
    walk: WalkConfig = field(default_factory=lambda: WalkConfig(dt=1e-3, max_time=64.0, n_paths=1_000_000))
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps:
            raise InvalidParameterError("eps_list must not be empty")
        for e in eps:
            if not 0.0 < e <= UPPER_EPS_LIMIT:
                raise InvalidParameterError(f"eps_list entries must lie in (0, {UPPER_EPS_LIMIT}], got {e!r}")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise InvalidParameterError(f"eps_list must be strictly decreasing, got {list(eps)}")
        object.__setattr__(self, "eps_list", eps)


@dataclass(frozen=True)
class SweepRow:
    eps: float
    f0: Estimate
    fzeta: Estimate
    f0_occ: Estimate
    fzeta_occ: Estimate

    @property
    def usable(self) -> bool:
        """``f0`` is distinguishable from zero at three standard errors."""
        return self.f0.mean > 3.0 * self.f0.stderr and self.f0.mean > 0

    @property
    def ratio(self) -> float:
        return self.fzeta.mean / self.f0.mean if self.f0.mean > 0 else math.nan

    @property
    def ratio_err(self) -> float:
        a, b = self.fzeta, self.f0
        if b.mean <= 0:
            return math.nan
        return math.hypot(a.stderr / b.mean, a.mean * b.stderr / b.mean**2)

    @property
    def censored_frac(self) -> float:
        return max(e.censored_fraction for e in (self.f0, self.fzeta, self.f0_occ, self.fzeta_occ))

    def estimates(self) -> dict[str, Estimate]:
        return {"f0": self.f0, "fzeta": self.fzeta, "f0_occ": self.f0_occ, "fzeta_occ": self.fzeta_occ}

    def cross_check(self, k: float = 3.0) -> tuple[bool, bool]:
        """Exit versus occupation agreement within ``k`` combined standard errors, at 0 and at zeta."""
        ok0 = abs(self.f0.mean - self.f0_occ.mean) <= k * combined_sigma(self.f0, self.f0_occ)
        okz = abs(self.fzeta.mean - self.fzeta_occ.mean) <= k * combined_sigma(self.fzeta, self.fzeta_occ)
        return ok0, okz


@dataclass(frozen=True)
class Verdict:
    name: str
    fitted_slope: float
    slope_err: float
    threshold: float
    required: str
    passed: bool
    intercept: float
    n_points: int

    @property
    def constant_proxy(self) -> float:
        """``exp(intercept)``, the measured prefactor of the fitted power law."""
        return math.exp(self.intercept)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fitted_slope": self.fitted_slope,
            "slope_err": self.slope_err,
            "threshold": self.threshold,
            "required": self.required,
            "pass": self.passed,
            "intercept": self.intercept,
            "constant_proxy": self.constant_proxy,
            "n_points": self.n_points,
        }


def job_seed(seed: int, row: int, point: int) -> int:
    """Independent 64-bit seed for one (row, evaluation point) job."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(row, point))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_sweep(cfg: SweepConfig, workers: int = 1, progress=None) -> list[SweepRow]:
    """One row per ``eps`` in input order; bitwise reproducible for a fixed config."""
    if not cfg.eps_list:
        raise InvalidParameterError("eps_list must not be empty")
    params = cfg.params
    points = evaluation_points(params)
    rows = []
    for i, eps in enumerate(cfg.eps_list):
        geom = make_geometry(eps, params)
        exits, occs = [], []
        for j, p in enumerate(points):
            w = WalkConfig(cfg.walk.dt, cfg.walk.max_time, cfg.walk.n_paths, job_seed(cfg.walk.seed, i, j))
            exits.append(estimate_f_exit(p, geom, params, w, workers))
            occs.append(estimate_f_occupation(p, geom, params, w, workers))
        row = SweepRow(eps, exits[0], exits[1], occs[0], occs[1])
        if not row.usable:
            warnings.warn(f"eps={eps}: f0 is not distinguishable from 0; row excluded from fits", RuntimeWarning)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def fit_exponent(points) -> tuple[float, float, float]:
    """Weighted least squares of ``log value`` on ``log eps``.

    ``points`` holds ``(eps, value, stderr)``. The weight of a point is the
    inverse square of its relative error; if any stderr is zero the fit is
    unweighted. Returns ``(slope, intercept, slope_err)``.
    """
    pts = []
    for eps, val, err in points:
        if not val > 0:
            warnings.warn(f"nonpositive value {val!r} at eps={eps} excluded from the fit", RuntimeWarning)
            continue
        pts.append((float(eps), float(val), float(err)))
    if len(pts) < 2:
        raise InsufficientDataError(f"need at least 2 positive points, got {len(pts)}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    rel = np.array([p[2] / p[1] for p in pts])
    weighted = bool(np.all(rel > 0))
    w = 1.0 / rel**2 if weighted else np.ones_like(x)
    A = np.column_stack([x, np.ones_like(x)])
    ata = A.T @ (w[:, None] * A)
    coef = np.linalg.solve(ata, A.T @ (w * y))
    slope, intercept = float(coef[0]), float(coef[1])
    if weighted:
        slope_err = math.sqrt(np.linalg.inv(ata)[0, 0])
    elif len(pts) > 2:
        resid = y - A @ coef
        slope_err = math.sqrt(float(resid @ resid) / (len(pts) - 2) * np.linalg.inv(ata)[0, 0])
    else:
        slope_err = 0.0
    return slope, intercept, slope_err


def _usable(rows, minimum=3):
    good = [r for r in rows if r.usable]
    if len(good) < minimum:
        raise InsufficientDataError(f"need at least {minimum} usable sweep rows, got {len(good)}")
    return good


def _verdict(name, pts, threshold, at_least):
    slope, intercept, slope_err = fit_exponent(pts)
    passed = slope >= threshold if at_least else slope <= threshold
    op = ">=" if at_least else "<="
    return Verdict(name, slope, slope_err, threshold, f"slope {op} {threshold:g}", bool(passed), intercept, len(pts))


def check_lemma_lower(rows, params: Params, tol: float = 0.3) -> Verdict:
    """``f_eps(0) >= c eps^{2s}``: the fitted decay of ``f0`` is at most ``2s + tol``."""
    good = _usable(rows)
    pts = [(r.eps, r.f0.mean, r.f0.stderr) for r in good]
    return _verdict("lower_bound", pts, params.alpha + tol, at_least=False)


def check_lemma_upper(rows, params: Params, tol: float = 0.3) -> Verdict:
    """``f_eps(zeta) <= c eps^{d(1+2s)}``: the fitted decay of ``fzeta`` is at least ``d(1+2s) - tol``.

    Uses rows with ``eps <= 1/4``, at least three of them strictly below ``1/4``.
    """
    good = [r for r in _usable(rows, 0) if r.eps <= UPPER_EPS_LIMIT]
    if sum(r.eps < UPPER_EPS_LIMIT for r in good) < 3:
        raise InsufficientDataError("need at least 3 usable sweep rows with eps < 1/4")
    pts = [(r.eps, r.fzeta.mean, r.fzeta.stderr) for r in good]
    return _verdict("upper_bound", pts, params.d * params.kx - tol, at_least=True)


def check_theorem(rows, params: Params, tol: float = 0.35) -> Verdict:
    """``f_eps(zeta) / f_eps(0) <= c eps^{d(1+2s)-2s}``: fitted ratio decay at least the exponent minus ``tol``."""
    good = _usable(rows)
    pts = [(r.eps, r.ratio, r.ratio_err) for r in good]
    return _verdict("theorem_ratio", pts, params.d * params.kx - params.alpha - tol, at_least=True)


def all_verdicts(rows, params: Params, tolerances: Tolerances) -> list[Verdict]:
    return [
        check_lemma_lower(rows, params, tolerances.lower),
        check_lemma_upper(rows, params, tolerances.upper),
        check_theorem(rows, params, tolerances.theorem),
    ]


@dataclass(frozen=True)
class TrendCheck:
    passed: bool
    slope: float
    max_abs_residual: float


def ratio_trend(rows, k: float = 3.0) -> TrendCheck:
    """The ratio shrinks with ``eps``: positive fitted slope, every log-residual within ``k`` sigma."""
    good = _usable(rows)
    pts = [(r.eps, r.ratio, r.ratio_err) for r in good if r.ratio > 0]
    slope, intercept, _ = fit_exponent(pts)
    z = []
    for eps, val, err in pts:
        resid = math.log(val) - (intercept + slope * math.log(eps))
        sig = err / val
        z.append(abs(resid) / sig if sig > 0 else (0.0 if resid == 0 else math.inf))
    worst = max(z)
    return TrendCheck(bool(slope > 0 and worst <= k), slope, worst)

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinharnack.core import InvalidParameterError, Params
from kinharnack.harnack import (
    InsufficientDataError,
    SweepConfig,
    SweepRow,
    Tolerances,
    all_verdicts,
    check_lemma_lower,
    check_lemma_upper,
    check_theorem,
    fit_exponent,
    job_seed,
    ratio_trend,
    run_sweep,
)
from kinharnack.walker import Estimate, WalkConfig

EPS = (0.25, 0.2, 0.15, 0.1, 0.07, 0.05)
CAUCHY = Params(1, 0.5)


def est(value, rel=0.01):
    return Estimate(value, rel * value, 10**6)


def synthetic_rows(f0, fz, eps=EPS):
    return [SweepRow(e, est(f0(e)), est(fz(e)), est(f0(e)), est(fz(e))) for e in eps]


# --- fitting --------------------------------------------------------------------


def test_exact_square_law():
    slope, intercept, _ = fit_exponent([(e, e**2, 0.0) for e in (0.5, 0.25, 0.125)])
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert intercept == pytest.approx(0.0, abs=1e-12)


def test_constant_values():
    slope, _, _ = fit_exponent([(e, 3.0, 0.1) for e in (0.5, 0.25, 0.125)])
    assert slope == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.01, 0.01), min_size=6, max_size=6))
def test_noisy_power_law(noise):
    pts = [(e, e**1.5 * (1 + d), 0.01 * e**1.5) for e, d in zip(EPS, noise)]
    slope, _, err = fit_exponent(pts)
    assert 1.4 <= slope <= 1.6
    assert err > 0


def test_weighted_fit_standard_error():
    # with known sigma the slope error is sqrt of the (1,1) entry of (X^T W X)^{-1}
    eps = np.array([0.5, 0.25, 0.125, 0.0625])
    rel = np.array([0.01, 0.02, 0.04, 0.08])
    _, _, err = fit_exponent([(e, e, r * e) for e, r in zip(eps, rel)])
    X = np.column_stack([np.log(eps), np.ones(4)])
    W = np.diag(1 / rel**2)
    assert err == pytest.approx(math.sqrt(np.linalg.inv(X.T @ W @ X)[0, 0]), rel=1e-12)


def test_nonpositive_values_excluded():
    with pytest.warns(RuntimeWarning, match="nonpositive"):
        slope, _, _ = fit_exponent([(0.5, 0.25, 0.0), (0.25, 0.0625, 0.0), (0.1, 0.0, 0.0)])
    assert slope == pytest.approx(2.0)


def test_too_few_points():
    with pytest.raises(InsufficientDataError):
        fit_exponent([(0.5, 1.0, 0.1)])


# --- verdicts ------------------------------------------------------------------------


def test_lower_bound_verdicts():
    ok = check_lemma_lower(synthetic_rows(lambda e: e, lambda e: e**2), CAUCHY, 0.3)
    assert ok.passed and ok.required == "slope <= 1.3" and ok.fitted_slope == pytest.approx(1.0)
    bad = check_lemma_lower(synthetic_rows(lambda e: e**2, lambda e: e**3), CAUCHY, 0.3)
    assert not bad.passed


def test_upper_bound_verdicts():
    ok = check_lemma_upper(synthetic_rows(lambda e: e, lambda e: e**2), CAUCHY, 0.3)
    assert ok.passed and ok.threshold == pytest.approx(1.7)
    bad = check_lemma_upper(synthetic_rows(lambda e: e, lambda e: e), CAUCHY, 0.3)
    assert not bad.passed


def test_upper_bound_needs_small_eps():
    rows = synthetic_rows(lambda e: e, lambda e: e**2, eps=(0.25, 0.2, 0.15))
    with pytest.raises(InsufficientDataError):
        check_lemma_upper(rows, CAUCHY, 0.3)


def test_theorem_verdicts():
    v = check_theorem(synthetic_rows(lambda e: e, lambda e: e**2), CAUCHY, 0.35)
    assert v.passed and v.threshold == pytest.approx(0.65)
    assert v.constant_proxy == pytest.approx(1.0)
    flat = check_theorem(synthetic_rows(lambda e: e, lambda e: 0.1 * e), CAUCHY, 0.35)
    assert not flat.passed


def test_theorem_threshold_in_two_dimensions():
    v = check_theorem(synthetic_rows(lambda e: e, lambda e: e**4), Params(2, 0.5), 0.35)
    assert v.threshold == pytest.approx(3 - 0.35)
    assert v.passed


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(1e-3, 1e3))
def test_verdicts_invariant_under_scaling(scale):
    f0 = lambda e: 0.3 * e**1.1  # noqa: E731
    fz = lambda e: 0.2 * e**2.2  # noqa: E731
    base = all_verdicts(synthetic_rows(f0, fz), CAUCHY, Tolerances())
    scaled = all_verdicts(
        synthetic_rows(lambda e: scale * f0(e), lambda e: scale * fz(e)), CAUCHY, Tolerances()
    )
    for a, b in zip(base, scaled):
        assert a.passed == b.passed
        assert a.fitted_slope == pytest.approx(b.fitted_slope, abs=1e-9)


def test_unusable_rows_are_excluded():
    rows = synthetic_rows(lambda e: e, lambda e: e**2)
    rows.append(SweepRow(0.04, Estimate(1e-6, 1e-6, 100), est(1e-3), est(1e-6), est(1e-3)))
    assert not rows[-1].usable
    v = check_lemma_lower(rows, CAUCHY, 0.3)
    assert v.n_points == len(EPS)
    with pytest.raises(InsufficientDataError):
        check_theorem(rows[:2] + rows[-1:], CAUCHY, 0.35)


def test_ratio_error_propagation():
    r = SweepRow(0.1, Estimate(0.02, 0.001, 10), Estimate(0.001, 0.0001, 10), est(0.02), est(0.001))
    assert r.ratio == pytest.approx(0.05)
    assert r.ratio_err == pytest.approx(0.05 * math.hypot(0.1, 0.05))


def test_ratio_trend():
    assert ratio_trend(synthetic_rows(lambda e: e, lambda e: e**2)).passed
    assert ratio_trend(synthetic_rows(lambda e: e, lambda e: e**1.5)).passed
    rising = synthetic_rows(lambda e: e**2, lambda e: e)
    assert not ratio_trend(rising).passed


# --- configuration and sweep ------------------------------------------------------------


@pytest.mark.parametrize("eps", [(), (0.1, 0.2), (0.3, 0.1), (0.1, 0.1), (0.1, 0.0)])
def test_sweep_config_validation(eps):
    with pytest.raises(InvalidParameterError):
        SweepConfig(eps_list=eps)


def test_job_seeds_distinct():
    seeds = {job_seed(1, i, j) for i in range(6) for j in range(2)}
    assert len(seeds) == 12
    assert job_seed(1, 0, 0) == job_seed(1, 0, 0)


def test_single_row_sweep():
    cfg = SweepConfig(CAUCHY, (0.25,), WalkConfig(n_paths=100_000, seed=5))
    rows = run_sweep(cfg)
    assert len(rows) == 1 and rows[0].eps == 0.25
    assert rows[0].usable
    assert rows[0].cross_check() == (True, True)


def test_sweep_order_and_reproducibility():
    cfg = SweepConfig(CAUCHY, (0.2, 0.1), WalkConfig(n_paths=3000, seed=11))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = run_sweep(cfg)
        b = run_sweep(cfg, workers=2)
    assert [r.eps for r in a] == [0.2, 0.1]
    assert a == b

import math

import numpy as np
import pytest
from scipy import integrate

from kinharnack.core import (
    DomainError,
    InvalidParameterError,
    Params,
    PhasePoint,
    contains,
    evaluation_points,
    make_geometry,
    scaled_domain,
)
from kinharnack import walker
from kinharnack.spectral import symbol_exponent_array
from kinharnack.walker import (
    Estimate,
    WalkConfig,
    ball_jump_integral,
    coupled_domain_monotonicity,
    coupled_occupations,
    dump_traces,
    estimate_f_exit,
    estimate_f_occupation,
    g_eps,
    galilean_coordinates,
    jump_constant,
    simulate_free,
    simulate_path,
    simulate_paths,
    trace_path,
)

CAUCHY = Params(1, 0.5)


@pytest.fixture(scope="module")
def geom():
    return make_geometry(0.25, CAUCHY)


# --- source term ---------------------------------------------------------------


def test_jump_constant_known_values():
    assert jump_constant(Params(1, 0.5)) == pytest.approx(1 / math.pi, rel=1e-15)
    # three-dimensional Cauchy jump density 1/(pi^2 |z|^4)
    assert jump_constant(Params(3, 0.5)) == pytest.approx(1 / math.pi**2, rel=1e-15)


def test_g_eps_examples(geom):
    assert g_eps(PhasePoint((0.0,), (0.0,)), geom, CAUCHY) == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    expected = (1 / 1.5 - 1 / 3.5) / math.pi
    assert g_eps(PhasePoint((0.0,), (0.5,)), geom, CAUCHY) == pytest.approx(expected, rel=1e-14)
    assert g_eps(PhasePoint((0.1,), (0.5,)), geom, CAUCHY) == 0.0


def test_g_eps_outside_domain(geom):
    with pytest.raises(DomainError):
        g_eps(PhasePoint((0.0,), (1.5,)), geom, CAUCHY)


def test_g_eps_matches_direct_quadrature():
    p = Params(1, 0.3)
    g = make_geometry(0.2, p)
    v = -0.4
    ref = integrate.quad(lambda w: abs(v - w) ** (-1 - 2 * p.s), 2.0, 4.0)[0] * jump_constant(p)
    assert g_eps(PhasePoint((0.0,), (v,)), g, p) == pytest.approx(ref, rel=1e-12)


def _ball_integral_2d(dist, s):
    def f(phi, rho):
        return ((dist - rho * math.cos(phi)) ** 2 + (rho * math.sin(phi)) ** 2) ** (-1 - s) * rho

    return integrate.dblquad(f, 0.0, 1.0, 0.0, 2 * math.pi, epsabs=0, epsrel=1e-11)[0]


def _ball_integral_3d(dist, s):
    def f(theta, rho):
        r2 = dist**2 + rho**2 - 2 * dist * rho * math.cos(theta)
        return r2 ** (-1.5 - s) * 2 * math.pi * rho**2 * math.sin(theta)

    return integrate.dblquad(f, 0.0, 1.0, 0.0, math.pi, epsabs=0, epsrel=1e-11)[0]


@pytest.mark.parametrize("dist", [2.0, 2.7, 4.0])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.8])
def test_ball_integral_vs_cubature(dist, s):
    assert ball_jump_integral(dist, 1.0, Params(2, s)) == pytest.approx(_ball_integral_2d(dist, s), rel=1e-9)
    assert ball_jump_integral(dist, 1.0, Params(3, s)) == pytest.approx(_ball_integral_3d(dist, s), rel=1e-9)


def test_ball_integral_far_field():
    # far away the ball acts as a point mass of volume pi
    p = Params(2, 0.5)
    assert ball_jump_integral(400.0, 1.0, p) == pytest.approx(math.pi * 400.0**-3, rel=1e-4)


@pytest.mark.parametrize("d", [2, 3])
def test_chebyshev_table(d):
    p = Params(d, 0.4)
    g = make_geometry(0.25, p)
    table = walker._source_table(g, p, g.domain)
    for dist in np.linspace(2.0, 4.0, 9):
        u = (2 * dist - (table.hi + table.lo)) / (table.hi - table.lo)
        approx = np.polynomial.chebyshev.chebval(u, table.coeffs)
        assert approx == pytest.approx(ball_jump_integral(dist, 1.0, p), rel=1e-12)


def test_ball_integral_rejects_inside():
    with pytest.raises(DomainError):
        ball_jump_integral(0.5, 1.0, Params(2, 0.5))


# --- configuration and estimates ---------------------------------------------------------


@pytest.mark.parametrize(
    "kw", [dict(dt=0.0), dict(dt=1.0, max_time=0.5), dict(n_paths=0), dict(seed=-1), dict(n_paths=2.5)]
)
def test_walk_config_validation(kw):
    with pytest.raises(InvalidParameterError):
        WalkConfig(**kw)


def test_estimate_stderr_definition():
    x = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
    e = Estimate.from_samples(x)
    assert e.stderr == pytest.approx(np.std(x, ddof=1) / math.sqrt(5))
    assert e.n == 5


def test_exterior_datum(geom):
    inside_target = PhasePoint((0.0,), (3.0,))
    assert estimate_f_exit(inside_target, geom, CAUCHY, WalkConfig()) == Estimate(1.0, 0.0, 1, 0.0)
    away = PhasePoint((1.5,), (0.0,))
    assert estimate_f_exit(away, geom, CAUCHY, WalkConfig()).mean == 0.0
    with pytest.raises(DomainError):
        estimate_f_occupation(away, geom, CAUCHY, WalkConfig())


def test_start_outside_domain_rejected(geom):
    with pytest.raises(DomainError):
        simulate_path(PhasePoint((0.0,), (1.0,)), geom, CAUCHY, WalkConfig(), 0)


@pytest.fixture(scope="module")
def batch(geom):
    cfg = WalkConfig(dt=1e-3, n_paths=20_000, seed=42)
    return simulate_paths(evaluation_points(CAUCHY)[0], geom, CAUCHY, cfg)


def test_paths_are_killed_on_exit(batch, geom):
    assert not batch.censored.any()
    assert np.all(batch.steps >= 1)
    t = batch.exit_time / batch.dt
    np.testing.assert_allclose(t, np.round(t))
    for i in range(0, len(batch), 97):
        rec = batch.record(i)
        assert not contains(geom.domain, rec.exit_state)
        assert rec.hit_target == contains(geom.exterior_target, rec.exit_state)


def test_occupation_nonnegative(batch, geom):
    assert np.all(batch.occupation >= 0)
    assert np.all(batch.occupation > 0)  # every path starts inside the strip
    # from zeta, a path that never reaches the strip collects nothing
    b = simulate_paths(evaluation_points(CAUCHY)[1], geom, CAUCHY, WalkConfig(n_paths=2000, seed=3))
    assert np.any(b.occupation == 0) and np.all(b.occupation >= 0)


def test_single_path_matches_batch(batch, geom):
    cfg = WalkConfig(dt=1e-3, n_paths=1, seed=42)
    rec = simulate_path(evaluation_points(CAUCHY)[0], geom, CAUCHY, cfg, stream_id=123)
    assert rec == batch.record(123)


def test_censoring(geom):
    cfg = WalkConfig(dt=1e-2, max_time=0.05, n_paths=2000, seed=1)
    b = simulate_paths(evaluation_points(CAUCHY)[0], geom, CAUCHY, cfg)
    assert b.censored.mean() > 0.5
    assert not np.any(b.hit & b.censored)
    assert np.all(b.steps[b.censored] == 5)
    with pytest.warns(RuntimeWarning, match="censored"):
        est = estimate_f_exit(evaluation_points(CAUCHY)[0], geom, CAUCHY, cfg)
    assert est.flagged and est.censored_fraction == pytest.approx(b.censored.mean())


def test_worker_count_does_not_change_results(geom):
    cfg = WalkConfig(dt=1e-3, n_paths=3 * walker.CHUNK + 11, seed=9)
    p = evaluation_points(CAUCHY)[1]
    a = simulate_paths(p, geom, CAUCHY, cfg, workers=1)
    b = simulate_paths(p, geom, CAUCHY, cfg, workers=3)
    for f in ("steps", "state", "hit", "occupation", "censored"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


@pytest.mark.parametrize("s", [0.5, 0.3, 0.8])
def test_scalar_kernel_matches_generic(s):
    p = Params(1, s)
    g = make_geometry(0.2, p)
    args = walker._kernel_args(g, p, None)
    n = 2000
    outs = []
    for kern in (walker._walk_chunk, walker._walk_chunk_1d):
        o = (np.empty(n, np.int64), np.empty((n, 2)), np.empty(n, np.bool_), np.empty(n), np.empty(n, np.bool_))
        kern(np.array([0.01, -0.2]), *args, 1e-3, 64000, np.uint64(3), np.uint64(0), *o)
        outs.append(o)
    for a, b in zip(*outs):
        np.testing.assert_array_equal(a, b)


def test_hits_come_from_large_jumps_in_strip(geom):
    cfg = WalkConfig(dt=1e-3, n_paths=4000, seed=5)
    start = evaluation_points(CAUCHY)[0]
    b = simulate_paths(start, geom, CAUCHY, cfg)
    hits = np.flatnonzero(b.hit)
    assert hits.size > 50
    for i in hits[:60]:
        tr = trace_path(start, geom, CAUCHY, cfg, int(i))
        np.testing.assert_array_equal(tr[-1], b.state[i])
        jump = tr[-1, 1] - tr[-2, 1]
        assert abs(jump) >= 1.0
        assert abs(tr[-1, 0]) < geom.exterior_target.x_radius
        assert abs(tr[-1, 1] - 3.0) < 1.0


def test_trace_dump(tmp_path, geom):
    cfg = WalkConfig(dt=1e-2, n_paths=1, seed=2)
    path = dump_traces(tmp_path / "t.csv", evaluation_points(CAUCHY)[0], geom, CAUCHY, cfg, 3)
    lines = path.read_text().splitlines()
    assert lines[0] == "path_id,step,y,v,alive"
    last = [ln for ln in lines[1:] if ln.startswith("0,")][-1]
    assert last.endswith(",0")
    with pytest.raises(InvalidParameterError):
        dump_traces(tmp_path / "u.csv", evaluation_points(CAUCHY)[0], geom, CAUCHY, cfg, 1001)


# --- coupling ------------------------------------------------------------------------------


def test_coupling_same_domain_is_equal(geom):
    cfg = WalkConfig(dt=1e-3, n_paths=1000, seed=4)
    small, large = coupled_occupations(evaluation_points(CAUCHY)[0], geom, geom, CAUCHY, cfg)
    np.testing.assert_array_equal(small.occupation, large.occupation)


def test_coupling_nested_domains(geom):
    cfg = WalkConfig(dt=1e-3, n_paths=2000, seed=4)
    large = geom.with_domain(scaled_domain(0.5, CAUCHY))
    start = evaluation_points(CAUCHY)[0]
    small_b, large_b = coupled_occupations(start, geom, large, CAUCHY, cfg)
    assert np.all(small_b.steps <= large_b.steps)
    assert np.all(small_b.occupation <= large_b.occupation)
    assert np.any(small_b.occupation < large_b.occupation)
    assert coupled_domain_monotonicity(start, geom, large, CAUCHY, cfg)


def test_coupling_requires_nesting(geom):
    large = geom.with_domain(scaled_domain(0.5, CAUCHY))
    with pytest.raises(InvalidParameterError):
        coupled_domain_monotonicity(evaluation_points(CAUCHY)[0], large, geom, CAUCHY, WalkConfig(n_paths=10))


# --- laws ------------------------------------------------------------------------------------


def test_free_process_matches_symbol():
    p = CAUCHY
    start = PhasePoint((0.3,), (-0.2,))
    t = 0.5
    ends = simulate_free(start, t, p, 1e-3, 100_000, seed=8)
    z = galilean_coordinates(start, t, ends)
    for eta, xi in [(1.0, 0.0), (0.0, 1.0), (2.0, -0.5), (-1.0, 1.0)]:
        ph = eta * z[:, 0] + xi * z[:, 1]
        emp = np.mean(np.cos(ph))
        se = np.std(np.cos(ph), ddof=1) / math.sqrt(ph.size)
        ref = math.exp(-float(symbol_exponent_array(t, np.array([eta]), np.array([xi]), p.s)))
        assert abs(emp - ref) <= 3 * se + 1e-12
        assert abs(np.mean(np.sin(ph))) <= 3 * np.std(np.sin(ph), ddof=1) / math.sqrt(ph.size)


def test_free_requires_whole_steps():
    with pytest.raises(InvalidParameterError):
        simulate_free(PhasePoint((0.0,), (0.0,)), 0.00123, CAUCHY, 1e-3, 10, seed=1)


@pytest.mark.parametrize("which", [0, 1])
def test_cross_estimators_agree(geom, which):
    cfg = WalkConfig(dt=1e-3, n_paths=100_000, seed=77)
    p = evaluation_points(CAUCHY)[which]
    a = estimate_f_exit(p, geom, CAUCHY, cfg)
    b = estimate_f_occupation(p, geom, CAUCHY, cfg)
    assert abs(a.mean - b.mean) <= 3 * walker.combined_sigma(a, b)
    for e in (a, b):
        assert -3 * e.stderr <= e.mean <= 1 + 3 * e.stderr


def test_cross_estimators_agree_in_two_dimensions():
    p = Params(2, 0.5)
    g = make_geometry(0.25, p)
    cfg = WalkConfig(dt=1e-3, n_paths=40_000, seed=13)
    start = evaluation_points(p)[0]
    a = estimate_f_exit(start, g, p, cfg)
    b = estimate_f_occupation(start, g, p, cfg)
    assert a.mean > 0
    assert abs(a.mean - b.mean) <= 3 * walker.combined_sigma(a, b)


def test_halving_dt(geom):
    start = evaluation_points(CAUCHY)[0]
    a = estimate_f_occupation(start, geom, CAUCHY, WalkConfig(dt=1e-3, n_paths=60_000, seed=21))
    b = estimate_f_occupation(start, geom, CAUCHY, WalkConfig(dt=5e-4, n_paths=60_000, seed=22))
    assert abs(a.mean - b.mean) <= 3 * walker.combined_sigma(a, b)

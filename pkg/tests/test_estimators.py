import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nearunit.ar1_sim import Ar1Config, FullPastInit, TruncatedInit, gen_series
from nearunit.errors import DegenerateError, RegimeError
from nearunit.estimators import (
    f0_estimate,
    fit_series,
    knight_integral,
    knight_residual,
    lad_fit,
    lad_objective,
    lad_solve,
    normalization,
    normalized_stat,
    ols_fit,
    residuals,
    silverman_bandwidth,
    t_statistic,
)
from scipy.integrate import trapezoid

from nearunit.verify import grid_confirm, lattice_instance

NORM_CONST_FIG1 = 7071.08548960129644464758732212  # sqrt(1000 / (1 - 0.99999**2))


def test_lad_exact_fit():
    sol = lad_fit(1.0, [2.0, 4.0])
    assert (sol.lo, sol.hi, sol.point, sol.objective) == (2.0, 2.0, 2.0, 0.0)


def test_lad_flat_interval_example():
    sol = lad_solve([1.0, 2.0, -1.0], [1.0, 3.0, -0.5])
    assert (sol.lo, sol.hi) == (1.0, 1.5)
    assert sol.point == 1.25
    assert sol.objective == pytest.approx(1.5, abs=1e-15)
    for r in (1.0, 1.25, 1.5):
        assert lad_objective([1.0, 2.0, -1.0], [1.0, 3.0, -0.5], r) == pytest.approx(1.5, abs=1e-15)


def test_lad_all_zero_regressors():
    with pytest.raises(DegenerateError):
        lad_fit(0.0, [0.0, 0.0, 1.0])


def test_lad_zero_regressors_ignored():
    # the term with x = 0 is constant in rho
    a = lad_solve([0.0, 1.0, 2.0, 3.0], [5.0, 1.1, 2.0, 3.3])
    b = lad_solve([1.0, 2.0, 3.0], [1.1, 2.0, 3.3])
    assert (a.lo, a.hi) == (b.lo, b.hi)


def test_lad_matches_lattice_search():
    rng = np.random.default_rng(123)
    for _ in range(100):
        assert grid_confirm(*lattice_instance(rng)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10, allow_subnormal=False), st.floats(-10, 10)), min_size=1, max_size=20))
def test_lad_optimality_certificate(pairs):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    if not np.any(np.abs(x) > 1e-6):
        return
    sol = lad_solve(x, y)
    assert sol.lo <= sol.point <= sol.hi
    scale = max(1.0, abs(sol.lo), abs(sol.hi))
    delta = 1e-6 * scale
    f = sol.objective
    tol = 1e-12 * max(1.0, np.abs(y).sum())
    assert lad_objective(x, y, sol.lo) == pytest.approx(f, abs=tol)
    assert lad_objective(x, y, sol.hi) == pytest.approx(f, abs=tol)
    assert lad_objective(x, y, sol.lo - delta) > f - tol
    assert lad_objective(x, y, sol.hi + delta) > f - tol
    # one-sided slopes at the ends bracket zero
    with np.errstate(over="ignore"):
        w, r = np.abs(x[x != 0]), (y / np.where(x == 0, 1, x))[x != 0]
    left = w[r < sol.lo].sum() - w[r >= sol.lo].sum()
    right = w[r <= sol.hi].sum() - w[r > sol.hi].sum()
    wtol = 1e-12 * w.sum()
    assert left <= wtol and right >= -wtol


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), min_size=2, max_size=15),
    st.floats(0.1, 100),
    st.integers(0, 1000),
)
def test_scale_equivariance(ys, c, seed):
    rng = np.random.default_rng(seed)
    y = np.array(ys) + 0.01 * rng.standard_normal(len(ys))
    a = lad_fit(1.0, y)
    b = lad_fit(c, c * y)
    assert b.point == pytest.approx(a.point, rel=1e-9, abs=1e-12)
    assert b.objective == pytest.approx(c * a.objective, rel=1e-9, abs=1e-12)
    assert ols_fit(c, c * y) == pytest.approx(ols_fit(1.0, y), rel=1e-12)


def test_noise_free_both_exact():
    rho = 0.9
    y = 3.0 * rho ** np.arange(1, 30)
    assert lad_fit(3.0, y).point == pytest.approx(rho, rel=1e-14)
    assert ols_fit(3.0, y) == pytest.approx(rho, rel=1e-14)


def test_ols_examples():
    assert ols_fit(1.0, [2.0, 4.0]) == 2.0
    assert ols_fit(1.0, [0.0, 0.0]) == 0.0
    with pytest.raises(DegenerateError):
        ols_fit(0.0, [0.0, 1.0])


def test_ols_normal_equation_oracle():
    rng = np.random.default_rng(5)
    y0, y = rng.standard_normal(), rng.standard_normal(12)
    x = np.concatenate(([y0], y[:-1]))
    beta, *_ = np.linalg.lstsq(x[:, None], y, rcond=None)
    assert ols_fit(y0, y) == pytest.approx(beta[0], abs=1e-12)


def test_residuals():
    assert np.array_equal(residuals(1.0, [2.0, 4.0], 2.0), [0.0, 0.0])
    y = np.array([0.3, -1.2, 0.7])
    assert np.array_equal(residuals(5.0, y, 0.0), y)
    s = gen_series(Ar1Config(-5, 1.1, 50), 3)
    assert np.allclose(residuals(s.y0, s.y, s.rho_true), s.eps, atol=1e-12)


def test_f0_normal():
    r = np.random.default_rng(1).standard_normal(100_000)
    f0, b = f0_estimate(r)
    assert abs(f0 - 0.39894) < 0.01
    assert b > 0


def test_f0_uniform():
    r = np.random.default_rng(2).uniform(-1, 1, 100_000)
    assert abs(f0_estimate(r)[0] - 0.5) < 0.02


def test_f0_two_point_positive():
    r = np.array([-1.0, 1.0, -1.0, 1.0]) + np.array([1e-3, 0, 0, -2e-3])
    assert f0_estimate(r)[0] > 0


def test_bandwidth_rule():
    x = np.random.default_rng(3).standard_normal(500)
    sd = np.std(x, ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    assert silverman_bandwidth(x) == pytest.approx(0.9 * min(sd, iqr / 1.349) * 500 ** -0.2, rel=1e-14)
    # heavily tied sample: IQR 0 falls back to the standard deviation
    t = np.array([0.0] * 20 + [1.0, -1.0])
    assert silverman_bandwidth(t) == pytest.approx(0.9 * np.std(t, ddof=1) * 22 ** -0.2, rel=1e-14)


def test_zero_bandwidth():
    with pytest.raises(DegenerateError):
        f0_estimate(np.ones(10))
    with pytest.raises(DegenerateError):
        silverman_bandwidth([1.0])


def test_t_statistic():
    y0, y = 0.5, np.array([0.2, -0.4, 1.1])
    assert t_statistic(0.7, 0.4, y0, y, 0.7) == 0.0
    a = t_statistic(0.9, 0.4, y0, y, 0.7)
    assert t_statistic(0.9, 0.8, y0, y, 0.7) == pytest.approx(2 * a, rel=1e-15)
    hand = 2 * 0.4 * math.sqrt(0.25 + 0.04 + 0.16) * 0.2
    assert a == pytest.approx(hand, abs=1e-12)


def test_normalization_constants():
    cfg = Ar1Config(-10, 2.0, 1000, init=FullPastInit())
    assert cfg.rho == 0.99999
    assert normalization(cfg) == pytest.approx(NORM_CONST_FIG1, rel=1e-9)
    cfg_e = Ar1Config(10, 2.0, 1000, init=TruncatedInit(1.3))
    assert normalization(cfg_e) == pytest.approx(math.sqrt(1000 * 7943), rel=1e-15)
    with pytest.raises(RegimeError):
        normalization(Ar1Config(-10, 2.0, 1000))


def test_normalized_stat():
    cfg = Ar1Config(-10, 2.0, 1000, init=FullPastInit())
    assert normalized_stat(cfg.rho, 0.4, cfg) == 0.0
    v = normalized_stat(cfg.rho + 1e-4, 0.4, cfg)
    assert v == pytest.approx(2 * 1.0 * 0.4 * NORM_CONST_FIG1 * 1e-4, rel=1e-6)
    u = Ar1Config(-10, 2.0, 1000, init=FullPastInit()).innovation
    assert u.sigma == 1.0


def test_fit_series_fields():
    cfg = Ar1Config(-50, 1.1, 200, init=FullPastInit())
    s = gen_series(cfg, 4)
    rec = fit_series(s.y0, s.y, cfg)
    assert rec.regime == "near-stationary"
    assert rec.f0_hat >= 0 and rec.bandwidth > 0
    assert rec.norm_stat is not None
    row = rec.row()
    assert set(row) == {"rho_lad_lo", "rho_lad_hi", "rho_lad", "rho_ols", "f0_hat", "bandwidth", "t_stat", "norm_stat"}
    zero = fit_series(s.y0, s.y, Ar1Config(-50, 1.1, 200))
    assert zero.norm_stat is None and math.isnan(zero.row()["norm_stat"])
    with pytest.raises(ValueError):
        fit_series(s.y0, s.y)


def test_knight_closed_form():
    assert knight_integral(0.5, 2.0) == 1.5
    assert knight_integral(2.5, 2.0) == 0.0
    assert knight_integral(-0.5, -2.0) == 1.5
    assert knight_integral(-0.5, 2.0) == 0.0


def test_knight_identity():
    rng = np.random.default_rng(9)
    x = rng.standard_normal(100_000)
    y = 3 * rng.standard_normal(100_000)
    assert np.max(np.abs(knight_residual(x, y))) < 1e-12


def test_knight_integral_by_quadrature():
    rng = np.random.default_rng(10)
    for x, y in rng.standard_normal((50, 2)):
        s = np.linspace(0, y, 200_001)
        g = ((x <= s).astype(float) - float(x <= 0))
        num = trapezoid(g, s)
        assert knight_integral(x, y) == pytest.approx(num, abs=1e-4)

import math

import numpy as np
import pytest

from nearunit.errors import DegenerateError, ValidationError
from nearunit.limit_dist import (
    LimitLawConfig,
    LimitPath,
    expected_phi_square,
    expected_psi_square,
    expected_weighted_l2,
    functionals,
    gamma_matrix,
    h_prime,
    h_timechange,
    lambda_matrix,
    normality_diagnostic,
    sample_draws,
    sample_path,
    sample_path_ar1,
    sample_path_gaussian,
    sqrt_psd_2x2,
)
from nearunit.montecarlo import ks_two_sample

M_NORMAL = math.sqrt(2.0 / math.pi)
# 30-digit oracle values
G11_1 = 0.432332358381693654053000252514
G22_1 = 3.19452804946532511361521373029
SINH2 = 3.6268604078470187676682139828
L11_G1_T0 = 0.0179862099620915580267931379495
E_WL2_G1 = 1.09726402473266255680760686514  # adaptive quadrature of exp(-2(1-t)) gamma22(t)


def test_gamma_matrix_examples():
    assert np.array_equal(gamma_matrix(0.0, 1.0, 0.5), np.zeros((2, 2)))
    assert np.allclose(gamma_matrix(0.5, 0.0, 0.8), [[0.5, 0.4], [0.4, 0.5]], atol=1e-15)
    assert np.allclose(gamma_matrix(0.5, 1e-10, 0.8), [[0.5, 0.4], [0.4, 0.5]], atol=1e-9)
    g = gamma_matrix(1.0, 1.0, M_NORMAL)
    assert g[0, 0] == pytest.approx(G11_1, rel=1e-14)
    assert g[1, 1] == pytest.approx(G22_1, rel=1e-14)
    assert g[0, 1] == pytest.approx(M_NORMAL, rel=1e-15)


def test_gamma_matrix_continuous_at_zero():
    a = gamma_matrix(0.7, 1e-7, 0.5)
    b = gamma_matrix(0.7, 0.0, 0.5)
    assert np.allclose(a, b, atol=1e-6)


def test_lambda_matrix_examples():
    m = 0.6
    assert np.allclose(lambda_matrix(1.0, 3.0, m), [[0.5, m / 2], [m / 2, 0.5]], atol=1e-15)
    assert lambda_matrix(0.0, 1.0, m)[0, 0] == pytest.approx(L11_G1_T0, rel=1e-13)
    assert lambda_matrix(0.0, 1.0, m)[0, 0] * h_prime(0.0, 1.0) == pytest.approx(math.exp(-2), rel=1e-13)
    for t in np.linspace(0, 1, 11):
        for g in (-30.0, -1.0, 0.0, 2.0, 30.0):
            lam = lambda_matrix(t, g, m)
            assert lam[0, 0] + lam[1, 1] == pytest.approx(1.0, abs=1e-15)


def test_lambda_large_gamma_finite():
    lam = lambda_matrix(0.0, 300.0, M_NORMAL)
    assert np.all(np.isfinite(lam))


def test_h_examples():
    assert h_timechange(0.0, 1.0) == 0.0
    assert h_timechange(1.0, 1.0) == pytest.approx(SINH2, rel=1e-14)
    assert h_timechange(1.0, 1.0) == pytest.approx(G11_1 + G22_1, rel=1e-14)
    assert h_timechange(0.7, 0.0) == pytest.approx(1.4, abs=1e-15)
    assert h_timechange(0.7, 1e-9) == pytest.approx(1.4, abs=1e-8)


def test_h_prime_matches_difference_quotient():
    for g in (-2.0, 0.5, 3.0):
        for t in (0.1, 0.5, 0.9):
            e = 1e-6
            num = (h_timechange(t + e, g) - h_timechange(t - e, g)) / (2 * e)
            assert num == pytest.approx(h_prime(t, g), rel=1e-7)


def test_sqrt_psd_examples():
    assert np.allclose(sqrt_psd_2x2(np.eye(2)), np.eye(2), atol=1e-15)
    assert np.allclose(sqrt_psd_2x2(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    lam = lambda_matrix(0.3, 1.0, 0.7979)
    r = sqrt_psd_2x2(lam)
    assert np.allclose(r, r.T)
    assert np.max(np.abs(r @ r - lam)) < 1e-12


def test_sqrt_psd_singular_and_negative():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    r = sqrt_psd_2x2(m)
    assert np.max(np.abs(r @ r - m)) < 1e-12
    assert np.array_equal(sqrt_psd_2x2(np.zeros((2, 2))), np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        sqrt_psd_2x2(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValidationError):
        sqrt_psd_2x2(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_config_validation():
    with pytest.raises(ValidationError):
        LimitLawConfig(1.0, mean_abs=1.2)
    with pytest.raises(ValidationError):
        LimitLawConfig(1.0, mean_abs=0.0)
    with pytest.raises(ValidationError):
        LimitLawConfig(1.0, f0=0.0)
    with pytest.raises(ValidationError):
        LimitLawConfig(1.0, grid_m=50)
    with pytest.raises(ValidationError):
        LimitLawConfig(1.0, grid_m=500, route="ar1", n=200)
    with pytest.raises(ValidationError):
        LimitLawConfig(400.0)
    assert LimitLawConfig(1.0, grid_m=200, route="ar1").n == 200


def test_paths_start_at_zero():
    for cfg in (LimitLawConfig(2.0, grid_m=100), LimitLawConfig(-2.0, grid_m=100, route="ar1", n=300)):
        p = sample_path(cfg, 1, 0)
        assert p.K[0] == 0.0 and p.L[0] == 0.0
        assert len(p.t) == len(p.K) == len(p.L) == 101


def test_route_mismatch():
    with pytest.raises(ValidationError):
        sample_path_gaussian(LimitLawConfig(1.0, grid_m=100, route="ar1"), 0)
    with pytest.raises(ValidationError):
        sample_path_ar1(LimitLawConfig(1.0, grid_m=100), 0)


def _endpoint_sample(cfg, reps, seed):
    pts = np.array([[p.K[-1], p.L[-1]] for p in (sample_path(cfg, seed, r) for r in range(reps))])
    return pts


def _within_3se(samples, target):
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    return abs(samples.mean() - target) < 3 * se


def test_gaussian_endpoint_covariance():
    pts = _endpoint_sample(LimitLawConfig(1.0, grid_m=100), 20_000, 2)
    g = gamma_matrix(1.0, 1.0, M_NORMAL)
    assert _within_3se(pts[:, 0] ** 2, g[0, 0])
    assert _within_3se(pts[:, 1] ** 2, g[1, 1])
    assert _within_3se(pts[:, 0] * pts[:, 1], g[0, 1])


def test_gaussian_gamma_zero_is_correlated_brownian():
    m = 0.6
    cfg = LimitLawConfig(0.0, mean_abs=m, grid_m=100)
    pts = _endpoint_sample(cfg, 20_000, 3)
    assert _within_3se(pts[:, 0] ** 2, 1.0)
    assert _within_3se(pts[:, 1] ** 2, 1.0)
    assert _within_3se(pts[:, 0] * pts[:, 1], m)
    # increments are independent with variance dt
    p = sample_path(cfg, 3, 0)
    assert np.var(np.diff(p.K)) * 100 == pytest.approx(1.0, abs=0.4)


def test_ar1_endpoint_moments():
    cfg = LimitLawConfig(1.0, grid_m=100, route="ar1", n=2000)
    pts = _endpoint_sample(cfg, 20_000, 4)
    assert _within_3se(pts[:, 0] ** 2, G11_1)
    assert _within_3se(pts[:, 0] * pts[:, 1], M_NORMAL)


def test_ar1_gamma_zero_sign_sums():
    cfg = LimitLawConfig(0.0, grid_m=100, route="ar1", n=400)
    pts = _endpoint_sample(cfg, 5000, 5)
    k = pts[:, 0] * math.sqrt(400)
    assert np.allclose(k, np.round(k), atol=1e-9)  # sums of signs are integers
    assert np.all(np.round(k) % 2 == 0)  # n even
    assert _within_3se(pts[:, 0] ** 2, 1.0)


def test_functionals_hand_example():
    m = 100
    t = np.arange(m + 1) / m
    L = np.ones(m + 1)
    L[0] = 0.0
    d = functionals(LimitPath(t, t.copy(), L), 0.0, 0.5)
    assert d.int_LdK == pytest.approx(1 - 1 / m, abs=1e-14)
    assert d.int_w_L2 == pytest.approx(1 - 1 / m, abs=1e-14)
    assert d.D == pytest.approx(d.int_LdK / (2 * 0.5 * d.int_w_L2), rel=1e-15)


def test_functionals_degenerate():
    t = np.linspace(0, 1, 101)
    with pytest.raises(DegenerateError):
        functionals(LimitPath(t, t.copy(), np.zeros(101)), 0.0, 0.4)


@pytest.mark.parametrize("route", ["gaussian", "ar1"])
def test_batch_matches_single_paths(route):
    cfg = LimitLawConfig(-3.0, grid_m=200, route=route, n=400 if route == "ar1" else None)
    batch = sample_draws(cfg, 5, 9, start=3)
    for i in range(5):
        single = functionals(sample_path(cfg, 9, 3 + i), cfg.gamma, cfg.f0)
        got = batch.draw(i)
        assert got.int_LdK == pytest.approx(single.int_LdK, rel=1e-10, abs=1e-13)
        assert got.int_w_L2 == pytest.approx(single.int_w_L2, rel=1e-10)


def test_l_relation_and_invariants():
    batch = sample_draws(LimitLawConfig(2.0, grid_m=200), 300, 1)
    assert np.all(batch.int_w_L2 >= 0)
    assert np.allclose(batch.Lstat, batch.D * np.sqrt(batch.int_w_L2), rtol=1e-14)
    assert np.allclose(batch.self_normalized, 2 * batch.f0 * batch.Lstat, rtol=1e-14)


def test_draws_independent_of_workers():
    cfg = LimitLawConfig(1.5, grid_m=200)
    a = sample_draws(cfg, 600, 4, workers=1)
    b = sample_draws(cfg, 600, 4, workers=3)
    assert np.array_equal(a.int_LdK, b.int_LdK) and np.array_equal(a.int_w_L2, b.int_w_L2)


def test_draws_csv(tmp_path):
    batch = sample_draws(LimitLawConfig(1.0, grid_m=100), 4, 2)
    p = tmp_path / "d.csv"
    batch.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "replication,int_LdK,int_w_L2,D,Lstat"
    assert len(lines) == 5
    assert float(lines[1].split(",")[3]) == batch.D[0]


def test_expected_weighted_l2_oracle():
    assert expected_weighted_l2(1.0) == pytest.approx(E_WL2_G1, rel=1e-14)
    assert expected_weighted_l2(0.0) == 0.5
    batch = sample_draws(LimitLawConfig(1.0, grid_m=1000), 20_000, 6)
    assert _within_3se(batch.int_w_L2, E_WL2_G1)


def test_moment_closed_forms():
    assert expected_psi_square(-200.0) == pytest.approx(0.9975, abs=1e-15)
    assert expected_phi_square(200.0) == pytest.approx(1.0, abs=1e-15)
    # both equal the scaled weighted L2 expectation
    for g in (-3.0, -0.5):
        assert expected_psi_square(g) == pytest.approx(-2 * g * expected_weighted_l2(g), rel=1e-13)
    for g in (0.5, 3.0):
        assert expected_phi_square(g) == pytest.approx(4 * g * g * math.exp(-2 * g) * expected_weighted_l2(g), rel=1e-13)


def test_normality_diagnostic_contract():
    with pytest.raises(ValidationError):
        normality_diagnostic(LimitLawConfig(-5.0), 999, 0)
    d = normality_diagnostic(LimitLawConfig(-50.0, grid_m=500), 1000, 0)
    assert 0 <= d.ks <= 1
    assert d.moment_expected == pytest.approx(expected_psi_square(-50.0))
    d0 = normality_diagnostic(LimitLawConfig(0.0, grid_m=200), 1000, 0)
    assert d0.moment_mean is None


@pytest.mark.slow
def test_grid_doubling_gate():
    a = sample_draws(LimitLawConfig(1.0, grid_m=2000), 20_000, 21)
    b = sample_draws(LimitLawConfig(1.0, grid_m=4000), 20_000, 21)
    assert ks_two_sample(a.D, b.D) < 0.02

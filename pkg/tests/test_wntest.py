"""White-noise tests and the diagonal-path order search."""

import math

import numpy as np
import pytest

from matfactor.config import EstimationConfig, resolve_test
from matfactor.dgp import SimScenario, simulate_panel
from matfactor.errors import (
    DegenerateComponent,
    InsufficientData,
    InvalidInput,
    SingularCovariance,
)
from matfactor.estimate import build_m1, build_m2
from matfactor.subspace import sym_eigen
from matfactor import wntest
from matfactor.wntest import (
    WhitenessReport,
    _reduce_block,
    cyz_max_test,
    diagonal_path_order,
    ljung_box,
    max_abs_normal_quantile,
    tsay_rank_test,
)


def _normal(shape, seed):
    return np.random.Generator(np.random.Philox(seed)).standard_normal(shape)


def _ar1(T, phi, seed, d=1):
    innov = _normal((T, d), seed)
    x = np.zeros((T, d))
    for t in range(1, T):
        x[t] = phi * x[t - 1] + innov[t]
    return x


# -- ljung_box -----------------------------------------------------------


def test_ljung_box_vanishing_autocovariance():
    x = np.tile([1.0, 0.0, -1.0, 0.0], 25)  # lag-1 products are all zero
    out = ljung_box(x, m=1)
    assert out.statistic == pytest.approx(0.0, abs=1e-12)
    assert out.p_value == pytest.approx(1.0)
    assert not out.reject


def test_ljung_box_univariate_scalar_oracle():
    x = _ar1(100, 0.5, seed=7).ravel()
    T, m = 100, 6
    xc = x - x.mean()
    gamma = [np.dot(xc[k:], xc[: T - k]) / T for k in range(m + 1)]
    classical = T * (T + 2) * sum(
        (gamma[k] / gamma[0]) ** 2 / (T - k) for k in range(1, m + 1)
    )
    out = ljung_box(x, m=m)
    assert out.statistic == pytest.approx(classical * T / (T + 2), rel=1e-10)
    assert out.dim == 1 and out.n_lags == m


def test_ljung_box_size():
    rejections = 0
    n = 1000
    for rep in range(n):
        out = ljung_box(_normal((500, 4), seed=10_000 + rep), m=10, alpha=0.05)
        rejections += out.reject
    assert 0.03 <= rejections / n <= 0.07


def test_ljung_box_singular_covariance():
    x = _normal((200, 2), seed=3)
    x = np.column_stack([x[:, 0], x[:, 0], x[:, 1]])  # exact collinearity
    with pytest.raises(SingularCovariance):
        ljung_box(x, m=4)


def test_ljung_box_validates_input():
    with pytest.raises(InvalidInput):
        ljung_box(_normal((50, 2), seed=4), m=0)
    with pytest.raises(InsufficientData):
        ljung_box(_normal((5, 1), seed=5), m=5)
    with pytest.raises(InvalidInput):
        ljung_box(np.array([1.0, np.nan, 0.0, 1.0]), m=1)


# -- extreme-value threshold ---------------------------------------------


def test_max_abs_normal_quantile_frozen_values():
    # (2 Phi(x) - 1)^100 = 0.95 solved to high precision, and the Gumbel
    # normalization evaluated from its closed form
    assert max_abs_normal_quantile(100, 0.05, "exact") == pytest.approx(
        3.473978869154, abs=1e-9
    )
    assert max_abs_normal_quantile(100, 0.05, "asymptotic") == pytest.approx(
        3.344949318503, abs=1e-9
    )


def test_asymptotic_threshold_sits_below_exact():
    for N in (25, 100, 2000):
        exact = max_abs_normal_quantile(N, 0.05, "exact")
        asym = max_abs_normal_quantile(N, 0.05, "asymptotic")
        assert asym < exact


def test_max_abs_normal_quantile_validation():
    with pytest.raises(InvalidInput):
        max_abs_normal_quantile(1, 0.05)
    with pytest.raises(InvalidInput):
        max_abs_normal_quantile(10, 0.0)
    with pytest.raises(InvalidInput):
        max_abs_normal_quantile(10, 0.05, form="gumbel-ish")


# -- tsay_rank_test ------------------------------------------------------


def test_tsay_size_is_conservative():
    rejections = 0
    n = 500
    for rep in range(n):
        out = tsay_rank_test(_normal((1000, 3), seed=20_000 + rep), m=5)
        rejections += out.reject
    assert rejections / n <= 0.08


def test_tsay_power_on_ar1():
    rejections = 0
    n = 200
    for rep in range(n):
        out = tsay_rank_test(_ar1(500, 0.8, seed=30_000 + rep, d=3), m=5)
        rejections += out.reject
    assert rejections >= 0.99 * n


def test_tsay_permutation_invariance():
    x = _ar1(300, 0.4, seed=8, d=4)
    base = tsay_rank_test(x, m=3).statistic
    perm = tsay_rank_test(x[:, [2, 0, 3, 1]], m=3).statistic
    assert perm == pytest.approx(base, abs=1e-8)


def test_tsay_common_rescaling_invariance():
    x = _ar1(300, 0.4, seed=9, d=3)
    base = tsay_rank_test(x, m=3).statistic
    scaled = tsay_rank_test(3.7 * x, m=3).statistic
    assert scaled == pytest.approx(base, abs=1e-10)


def test_tsay_early_stop_scans_fewer_lags():
    x = _ar1(500, 0.8, seed=10, d=2)
    full = tsay_rank_test(x, m=8)
    early = tsay_rank_test(x, m=8, early_stop=True)
    assert early.reject and full.reject
    assert early.n_lags <= full.n_lags
    assert early.statistic <= full.statistic + 1e-12


def test_tsay_needs_more_observations_than_dims():
    with pytest.raises(InsufficientData):
        tsay_rank_test(_normal((5, 6), seed=11), m=1)
    with pytest.raises(InsufficientData):
        tsay_rank_test(_normal((5, 2), seed=12), m=4)


# -- cyz_max_test --------------------------------------------------------


def test_cyz_detects_unit_lag_correlation():
    w = _normal(401, seed=13)
    x = np.column_stack([w[1:], w[:-1]])  # second component trails the first
    out = cyz_max_test(x, m=2)
    assert out.statistic > 0.9 * math.sqrt(400)
    assert out.reject


def test_cyz_size():
    rejections = 0
    n = 300
    for rep in range(n):
        out = cyz_max_test(
            _normal((500, 2), seed=40_000 + rep), m=4, n_boot=500, seed=rep
        )
        rejections += out.reject
    assert 0.02 <= rejections / n <= 0.08


def test_cyz_rescaling_and_seed_determinism():
    x = _ar1(200, 0.3, seed=14, d=2)
    base = cyz_max_test(x, m=3, seed=5)
    scaled = cyz_max_test(x * np.array([0.01, 250.0]), m=3, seed=5)
    assert scaled.statistic == pytest.approx(base.statistic, abs=1e-12)
    assert scaled.threshold == pytest.approx(base.threshold, abs=1e-12)
    again = cyz_max_test(x, m=3, seed=5)
    assert again.threshold == base.threshold


def test_cyz_constant_component_raises():
    x = _normal((100, 2), seed=15)
    x[:, 1] = 4.2
    with pytest.raises(DegenerateComponent):
        cyz_max_test(x, m=2)


def test_cyz_rejects_oversized_cross_sections():
    with pytest.raises(InvalidInput):
        cyz_max_test(_normal((1000, 100), seed=16), m=10)


# -- block plumbing ------------------------------------------------------


def test_reduce_block_caps_vec_dimension():
    block = _normal((10, 5, 4), seed=17)
    reduced = _reduce_block(block, epsilon=0.9)
    assert reduced.shape == (10, 3, 3)  # floor(sqrt(0.9 * 10)) = 3
    assert np.array_equal(reduced, block[:, :3, :3])
    small = _normal((30, 5, 4), seed=18)
    assert _reduce_block(small, epsilon=0.9) is small


def test_resolve_test_auto_rule():
    assert resolve_test("auto", 6, 6, 144) == "ljung_box"
    assert resolve_test("auto", 6, 6, 143) == "tsay_rank"
    assert resolve_test("auto", 7, 6, 10_000) == "tsay_rank"
    assert resolve_test("cyz_max", 3, 3, 100) == "cyz_max"
    with pytest.raises(InvalidInput):
        resolve_test("portmanteau", 3, 3, 100)


def test_report_round_trips_through_dicts():
    outcome = wntest.TestOutcome("ljung_box", 4.2, True, p_value=0.01, dim=3, n_lags=5)
    step = wntest.TraceStep("diagonal", 1, 1, outcome)
    report = WhitenessReport(
        r1=2, r2=3, l_star=3, i_star=1, j_star=2, order_zero=False,
        boundary=False, test="ljung_box", trace=(step,),
    )
    clone = WhitenessReport.from_dict(report.to_dict())
    assert clone == report


# -- diagonal-path order search ------------------------------------------


def test_diagonal_path_white_noise_gives_zero_orders():
    scen = SimScenario(p1=5, p2=4, r1=1, r2=1, k1=0, k2=0,
                       delta1=0.0, delta2=0.0, T=500, seed=21)
    panel, _ = simulate_panel(scen, zero_common=True)
    report = diagonal_path_order(panel, np.eye(5), np.eye(4))
    assert (report.r1, report.r2) == (0, 0)
    assert report.order_zero and report.l_star == 1
    assert len(report.trace) == 1
    assert report.trace[0].stage == "diagonal"
    assert (report.trace[0].row_start, report.trace[0].col_start) == (1, 1)


def test_diagonal_path_single_planted_ar_entry():
    T = 600
    panel = _normal((T, 3, 3), seed=22)
    panel[:, 0, 0] = _ar1(T, 0.9, seed=23).ravel() * 2.0
    report = diagonal_path_order(panel, np.eye(3), np.eye(3))
    assert (report.r1, report.r2) == (1, 1)
    assert report.test == "ljung_box"
    schedule = [(s.stage, s.row_start, s.col_start) for s in report.trace]
    assert schedule == [
        ("diagonal", 1, 1),
        ("diagonal", 2, 2),
        ("row", 2, 1),
        ("column", 1, 2),
    ]


def test_diagonal_path_noiseless_recovery_rate():
    hits = 0
    n = 100
    for seed in range(n):
        scen = SimScenario(p1=7, p2=7, r1=2, r2=3, k1=1, k2=2,
                           delta1=0.0, delta2=0.0, T=2000, seed=seed)
        panel, _ = simulate_panel(scen, zero_noise=True)
        Y = panel - panel.mean(axis=0)
        g1 = sym_eigen(build_m1(Y, 2)).vectors
        g2 = sym_eigen(build_m2(Y, 2)).vectors
        report = diagonal_path_order(Y, g1, g2)
        hits += (report.r1, report.r2) == (2, 3)
    assert hits >= 95


def test_diagonal_path_column_stop_reject_mode():
    scen = SimScenario(p1=7, p2=7, r1=2, r2=3, k1=1, k2=2,
                       delta1=0.0, delta2=0.0, T=2000, seed=0)
    panel, _ = simulate_panel(scen, zero_noise=True)
    Y = panel - panel.mean(axis=0)
    g1 = sym_eigen(build_m1(Y, 2)).vectors
    g2 = sym_eigen(build_m2(Y, 2)).vectors
    accept_rule = diagonal_path_order(Y, g1, g2)
    reject_rule = diagonal_path_order(
        Y, g1, g2, EstimationConfig(column_stop="reject")
    )
    assert (accept_rule.r1, accept_rule.r2) == (2, 3)
    # stopping the column search at its first rejection undershoots by
    # construction whenever r2 > r1: the first tested column still carries
    # a factor
    assert reject_rule.r1 == 2 and reject_rule.r2 == 2


def test_diagonal_path_escalation_scans_wider_dimension():
    T = 500
    panel = _normal((T, 2, 4), seed=24)
    for col in (0, 1):
        panel[:, 0, col] = _ar1(T, 0.8, seed=30 + col).ravel() * 2.0
        panel[:, 1, col] = _ar1(T, 0.8, seed=40 + col).ravel() * 2.0
    report = diagonal_path_order(panel, np.eye(2), np.eye(4))
    assert (report.r1, report.r2) == (2, 2)
    assert not report.boundary
    assert report.trace[-1].stage == "escalation"


def test_diagonal_path_boundary_when_nothing_accepts():
    T = 500
    panel = np.empty((T, 2, 2))
    for i in range(2):
        for j in range(2):
            panel[:, i, j] = _ar1(T, 0.8, seed=50 + 2 * i + j).ravel()
    report = diagonal_path_order(panel, np.eye(2), np.eye(2))
    assert report.boundary
    assert (report.r1, report.r2) == (2, 2)


def test_diagonal_path_validates_bases():
    panel = _normal((100, 3, 3), seed=25)
    with pytest.raises(InvalidInput):
        diagonal_path_order(panel, np.eye(4), np.eye(3))

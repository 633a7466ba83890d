"""Moment matrices, projection iteration, noise PCA and the fit pipeline."""

import numpy as np
import pytest

from matfactor.config import EstimationConfig
from matfactor.dgp import SimScenario, common_component, simulate_panel
from matfactor.errors import (
    DegenerateSubspace,
    InvalidInput,
    OrderZero,
    SingularBracket,
)
from matfactor.estimate import (
    FactorFit,
    build_m1,
    build_m2,
    build_m_star,
    build_s1,
    build_s2,
    col_autocov,
    fit,
    iterate_loadings,
    ratio_min,
    ratio_orders,
    recover_factors,
    select_mitigation_subspace,
)
from matfactor.subspace import (
    is_orthonormal,
    orthonormal_distance,
    projection_distance,
    random_orthonormal,
)

STRONG = SimScenario(
    p1=7, p2=7, r1=2, r2=3, k1=1, k2=2, delta1=0.0, delta2=0.0, T=1000, seed=1234
)


def _noiseless(T, p1=6, p2=5, r1=2, r2=2, seed=17):
    scen = SimScenario(p1=p1, p2=p2, r1=r1, r2=r2, k1=0, k2=0,
                       delta1=0.0, delta2=0.0, T=T, seed=seed)
    return simulate_panel(scen, zero_noise=True)


def _random_panel(T=50, p1=4, p2=3, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.standard_normal((T, p1, p2))


# -- col_autocov ---------------------------------------------------------


def test_col_autocov_matches_naive_loop():
    panel = _random_panel()
    T = panel.shape[0]
    for (i, j, k) in ((0, 0, 1), (1, 2, 2), (2, 0, 3)):
        oracle = sum(
            np.outer(panel[t, :, i], panel[t - k, :, j]) for t in range(k, T)
        ) / T
        assert np.allclose(col_autocov(panel, i, j, k), oracle, atol=1e-12)


def test_col_autocov_single_term():
    panel = _random_panel(T=2)
    got = col_autocov(panel, 0, 1, 1)
    assert np.allclose(got, np.outer(panel[1, :, 0], panel[0, :, 1]) / 2)


def test_col_autocov_zero_panel():
    assert np.array_equal(col_autocov(np.zeros((5, 3, 2)), 0, 1, 1), np.zeros((3, 3)))


def test_col_autocov_validates_indices():
    panel = _random_panel()
    with pytest.raises(InvalidInput):
        col_autocov(panel, 0, 3, 1)
    with pytest.raises(InvalidInput):
        col_autocov(panel, 0, 0, 50)


# -- moment matrices -----------------------------------------------------


def test_build_m1_matches_pairwise_oracle():
    panel = _random_panel(T=40)
    p2 = panel.shape[2]
    k0 = 2
    oracle = np.zeros((panel.shape[1],) * 2)
    for k in range(1, k0 + 1):
        for i in range(p2):
            for j in range(p2):
                S = col_autocov(panel, i, j, k)
                oracle += S @ S.T
    assert np.allclose(build_m1(panel, k0), oracle, atol=1e-10)


def test_build_m2_is_m1_of_transpose():
    panel = _random_panel(T=30)
    swapped = np.ascontiguousarray(panel.transpose(0, 2, 1))
    assert np.allclose(build_m2(panel, 2), build_m1(swapped, 2), atol=1e-12)


def test_build_m1_zero_panel_and_single_column():
    assert np.array_equal(build_m1(np.zeros((10, 3, 2)), 2), np.zeros((3, 3)))
    panel = _random_panel(T=30, p1=4, p2=1)
    oracle = np.zeros((4, 4))
    for k in (1, 2):
        S = col_autocov(panel, 0, 0, k)
        oracle += S @ S.T
    assert np.allclose(build_m1(panel, 2), oracle, atol=1e-12)


def test_build_m1_psd_and_symmetric():
    M = build_m1(_random_panel(T=60), 3)
    assert np.allclose(M, M.T)
    assert np.linalg.eigvalsh(M).min() > -1e-8 * np.linalg.eigvalsh(M).max()


def test_build_m1_validates_lag_budget():
    panel = _random_panel(T=5)
    with pytest.raises(InvalidInput):
        build_m1(panel, 0)
    with pytest.raises(InvalidInput):
        build_m1(panel, 5)


def test_noiseless_m1_null_space():
    """Noiseless column autocovariances live in span(L1), so the bottom
    eigenvalues of M1 vanish at any sample size."""
    for T in (500, 2000):
        panel, truth = _noiseless(T)
        M = build_m1(panel - panel.mean(axis=0), 2)
        values = np.linalg.eigvalsh(M)[::-1]
        assert values[2:].max() < 1e-6 * values[0]
        top = np.linalg.eigh(M)[1][:, -2:]
        assert projection_distance(top, truth.L1) < 0.05


def test_build_m_star_identity_projection():
    panel = _random_panel(T=25)
    P = np.eye(panel.shape[2])
    assert np.allclose(build_m_star(panel, P, 2), build_m1(panel, 2), atol=1e-12)


def test_build_m_star_equals_m1_of_projected_series():
    panel = _random_panel(T=25)
    P = random_orthonormal(panel.shape[2], 2, seed=3)
    assert np.allclose(
        build_m_star(panel, P, 2), build_m1(panel @ P, 2), atol=1e-12
    )


# -- ratio selection -----------------------------------------------------


def test_ratio_min_examples():
    assert ratio_min(np.array([8.0, 4.0, 2.0, 1.0]), 3) == 1  # tie -> smallest
    assert ratio_min(np.array([100.0, 1.0, 0.9, 0.8]), 3) == 1
    assert ratio_min(np.array([10.0, 9.0, 0.5, 0.4, 0.3]), 4) == 2


def test_ratio_min_floors_trailing_zeros():
    assert ratio_min(np.array([5.0, 1.0, 0.0, 0.0]), 3) == 2


def test_ratio_min_validation():
    with pytest.raises(InvalidInput):
        ratio_min(np.array([1.0, 2.0]), 1)  # ascending
    with pytest.raises(InvalidInput):
        ratio_min(np.array([2.0, 1.0]), 2)  # R too large


# -- projection iteration ------------------------------------------------


def test_iterate_s0_zero_returns_first_pass():
    panel, truth = _noiseless(300)
    P0 = random_orthonormal(panel.shape[2], 2, seed=1)
    res = iterate_loadings(panel, 2, 2, P0, s0=0)
    assert res.n_iterations == 0
    assert np.array_equal(res.A, res.first_A)
    assert np.array_equal(res.P, res.first_P)


def test_iterate_truth_start_recovers_noiseless_spans():
    panel, truth = _noiseless(2000)
    P_true = np.linalg.svd(truth.R1, full_matrices=False)[0]
    res = iterate_loadings(panel, 2, 2, P_true)
    assert orthonormal_distance(
        res.A, np.linalg.svd(truth.L1, full_matrices=False)[0]
    ) < 0.05
    assert is_orthonormal(res.A) and is_orthonormal(res.P)
    assert res.gamma1.shape == (panel.shape[1],) * 2
    assert is_orthonormal(res.gamma1) and is_orthonormal(res.gamma2)


def test_iterate_invariant_to_init_rotation():
    panel, _ = simulate_panel(STRONG)
    P0 = random_orthonormal(panel.shape[2], 3, seed=2)
    rng = np.random.Generator(np.random.Philox(3))
    O, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    res_a = iterate_loadings(panel, 2, 3, P0)
    res_b = iterate_loadings(panel, 2, 3, P0 @ O)
    assert orthonormal_distance(res_a.A, res_b.A) < 1e-10
    assert orthonormal_distance(res_a.P, res_b.P) < 1e-10


def test_iterate_two_passes_suffice():
    panel, _ = simulate_panel(STRONG)
    P0 = random_orthonormal(panel.shape[2], 3, seed=4)
    res_2 = iterate_loadings(panel, 2, 3, P0, s0=2)
    res_10 = iterate_loadings(panel, 2, 3, P0, s0=10)
    assert orthonormal_distance(res_2.A, res_10.A) < 0.01
    assert orthonormal_distance(res_2.P, res_10.P) < 0.01


def test_iterate_validates_input():
    panel = _random_panel()
    with pytest.raises(InvalidInput):
        iterate_loadings(panel, 5, 1, np.eye(3))
    with pytest.raises(InvalidInput):
        iterate_loadings(panel, 1, 1, np.eye(4))  # wrong row count


# -- projected noise PCA -------------------------------------------------


def test_build_s1_matches_kronecker_oracle():
    """The vec identity vec(B' Y Q) = (Q kron B)' vec(Y) gives an
    independent construction of S1 from explicit Kronecker products."""
    panel = _random_panel(T=3, p1=2, p2=2, seed=9)
    T, p1, p2 = panel.shape
    B1 = random_orthonormal(p1, 1, seed=10)
    Q1 = random_orthonormal(p2, 1, seed=11)
    K = np.kron(Q1, B1)
    oracle = np.zeros((p1, p1))
    for i in range(p2):
        omega = np.zeros((p1, p1 * p2))
        for t in range(T):
            omega += np.outer(panel[t, :, i], panel[t].ravel(order="F"))
        omega /= T
        reduced = omega @ K
        oracle += reduced @ reduced.T
    assert np.allclose(build_s1(panel, B1, Q1), oracle, atol=1e-12)


def test_build_s2_mirrors_on_transpose():
    panel = _random_panel(T=20, p1=4, p2=3)
    B1 = random_orthonormal(4, 2, seed=12)
    Q1 = random_orthonormal(3, 1, seed=13)
    swapped = np.ascontiguousarray(panel.transpose(0, 2, 1))
    assert np.allclose(
        build_s2(panel, B1, Q1), build_s1(swapped, Q1, B1), atol=1e-12
    )


def test_build_s1_zero_panel_and_validation():
    assert np.array_equal(
        build_s1(np.zeros((5, 3, 2)), np.eye(3)[:, :1], np.eye(2)[:, :1]),
        np.zeros((3, 3)),
    )
    panel = _random_panel()
    with pytest.raises(InvalidInput):
        build_s1(panel, np.eye(3)[:, :1], np.eye(3)[:, :1])


def test_s1_ratio_detects_single_spike():
    """With one spiked noise direction the first eigenvalue ratio of S1 is
    the minimum in nearly every replication."""
    hits = 0
    n = 200
    scen = SimScenario(p1=20, p2=20, r1=2, r2=2, k1=1, k2=1,
                       delta1=0.0, delta2=0.2, T=3000, seed=99)
    for rep in range(n):
        panel, truth = simulate_panel(scen, replication=rep)
        Y = panel - panel.mean(axis=0)
        U1 = np.linalg.svd(truth.L1, full_matrices=True)[0]
        U2 = np.linalg.svd(truth.R1, full_matrices=True)[0]
        B1, Q1 = U1[:, scen.r1:], U2[:, scen.r2:]
        values = np.linalg.eigvalsh(build_s1(Y, B1, Q1))[::-1]
        hits += ratio_min(values, scen.p1 // 2) == scen.k1
    assert hits >= 0.9 * n


def test_select_mitigation_aligned_case():
    A1 = random_orthonormal(6, 2, seed=14)
    B2 = np.eye(6)  # complement basis containing the whole space
    B2_star = select_mitigation_subspace(B2, A1, 2)
    svals = np.linalg.svd(B2_star.T @ A1, compute_uv=False)
    assert np.allclose(svals, 1.0, atol=1e-10)
    assert is_orthonormal(B2_star)


def test_select_mitigation_orthogonal_raises():
    A1 = np.eye(6)[:, :2]
    B2 = np.eye(6)[:, 2:]
    with pytest.raises(DegenerateSubspace):
        select_mitigation_subspace(B2, A1, 2)


def test_select_mitigation_maximizes_smallest_singular_value():
    rng = np.random.Generator(np.random.Philox(15))
    A1 = random_orthonormal(10, 3, seed=16)
    B2 = random_orthonormal(10, 8, seed=17)
    best = np.linalg.svd(
        select_mitigation_subspace(B2, A1, 3).T @ A1, compute_uv=False
    )[-1]
    for _ in range(100):
        C, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        alt = np.linalg.svd((B2 @ C).T @ A1, compute_uv=False)[-1]
        assert best >= alt - 1e-10


# -- factor recovery -----------------------------------------------------


def test_recover_factors_noiseless_exact():
    panel, truth = _noiseless(400)
    Y = panel - panel.mean(axis=0)
    common = common_component(truth)
    A1 = np.linalg.svd(truth.L1, full_matrices=False)[0]
    P1 = np.linalg.svd(truth.R1, full_matrices=False)[0]
    X = recover_factors(Y, A1, P1, A1, P1)
    recon = panel.mean(axis=0) + np.einsum("ia,tab,jb->tij", A1, X, P1)
    assert np.max(np.abs(recon - common)) < 1e-8


def test_recover_factors_zero_panel():
    A1 = random_orthonormal(4, 2, seed=18)
    P1 = random_orthonormal(3, 1, seed=19)
    X = recover_factors(np.zeros((6, 4, 3)), A1, P1, A1, P1)
    assert np.array_equal(X, np.zeros((6, 2, 1)))


def test_recover_factors_singular_bracket():
    A1 = np.eye(4)[:, :2]
    B2 = np.eye(4)[:, 2:]  # orthogonal to A1
    P1 = np.eye(3)[:, :1]
    with pytest.raises(SingularBracket):
        recover_factors(np.zeros((6, 4, 3)), A1, P1, B2, P1)


# -- fit pipeline --------------------------------------------------------


@pytest.fixture(scope="module")
def strong_fit():
    panel, truth = simulate_panel(STRONG)
    return fit(panel), panel, truth


def test_fit_selects_true_orders(strong_fit):
    result, _, _ = strong_fit
    assert (result.r1, result.r2) == (2, 3)
    assert result.k1 == STRONG.k1


def test_fit_basis_invariants(strong_fit):
    result, _, _ = strong_fit
    assert is_orthonormal(result.A1) and is_orthonormal(result.P1)
    assert is_orthonormal(np.hstack([result.A1, result.B1]))
    assert is_orthonormal(np.hstack([result.P1, result.Q1]))
    assert is_orthonormal(result.B2_star) and is_orthonormal(result.Q2_star)
    assert result.X.shape == (STRONG.T, result.r1, result.r2)


def test_fit_recovers_loading_spaces(strong_fit):
    result, _, truth = strong_fit
    assert projection_distance(result.A1, truth.L1) < 0.1
    assert projection_distance(result.P1, truth.R1) < 0.1


def test_fit_common_component_shape(strong_fit):
    result, panel, _ = strong_fit
    recon = result.common_component()
    assert recon.shape == panel.shape
    # the fitted common part explains most of the strong-factor panel
    resid = np.linalg.norm(recon - panel) / np.linalg.norm(panel)
    assert resid < 0.5


def test_fit_round_trip_json(strong_fit):
    result, _, _ = strong_fit
    clone = FactorFit.from_dict(result.to_dict())
    assert np.array_equal(clone.A1, result.A1)
    assert np.array_equal(clone.X, result.X)
    assert clone.config == result.config
    assert clone.r1 == result.r1 and clone.k2 == result.k2
    assert clone.order_report_final.r1 == result.order_report_final.r1


def test_fit_fixed_orders_skips_search():
    panel, _ = simulate_panel(STRONG)
    result = fit(panel, EstimationConfig(r1=2, r2=3))
    assert (result.r1, result.r2) == (2, 3)
    assert result.order_report_initial is None
    assert result.order_report_final is None


def test_fit_spike_overrides():
    panel, _ = simulate_panel(STRONG)
    result = fit(panel, EstimationConfig(r1=2, r2=3, k1=2, k2=3))
    assert (result.k1, result.k2) == (2, 3)


def test_fit_rejects_bad_p_init():
    panel, _ = simulate_panel(STRONG)
    with pytest.raises(InvalidInput):
        fit(panel, P_init=np.ones((STRONG.p2, 2)))
    with pytest.raises(InvalidInput):
        fit(panel, P_init=np.eye(4)[:, :2])


def test_fit_needs_enough_observations():
    with pytest.raises(InvalidInput):
        fit(np.zeros((12, 3, 3)), EstimationConfig())  # T <= k0 + m


def test_fit_pure_noise_falls_back_with_warning():
    scen = SimScenario(p1=4, p2=4, r1=1, r2=1, k1=0, k2=0,
                       delta1=0.0, delta2=0.0, T=600, seed=30)
    noise, _ = simulate_panel(scen, zero_common=True)
    with pytest.warns(UserWarning, match="order"):
        result = fit(noise)
    assert result.r1 >= 1 and result.r2 >= 1
    assert result.order_report_initial.order_zero
    with pytest.raises(OrderZero):
        fit(noise, EstimationConfig(order_zero_fallback=False))


def test_fit_rank_one_panel_recovers_factor():
    # unspiked noise (k = 0) is faint, so the single factor dominates and
    # the recovered series matches it up to sign and scale
    scen = SimScenario(p1=5, p2=4, r1=1, r2=1, k1=0, k2=0,
                       delta1=0.0, delta2=0.0, T=800, seed=31)
    panel, truth = simulate_panel(scen)
    result = fit(panel, EstimationConfig(r1=1, r2=1))
    corr = np.corrcoef(result.X.ravel(), truth.F.ravel())[0, 1]
    assert abs(corr) > 0.99


def test_fit_accuracy_improves_with_sample_size():
    config = EstimationConfig(r1=2, r2=3)
    means = []
    for T in (300, 1000, 3000):
        scen = SimScenario(**{**STRONG.to_dict(), "T": T})
        dists = []
        for rep in range(30):
            panel, truth = simulate_panel(scen, replication=rep)
            dists.append(projection_distance(fit(panel, config).A1, truth.L1))
        means.append(np.mean(dists))
    assert means[0] >= means[1] >= means[2]


def test_ratio_orders_on_clean_panel():
    scen = SimScenario(p1=8, p2=8, r1=2, r2=3, k1=0, k2=0,
                       delta1=0.0, delta2=0.0, T=1500, seed=32)
    panel, _ = simulate_panel(scen)
    result = fit(panel, EstimationConfig(r1=2, r2=3))
    assert ratio_orders(result) == (2, 3)

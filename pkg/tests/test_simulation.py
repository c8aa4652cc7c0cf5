import math
import warnings

import numpy as np
import pytest

from confcov.errors import IndivisibleDimension, RankDeficientLoadings
from confcov.linalg import sym_eig
from confcov.simulation import (
    KINDS,
    GroundTruth,
    ScenarioSpec,
    build_scenario_sigma,
    expected_scale_profile,
    make_ground_truth,
    population_diagnostics,
    sample_dataset,
    sample_loadings,
    toeplitz_precision,
)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("p", [40, 100])
def test_sigma_unit_diagonal_and_pd(kind, p):
    sigma, omega = build_scenario_sigma(kind, p, seed=3)
    np.testing.assert_allclose(np.diag(sigma), 1.0, atol=1e-10)
    assert np.array_equal(sigma, sigma.T)
    assert np.linalg.eigvalsh(sigma)[0] > 0
    np.testing.assert_allclose(sigma @ omega, np.eye(p), atol=1e-6)


def test_block_structure():
    sigma, _ = build_scenario_sigma("block", 20)
    assert sigma[0, 1] == 0.95 and sigma[0, 2] == 0.0


def test_block2_structure():
    sigma, _ = build_scenario_sigma("block2", 40)
    assert sigma[0, 1] == 0.95 and sigma[0, 2] == 0.0  # small blocks of 2
    assert sigma[20, 39] == 0.5 and sigma[19, 20] == 0.0  # large block of 20
    with pytest.raises(IndivisibleDimension):
        build_scenario_sigma("block2", 30)
    with pytest.raises(IndivisibleDimension):
        build_scenario_sigma("block", 25)


def test_toeplitz_precision_before_rescaling():
    omega = toeplitz_precision(6)
    assert np.all(np.diag(omega) == 1.0)
    assert omega[0, 1] == omega[0, 5] == -0.4999
    assert omega[0, 2] == 0.0
    _, scaled = build_scenario_sigma("toeplitz", 6)
    ratio = scaled / np.where(omega != 0, omega, np.nan)
    assert np.nanmax(ratio) - np.nanmin(ratio) < 1e-12  # circulant: rescaling is a single scalar


def test_erdos_renyi_edge_count():
    p = 50
    counts = []
    for seed in range(50):
        _, omega = build_scenario_sigma("erdos_renyi", p, seed)
        counts.append(np.count_nonzero(np.triu(omega, 1)))
    pairs, prob = p * (p - 1) // 2, 10 / p
    mean_sd = math.sqrt(pairs * prob * (1 - prob) / 50)
    assert abs(np.mean(counts) - pairs * prob) <= 3 * mean_sd


def test_erdos_renyi_diagonal_dominance():
    from confcov.simulation import erdos_renyi_precision

    omega = erdos_renyi_precision(80, np.random.default_rng(2))
    off = np.abs(omega).sum(axis=1) - 1.0
    assert off.max() <= 0.99 - 1e-6 + 1e-15


def test_loadings_zero_strength():
    assert np.all(sample_loadings(30, 4, 0.0, seed=1) == 0.0)


def test_loadings_column_decay():
    ratios = []
    for seed in range(200):
        g = sample_loadings(100, 2, 1.0, seed=seed)
        ratios.append(np.sum(g[:, 1] ** 2) / np.sum(g[:, 0] ** 2))
    ratios = np.array(ratios)
    # ratio of chi2_100 variables times e^-2: mean e^-2 * 100/98
    expected = math.exp(-2) * 100 / 98
    assert abs(ratios.mean() - expected) <= 3 * ratios.std(ddof=1) / math.sqrt(200)


def test_loadings_variance():
    v = np.mean([np.var(sample_loadings(400, 1, 5.0, seed=s)[:, 0], ddof=1) for s in range(100)])
    assert abs(v / (25 * math.exp(-2)) - 1) < 0.15


def test_loadings_t_rows_are_heavier():
    g = np.concatenate([sample_loadings(2000, 1, 1.0, df2=3, seed=s)[:, 0] for s in range(5)]) * math.e
    kurt = np.mean(g**4) / np.mean(g**2) ** 2
    assert kurt > 4


def test_sample_covariance_no_confounding():
    sigma, omega = build_scenario_sigma("block", 20)
    gt = GroundTruth(sigma[:5, :5], np.linalg.inv(sigma[:5, :5]), np.zeros((5, 0)))
    x = sample_dataset(gt, 20000, seed=1)
    assert np.max(np.abs(np.cov(x.T) - gt.sigma)) < 0.05


def test_sample_covariance_with_confounding():
    sigma, omega = build_scenario_sigma("toeplitz2", 20)
    gamma = sample_loadings(20, 3, 1.5, seed=4)
    gt = GroundTruth(sigma, omega, gamma)
    x = sample_dataset(gt, 20000, seed=2)
    assert np.max(np.abs(np.cov(x.T) - gt.theta)) < 0.05


def test_max_linear_dominates_confounder():
    sigma = np.eye(4)
    gt = GroundTruth(sigma, sigma, np.full((4, 1), 50.0))
    x, w, conf = sample_dataset(gt, 200, link="max_linear", seed=3, return_latent=True)
    assert np.all(x >= conf) and np.all(x >= w)
    np.testing.assert_array_equal(x, np.maximum(w, conf))


def test_dataset_seeded():
    gt = make_ground_truth(ScenarioSpec("erdos_renyi", 30, 10, 1.0, seed=5))
    assert np.array_equal(sample_dataset(gt, 11, seed=7), sample_dataset(gt, 11, seed=7))
    assert not np.array_equal(sample_dataset(gt, 11, seed=7), sample_dataset(gt, 11, seed=8))


def test_ground_truth_theta():
    gt = make_ground_truth(ScenarioSpec("block", 40, 10, 2.0, seed=1))
    np.testing.assert_allclose(gt.theta - gt.sigma, gt.gamma @ gt.gamma.T, atol=1e-10)
    assert gt.q == 20


def test_scenario_validation():
    with pytest.raises(IndivisibleDimension):
        ScenarioSpec("block", 45, 10, 1.0)
    with pytest.raises(ValueError):
        ScenarioSpec("toeplitz", 15, 10, 1.0)  # p < q + 1
    with pytest.raises(ValueError):
        ScenarioSpec("toeplitz", 40, 10, 1.0, df1=4)
    assert ScenarioSpec("toeplitz2", 10, 10, 1.0).q == 3


class TestDiagnostics:
    def test_no_confounding(self):
        sigma, omega = build_scenario_sigma("toeplitz", 10)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientLoadings)
            d = population_diagnostics(GroundTruth(sigma, omega, np.zeros((10, 2))))
        assert d.rho1 == 0 and d.rho2 == 0 and np.all(d.eta == 0)

    def test_zero_loadings_warn(self):
        with pytest.warns(RankDeficientLoadings):
            population_diagnostics(GroundTruth(np.eye(3), np.eye(3), np.zeros((3, 1))))

    def test_identity_with_axis_factor(self):
        gamma = np.zeros((5, 1))
        gamma[0, 0] = 1.0
        d = population_diagnostics(GroundTruth(np.eye(5), np.eye(5), gamma))
        assert d.gamma_l == d.gamma_u == 1.0
        assert d.rho1 == pytest.approx(1.0) and d.rho2 == pytest.approx(1.0)
        assert np.all(d.eta == 0) and d.s == 0

    @pytest.mark.parametrize("kind", KINDS)
    def test_bounds(self, kind):
        gt = make_ground_truth(ScenarioSpec(kind, 60, 10, 1.0, seed=9))
        d = population_diagnostics(gt)
        assert d.rho1 <= d.sigma_u + 1e-12
        assert 0 <= d.rho2 <= 1 + 1e-12
        assert np.all(d.eta >= 0)
        assert 0 < d.sigma_l <= d.sigma_u

    def test_toeplitz_degree(self):
        gt = make_ground_truth(ScenarioSpec("toeplitz", 40, 10, 1.0))
        assert population_diagnostics(gt).s == 2

    def test_random_subspace_rho2(self):
        p, q = 500, 5
        bound = 10 * (q / p) * (1 + math.log(p) / q)
        hits = 0
        for seed in range(100):
            gamma = np.random.default_rng(seed).standard_normal((p, q))
            d = population_diagnostics(GroundTruth(np.eye(p), np.eye(p), gamma))
            hits += d.rho2**2 <= bound
        assert hits >= 95


class TestScaleProfile:
    def test_isotropic(self):
        gt = GroundTruth(np.eye(50), np.eye(50), np.zeros((50, 0)))
        np.testing.assert_allclose(expected_scale_profile(gt, 10), 10 / 50)

    def test_diagonal(self):
        diag = np.linspace(0.5, 2.0, 40)
        gt = GroundTruth(np.diag(diag), np.diag(1 / diag), np.zeros((40, 0)))
        np.testing.assert_allclose(expected_scale_profile(gt, 8), 8 * np.sort(diag)[::-1] / diag.sum())

    def test_length_excludes_factors(self):
        gt = make_ground_truth(ScenarioSpec("toeplitz2", 30, 10, 5.0))
        d2, _ = sym_eig(gt.theta)
        prof = expected_scale_profile(gt, 10)
        assert prof.shape == (27,)
        assert prof.sum() == pytest.approx(7.0)

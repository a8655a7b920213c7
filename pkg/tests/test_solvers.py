import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import optimize

from faan_cov.core.bounds import diagonal_matching_residual
from faan_cov.core.covmodel import SampleCov, SolverConfig, frobenius_loss, gaussian_loss
from faan_cov.errors import InvalidInputError
from faan_cov.solvers import (
    FitRequest,
    Method,
    faan_fit,
    fit,
    fnm_fit,
    fnmo_fit,
    fnmo_variant_fit,
    isotropic_ml,
)
from faan_cov.solvers.base import relative_decrease
from faan_cov.solvers.faan import faan_eigen_step, faan_sigma_sweep, gamma_matrix, positive_root

FNMO_FROM_IDENTITY = (0.8169, 1.9891, 3.1945, -1.4386, 5.3600, -8.0505)
FNMO_FROM_DIAG = (0.8170, 1.9893, 3.1924, -1.4499, 5.3588, -7.9520)
FNM_SIGMA = (0.7771, 1.5755, 2.8302, 0.0, 5.0082, 0.0)
FNM_SST = (
    (0.3202, -0.9520, 0.1943, -1.3001, 0.7656, -1.1482),
    (-0.9520, 2.9223, -0.3419, 4.3355, -2.2416, 2.8172),
    (0.1943, -0.3419, 0.7264, 0.4222, 0.5551, -2.2374),
    (-1.3001, 4.3355, 0.4222, 7.6905, -2.9293, 1.5966),
    (0.7656, -2.2416, 0.5551, -2.9293, 1.8444, -2.9748),
    (-1.1482, 2.8172, -2.2374, 1.5966, -2.9748, 8.0179),
)
FNMO_SST_FROM_IDENTITY = (
    (0.2804, -0.8385, 0.0785, -1.4787, 0.6368, -1.0128),
    (-0.8385, 2.5086, -0.2498, 4.3938, -1.9102, 3.1198),
    (0.0785, -0.2498, 0.3621, 0.2351, 0.3035, -2.3288),
    (-1.4787, 4.3938, 0.2351, 9.0372, -3.1198, 1.4390),
    (0.6368, -1.9102, 0.3035, -3.1198, 1.4926, -3.0535),
    (-1.0128, 3.1198, -2.3288, 1.4390, -3.0535, 15.9575),
)
FNMO_SST_FROM_DIAG = (
    (0.2803, -0.8384, 0.0793, -1.4782, 0.6370, -1.0141),
    (-0.8384, 2.5084, -0.2514, 4.3942, -1.9107, 3.1185),
    (0.0793, -0.2514, 0.3643, 0.2365, 0.3056, -2.3282),
    (-1.4782, 4.3942, 0.2365, 9.0485, -3.1193, 1.4393),
    (0.6370, -1.9107, 0.3056, -3.1193, 1.4938, -3.0537),
    (-1.0141, 3.1185, -2.3282, 1.4393, -3.0537, 15.8590),
)


def assert_monotone(trace, rtol=1e-10):
    t = np.asarray(trace)
    slack = rtol * np.maximum(np.abs(t[:-1]), 1.0)
    assert np.all(t[1:] <= t[:-1] + slack)


class TestFitRequest:
    def test_rank_range(self, faan_matrix):
        with pytest.raises(InvalidInputError):
            FitRequest(faan_matrix, 0)
        with pytest.raises(InvalidInputError):
            FitRequest(faan_matrix, 5)

    def test_faan_needs_positive_diagonal(self):
        scm = SampleCov(np.diag([1.0, 0.0, 2.0]))
        with pytest.raises(InvalidInputError):
            FitRequest(scm, 1)
        FitRequest(scm, 1, method="fnm")

    def test_method_is_coerced(self, faan_matrix):
        assert FitRequest(faan_matrix, 2, method="fnm_o").method is Method.FNM_O
        with pytest.raises(InvalidInputError):
            FitRequest(faan_matrix, 2, method="imlse")


class TestStoppingRule:
    def test_relative_decrease(self):
        assert relative_decrease(11.0, 10.0) == pytest.approx(0.1)
        assert relative_decrease(-9.0, -10.0) == pytest.approx(0.1)
        assert relative_decrease(0.5, 0.25) == pytest.approx(1.0)
        assert relative_decrease(0.5, -0.5) == pytest.approx(1.0)


class TestFaanFit:
    def test_identity_is_stationary(self):
        scm = SampleCov(np.eye(4))
        result = faan_fit(FitRequest(scm, 2, SolverConfig(sigma_init="identity")))
        assert result.iterations == 1
        assert result.converged
        assert_allclose(result.sigma_sq, np.ones(4))
        assert_allclose(result.ssT, np.zeros((4, 4)))
        assert result.loss == pytest.approx(4.0)
        assert np.all(result.lam == 0.0)

    def test_diagonal_input(self):
        d = np.array([0.5, 2.0, 3.0, 7.0])
        result = faan_fit(FitRequest(SampleCov(np.diag(d)), 1))
        assert_allclose(result.sigma_sq, d, rtol=1e-10)
        assert_allclose(result.ssT, np.zeros((4, 4)), atol=1e-10)

    def test_published_example_converges_monotonically(self, faan_matrix):
        cfg = SolverConfig(epsilon=1e-6, max_iter=100_000, sigma_init="identity")
        result = faan_fit(FitRequest(faan_matrix, 3, cfg))
        assert result.converged
        assert_monotone(result.loss_trace)
        assert result.loss_trace[-1] < result.loss_trace[1]
        assert np.all(result.sigma_sq > 0)

    def test_final_loss_is_a_local_minimum(self, faan_matrix):
        cfg = SolverConfig(epsilon=1e-10, max_iter=20_000, sigma_init="identity")
        result = faan_fit(FitRequest(faan_matrix, 3, cfg))
        n, r = 5, 3

        def loss(theta):
            s = theta[: n * r].reshape(n, r)
            sigma_sq = np.exp(theta[n * r :])
            return gaussian_loss(faan_matrix, s @ s.T, sigma_sq)

        start = np.concatenate([result.loadings.ravel(), np.log(result.sigma_sq)])
        start = start + 0.02 * np.random.default_rng(0).standard_normal(start.size)
        oracle = optimize.minimize(loss, start, method="BFGS", options={"gtol": 1e-10})
        assert oracle.fun >= result.loss - 1e-5 * abs(result.loss)
        assert oracle.fun == pytest.approx(result.loss, rel=1e-4)

    def test_trace_bookkeeping(self, faan_matrix):
        result = faan_fit(FitRequest(faan_matrix, 2))
        assert len(result.loss_trace) == result.iterations + 1
        start = gaussian_loss(faan_matrix, np.zeros((5, 5)), faan_matrix.diagonal)
        assert result.loss_trace[0] == pytest.approx(start)
        assert result.method == "faan"
        assert result.rank == 2

    def test_fit_invariants(self, random_spd):
        result = faan_fit(FitRequest(random_spd(8, seed=3), 3))
        u, lam = result.u, result.lam
        assert_allclose(u.T @ u, np.eye(3), atol=1e-10)
        assert np.all(lam >= 0) and np.all(np.diff(lam) <= 0)
        root = np.sqrt(result.sigma_sq)
        rebuilt = (root[:, None] * u * lam) @ (root[:, None] * u).T
        assert_allclose(result.ssT, rebuilt, atol=1e-12)
        assert_allclose(result.loadings @ result.loadings.T, result.ssT, atol=1e-10)
        eig = np.linalg.eigvalsh(result.ssT)
        assert np.sum(eig > 1e-10 * np.max(np.abs(eig))) <= 3
        assert result.feasible

    @pytest.mark.parametrize("seed", range(100))
    def test_monotone_from_random_starts(self, random_spd, seed):
        scm = random_spd(10, seed=seed, n_obs=20)
        cfg = SolverConfig(sigma_init="random", seed=seed, debug_checks=True)
        result = faan_fit(FitRequest(scm, 4, cfg))
        assert_monotone(result.loss_trace)
        assert np.all(result.sigma_sq > 0)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(3))
    def test_monotone_at_scale(self, random_spd, seed):
        result = faan_fit(FitRequest(random_spd(200, seed=seed), 20))
        assert_monotone(result.loss_trace)

    def test_exact_recovery(self, exact_model):
        model = exact_model(10, 2, seed=4)
        cfg = SolverConfig(epsilon=1e-12, diag_tol=1e-8, max_iter=50_000)
        result = faan_fit(FitRequest(model.scm, 2, cfg))
        best = gaussian_loss(model.scm, model.ssT, model.sigma_sq)
        assert result.loss == pytest.approx(best, abs=1e-6)
        assert diagonal_matching_residual(model.scm, result) < 1e-6

    def test_diag_tol_guards_convergence(self, faan_matrix):
        cfg = SolverConfig(epsilon=1e-6, diag_tol=1e-7, max_iter=100_000)
        result = faan_fit(FitRequest(faan_matrix, 2, cfg))
        assert result.converged
        assert diagonal_matching_residual(faan_matrix, result) <= 1e-7

    def test_iteration_cap_is_reported(self, faan_matrix, caplog):
        cfg = SolverConfig(epsilon=1e-14, max_iter=2)
        with caplog.at_level(logging.WARNING, logger="faan_cov.solvers.base"):
            result = faan_fit(FitRequest(faan_matrix, 3, cfg))
        assert not result.converged
        assert result.iterations == 2
        assert "max_iter" in caplog.text

    def test_wrong_method(self, faan_matrix):
        with pytest.raises(InvalidInputError):
            faan_fit(FitRequest(faan_matrix, 2, method="fnm"))

    def test_whitened_loss_matches_gaussian_loss(self, random_spd):
        scm = random_spd(7, seed=12)
        result = faan_fit(FitRequest(scm, 2))
        direct = gaussian_loss(scm, result.ssT, result.sigma_sq)
        assert result.loss == pytest.approx(direct, rel=1e-10)

    def test_singular_input_stops_on_a_finite_state(self):
        c = np.array([1.0, 2.0, -1.5, 0.5])
        result = faan_fit(FitRequest(SampleCov(np.outer(c, c)), 1))
        assert np.all(np.isfinite(result.loss_trace))
        assert np.all(result.sigma_sq > 0)
        assert result.loss_trace[-1] < result.loss_trace[0]


class TestFaanSteps:
    def test_lambda_clamped_to_zero(self):
        scm = SampleCov(np.eye(4))
        _, lam = faan_eigen_step(scm, np.full(4, np.sqrt(2.0)), 2)
        assert np.all(lam == 0.0)

    def test_eigen_step_is_optimal_for_fixed_sigma(self, random_spd):
        scm = random_spd(6, seed=8)
        sigma = np.sqrt(0.5 * scm.diagonal)
        u, lam = faan_eigen_step(scm, sigma, 2)

        def loss(uu, ll):
            su = sigma[:, None] * uu
            return gaussian_loss(scm, (su * ll) @ su.T, sigma**2)

        best = loss(u, lam)
        rng = np.random.default_rng(9)
        for _ in range(50):
            q, _ = np.linalg.qr(rng.standard_normal((6, 2)))
            assert best <= loss(q, rng.uniform(0.0, 5.0, 2)) + 1e-12

    def test_sigma_update_solves_the_quadratic(self):
        for b, c in [(1.0, 2.0), (-3.0, 0.5), (0.0, 4.0), (-1e6, 1e-3)]:
            x = positive_root(b, c)
            assert x > 0
            assert x * x - b * x - c == pytest.approx(0.0, abs=1e-9 * max(x * x, c))

    def test_sigma_sweep_never_increases_loss(self, random_spd):
        scm = random_spd(6, seed=10)
        sigma = np.sqrt(scm.diagonal)
        u, lam = faan_eigen_step(scm, sigma, 2)

        def loss(s):
            su = s[:, None] * u
            return gaussian_loss(scm, (su * lam) @ su.T, s**2)

        swept = faan_sigma_sweep(scm, gamma_matrix(u, lam), sigma, sweeps=1, debug_checks=True)
        assert loss(swept) <= loss(sigma) + 1e-12


class TestFnmoFit:
    def test_published_fit_from_identity(self, fnm_matrix, caplog):
        cfg = SolverConfig(sigma_init="identity")
        with caplog.at_level(logging.WARNING, logger="faan_cov.solvers.fnm"):
            result = fnmo_fit(FitRequest(fnm_matrix, 2, cfg, "fnm_o"))
        assert_allclose(result.sigma_sq, FNMO_FROM_IDENTITY, atol=1e-3)
        assert_allclose(result.ssT, FNMO_SST_FROM_IDENTITY, atol=1e-3)
        assert not result.feasible
        assert "infeasible" in caplog.text

    def test_published_fit_from_diagonal(self, fnm_matrix):
        result = fnmo_fit(FitRequest(fnm_matrix, 2, SolverConfig(), "fnm_o"))
        assert_allclose(result.sigma_sq, FNMO_FROM_DIAG, atol=1e-3)
        assert_allclose(result.ssT, FNMO_SST_FROM_DIAG, atol=1e-3)
        assert not result.feasible

    def test_exact_decomposition_is_a_fixed_point(self, exact_model):
        model = exact_model(6, 2, seed=1)
        cfg = SolverConfig(sigma_init="explicit", sigma0=tuple(model.sigma_sq))
        result = fnmo_fit(FitRequest(model.scm, 2, cfg, "fnm_o"))
        assert result.iterations == 1
        assert result.converged
        assert result.loss == pytest.approx(0.0, abs=1e-10)
        assert_allclose(result.sigma_sq, model.sigma_sq, atol=1e-10)

    def test_variant_follows_fnmo_from_diagonal(self, fnm_matrix):
        cfg = SolverConfig(epsilon=1e-300, max_iter=5)
        direct = fnmo_fit(FitRequest(fnm_matrix, 2, cfg, "fnm_o"))
        variant = fnmo_variant_fit(FitRequest(fnm_matrix, 2, cfg, "fnm_o"))
        assert variant.iterations == direct.iterations
        assert_allclose(variant.loss_trace, direct.loss_trace, rtol=1e-9)
        assert_allclose(variant.ssT, direct.ssT, atol=1e-9)
        assert_allclose(variant.sigma_sq, direct.sigma_sq, atol=1e-9)


class TestFnmFit:
    strict = SolverConfig(epsilon=1e-15, max_iter=200_000, sigma_init="identity")

    def test_published_fit(self, fnm_matrix):
        result = fnm_fit(FitRequest(fnm_matrix, 2, self.strict, "fnm"))
        assert_allclose(result.sigma_sq, FNM_SIGMA, atol=1e-3)
        assert_allclose(result.ssT, FNM_SST, atol=1e-3)
        assert np.all(result.sigma_sq >= 0)

    def test_both_starts_agree(self, fnm_matrix):
        from_identity = fnm_fit(FitRequest(fnm_matrix, 2, self.strict, "fnm"))
        from_diag_cfg = SolverConfig(epsilon=1e-15, max_iter=200_000)
        from_diag = fnm_fit(FitRequest(fnm_matrix, 2, from_diag_cfg, "fnm"))
        assert_allclose(from_diag.sigma_sq, from_identity.sigma_sq, atol=1e-6)
        assert_allclose(from_diag.ssT, from_identity.ssT, atol=1e-6)

    def test_identity_rank_one(self):
        scm = SampleCov(np.eye(3))
        result = fnm_fit(FitRequest(scm, 1, SolverConfig(epsilon=1e-10), "fnm"))
        assert np.all((result.sigma_sq >= 0) & (result.sigma_sq <= 1))
        assert_monotone(result.loss_trace)
        recomputed = np.linalg.norm(scm.entries - result.ssT - np.diag(result.sigma_sq))
        assert result.loss == pytest.approx(recomputed, abs=1e-12)

    @pytest.mark.parametrize("method", ["fnm", "fnm_o"])
    def test_reported_loss_matches_direct(self, method, fnm_matrix, faan_matrix, random_spd):
        for scm, r in [(fnm_matrix, 2), (faan_matrix, 2), (random_spd(7, seed=0), 3)]:
            result = fit(FitRequest(scm, r, SolverConfig(epsilon=1e-8), method))
            direct = frobenius_loss(scm, result.ssT, result.sigma_sq)
            assert result.loss == pytest.approx(direct, rel=1e-12, abs=1e-14)

    @pytest.mark.parametrize("method", ["fnm", "fnm_o"])
    @pytest.mark.parametrize("fixture", ["fnm_matrix", "faan_matrix"])
    def test_loss_nonincreasing_on_bundled_matrices(self, method, fixture, request):
        scm = request.getfixturevalue(fixture)
        result = fit(FitRequest(scm, 2, SolverConfig(), method))
        assert len(result.loss_trace) >= 2
        assert_monotone(result.loss_trace)

    @pytest.mark.parametrize("method", ["fnm", "fnm_o"])
    def test_loss_nonincreasing_with_dominant_factors(self, method, exact_model):
        model = exact_model(10, 2, seed=2)
        cfg = SolverConfig(epsilon=1e-8, sigma_init="identity")
        result = fit(FitRequest(model.scm, 2, cfg, method))
        assert not result.negative_eigs_dropped
        assert_monotone(result.loss_trace)
        assert result.loss < 1e-3 * result.loss_trace[0]


class TestIsotropicMl:
    def test_identity(self):
        result = isotropic_ml(SampleCov(np.eye(4)), 1)
        assert_allclose(result.sigma_sq, np.ones(4))
        assert_allclose(result.lam, [0.0])
        assert_allclose(result.ssT, np.zeros((4, 4)), atol=1e-15)

    def test_single_spike(self):
        result = isotropic_ml(SampleCov(np.diag([4.0, 1.0, 1.0])), 1)
        assert_allclose(result.sigma_sq, np.ones(3))
        expected = np.zeros((3, 3))
        expected[0, 0] = 3.0
        assert_allclose(result.ssT, expected, atol=1e-12)

    @pytest.mark.parametrize("seed", range(50))
    def test_nested_in_faan(self, random_spd, seed):
        scm = random_spd(6, seed=seed)
        iso = isotropic_ml(scm, 2)
        faan = faan_fit(FitRequest(scm, 2, SolverConfig(sigma_init="isotropic")))
        assert iso.loss >= faan.loss - 1e-9

    def test_rank_too_large(self):
        with pytest.raises(InvalidInputError):
            isotropic_ml(SampleCov(np.eye(3)), 3)

    def test_dispatch(self, faan_matrix):
        result = fit(FitRequest(faan_matrix, 2, method="isotropic"))
        assert result.method == "isotropic"
        assert result.converged and result.iterations == 0

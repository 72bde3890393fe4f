import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtri

from catcox.data import SurvivalDataset
from catcox.synthesis import (
    CatalyticPrior,
    CovariateGenSchema,
    SyntheticDataset,
    build_catalytic_prior,
    compute_kappa,
    default_synthetic_size,
    fit_exponential,
    generate_synthetic_covariates,
    generate_synthetic_times,
    log_adaptive_prior,
    log_catalytic_prior,
    log_catalytic_prior_derivatives,
    mean_synthetic_loglik,
    norm_recoverability_check,
    synthetic_mle,
    zero_iqr_columns,
)

from helpers import fd_gradient, fd_hessian_from_grad, random_dataset, rel_err


def make_prior(rng, M=40, p=2, tau=2.0, h0=1.0, adaptive=None):
    X = rng.normal(size=(M, p))
    t = rng.exponential(scale=1.0, size=M) + 0.01
    return CatalyticPrior(SyntheticDataset(X, t), tau, h0, adaptive_hyper=adaptive)


class TestFitExponential:
    def test_closed_form_and_grid_oracle(self):
        d = SurvivalDataset(np.zeros((3, 1)), [1.0, 2.0, 3.0], [1, 0, 1])
        psi = fit_exponential(d)
        assert psi == pytest.approx(2.0 / 6.0, abs=1e-12)
        # oracle: 1-D grid maximization of the censored exponential likelihood
        grid = np.linspace(0.01, 2.0, 20000)
        loglik = d.n_events * np.log(grid) - grid * d.times.sum()
        assert grid[np.argmax(loglik)] == pytest.approx(psi, abs=1e-4)

    def test_all_events_unit_times(self):
        d = SurvivalDataset(np.zeros((2, 1)), [1.0, 1.0], [1, 1])
        assert fit_exponential(d) == pytest.approx(1.0)

    def test_zero_events_errors(self):
        d = SurvivalDataset(np.zeros((2, 1)), [1.0, 1.0], [0, 0])
        with pytest.raises(ValueError):
            fit_exponential(d)


class TestCovariateGeneration:
    def _binary_continuous_data(self, rng, n=60):
        X = np.column_stack([
            (rng.random(n) < 0.2).astype(float),
            rng.normal(size=n),
        ])
        return SurvivalDataset(X, rng.exponential(size=n) + 0.1, np.ones(n, bool),
                               column_schema=("binary", "continuous"))

    def test_binary_values_stay_binary(self):
        rng = np.random.default_rng(0)
        d = self._binary_continuous_data(rng)
        out = generate_synthetic_covariates(d, 500, rng=rng)
        assert set(np.unique(out[:, 0])) <= {0.0, 1.0}

    def test_iqr_to_sigma_conversion(self):
        # IQR of 1.348980 must produce unit blend scale
        assert 1.348980 / (2 * ndtri(0.75)) == pytest.approx(1.0, abs=1e-6)
        rng = np.random.default_rng(1)
        n = 2000
        base = np.linspace(-3, 3, n)
        X = np.column_stack([base * (1.348980 / (np.percentile(base, 75) - np.percentile(base, 25)))])
        d = SurvivalDataset(X, np.ones(n), np.ones(n, bool), column_schema=("continuous",))
        out = generate_synthetic_covariates(d, 200000, rng=rng)
        # mixture of resample (uniformish) and N(median=0, 1); blended half/half
        blend_draws = out[:, 0]
        assert abs(np.median(blend_draws)) < 0.02

    def test_blend_zero_is_pure_resample(self):
        rng = np.random.default_rng(2)
        d = self._binary_continuous_data(rng)
        schema = CovariateGenSchema.from_dataset(d, blend=0.0)
        out = generate_synthetic_covariates(d, 300, schema, rng)
        for j in range(2):
            assert set(np.round(out[:, j], 12)) <= set(np.round(d.covariates[:, j], 12))

    def test_zero_iqr_falls_back_to_resample(self):
        rng = np.random.default_rng(3)
        n = 30
        X = np.column_stack([np.full(n, 2.5), rng.normal(size=n)])
        d = SurvivalDataset(X, np.ones(n), np.ones(n, bool),
                            column_schema=("continuous", "continuous"))
        assert zero_iqr_columns(d) == [0]
        out = generate_synthetic_covariates(d, 100, rng=rng)
        assert np.all(out[:, 0] == 2.5)

    def test_categorical_levels_dummy_coded(self):
        rng = np.random.default_rng(4)
        n = 90
        levels = rng.integers(0, 3, size=n)
        X = np.column_stack([(levels == 1).astype(float), (levels == 2).astype(float)])
        d = SurvivalDataset(
            X, np.ones(n), np.ones(n, bool),
            column_schema=("categorical-expanded", "categorical-expanded"),
            categorical_groups=((0, 1),),
        )
        out = generate_synthetic_covariates(d, 400, rng=rng)
        # dummies are 0/1 and never both 1
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert np.all(out.sum(axis=1) <= 1.0)
        # uniform blend makes every level appear
        assert 0 < out[:, 0].mean() < 1 and 0 < out[:, 1].mean() < 1

    def test_seed_reproducibility(self):
        rng_data = np.random.default_rng(5)
        d = self._binary_continuous_data(rng_data)
        a = generate_synthetic_covariates(d, 50, rng=np.random.default_rng(99))
        b = generate_synthetic_covariates(d, 50, rng=np.random.default_rng(99))
        assert np.array_equal(a, b)


class TestSyntheticTimes:
    def test_mean_matches_rate(self):
        t = generate_synthetic_times(100000, 2.0, np.random.default_rng(7))
        assert t.mean() == pytest.approx(0.5, abs=0.01)

    def test_positive(self):
        t = generate_synthetic_times(1000, 0.3, np.random.default_rng(8))
        assert np.all(t > 0)

    def test_bitwise_reproducible(self):
        a = generate_synthetic_times(64, 1.7, np.random.default_rng(11))
        b = generate_synthetic_times(64, 1.7, np.random.default_rng(11))
        assert np.array_equal(a, b)


class TestCatalyticPrior:
    def test_value_zero_covariates(self):
        synth = SyntheticDataset(np.zeros((2, 1)), [1.0, 2.0])
        prior = CatalyticPrior(synth, tau=2.0, h0_plus=1.0)
        assert log_catalytic_prior([0.0], prior) == pytest.approx(-3.0, abs=1e-12)

    def test_value_single_unit(self):
        synth = SyntheticDataset(np.array([[1.0]]), [2.0])
        prior = CatalyticPrior(synth, tau=1.0, h0_plus=0.5)
        assert log_catalytic_prior([0.0], prior) == pytest.approx(np.log(0.5) - 1.0, abs=1e-12)
        assert np.log(0.5) - 1.0 == pytest.approx(-1.693147, abs=1e-6)

    def test_gradient_zero_at_synthetic_mle(self):
        rng = np.random.default_rng(13)
        prior = make_prior(rng, M=50, p=3)
        bhat = synthetic_mle(prior)
        grad, _ = log_catalytic_prior_derivatives(bhat, prior)
        assert np.linalg.norm(grad) < 1e-7

    def test_single_unit_gradient(self):
        synth = SyntheticDataset(np.array([[1.0]]), [2.0])
        prior = CatalyticPrior(synth, tau=1.0, h0_plus=0.5)
        grad, _ = log_catalytic_prior_derivatives([0.0], prior)
        assert grad[0] == pytest.approx(0.0, abs=1e-14)

    def test_neg_hessian_nonnegative_diagonal(self):
        rng = np.random.default_rng(14)
        prior = make_prior(rng, M=30, p=3)
        _, H = log_catalytic_prior_derivatives(rng.normal(size=3), prior)
        assert np.all(np.diag(H) >= 0)

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            prior = make_prior(rng, M=25, p=3, tau=float(rng.uniform(0.5, 4)))
            beta = rng.normal(size=3)
            grad, neg_hess = log_catalytic_prior_derivatives(beta, prior)
            fd_g = fd_gradient(lambda b: log_catalytic_prior(b, prior), beta)
            assert rel_err(grad, fd_g) < 1e-6
            fd_h = -fd_hessian_from_grad(
                lambda b: log_catalytic_prior_derivatives(b, prior)[0], beta
            )
            assert rel_err(neg_hess, fd_h) < 1e-6

    def test_scaling_identity(self):
        rng = np.random.default_rng(16)
        prior = make_prior(rng, M=20, p=2, tau=1.5)
        beta = rng.normal(size=2)
        assert log_catalytic_prior(beta, prior.with_tau(4.5)) == pytest.approx(
            3.0 * log_catalytic_prior(beta, prior), rel=1e-14
        )

    def test_log_concavity(self):
        rng = np.random.default_rng(17)
        prior = make_prior(rng, M=25, p=3)
        for _ in range(25):
            b1, b2 = rng.normal(size=3), rng.normal(size=3)
            lam = rng.uniform(0.05, 0.95)
            mid = log_catalytic_prior(lam * b1 + (1 - lam) * b2, prior)
            assert mid >= lam * log_catalytic_prior(b1, prior) + (1 - lam) * log_catalytic_prior(b2, prior) - 1e-9

    def test_rejects_nonfinite_beta(self):
        rng = np.random.default_rng(18)
        prior = make_prior(rng)
        with pytest.raises(ValueError):
            log_catalytic_prior([np.nan, 0.0], prior)

    def test_extreme_beta_is_safe(self):
        rng = np.random.default_rng(19)
        prior = make_prior(rng, p=2)
        val = log_catalytic_prior([500.0, -500.0], prior)
        assert val == -np.inf or np.isfinite(val)


class TestKappa:
    def test_single_unit_analytic(self):
        synth = SyntheticDataset(np.array([[1.0]]), [2.0])
        prior = CatalyticPrior(synth, tau=1.0, h0_plus=0.5)
        kappa = compute_kappa(prior)
        assert kappa == pytest.approx(np.log(0.5) - 1.0, abs=1e-10)
        assert synthetic_mle(prior)[0] == pytest.approx(0.0, abs=1e-8)

    def test_dominates_value_at_zero(self):
        rng = np.random.default_rng(20)
        prior = make_prior(rng, M=30, p=2)
        kappa = compute_kappa(prior)
        at_zero = mean_synthetic_loglik(np.zeros(2), prior.synth, prior.h0_plus)
        assert kappa >= at_zero

    def test_dominates_random_points(self):
        rng = np.random.default_rng(21)
        prior = make_prior(rng, M=40, p=3)
        kappa = compute_kappa(prior)
        for _ in range(1000):
            beta = rng.normal(size=3) * 2
            assert kappa >= mean_synthetic_loglik(beta, prior.synth, prior.h0_plus) - 1e-12

    def test_grid_oracle_p1(self):
        rng = np.random.default_rng(22)
        for _ in range(5):
            prior = make_prior(rng, M=15, p=1, h0=float(rng.uniform(0.3, 2.0)))
            kappa = compute_kappa(prior)
            grid = np.linspace(-5, 5, 200001)
            vals = [mean_synthetic_loglik([b], prior.synth, prior.h0_plus) for b in grid[::100]]
            coarse = grid[::100][np.argmax(vals)]
            fine = np.linspace(coarse - 0.1, coarse + 0.1, 20001)
            best = max(mean_synthetic_loglik([b], prior.synth, prior.h0_plus) for b in fine)
            assert kappa == pytest.approx(best, abs=1e-6)

    def test_rank_deficient_rejected(self):
        X = np.column_stack([np.ones(10), np.ones(10)])
        synth = SyntheticDataset(X, np.ones(10))
        prior = CatalyticPrior(synth, tau=1.0, h0_plus=1.0)
        with pytest.raises(ValueError):
            compute_kappa(prior)


class TestAdaptivePrior:
    def test_gamma_shape_at_synthetic_mle(self):
        rng = np.random.default_rng(23)
        prior = make_prior(rng, M=30, p=2, adaptive=(2.0, 1.0))
        bhat = synthetic_mle(prior)
        alpha, gamma = prior.adaptive_hyper
        p = prior.p
        # at the synthetic MLE the density in tau is Gamma(p+alpha, rate 1/gamma)
        for tau in (0.5, 1.0, 3.0, 7.0):
            val = log_adaptive_prior(tau, bhat, prior)
            expected = (p + alpha - 1) * np.log(tau) - tau / gamma
            assert val == pytest.approx(expected, abs=1e-9)

    def test_time_hazard_rescaling_shifts_by_constant(self):
        rng = np.random.default_rng(24)
        prior = make_prior(rng, M=20, p=2, tau=1.7)
        c = 3.0
        scaled = CatalyticPrior(
            SyntheticDataset(prior.synth.covariates, prior.synth.times * c),
            prior.tau,
            prior.h0_plus / c,
        )
        beta1 = rng.normal(size=2)
        beta2 = rng.normal(size=2)
        d1 = log_catalytic_prior(beta1, scaled) - log_catalytic_prior(beta1, prior)
        d2 = log_catalytic_prior(beta2, scaled) - log_catalytic_prior(beta2, prior)
        # exponent term invariant: the difference is the log h0 constant only
        assert d1 == pytest.approx(-prior.tau * np.log(c), rel=1e-12)
        assert d1 == pytest.approx(d2, rel=1e-12)

    def test_decays_along_rays(self):
        rng = np.random.default_rng(25)
        prior = make_prior(rng, M=30, p=2, adaptive=(2.0, 1.0))
        v = rng.normal(size=2)
        v /= np.linalg.norm(v)
        vals = [log_adaptive_prior(1.3, t * v, prior) for t in (5.0, 10.0, 20.0, 40.0)]
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < -1e3

    def test_requires_hyperparameters_and_positive_tau(self):
        rng = np.random.default_rng(26)
        prior = make_prior(rng)
        with pytest.raises(ValueError):
            log_adaptive_prior(1.0, np.zeros(2), prior)
        prior2 = make_prior(rng, adaptive=(2.0, 1.0))
        with pytest.raises(ValueError):
            log_adaptive_prior(-1.0, np.zeros(2), prior2)


class TestNormRecoverability:
    def test_zero_column_not_recoverable(self):
        X = np.column_stack([np.zeros(8), np.ones(8)])
        ok, c1 = norm_recoverability_check(X, rng=np.random.default_rng(0))
        assert not ok and c1 == 0.0

    def test_identity_matrix(self):
        p = 6
        ok, c1 = norm_recoverability_check(np.eye(p), samples=500, rng=np.random.default_rng(1))
        assert ok
        assert c1 == pytest.approx(1.0 / p, rel=1e-12)

    def test_random_gaussian(self):
        X = np.random.default_rng(2).normal(size=(80, 20))
        ok, c1 = norm_recoverability_check(X, rng=np.random.default_rng(3))
        assert ok and c1 > 0


class TestProperness:
    def test_quadrature_tail_mass(self):
        rng = np.random.default_rng(27)
        prior = make_prior(rng, M=25, p=1, tau=1.0)
        dens = lambda b: np.exp(log_catalytic_prior([b], prior))
        total, _ = quad(dens, -40, 40, limit=200)
        tail = quad(dens, 20, 40, limit=200)[0] + quad(dens, -40, -20, limit=200)[0]
        assert total > 0
        assert tail / total < 1e-6

    def test_exponential_tail_domination(self):
        rng = np.random.default_rng(28)
        prior = make_prior(rng, M=25, p=1, tau=1.0)
        ok, c1 = norm_recoverability_check(prior.synth.covariates, rng=rng)
        assert ok
        kappa = compute_kappa(prior)
        radius = 10.0
        # beyond the radius the log prior sits below a linear decay envelope
        for b in np.linspace(radius, 3 * radius, 25):
            for s in (1.0, -1.0):
                val = log_catalytic_prior([s * b], prior)
                envelope = prior.tau * kappa - 0.5 * prior.tau * c1 * (b - radius)
                assert val <= envelope + 1e-9

    def test_adaptive_moment_stable_under_window_doubling(self):
        rng = np.random.default_rng(29)
        prior = make_prior(rng, M=30, p=1, adaptive=(2.0, 1.0))
        alpha, gamma = prior.adaptive_hyper
        kappa = compute_kappa(prior)
        p = 1

        def beta_marginal_moment(window):
            # integrate |beta|^(alpha/2) / (kappa + 1/gamma - ell)^(p+alpha),
            # the tau-marginalized density; evaluated in log space
            def integrand(b):
                if b == 0.0:
                    return 0.0
                ell = mean_synthetic_loglik([b], prior.synth, prior.h0_plus)
                logval = (alpha / 2.0) * np.log(abs(b)) - (p + alpha) * np.log(
                    kappa + 1.0 / gamma - ell
                )
                return np.exp(logval) if logval > -700 else 0.0

            return quad(integrand, -window, window, limit=400)[0]

        m1 = beta_marginal_moment(60.0)
        m2 = beta_marginal_moment(120.0)
        assert np.isfinite(m1) and np.isfinite(m2)
        assert abs(m2 - m1) / m1 < 1e-3


class TestBuildPrior:
    def test_default_size_rule(self):
        assert default_synthetic_size(10) == 1000
        assert default_synthetic_size(300) == 1200

    def test_build_uses_exponential_rate(self):
        rng = np.random.default_rng(30)
        d = random_dataset(rng, n=50, p=3)
        prior = build_catalytic_prior(d, tau=3.0, M=200, rng=np.random.default_rng(1))
        assert prior.h0_plus == pytest.approx(fit_exponential(d))
        assert prior.synth.M == 200
        assert prior.synth.generator_meta["psi_hat"] == prior.h0_plus

    def test_build_deterministic(self):
        rng = np.random.default_rng(31)
        d = random_dataset(rng, n=40, p=2)
        p1 = build_catalytic_prior(d, tau=1.0, M=100, rng=np.random.default_rng(5))
        p2 = build_catalytic_prior(d, tau=1.0, M=100, rng=np.random.default_rng(5))
        assert np.array_equal(p1.synth.covariates, p2.synth.covariates)
        assert np.array_equal(p1.synth.times, p2.synth.times)

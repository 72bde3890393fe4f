import numpy as np
import pytest

from catcox.simlab import (
    SimulationConfig,
    calibrate_xi,
    coefficient_pattern,
    consistency_demo,
    mple_bias_demo,
    run_study,
    sample_covariates,
    simulate_dataset,
    stream_rng,
)


class TestCoefficientPattern:
    def test_p16_values(self):
        beta = coefficient_pattern(16)
        expected = np.array([1.0, -1.0, 0.75, -0.75, 0.25, -0.25, 0.25, -0.25]
                            + [0.25] * 8)
        assert np.allclose(beta, expected)

    def test_requires_p8(self):
        with pytest.raises(ValueError):
            coefficient_pattern(5)


class TestCovariates:
    def test_column_laws(self):
        rng = np.random.default_rng(0)
        X = sample_covariates(200_000, 4, rng)
        assert set(np.unique(X[:, 0])) <= {0.0, 1.0}
        assert X[:, 0].mean() == pytest.approx(0.1, abs=0.005)
        assert X[:, 1].mean() == pytest.approx(1.0, abs=0.02)   # chi2(1)
        assert X[:, 2].mean() == pytest.approx(4.0, abs=0.03)   # chi2(4)
        assert X[:, 3].mean() == pytest.approx(0.0, abs=0.01)


class TestCalibrateXi:
    def test_null_coefficients_closed_form(self):
        # with beta0 = 0 the rate is 0.5 and the target solves
        # (1 - exp(-z))/z = r with z = 0.5 * xi
        cfg = SimulationConfig(p=8, censor_rate=0.2, seed=1)
        xi = calibrate_xi(cfg, mc_size=20_000, beta0=np.zeros(8), tol=1e-4)
        assert xi == pytest.approx(9.93, abs=0.05)

    def test_monotone_in_target(self):
        cfg1 = SimulationConfig(p=8, censor_rate=0.4, seed=1)
        cfg2 = SimulationConfig(p=8, censor_rate=0.1, seed=1)
        xi_40 = calibrate_xi(cfg1, mc_size=20_000)
        xi_10 = calibrate_xi(cfg2, mc_size=20_000)
        assert xi_10 > xi_40

    def test_realized_rate_on_fresh_sample(self):
        cfg = SimulationConfig(p=12, censor_rate=0.2, seed=5)
        xi = calibrate_xi(cfg, mc_size=100_000)
        rng = stream_rng(123, 0)
        data, _ = simulate_dataset(cfg, rng, xi=xi, n=100_000)
        realized = float((~data.status).mean())
        assert realized == pytest.approx(0.2, abs=0.01)


class TestSimulateDataset:
    def test_shapes_and_schema(self):
        cfg = SimulationConfig(n=50, p=10, seed=2)
        rng = stream_rng(2, 0)
        data, beta0 = simulate_dataset(cfg, rng, xi=5.0)
        assert data.n == 50 and data.p == 10
        assert beta0.shape == (10,)
        assert data.column_schema[0] == "binary"

    def test_huge_xi_means_no_censoring(self):
        cfg = SimulationConfig(n=2000, p=8, seed=3)
        data, _ = simulate_dataset(cfg, stream_rng(3, 0), xi=1e9)
        assert (~data.status).mean() < 0.01

    def test_null_beta_time_scale(self):
        cfg = SimulationConfig(n=100_000, p=8, seed=4)
        data, _ = simulate_dataset(
            cfg, stream_rng(4, 0), xi=1e12, beta0=np.zeros(8), n=100_000
        )
        assert data.times.mean() == pytest.approx(2.0, abs=0.03)


class TestRunStudy:
    def test_zero_replications_empty_report(self):
        cfg = SimulationConfig(n=100, p=8, replications=0, methods=("mple",), seed=6)
        report = run_study(cfg)
        assert report.methods["mple"].n_ok == 0
        assert np.isnan(report.methods["mple"].mean_sq_error)

    def test_reproducibility(self):
        cfg = SimulationConfig(n=60, p=8, replications=3, methods=("mple", "cre"),
                               M=100, seed=7)
        r1 = run_study(cfg)
        r2 = run_study(cfg)
        assert r1.methods["mple"].mean_sq_error == r2.methods["mple"].mean_sq_error
        assert r1.methods["cre"].mean_sq_error == r2.methods["cre"].mean_sq_error

    def test_metric_identity(self):
        cfg = SimulationConfig(n=60, p=8, replications=4, methods=("mple",),
                               M=100, seed=8)
        report = run_study(cfg)
        vals = report.sq_errors["mple"]
        mean, se = report.methods["mple"].mean_sq_error, report.methods["mple"].se_sq_error
        assert mean == pytest.approx(float(vals.mean()), abs=1e-12)
        assert se == pytest.approx(float(vals.std(ddof=1) / np.sqrt(len(vals))), abs=1e-12)

    def test_censor_rate_attained(self):
        cfg = SimulationConfig(n=100, p=8, replications=20, methods=("mple",), seed=9)
        report = run_study(cfg)
        assert report.realized_censor_rate == pytest.approx(0.2, abs=0.02)

    def test_rows_long_format(self):
        cfg = SimulationConfig(n=60, p=8, replications=2, methods=("mple",), M=80, seed=10)
        report = run_study(cfg)
        rows = report.rows()
        assert ("mple", "sq_error") == rows[0][:2]
        assert len(rows) == 2


class TestBiasDemo:
    def test_output_shape_and_inflation(self):
        ratios = []
        null_mags = []
        for s in range(20):
            pairs = mple_bias_demo(50, 100, stream_rng(11, s))
            assert pairs.shape == (50, 2)
            nonzero = pairs[:, 0] != 0
            ratios.append(np.mean(pairs[nonzero, 1] / pairs[nonzero, 0]))
            null_mags.append(np.mean(np.abs(pairs[~nonzero, 1])))
        assert np.mean(ratios) > 1.05
        assert np.mean(null_mags) < 5.0

    def test_requires_more_rows_than_columns(self):
        with pytest.raises(ValueError):
            mple_bias_demo(50, 40, stream_rng(0, 0))


class TestConsistencyDemo:
    def test_single_cell(self):
        out = consistency_demo([5], [80], M=60, n_seeds=2, seed=12)
        assert out["cre"].shape == (1, 1)
        assert out["wme"].shape == (1, 1)
        assert np.isfinite(out["cre"]).all()

    def test_loss_decreases_with_n_smoke(self):
        out = consistency_demo([5], [60, 400], M=100, n_seeds=5, seed=13)
        assert out["cre"][0, 1] < out["cre"][0, 0]
        assert out["wme"][0, 1] < out["wme"][0, 0]

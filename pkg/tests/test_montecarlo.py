import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivspectral.dgp import DgpConfig, FixedSupport, simulate_dataset
from ivspectral.errors import ConfigurationError, ParameterError
from ivspectral.estimators import SpectralCutoff, Tikhonov
from ivspectral.montecarlo import (
    EstimatorSpec,
    ScenarioConfig,
    replication_seed,
    run_replication,
    run_scenario,
    summarize,
)


def small_scenario(**kw):
    dgp = DgpConfig(n=60, k=8, pi=FixedSupport(3), sigma_vu=(0.5,))
    base = dict(
        dgp=dgp,
        estimators=(
            EstimatorSpec("ols", "ols"),
            EstimatorSpec("tsls", "tsls"),
            EstimatorSpec("tik", "tsls_regularized", grid=tuple(np.logspace(-4, 0, 5)), grid_scale="relative"),
        ),
        replications=12,
        master_seed=7,
    )
    base.update(kw)
    return ScenarioConfig(**base)


class TestSummarize:
    def test_exact(self):
        s = summarize(np.full((5, 1), 2.0), [2.0])
        for f in (s.mean_bias, s.median_bias, s.mad, s.mse, s.decile_range):
            assert f.tolist() == [0.0]

    def test_two_point(self):
        s = summarize([1.0, 3.0], [2.0])
        assert s.mean_bias.tolist() == [0.0] and s.mse.tolist() == [1.0]
        assert s.mad.tolist() == [1.0]

    def test_normal_draws(self):
        draws = np.random.default_rng(5).normal(2.1, 0.2, 1000)
        # bias^2 + variance = 0.01 + 0.04
        assert abs(summarize(draws, [2.0]).mse[0] - 0.05) < 0.15 * 0.05

    def test_empty(self):
        with pytest.raises(ParameterError, match="empty"):
            summarize(np.empty((0, 1)), [1.0])

    def test_failures_excluded(self):
        s = summarize([[1.0], [np.nan], [3.0]], [2.0])
        assert s.failure_count == 1 and s.replications == 3
        assert s.mse.tolist() == [1.0]

    def test_all_failed(self):
        s = summarize([[np.nan], [np.nan]], [2.0])
        assert s.failure_count == 2 and np.isnan(s.mse[0])

    def test_width_mismatch(self):
        with pytest.raises(ParameterError, match="delta_true"):
            summarize(np.ones((3, 2)), [1.0])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.floats(-10, 10))
    def test_variance_decomposition(self, draws, truth):
        s = summarize(draws, [truth])
        assert s.mse[0] >= s.mean_bias[0] ** 2 - 1e-12 * max(1.0, s.mse[0])
        assert s.mad[0] >= 0 and s.decile_range[0] >= 0


class TestScenario:
    def test_noiseless_single_replication(self):
        dgp = DgpConfig(n=40, k=4, pi=FixedSupport(4), sigma_u=1e-12, sigma_v=1e-12, sigma_vu=(0.0,))
        stats = run_scenario(ScenarioConfig(dgp, (EstimatorSpec("tsls", "tsls"),), replications=1))
        assert abs(stats.get("tsls").mean_bias[0]) < 1e-8

    def test_deterministic_across_workers(self):
        cfg = small_scenario()
        a = run_scenario(cfg, workers=1)
        b = run_scenario(cfg, workers=3)
        for key, table in a.raw.items():
            assert np.array_equal(table, b.raw[key], equal_nan=True)
        for ca, cb in zip(a.cells, b.cells):
            assert ca.stats.mse.tobytes() == cb.stats.mse.tobytes()

    def test_replication_reproducible_in_isolation(self):
        cfg = small_scenario()
        stats = run_scenario(cfg)
        row = run_replication(cfg.dgp, cfg.estimators, replication_seed(cfg.master_seed, 5))
        assert np.array_equal(row[1], stats.raw[(cfg.dgp.n, "tsls")][5])

    def test_paired_design(self):
        # ols and tsls on the same draw: K = N makes them coincide replication by replication
        dgp = DgpConfig(n=12, k=12, pi=FixedSupport(3), sigma_vu=(0.5,))
        cfg = ScenarioConfig(dgp, (EstimatorSpec("a", "ols"), EstimatorSpec("b", "tsls")), replications=6)
        stats = run_scenario(cfg)
        np.testing.assert_allclose(stats.raw[(12, "a")], stats.raw[(12, "b")], rtol=1e-8)

    def test_seed_matters(self):
        a = run_scenario(small_scenario(master_seed=1)).raw
        b = run_scenario(small_scenario(master_seed=2)).raw
        assert not np.array_equal(a[(60, "tsls")], b[(60, "tsls")])

    def test_n_grid_cells(self):
        cfg = small_scenario(n_grid=(30, 60), replications=3)
        stats = run_scenario(cfg)
        assert [(c.n, c.label) for c in stats.cells] == [(n, l) for n in (30, 60) for l in ("ols", "tsls", "tik")]
        assert stats.get("tsls", 30).replications == 3

    def test_failures_counted(self):
        # K > N: 2SLS is rank deficient in every replication, Tikhonov still works
        dgp = DgpConfig(n=10, k=20, pi=FixedSupport(3), sigma_vu=(0.5,))
        cfg = ScenarioConfig(
            dgp, (EstimatorSpec("tsls", "tsls"), EstimatorSpec("tik", "tsls_regularized", scheme=Tikhonov(50.0))), 4
        )
        stats = run_scenario(cfg)
        assert stats.get("tsls").failure_count == 4
        assert stats.get("tik").failure_count == 0

    def test_variance_decomposition_per_cell(self):
        for cell in run_scenario(small_scenario()).cells:
            s = cell.stats
            assert np.all(s.mse >= s.mean_bias**2 - 1e-12)

    def test_relative_cutoff_grid(self):
        spec = EstimatorSpec("c", "tsls_regularized", grid=(1e-3, 1e-2, 1e-1), select_kind="spectral_cutoff", grid_scale="relative")
        d = simulate_dataset(DgpConfig(n=60, k=8, pi=FixedSupport(3)), 0)
        from ivspectral.montecarlo import run_estimator

        res = run_estimator(spec, d)
        assert isinstance(res.scheme, SpectralCutoff)


class TestValidation:
    @pytest.mark.parametrize(
        "kw,field",
        [
            (dict(label="a", method="liml"), "method"),
            (dict(label="a", method="tsls_regularized"), "scheme"),
            (dict(label="a", method="tsls", scheme=Tikhonov(1.0)), "scheme"),
            (dict(label="a", method="tsls_regularized", grid=(2.0, 1.0)), "grid"),
            (dict(label="a", method="tsls_regularized", grid=(1.0,), grid_scale="log"), "grid_scale"),
            (dict(label="a", method="tsls_regularized", grid=(1.0,), folds=1), "folds"),
        ],
    )
    def test_spec(self, kw, field):
        with pytest.raises(ConfigurationError) as info:
            EstimatorSpec(**kw)
        assert info.value.field == field

    def test_unique_labels(self):
        dgp = DgpConfig(n=10, k=2, pi=FixedSupport(1))
        with pytest.raises(ConfigurationError, match="unique"):
            ScenarioConfig(dgp, (EstimatorSpec("a", "ols"), EstimatorSpec("a", "tsls")))

    def test_replications(self):
        dgp = DgpConfig(n=10, k=2, pi=FixedSupport(1))
        with pytest.raises(ConfigurationError):
            ScenarioConfig(dgp, (EstimatorSpec("a", "ols"),), replications=0)

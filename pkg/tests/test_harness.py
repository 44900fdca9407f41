import math

import numpy as np
import pytest

from seqdi.errors import ConfigError, DegenerateMetrics
from seqdi.harness import (
    McConfig,
    McSummary,
    emit_results,
    metrics,
    read_replication_errors,
    run_mc,
)
from seqdi.numerics import RngStream
from seqdi.population import Partition, generate_population, save_population_csv

POP_PARAMS = {"N": 1200, "beta": (10.0, 15.0, 10.0, 20.0), "sigma": 0.6}


def small_config(**overrides):
    base = dict(
        replications=40,
        seed=777,
        mechanism="MAR",
        population_params=POP_PARAMS,
        designs=("optimal",),
        estimators=("DI", "sepDI_b", "sepDI_sigma", "comDI_sigma", "adDI"),
    )
    base.update(overrides)
    return McConfig(**base)


class TestMetrics:
    def test_exact_estimator(self):
        points = np.full(10, 50.0)
        out = metrics(points, np.zeros(10), 50.0)
        assert out["rb"] == 0.0
        assert out["rrmse"] == 0.0
        assert out["coverage"] == 1.0

    def test_hand_two_points(self):
        y = 200.0
        out = metrics(np.array([y * 1.01, y * 0.99]), None, y)
        assert out["rb"] == pytest.approx(0.0, abs=1e-12)
        assert out["rrmse"] == pytest.approx(1.0, rel=1e-12)

    def test_var_ratio_concentrates(self):
        rng = np.random.default_rng(1)
        r = 40_000
        v = 4.0
        points = 100.0 + rng.normal(0.0, math.sqrt(v), size=r)
        out = metrics(points, np.full(r, v), 100.0)
        assert abs(out["var_ratio"] - 1.0) <= 4.0 / math.sqrt(r) * 3

    def test_degenerate_metrics(self):
        with pytest.raises(DegenerateMetrics):
            metrics(np.array([1.0]), np.array([0.5]), 1.0)

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            metrics(np.array([1.0, 2.0]), None, 0.0)

    def test_bias_variance_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            r = int(rng.integers(2, 200))
            y = float(rng.uniform(10.0, 500.0))
            points = y * (1.0 + rng.normal(0, 0.05, size=r))
            out = metrics(points, None, y)
            v_mc = np.var(points, ddof=1)
            rhs = out["rb"] ** 2 + (100.0 * math.sqrt(v_mc * (r - 1) / r) / y) ** 2
            assert out["rrmse"] ** 2 == pytest.approx(rhs, rel=1e-9)

    def test_coverage_monotone_under_widening(self):
        rng = np.random.default_rng(3)
        points = 100.0 + rng.normal(size=300)
        v1 = np.full(300, 0.25)
        a = metrics(points, v1, 100.0)["coverage"]
        b = metrics(points, 4.0 * v1, 100.0)["coverage"]
        assert b >= a


class TestConfigValidation:
    def test_zero_replications(self):
        with pytest.raises(ConfigError):
            small_config(replications=0)

    def test_unknown_estimator(self):
        with pytest.raises(ConfigError):
            small_config(estimators=("DI", "bogus"))

    def test_unknown_design(self):
        with pytest.raises(ConfigError):
            small_config(designs=("optimal", "systematic"))

    def test_fixed_partition_needs_csv(self):
        with pytest.raises(ConfigError):
            small_config(mechanism="FixedPartition")

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            small_config(f_p=1.5)


class TestRunMc:
    def test_census_single_replication_exact(self, tmp_path):
        pop = generate_population(dict(POP_PARAMS, N=60), RngStream(5, 0))
        delta = np.zeros(60, dtype=int)
        delta[:40] = 1
        path = tmp_path / "pop.csv"
        save_population_csv(path, pop, partition=Partition(delta=delta))
        config = McConfig(
            replications=1, seed=1, mechanism="FixedPartition",
            population_csv=str(path), designs=("equal",),
            estimators=("DI", "HT_seq", "sepDI_b", "sepDI_sigma", "comDI_sigma", "adDI"),
            n_p=20,  # census: N1 = 20
        )
        summary = run_mc(config)
        for arm in summary.arms:
            assert arm.points[0] == pytest.approx(pop.true_total, rel=1e-9)
            assert arm.rb == pytest.approx(0.0, abs=1e-8)
            assert arm.rrmse == pytest.approx(0.0, abs=1e-8)

    def test_determinism_across_thread_counts(self):
        config = small_config(replications=24)
        s1 = run_mc(config, threads=1)
        s2 = run_mc(config, threads=2)
        s3 = run_mc(config, threads=3)
        for a1, a2, a3 in zip(s1.arms, s2.arms, s3.arms):
            assert np.array_equal(a1.points, a2.points)
            assert np.array_equal(a1.points, a3.points)
            if a1.variances is not None:
                assert np.array_equal(a1.variances, a2.variances)
        for t1, t2 in zip(s1.tests, s2.tests):
            assert np.array_equal(t1.p_values, t2.p_values)

    def test_same_config_bitwise_reproducible(self):
        s1 = run_mc(small_config())
        s2 = run_mc(small_config())
        for a1, a2 in zip(s1.arms, s2.arms):
            assert np.array_equal(a1.points, a2.points)
        assert s1.y_true == s2.y_true

    def test_estimator_subset_does_not_change_draws(self):
        full = run_mc(small_config())
        only_di = run_mc(small_config(estimators=("DI",)))
        a_full = next(a for a in full.arms if a.estimator == "DI")
        assert np.array_equal(a_full.points, only_di.arms[0].points)

    def test_fixed_partition_drops_frame_estimators(self, tmp_path):
        pop = generate_population(dict(POP_PARAMS, N=300), RngStream(6, 0))
        delta = (RngStream(7, 0).uniform(size=300) < 0.6).astype(int)
        path = tmp_path / "pop.csv"
        save_population_csv(path, pop, partition=Partition(delta=delta))
        config = McConfig(
            replications=10, seed=2, mechanism="FixedPartition",
            population_csv=str(path), designs=("optimal",),
            estimators=("DI", "IPW", "DR"),
        )
        summary = run_mc(config)
        tags = {arm.estimator for arm in summary.arms}
        assert tags == {"DI"}

    def test_fixed_partition_only_frame_rejected(self, tmp_path):
        pop = generate_population(dict(POP_PARAMS, N=300), RngStream(8, 0))
        delta = (RngStream(9, 0).uniform(size=300) < 0.6).astype(int)
        path = tmp_path / "pop.csv"
        save_population_csv(path, pop, partition=Partition(delta=delta))
        with pytest.raises(ConfigError):
            run_mc(
                McConfig(
                    replications=5, seed=3, mechanism="FixedPartition",
                    population_csv=str(path), estimators=("IPW",),
                )
            )

    def test_nmar_mechanism_runs(self):
        summary = run_mc(small_config(mechanism="NMAR", replications=10))
        assert summary.mechanism == "NMAR"
        assert len(summary.arms) > 0

    def test_addi_without_test_summary(self):
        summary = run_mc(small_config(replications=8, run_test=False,
                                      estimators=("adDI",)))
        assert [a.estimator for a in summary.arms] == ["adDI"]
        assert summary.tests == []

    def test_nondefault_level_widens_intervals(self):
        s90 = run_mc(small_config(replications=12, level=0.90, estimators=("DI",)))
        s99 = run_mc(small_config(replications=12, level=0.99, estimators=("DI",)))
        assert np.array_equal(s90.arms[0].points, s99.arms[0].points)
        assert s99.arms[0].coverage >= s90.arms[0].coverage


class TestEmit:
    def test_round_trip_reproduces_metrics(self, tmp_path):
        summary = run_mc(small_config(replications=30))
        emit_results(summary, tmp_path)
        loaded = read_replication_errors(tmp_path / "replication_errors.csv")
        for arm in summary.arms:
            entry = loaded[(arm.estimator, arm.design)]
            assert np.array_equal(entry["points"], arm.points)
            re = 100.0 * (arm.points - summary.y_true) / summary.y_true
            assert np.array_equal(entry["re"], re)
            again = metrics(entry["points"], None, summary.y_true)
            assert again["rb"] == arm.rb
            assert again["rrmse"] == arm.rrmse

    def test_empty_arm_list_header_only(self, tmp_path):
        summary = McSummary(
            y_true=10.0, replications=0, seed=1, mechanism="MAR", arms=[], tests=[]
        )
        emit_results(summary, tmp_path)
        lines = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert lines[0].startswith("# seed=")
        assert lines[1] == "Estimator,Design,RB,RRMSE,VarRatio,Coverage"
        assert len(lines) == 2

    def test_seed_recorded_in_headers(self, tmp_path):
        summary = run_mc(small_config(replications=5))
        for path in emit_results(summary, tmp_path):
            if str(path).endswith(".csv"):
                first = open(path, encoding="utf-8").readline()
                assert first.strip() == "# seed=777"

    def test_test_summary_columns(self, tmp_path):
        summary = run_mc(small_config(replications=10))
        emit_results(summary, tmp_path)
        lines = (tmp_path / "test_summary.csv").read_text().strip().splitlines()
        assert lines[1] == "Design,R,alpha,reject_rate,mean_p,median_p"
        assert lines[2].startswith("optimal,10,")

"""Scenario generators and the Monte-Carlo harness.

Oracle checks (summation CDF, brute-force Clopper-Pearson) live here so
they stay independent of the bounds implementation they validate.
"""

import json

import numpy as np
import pytest

from riskcal.bounds import BinomialCount
from riskcal.sim import (
    CoverageReport,
    ScenarioConfig,
    binomial_cdf_summation,
    brute_force_cp_oracle,
    config_hash,
    generate_etsc_scenario,
    generate_scenario,
    run_coverage_experiment,
    run_etsc_experiment,
    true_risk_curve,
)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ScenarioConfig()
        assert cfg.kind == "mono_binary"
        assert cfg.n_labeled == 130
        assert cfg.n_unlabeled == 5000

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(kind="bogus")

    def test_unknown_regime_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(imputation_regime="bogus")

    def test_curve_endpoints_checked(self):
        with pytest.raises(ValueError):
            ScenarioConfig(risk_lo=0.5, risk_hi=0.4)

    def test_config_hash_stable_and_sensitive(self):
        a = ScenarioConfig(master_seed=1)
        b = ScenarioConfig(master_seed=1)
        c = ScenarioConfig(master_seed=2)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)


class TestRiskCurve:
    def test_monotone_curve_spans_range(self):
        cfg = ScenarioConfig(grid_size=5, risk_lo=0.1, risk_hi=0.3)
        np.testing.assert_allclose(
            true_risk_curve(cfg), np.linspace(0.1, 0.3, 5)
        )

    def test_nonmono_curve_is_seeded_permutation(self):
        cfg = ScenarioConfig(kind="nonmono_binary", master_seed=7)
        curve = true_risk_curve(cfg)
        base = np.linspace(cfg.risk_lo, cfg.risk_hi, cfg.grid_size)
        assert sorted(curve) == pytest.approx(sorted(base))
        assert not np.all(np.diff(curve) >= 0)
        np.testing.assert_array_equal(curve, true_risk_curve(cfg))


class TestGenerateScenario:
    def test_trial_determinism_and_independence(self):
        cfg = ScenarioConfig(n_labeled=20, n_unlabeled=50)
        a, _ = generate_scenario(cfg, 3)
        b, _ = generate_scenario(cfg, 3)
        c, _ = generate_scenario(cfg, 4)
        np.testing.assert_array_equal(a.labeled_true.losses, b.labeled_true.losses)
        assert not np.array_equal(a.labeled_true.losses, c.labeled_true.losses)

    def test_perfect_accuracy_copies_losses(self):
        cfg = ScenarioConfig(n_labeled=30, n_unlabeled=60, imputation_accuracy=1.0)
        data, _ = generate_scenario(cfg, 0)
        np.testing.assert_array_equal(
            data.labeled_imputed.losses, data.labeled_true.losses
        )

    def test_zero_accuracy_symmetric_flips(self):
        cfg = ScenarioConfig(
            n_labeled=30,
            n_unlabeled=60,
            imputation_accuracy=0.0,
            imputation_regime="symmetric_noise",
        )
        data, _ = generate_scenario(cfg, 0)
        np.testing.assert_array_equal(
            data.labeled_imputed.losses, 1.0 - data.labeled_true.losses
        )

    def test_optimistic_regime_never_exceeds_true(self):
        cfg = ScenarioConfig(n_labeled=50, n_unlabeled=200, imputation_accuracy=0.7)
        data, _ = generate_scenario(cfg, 1)
        assert (data.labeled_imputed.losses <= data.labeled_true.losses).all()

    def test_pessimistic_regime_never_below_true(self):
        cfg = ScenarioConfig(
            n_labeled=50,
            n_unlabeled=200,
            imputation_accuracy=0.7,
            imputation_regime="pessimistic",
        )
        data, _ = generate_scenario(cfg, 1)
        assert (data.labeled_imputed.losses >= data.labeled_true.losses).all()

    def test_column_means_match_curve(self):
        # 3-sigma binomial interval around the configured risk at a column
        lab = generate_scenario(
            ScenarioConfig(n_labeled=100000, n_unlabeled=100000, grid_size=3,
                           risk_lo=0.15, risk_hi=0.15),
            0,
        )[0].labeled_true.losses[:, 0]
        assert lab.mean() == pytest.approx(0.15, abs=3 * np.sqrt(0.15 * 0.85 / 100000))

    def test_general_bounded_losses_in_unit_interval(self):
        cfg = ScenarioConfig(kind="general_bounded", n_labeled=40, n_unlabeled=80)
        data, curve = generate_scenario(cfg, 0)
        losses = data.labeled_true.losses
        assert losses.min() >= 0.0 and losses.max() <= 1.0
        # column mean approximates the curve with a large sample
        big = generate_scenario(
            ScenarioConfig(kind="general_bounded", n_labeled=50000, n_unlabeled=50000),
            0,
        )[0].labeled_true.losses
        np.testing.assert_allclose(big.mean(axis=0), curve, atol=0.01)

    def test_etsc_kind_redirected(self):
        with pytest.raises(ValueError):
            generate_scenario(ScenarioConfig(kind="etsc_basic"), 0)


class TestCoverageExperiment:
    def small_config(self):
        return ScenarioConfig(n_labeled=40, n_unlabeled=400, grid_size=6, master_seed=5)

    def test_alpha_one_never_violates(self):
        cfg = ScenarioConfig(
            n_labeled=30, n_unlabeled=120, grid_size=4, alpha=1.0 - 1e-9, master_seed=2
        )
        reports = run_coverage_experiment(cfg, ["rcps_labeled_cp", "ss_binary"], 20)
        for r in reports.values():
            assert r.violation_rate == 0.0

    def test_reports_are_reproducible(self):
        cfg = self.small_config()
        methods = ["rcps_labeled_cp", "ss_binary", "naive_augmented"]
        a = run_coverage_experiment(cfg, methods, 25)
        b = run_coverage_experiment(cfg, methods, 25)
        assert json.dumps({m: r.to_dict() for m, r in a.items()}, sort_keys=True) == \
            json.dumps({m: r.to_dict() for m, r in b.items()}, sort_keys=True)

    def test_single_trial_rates_are_binary(self):
        reports = run_coverage_experiment(self.small_config(), ["ss_binary"], 1)
        assert reports["ss_binary"].violation_rate in (0.0, 1.0)

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            run_coverage_experiment(self.small_config(), ["bogus"], 2)

    def test_abstentions_not_counted_as_violations(self):
        # alpha below every achievable bound: all trials abstain
        cfg = ScenarioConfig(
            n_labeled=20, n_unlabeled=80, grid_size=3, alpha=1e-6, master_seed=1
        )
        reports = run_coverage_experiment(cfg, ["rcps_labeled_cp"], 10)
        r = reports["rcps_labeled_cp"]
        assert r.abstain_rate == 1.0
        assert r.violation_rate == 0.0
        assert np.isnan(r.mean_true_risk)


class TestEtscScenario:
    def test_shapes_and_determinism(self):
        cfg = ScenarioConfig(
            kind="etsc_basic", n_labeled=12, n_unlabeled=20, n_test=7,
            n_stage1=9, t_max=4, master_seed=4,
        )
        ds = generate_etsc_scenario(cfg, 0)
        assert ds["stage1"].n == 9 and ds["stage1"].true_label is not None
        assert ds["stage2"].n == 12 and ds["stage2"].imputed_label is not None
        assert ds["unlabeled"].n == 20 and ds["unlabeled"].true_label is None
        assert ds["test"].n == 7
        assert ds["stage2"].t_max == 4
        again = generate_etsc_scenario(cfg, 0)
        np.testing.assert_array_equal(
            ds["unlabeled"].confidence, again["unlabeled"].confidence
        )

    def test_stage_sample_ids_disjoint(self):
        cfg = ScenarioConfig(kind="etsc_basic", n_labeled=5, n_unlabeled=5,
                             n_test=5, n_stage1=5, master_seed=0)
        ds = generate_etsc_scenario(cfg, 0)
        assert not set(ds["stage1"].sample_ids) & set(ds["stage2"].sample_ids)

    def test_last_timestep_early_agrees_with_full(self):
        cfg = ScenarioConfig(kind="etsc_basic", n_labeled=50, n_unlabeled=50,
                             n_test=5, master_seed=0)
        ds = generate_etsc_scenario(cfg, 0)
        d = ds["stage2"]
        np.testing.assert_array_equal(d.early_pred[:, -1], d.full_pred)

    def test_experiment_smoke_and_determinism(self):
        cfg = ScenarioConfig(
            kind="etsc_basic", n_labeled=60, n_unlabeled=300, n_test=200,
            n_stage1=60, t_max=4, alpha=0.2, delta=0.05,
            delta1=0.005, delta2=0.045, master_seed=6,
        )
        a = run_etsc_experiment(cfg, ["binary_cp", "labeled_only"], 3)
        b = run_etsc_experiment(cfg, ["binary_cp", "labeled_only"], 3)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        for mode in ("binary_cp", "labeled_only"):
            assert len(a[mode]["max_risk"]) == 3
            assert len(a[mode]["mean_halt_curve"]) == 4


class TestOracles:
    def test_summation_cdf_hand_cases(self):
        assert binomial_cdf_summation(1, 0, 0.3) == pytest.approx(0.7, abs=1e-12)
        assert binomial_cdf_summation(10, 10, 0.9) == 1.0
        assert binomial_cdf_summation(20, 3, 0.2) == pytest.approx(0.411449, abs=1e-6)

    def test_brute_force_cp_hand_cases(self):
        assert brute_force_cp_oracle(BinomialCount(10, 0), 0.05) == pytest.approx(
            0.258866, abs=2e-6
        )
        assert brute_force_cp_oracle(BinomialCount(1, 0), 0.5) == pytest.approx(
            0.5, abs=2e-6
        )
        assert brute_force_cp_oracle(BinomialCount(5, 5), 0.1) == 1.0

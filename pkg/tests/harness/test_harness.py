import math
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from spdevol.estimate import realized_volatility_profile
from spdevol.harness import (
    ExperimentConfig,
    qq_standardized_errors,
    run_experiment,
    spatial_profile,
    variance_ratio_sweep,
    write_profile_csv,
    write_qq_csv,
    write_ratios_csv,
)
from spdevol.model import OperatorParams, VolatilitySpec
from spdevol.oracle import KernelParams, expected_realized_volatility
from spdevol.simulate import synthesize_field
from spdevol.utils.streams import replication_seed

PAPER = OperatorParams(0.0, 1.0, 0.2)
SIGMA = VolatilitySpec.constant(0.25)


def _config(**overrides):
    values = dict(params=PAPER, vol=SIGMA, n=20, m=3, K=200, replications=12, seed=2024)
    values.update(overrides)
    return ExperimentConfig(**values)


class TestExperimentConfig(unittest.TestCase):

    def test_defaults(self):
        cfg = ExperimentConfig(params=PAPER, vol=SIGMA)
        self.assertEqual((cfg.n, cfg.m, cfg.K, cfg.replications), (1000, 9, 10000, 3000))
        self.assertEqual(cfg.grid.m, 9)

    def test_explicit_points_set_m(self):
        cfg = _config(y=(0.2, 0.5))
        self.assertEqual(cfg.m, 2)
        self.assertEqual(cfg.grid.y, (0.2, 0.5))

    def test_validation(self):
        with self.assertRaises(ValueError):
            _config(replications=0)
        with self.assertRaises(ValueError):
            _config(estimators=("sigma2_multi", "bipower"))
        with self.assertRaises(ValueError):
            _config(level=1.0)
        with self.assertRaises(ValueError):
            _config(initial_condition="random")
        with self.assertRaises(ValueError):
            _config(seed=-1)
        with self.assertRaises(ValueError):
            _config(n=0)

    def test_replication_seeds(self):
        cfg = _config()
        self.assertEqual(cfg.simulation_config(4).seed, replication_seed(2024, 4))
        self.assertEqual(cfg.simulation_config(4).cutoff_K, 200)

    def test_to_dict(self):
        data = _config().to_dict()
        self.assertEqual(data["params"], PAPER.to_dict())
        self.assertEqual(data["replications"], 12)
        self.assertEqual(data["estimators"], ["sigma2_multi", "quarticity", "curvature_logratio",
                                              "fit_least_squares"])


class TestRunExperiment(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.cfg = _config()
        cls.report = run_experiment(cls.cfg, workers=1)

    def test_records_in_order(self):
        self.assertEqual([r.index for r in self.report.records], list(range(12)))

    def test_record_reproduces_single_field(self):
        record = self.report.records[5]
        field = synthesize_field(PAPER, SIGMA, self.cfg.grid, self.cfg.simulation_config(5))
        np.testing.assert_array_equal(record.rv, realized_volatility_profile(field))

    def test_deterministic(self):
        again = run_experiment(self.cfg, workers=1)
        self.assertEqual([r.sigma2 for r in again.records], [r.sigma2 for r in self.report.records])

    def test_worker_count_does_not_change_result(self):
        parallel = run_experiment(self.cfg, workers=2)
        self.assertEqual(parallel.records, self.report.records)
        self.assertEqual(parallel.summary["sigma2_multi"].mean, self.report.summary["sigma2_multi"].mean)

    def test_summary_keys(self):
        self.assertEqual(set(self.report.summary),
                         {"sigma2_multi", "quarticity", "curvature_logratio", "iv0_hat", "kappa_hat",
                          "iv0_kappa_cov"})
        sigma2 = self.report.summary["sigma2_multi"]
        self.assertEqual(sigma2.count, 12)
        self.assertEqual(sigma2.truth, 0.0625)
        self.assertAlmostEqual(sigma2.mn_scaled_variance, 60 * sigma2.mc_variance)
        self.assertAlmostEqual(self.report.summary["iv0_hat"].truth, math.sqrt(5) / 16)

    def test_coverage_is_a_fraction(self):
        self.assertGreaterEqual(self.report.coverage, 0.0)
        self.assertLessEqual(self.report.coverage, 1.0)
        covered = np.mean([r.ci[0] <= 0.0625 <= r.ci[1] for r in self.report.records])
        self.assertEqual(self.report.coverage, covered)

    def test_no_qq_below_minimum(self):
        self.assertIsNone(self.report.qq)
        self.assertIsNone(self.report.ks_stat)
        with self.assertRaises(ValueError):
            qq_standardized_errors(self.report)

    def test_to_dict(self):
        data = self.report.to_dict()
        self.assertEqual(data["replications"], 12)
        self.assertIn("sigma2_multi", data["summary"])
        self.assertEqual(set(data["summary"]["kappa_hat"]),
                         {"mean", "mc_variance", "mn_scaled_variance", "theory_variance", "ratio", "truth",
                          "count"})


class TestExperimentEdges(unittest.TestCase):

    def test_single_replication_has_zero_variance(self):
        report = run_experiment(_config(replications=1), workers=1)
        self.assertEqual(report.summary["sigma2_multi"].mc_variance, 0.0)
        self.assertEqual(report.summary["sigma2_multi"].ratio, 0.0)

    def test_single_point_skips_curvature(self):
        with self.assertLogs("spdevol.harness", level="WARNING"):
            report = run_experiment(_config(m=1, replications=3), workers=1)
        self.assertNotIn("curvature_logratio", report.summary)
        self.assertNotIn("kappa_hat", report.summary)
        self.assertIn("sigma2_multi", report.summary)

    def test_estimator_selection(self):
        report = run_experiment(_config(estimators=("curvature_logratio",), replications=3), workers=1)
        self.assertEqual(set(report.summary), {"curvature_logratio"})
        self.assertIsNone(report.records[0].sigma2)

    def test_zero_volatility(self):
        report = run_experiment(_config(vol=VolatilitySpec.constant(0.0), replications=30), workers=1)
        self.assertEqual(report.summary["sigma2_multi"].mean, 0.0)
        self.assertIsNone(report.qq)
        self.assertNotIn("kappa_hat", report.summary)

    def test_time_varying_volatility(self):
        vol = VolatilitySpec.named("sine-intraday")
        report = run_experiment(_config(vol=vol, replications=4), workers=1)
        self.assertAlmostEqual(report.summary["sigma2_multi"].truth, vol.integrated_variance())

    def test_mean_matches_exact_oracle(self):
        cfg = _config(replications=300, estimators=("sigma2_multi",))
        report = run_experiment(cfg, workers=1)
        kp = KernelParams.for_grid(PAPER, 0.25, cfg.n, K=cfg.K)
        y = cfg.grid.y_array()
        target = np.mean([math.sqrt(0.2 * math.pi) * math.exp(5 * v) * expected_realized_volatility(kp, v, cfg.n)
                          for v in y])
        summary = report.summary["sigma2_multi"]
        self.assertLess(abs(summary.mean - target), 4 * summary.stderr_of_mean)


class TestQQ(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.report = run_experiment(_config(replications=40, estimators=("sigma2_multi",)), workers=1)

    def test_table_attached(self):
        qq = self.report.qq
        self.assertEqual(qq.against, "feasible")
        self.assertEqual(qq.errors.shape, (40,))
        self.assertTrue(np.all(np.diff(qq.errors) >= 0))
        self.assertAlmostEqual(qq.quantiles[0], -qq.quantiles[-1], places=12)
        self.assertGreaterEqual(self.report.ks_pvalue, 0.0)
        self.assertEqual(self.report.ks_stat, qq.ks_stat)

    def test_infeasible_standardization(self):
        qq = qq_standardized_errors(self.report, "infeasible")
        self.assertEqual(qq.against, "infeasible")
        self.assertFalse(np.array_equal(qq.errors, self.report.qq.errors))

    def test_bad_reference(self):
        with self.assertRaises(ValueError):
            qq_standardized_errors(self.report, "student")

    def test_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "qq.csv"
            write_qq_csv(self.report.qq, path)
            frame = pd.read_csv(path, float_precision="round_trip")
        self.assertEqual(list(frame.columns), ["normal_quantile", "standardized_error"])
        np.testing.assert_array_equal(frame["standardized_error"].to_numpy(), self.report.qq.errors)


class TestSpatialProfile(unittest.TestCase):

    def test_columns(self):
        cfg = _config(replications=5)
        frame = spatial_profile(cfg, workers=1)
        self.assertEqual(list(frame.columns), ["y", "mean_rv", "theory", "rel_dev", "mc_stderr"])
        self.assertEqual(len(frame), 3)
        theory = math.sqrt(5) / 16 / math.sqrt(math.pi) * np.exp(-5 * cfg.grid.y_array())
        np.testing.assert_allclose(frame["theory"], theory, rtol=1e-12)

    def test_reuses_report(self):
        cfg = _config(replications=5)
        report = run_experiment(cfg, workers=1)
        frame = spatial_profile(cfg, report=report)
        np.testing.assert_allclose(frame["mean_rv"], np.mean([r.rv for r in report.records], axis=0))

    def test_zero_volatility(self):
        frame = spatial_profile(_config(vol=VolatilitySpec.constant(0.0), replications=3), workers=1)
        np.testing.assert_array_equal(frame["mean_rv"], 0.0)
        np.testing.assert_array_equal(frame["rel_dev"], 0.0)

    def test_csv(self):
        frame = spatial_profile(_config(replications=3), workers=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "profile.csv"
            write_profile_csv(frame, path)
            again = pd.read_csv(path, float_precision="round_trip")
        np.testing.assert_array_equal(again["mean_rv"].to_numpy(), frame["mean_rv"].to_numpy())


class TestVarianceRatioSweep(unittest.TestCase):

    def test_rows(self):
        cfg = _config(replications=6)
        frame = variance_ratio_sweep(cfg, (2, 3), workers=1)
        self.assertEqual(list(frame["m"]), [2, 3])
        for column in ("ratio_sigma2_multi", "ratio_iv0_hat", "ratio_kappa_hat", "kappa_variance_ratio"):
            self.assertIn(column, frame.columns)
        self.assertTrue(np.all(frame["ratio_sigma2_multi"] > 0))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "ratios.csv"
            write_ratios_csv(frame, path)
            self.assertEqual(len(pd.read_csv(path)), 2)

    def test_explicit_points_are_replaced(self):
        cfg = _config(y=(0.3, 0.6), replications=2)
        frame = variance_ratio_sweep(replace(cfg, estimators=("sigma2_multi",)), (4,), workers=1)
        self.assertEqual(list(frame["m"]), [4])


if __name__ == "__main__":
    unittest.main()

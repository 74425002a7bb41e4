import io
import json
import logging
import subprocess
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np
import pandas as pd

from spdevol.cli import BUILTIN_CONFIG, build_parser, dispatch
from spdevol.estimate import sigma2_multi
from spdevol.factories import ConfigLoader, ExperimentFactory, ModelFactory
from spdevol.model import OperatorParams, VolatilitySpec
from spdevol.utils import setup_logging
from spdevol.utils.fieldio import read_field_csv, sidecar_path

PAPER = OperatorParams(0.0, 1.0, 0.2)
SMALL = ["--n", "50", "--m", "3", "--K", "500", "--seed", "7", "-q"]


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = dispatch(argv)
    return code, out.getvalue(), err.getvalue()


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        logging.getLogger().handlers.clear()
        self.tmp.cleanup()

    def _write_json(self, name, data):
        path = self.dir / name
        path.write_text(json.dumps(data))
        return str(path)


class TestExitCodes(CliTestCase):

    def test_help(self):
        code, out, _ = _run(["--help"])
        self.assertEqual(code, 0)
        self.assertIn("simulate", out)

    def test_unknown_subcommand(self):
        code, _, err = _run(["plot"])
        self.assertEqual(code, 1)
        self.assertIn("error", err)

    def test_bad_flag(self):
        self.assertEqual(_run(["gamma", "--frobnicate"])[0], 1)
        self.assertEqual(_run(["gamma", "--tol", "abc"])[0], 1)
        self.assertEqual(_run(["oracle", "--lags", "1,x"])[0], 1)

    def test_missing_argument(self):
        self.assertEqual(_run(["estimate"])[0], 1)

    def test_missing_config_file(self):
        self.assertEqual(_run(["gamma", "--config", str(self.dir / "missing.json")])[0], 2)

    def test_invalid_config(self):
        path = self._write_json("bad.json", {"params": {"theta0": 0.0}})
        self.assertEqual(_run(["gamma", "--config", path])[0], 1)

    def test_invalid_parameters(self):
        path = self._write_json("params.json", {"theta0": 0.0, "theta1": 1.0, "theta2": -0.2})
        self.assertEqual(_run(["simulate", "--params", path] + SMALL)[0], 1)
        self.assertEqual(_run(["simulate"] + SMALL + ["--refinement", "0"])[0], 1)


class TestGammaCommand(CliTestCase):

    def test_values(self):
        code, out, _ = _run(["gamma", "--tol", "1e-8", "-q"])
        self.assertEqual(code, 0)
        result = json.loads(out)
        self.assertEqual(set(result), {"gamma", "S", "terms", "tail_bound"})
        self.assertAlmostEqual(result["S"], 0.357487, delta=1e-5)
        self.assertAlmostEqual(result["gamma"], 0.75, delta=0.005)

    def test_output_file(self):
        path = self.dir / "gamma.json"
        self.assertEqual(_run(["gamma", "-q", "-o", str(path)])[0], 0)
        self.assertIn("gamma", json.loads(path.read_text()))

    def test_startup_skips_table_stack(self):
        script = "import sys, spdevol.cli; print('pandas' in sys.modules, 'spdevol.harness' in sys.modules)"
        result = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True,
                                cwd=Path(__file__).resolve().parents[2], check=True)
        self.assertEqual(result.stdout.split(), ["False", "False"])


class TestFieldCommands(CliTestCase):

    def _simulate(self, name="field.csv", extra=()):
        path = self.dir / name
        code, _, _ = _run(["simulate", "-o", str(path)] + SMALL + list(extra))
        self.assertEqual(code, 0)
        return path

    def test_simulate_writes_field_and_provenance(self):
        path = self._simulate()
        field = read_field_csv(path)
        self.assertEqual(field.values.shape, (51, 3))
        self.assertEqual(field.config.seed, 7)
        self.assertTrue(sidecar_path(path).exists())

    def test_simulate_is_reproducible(self):
        a = self._simulate("a.csv")
        b = self._simulate("b.csv")
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_simulate_to_stdout(self):
        code, out, _ = _run(["simulate"] + SMALL)
        self.assertEqual(code, 0)
        self.assertEqual(out.splitlines()[0], "t,0.250000,0.500000,0.750000")
        self.assertEqual(len(out.splitlines()), 52)

    def test_estimate(self):
        path = self._simulate()
        report_path = self.dir / "report.json"
        self.assertEqual(_run(["estimate", str(path), "-q", "-o", str(report_path)])[0], 0)
        report = json.loads(report_path.read_text())
        self.assertAlmostEqual(report["sigma2"], sigma2_multi(read_field_csv(path), PAPER, warn=False), places=14)
        self.assertLessEqual(report["ci"]["lo"], report["sigma2"])
        self.assertEqual(len(report["per_point"]), 3)
        self.assertEqual((report["n"], report["m"]), (50, 3))

    def test_estimate_missing_file(self):
        self.assertEqual(_run(["estimate", str(self.dir / "missing.csv"), "-q"])[0], 2)

    def test_estimate_malformed_file(self):
        path = self.dir / "bad.csv"
        path.write_text("time,0.5\n0,0\n1,1\n")
        self.assertEqual(_run(["estimate", str(path), "-q"])[0], 1)

    def test_fit(self):
        path = self._simulate()
        code, out, _ = _run(["fit", str(path), "-q"])
        self.assertEqual(code, 0)
        result = json.loads(out)
        self.assertEqual(set(result), {"iv0_hat", "kappa_hat", "stderr", "cov", "converged", "iterations", "rss"})
        self.assertGreater(result["iv0_hat"], 0.0)
        cov = np.array(result["cov"])
        np.testing.assert_allclose(cov, cov.T)

    def test_fit_single_point(self):
        path = self._simulate(extra=["--m", "1"])
        self.assertEqual(_run(["fit", str(path), "-q"])[0], 1)


class TestOracleCommand(CliTestCase):

    def test_report(self):
        code, out, _ = _run(["oracle", "--n", "100", "--K", "500", "--y", "0.5", "--lags", "1,2",
                             "--i", "1,5", "-q"])
        self.assertEqual(code, 0)
        report = json.loads(out)
        self.assertEqual([entry["lag"] for entry in report["autocorrelation"]], [1, 2])
        self.assertAlmostEqual(report["autocorrelation"][0]["theory"], (np.sqrt(2) - 2) / 2, places=12)
        self.assertEqual([entry["i"] for entry in report["sq_increment"]], [1, 5])
        for entry in report["sq_increment"]:
            self.assertAlmostEqual(entry["exact"], entry["exact_cov"], delta=1e-12 * entry["exact"])
        self.assertGreater(report["expected_realized_volatility"], 0.0)

    def test_time_varying_volatility_rejected(self):
        vol = self._write_json("vol.json", VolatilitySpec.named("sine-intraday").to_dict())
        self.assertEqual(_run(["oracle", "--vol", vol, "--K", "50", "-q"])[0], 1)

    def test_bad_point(self):
        self.assertEqual(_run(["oracle", "--y", "1.5", "--K", "50", "-q"])[0], 1)


class TestMonteCarloCommand(CliTestCase):

    def test_report_and_tables(self):
        qq, profile = self.dir / "qq.csv", self.dir / "profile.csv"
        report_path = self.dir / "mc.json"
        code, _, _ = _run(["mc", "--n", "20", "--m", "3", "--K", "200", "--reps", "40", "--workers", "1",
                           "--emit", f"{qq},{profile}", "-o", str(report_path), "-q"])
        self.assertEqual(code, 0)
        report = json.loads(report_path.read_text())
        self.assertEqual(report["replications"], 40)
        self.assertEqual(report["config"]["seed"], 20190101)
        self.assertIsNotNone(report["ks_stat"])
        self.assertEqual(len(pd.read_csv(qq)), 40)
        self.assertEqual(list(pd.read_csv(profile).columns), ["y", "mean_rv", "theory", "rel_dev", "mc_stderr"])

    def test_ratio_sweep(self):
        ratios = self.dir / "ratios.csv"
        code, _, _ = _run(["mc", "--n", "20", "--K", "200", "--reps", "4", "--workers", "1",
                           "--emit", str(ratios), "--sweep-m", "2,3", "-q"])
        self.assertEqual(code, 0)
        self.assertEqual(list(pd.read_csv(ratios)["m"]), [2, 3])

    def test_unknown_table(self):
        code, _, _ = _run(["mc", "--n", "20", "--K", "200", "--reps", "2", "--workers", "1",
                           "--emit", str(self.dir / "histogram.csv"), "-q"])
        self.assertEqual(code, 1)

    def test_qq_needs_enough_replications(self):
        code, _, _ = _run(["mc", "--n", "20", "--m", "3", "--K", "200", "--reps", "5", "--workers", "1",
                           "--emit", str(self.dir / "qq.csv"), "-q"])
        self.assertEqual(code, 1)


class TestParser(unittest.TestCase):

    def test_common_options_on_every_command(self):
        parser = build_parser()
        for command in ("simulate", "oracle", "gamma", "mc"):
            args = parser.parse_args([command, "--n", "10", "--seed", "3"])
            self.assertEqual((args.n, args.seed), (10, 3))

    def test_defaults(self):
        args = build_parser().parse_args(["mc"])
        self.assertEqual(args.sweep_m, [9, 19, 29, 39, 49, 59, 69, 79, 89, 99])
        self.assertIsNone(args.reps)


class TestConfigLoader(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_default_file(self):
        config = ConfigLoader.load_config()
        self.assertEqual(config["params"], BUILTIN_CONFIG["params"])
        self.assertEqual(config["seed"], 20190101)

    def test_explicit_file(self):
        path = self.dir / "config.json"
        path.write_text(json.dumps(BUILTIN_CONFIG))
        self.assertEqual(ConfigLoader.load_config(str(path)), BUILTIN_CONFIG)

    def test_missing_field(self):
        path = self.dir / "config.json"
        path.write_text(json.dumps({key: v for key, v in BUILTIN_CONFIG.items() if key != "K"}))
        with self.assertRaises(ValueError):
            ConfigLoader.load_config(str(path))

    def test_missing_vol_kind(self):
        path = self.dir / "config.json"
        path.write_text(json.dumps({**BUILTIN_CONFIG, "vol": {"sigma": 0.25}}))
        with self.assertRaises(ValueError):
            ConfigLoader.load_config(str(path))

    def test_invalid_json(self):
        path = self.dir / "config.json"
        path.write_text("{not json")
        with self.assertRaises(json.JSONDecodeError):
            ConfigLoader.load_config(str(path))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            ConfigLoader.load_config(str(self.dir / "missing.json"))


class TestFactories(unittest.TestCase):

    def test_model_factory(self):
        params = ModelFactory.create_params({"theta0": 0.0, "theta1": 1.0, "theta2": 0.2})
        self.assertEqual(params, PAPER)
        vol = ModelFactory.create_volatility({"kind": "constant", "sigma": 0.25})
        self.assertEqual(vol.sigma, 0.25)
        self.assertEqual(ModelFactory.create_grid(10, y=[0.3, 0.6]).y, (0.3, 0.6))
        self.assertEqual(ModelFactory.create_grid(10, m=4).m, 4)

    def test_model_factory_errors(self):
        with self.assertRaises(ValueError):
            ModelFactory.create_params({"theta0": 0.0})
        with self.assertRaises(ValueError):
            ModelFactory.create_volatility({"kind": "rough"})

    def test_simulation_config_factory(self):
        sim = ModelFactory.create_simulation_config({"K": 500, "seed": 7, "initial_condition": "stationary"})
        self.assertEqual((sim.cutoff_K, sim.seed, sim.initial_condition, sim.refinement), (500, 7, "stationary", 1))
        with self.assertLogs("spdevol.factories.model_factory", level="ERROR"):
            with self.assertRaises(ValueError):
                ModelFactory.create_simulation_config({"K": 0})

    def test_experiment_factory(self):
        cfg = ExperimentFactory.create(BUILTIN_CONFIG, n=20, m=None, replications=5)
        self.assertEqual((cfg.n, cfg.m, cfg.replications), (20, 9, 5))
        self.assertEqual(cfg.params, PAPER)
        self.assertEqual(cfg.seed, 20190101)

    def test_experiment_factory_explicit_points(self):
        cfg = ExperimentFactory.create({**BUILTIN_CONFIG, "y": [0.2, 0.8]}, n=100)
        self.assertEqual(cfg.m, 2)

    def test_experiment_factory_needs_model(self):
        with self.assertRaises(ValueError):
            ExperimentFactory.create({"n": 10})


class TestLogging(unittest.TestCase):

    def tearDown(self):
        logging.getLogger().handlers.clear()

    def test_console_only(self):
        root = setup_logging(logging.WARNING)
        self.assertEqual(len(root.handlers), 1)
        self.assertEqual(root.level, logging.WARNING)

    def test_rotating_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = setup_logging(logging.INFO, log_dir=tmp)
            logging.getLogger("spdevol.test").info("written to file")
            for handler in root.handlers:
                handler.flush()
            files = list(Path(tmp).glob("spdevol_*.log"))
            self.assertEqual(len(files), 1)
            self.assertIn("written to file", files[0].read_text())
            for handler in root.handlers:
                handler.close()
            root.handlers.clear()


if __name__ == "__main__":
    unittest.main()

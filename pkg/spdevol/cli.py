"""
Command-line interface: simulate / estimate / fit / oracle / gamma / mc

Exit codes: 0 success, 1 validation error (including bad flags), 2 I/O error.
Diagnostics go to standard error; data goes to files or standard output.
"""

import sys
import json
import logging
import argparse
from dataclasses import replace
from pathlib import Path

from spdevol.estimate import quarticity, volatility_report
from spdevol.factories import ConfigLoader, ExperimentFactory, ModelFactory
from spdevol.oracle import KernelParams, gamma_series, moment_report
from spdevol.regress import FitOptions, build_regression_data, fit_least_squares
from spdevol.simulate import INITIAL_CONDITIONS, synthesize_field
from spdevol.utils import setup_logging

# pandas-backed modules (fieldio, harness) are imported by the commands that use them

logger = logging.getLogger(__name__)

# used when no configuration file is given and spdevol_config.json is absent
BUILTIN_CONFIG = {
    "params": {"theta0": 0.0, "theta1": 1.0, "theta2": 0.2},
    "vol": {"kind": "constant", "sigma": 0.25},
    "n": 1000,
    "m": 9,
    "K": 10000,
    "refinement": 1,
    "initial_condition": "zero",
    "replications": 3000,
    "seed": 20190101,
    "level": 0.95,
    "log_dir": None,
    "journal": False,
}
SWEEP_M_VALUES = tuple(10 * i - 1 for i in range(1, 11))
EMIT_KINDS = ("qq", "profile", "ratios")


class CliUsageError(ValueError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2"""

    def error(self, message):
        raise CliUsageError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    common = _ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    common.add_argument("--log-dir", help="also write a rotating log file to this directory")
    common.add_argument("--config", help="JSON configuration (default: spdevol_config.json)")
    common.add_argument("--params", help="JSON file with theta0, theta1, theta2")
    common.add_argument("--vol", help="JSON volatility spec")
    common.add_argument("--n", type=int, help="number of time steps")
    common.add_argument("--m", type=int, help="number of equispaced spatial points")
    common.add_argument("--K", type=int, help="spectral cutoff")
    common.add_argument("--seed", type=int, help="64-bit seed")
    common.add_argument("--level", type=float, help="confidence level")
    common.add_argument("--refinement", type=int, help="sub-steps per observation interval")
    common.add_argument("--init", choices=INITIAL_CONDITIONS, help="initial condition")
    common.add_argument("-o", "--output", help="output path (default: standard output)")

    parser = _ArgumentParser(prog="spdevol", description="SPDE volatility simulation and estimation toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    sub.add_parser("simulate", parents=[common], help="simulate a field and write it as CSV")

    p = sub.add_parser("estimate", parents=[common], help="volatility report for a field CSV")
    p.add_argument("field", help="field CSV")

    p = sub.add_parser("fit", parents=[common], help="least-squares fit of (IV0, kappa)")
    p.add_argument("field", help="field CSV")

    p = sub.add_parser("oracle", parents=[common], help="first-order and exact moments")
    p.add_argument("--y", type=float, default=0.5, help="spatial point")
    p.add_argument("--lags", type=_int_list, default=[1, 2, 3], help="autocorrelation lags")
    p.add_argument("--i", type=_int_list, default=[1], help="time indices for exact moments")

    p = sub.add_parser("gamma", parents=[common], help="the constant Gamma")
    p.add_argument("--tol", type=float, default=1e-8, help="tail bound tolerance")

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo experiment")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--workers", type=int, help="worker processes (capped by SPDEVOL_THREADS)")
    p.add_argument("--emit", help="comma-separated CSV outputs, e.g. qq.csv,profile.csv,ratios.csv")
    p.add_argument("--sweep-m", type=_int_list, default=list(SWEEP_M_VALUES),
                   help="m values for ratios.csv")
    return parser


def _load_config(args):
    if args.config is not None:
        return ConfigLoader.load_config(args.config)
    try:
        return ConfigLoader.load_config()
    except FileNotFoundError:
        logger.debug("No configuration file found, using built-in defaults")
        return dict(BUILTIN_CONFIG)


def _params(args, config, field=None):
    if args.params is not None:
        return ModelFactory.create_params(ConfigLoader.load_json(args.params))
    if field is not None and field.params is not None:
        logger.debug("Operator parameters taken from field provenance")
        return field.params
    return ModelFactory.create_params(config["params"])


def _vol(args, config):
    data = ConfigLoader.load_json(args.vol) if args.vol is not None else config["vol"]
    return ModelFactory.create_volatility(data)


def _pick(value, config, key):
    return value if value is not None else config.get(key, BUILTIN_CONFIG[key])


def _write_json(data, output):
    text = json.dumps(data, indent=2)
    if output is None:
        sys.stdout.write(text + "\n")
    else:
        Path(output).write_text(text + "\n")
        logger.info(f"Report written to {output}")


def cmd_simulate(args, config):
    from spdevol.utils.fieldio import write_field_csv

    params = _params(args, config)
    vol = _vol(args, config)
    n = _pick(args.n, config, "n")
    grid = ModelFactory.create_grid(n, m=_pick(args.m, config, "m"),
                                    y=config.get("y") if args.m is None else None)
    sim = ModelFactory.create_simulation_config({
        "K": _pick(args.K, config, "K"),
        "seed": _pick(args.seed, config, "seed"),
        "initial_condition": _pick(args.init, config, "initial_condition"),
        "refinement": _pick(args.refinement, config, "refinement"),
    })
    logger.info(f"Simulating field: n={grid.n}, m={grid.m}, K={sim.cutoff_K}, seed={sim.seed}")
    field = synthesize_field(params, vol, grid, sim)
    write_field_csv(field, args.output if args.output is not None else sys.stdout)
    return 0


def cmd_estimate(args, config):
    from spdevol.utils.fieldio import read_field_csv

    field = read_field_csv(args.field)
    params = _params(args, config, field)
    report = volatility_report(field, params, _pick(args.level, config, "level"))
    _write_json(report, args.output)
    return 0


def cmd_fit(args, config):
    from spdevol.utils.fieldio import read_field_csv

    field = read_field_csv(args.field)
    params = _params(args, config, field)
    data = build_regression_data(field)
    opts = FitOptions(theta2=params.theta2, quart_integral=quarticity(field, params))
    fit = fit_least_squares(data, opts)
    _write_json(fit.to_dict(), args.output)
    return 0


def cmd_oracle(args, config):
    params = _params(args, config)
    vol = _vol(args, config)
    if not vol.is_constant:
        raise ValueError("Exact moments are available for constant volatility only")
    n = _pick(args.n, config, "n")
    kp = KernelParams.for_grid(params, vol.sigma, n, K=_pick(args.K, config, "K"))
    report = moment_report(kp, args.y, n, args.lags, args.i, _pick(args.init, config, "initial_condition"))
    _write_json(report, args.output)
    return 0


def cmd_gamma(args, config):
    _write_json(gamma_series(args.tol).to_dict(), args.output)
    return 0


def _emit_targets(emit):
    targets = {}
    for item in (s.strip() for s in emit.split(",") if s.strip()):
        kind = next((k for k in EMIT_KINDS if Path(item).stem.startswith(k)), None)
        if kind is None:
            raise ValueError(f"Cannot tell what to emit to {item!r}; expected one of {EMIT_KINDS}")
        targets[kind] = item
    return targets


def cmd_mc(args, config):
    from spdevol.harness import (
        qq_standardized_errors,
        run_experiment,
        spatial_profile,
        variance_ratio_sweep,
        write_profile_csv,
        write_qq_csv,
        write_ratios_csv,
    )

    targets = _emit_targets(args.emit) if args.emit else {}
    cfg = ExperimentFactory.create(
        config, n=args.n, m=args.m, K=args.K, seed=args.seed, level=args.level,
        replications=args.reps, refinement=args.refinement, initial_condition=args.init)
    if args.m is not None and cfg.y is not None:
        cfg = replace(cfg, y=None, m=args.m)
    if args.params is not None:
        cfg = replace(cfg, params=_params(args, config))
    if args.vol is not None:
        cfg = replace(cfg, vol=_vol(args, config))

    report = run_experiment(cfg, workers=args.workers)
    _write_json(report.to_dict(), args.output)

    if "qq" in targets:
        write_qq_csv(report.qq if report.qq is not None else qq_standardized_errors(report), targets["qq"])
    if "profile" in targets:
        write_profile_csv(spatial_profile(cfg, report), targets["profile"])
    if "ratios" in targets:
        write_ratios_csv(variance_ratio_sweep(cfg, args.sweep_m, workers=args.workers), targets["ratios"])
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "fit": cmd_fit,
    "oracle": cmd_oracle,
    "gamma": cmd_gamma,
    "mc": cmd_mc,
}


def _log_level(args):
    if getattr(args, "verbose", False):
        return logging.DEBUG
    if getattr(args, "quiet", False):
        return logging.WARNING
    return logging.INFO


def dispatch(argv):
    """Parse argv, run the subcommand and return the exit code"""
    try:
        args = build_parser().parse_args(argv)
    except CliUsageError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 1

    level = _log_level(args)
    setup_logging(log_level=level, log_dir=args.log_dir)
    try:
        config = _load_config(args)
        log_dir = args.log_dir or config.get("log_dir")
        if log_dir and log_dir.startswith("~"):
            log_dir = str(Path(log_dir).expanduser())
        if log_dir != args.log_dir or config.get("journal"):
            setup_logging(log_level=level, log_dir=log_dir, journal=bool(config.get("journal")))
        logger.debug(f"Running '{args.command}'")
        return COMMANDS[args.command](args, config)

    except ValueError as e:
        logger.error(f"{args.command}: {e}")
        return 1
    except OSError as e:
        logger.error(f"{args.command}: {e}")
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""
Command line interface of the experiment harness::

    pyenksgd --problem nls_rosenbrock --method enksgd --particles 8 --beta 1e-8 --delta 1e-3 \\
        --runs 30 --budget 500 --seed 7 --out trace.csv

Settings can also be read from a ``key = value`` file given by ``--config``. Flags on the command line take
precedence over the file.
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence
from pyenksgd.enksgd import OptimizerConfig
from pyenksgd.harness import (METHODS, ExperimentConfig, ExperimentError, build_problem, run_experiment,
                               format_summary)
from pyenksgd.problems import available_problems, UnknownProblemError, ProblemDomainError
from pyenksgd.io import emit_trace, write_summary, write_dataset, load_config_file, normalize_key

logger = logging.getLogger(__name__)

def _positive_int(value: str) -> int:
    number = int(value)

    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")

    return number

def _float_list(value: str) -> List[float]:
    try:
        return [float(item) for item in value.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {value}") from exc

def build_parser() -> argparse.ArgumentParser:
    """
    Builds the argument parser. All optimizer constants default to the benchmark values.
    """
    defaults = OptimizerConfig()
    parser = argparse.ArgumentParser(
        prog="pyenksgd",
        description="Runs seeded derivative-free optimization experiments.",
        epilog=f"problems: {', '.join(available_problems())}; methods: {', '.join(METHODS)}")

    parser.add_argument("--config", help="key = value file with default settings")
    parser.add_argument("--problem", help="registered problem name")
    parser.add_argument("--method", choices=METHODS, default="enksgd")
    parser.add_argument("--particles", type=int, default=defaults.particles, help="ensemble size K")
    parser.add_argument("--beta", type=float, default=defaults.beta, help="perturbation strength")
    parser.add_argument("--delta", type=float, default=defaults.delta, help="scale parameter")
    parser.add_argument("--runs", type=_positive_int, default=30)
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--budget", type=_positive_int, help="forward evaluations per run")
    parser.add_argument("--max-iters", type=_positive_int, default=defaults.n_max)
    parser.add_argument("--noise-sigma", type=float, default=0.0, help="forward-map noise level")
    parser.add_argument("--out", help="trace file")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--summary", help="JSON summary file")
    parser.add_argument("--dataset", help="CSV file for the problem data and starting point")
    parser.add_argument("--problem-seed", type=int, help="dataset seed, defaults to the master seed")
    parser.add_argument("--dimension", type=_positive_int, help="problem dimension where supported")
    parser.add_argument("--x0", type=_float_list, help="starting point, a single value is broadcast")
    parser.add_argument("--sigma0", type=float, default=defaults.sigma_0, help="initial deviation scale")
    parser.add_argument("--stencil", type=float, default=1e-4, help="finite difference stencil size")
    parser.add_argument("--mu-ls", type=float, default=defaults.mu_ls)
    parser.add_argument("--c-ls", type=float, default=defaults.c_ls)
    parser.add_argument("--tau-ls", type=float, default=defaults.tau_ls)
    parser.add_argument("--l-max", type=int, default=defaults.l_max)
    parser.add_argument("--gamma-lb", type=float, default=defaults.gamma_lb)
    parser.add_argument("--gamma-ub", type=float, default=defaults.gamma_ub)
    parser.add_argument("--workers", type=_positive_int, help="parallel runs, defaults to the CPU count")
    parser.add_argument("-v", "--verbose", action="count", default=0)

    return parser

def _converter(action: argparse.Action):
    if action.type is not None:
        return action.type

    # count flags such as -v
    if isinstance(action.default, int):
        return int

    return str

def _apply_config_file(parser: argparse.ArgumentParser, path: str):
    """
    Installs the values of a config file as parser defaults, so flags given on the command line win.
    """
    try:
        values = load_config_file(path)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))

    actions = {action.dest: action for action in parser._actions}  # pylint: disable=protected-access

    for key, raw in values.items():
        dest = normalize_key(key)

        if dest not in actions or dest in ("help", "config"):
            parser.error(f"unknown key '{key}' in config file {path}")

        action = actions[dest]

        try:
            value = _converter(action)(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            parser.error(f"invalid value for '{key}' in config file {path}: {exc}")

        if action.choices is not None and value not in action.choices:
            parser.error(f"invalid value '{raw}' for '{key}' in config file {path}")

        parser.set_defaults(**{dest: value})

def parse_cli(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    """
    Parses command line arguments into an experiment config.

    :param argv: The arguments without the program name, ``sys.argv[1:]`` if omitted.
    :return: The experiment config.
    :raises SystemExit: With exit code 2 on usage errors.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.config is not None:
        _apply_config_file(parser, args.config)
        args = parser.parse_args(argv)

    if args.problem is None:
        parser.error(f"--problem is required. Available problems: {', '.join(available_problems())}; "
                     f"methods: {', '.join(METHODS)}")

    if args.problem not in available_problems():
        parser.error(f"unknown problem '{args.problem}'. Available problems: {', '.join(available_problems())}")

    optimizer = OptimizerConfig(particles=args.particles, beta=args.beta, delta=args.delta, mu_ls=args.mu_ls,
                                c_ls=args.c_ls, tau_ls=args.tau_ls, l_max=args.l_max, gamma_lb=args.gamma_lb,
                                gamma_ub=args.gamma_ub, n_max=args.max_iters, sigma_0=args.sigma0,
                                budget=args.budget)

    params = {"sigma": args.noise_sigma, "seed": args.problem_seed, "dimension": args.dimension}
    config = ExperimentConfig(problem=args.problem, method=args.method, optimizer=optimizer, runs=args.runs,
                              master_seed=args.seed, budget=args.budget,
                              problem_params={key: value for key, value in params.items() if value is not None},
                              x0=args.x0, stencil=args.stencil, workers=args.workers, output=args.out,
                              output_format=args.format, summary_output=args.summary,
                              dataset_output=args.dataset, verbosity=args.verbose)

    try:
        config.validate()
        n_x = build_problem(config).n_x
    except ValueError as exc:
        parser.error(str(exc))

    if config.x0 is not None and len(config.x0) not in (1, n_x):
        parser.error(f"--x0 has {len(config.x0)} values, problem '{config.problem}' has dimension {n_x}")

    return config

def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``pyenksgd`` command.

    :return: 0 on success, 1 if the experiment failed.
    """
    config = parse_cli(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(config.verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        results, stats = run_experiment(config)
    except (ExperimentError, UnknownProblemError, ProblemDomainError, ValueError) as exc:
        logger.error("%s", exc)
        return 1

    try:
        if config.output is not None:
            emit_trace(results, config.output_format, config.output, config.to_dict())

        if config.summary_output is not None:
            write_summary(stats, config.summary_output, config.to_dict())

        if config.dataset_output is not None:
            write_dataset(build_problem(config), config.dataset_output)
    except OSError as exc:
        logger.error("%s", exc)
        return 1

    print(format_summary(stats, label=config.method))

    return 0

if __name__ == "__main__":
    sys.exit(main())

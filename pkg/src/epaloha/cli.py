import argparse
import contextlib
import logging
import sys
from typing import Iterator, List, Optional, TextIO

from .commands import PRESETS, FORMULAS, cmd_analytic, cmd_figure, cmd_phy, cmd_simulate, split_overrides
from .exceptions import ConfigError, EpalohaError, UsageError
from .mac import Scheme
from .model import SystemConfig
from .selftest import cmd_selftest
from .sweep import VARIABLES, SweepSpec
from .utils import configure_logging, parse_assignment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DEFAULT_TRIALS = 10_000
SELFTEST_TRIALS = 200_000


@contextlib.contextmanager
def _output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            yield f


def _overrides(args) -> dict:
    pairs = {}
    for item in args.set or []:
        try:
            key, value = parse_assignment(item)
        except ConfigError as e:
            raise UsageError(str(e))
        pairs[key] = value
    return pairs


def _build(args):
    system, traffic = split_overrides(_overrides(args))
    if getattr(args, "mode", None):
        system["estimation_mode"] = args.mode
    config = SystemConfig(env_path=args.config, **system)
    return config, traffic


def _trials(args, default: int) -> int:
    if args.trials is None:
        return default
    if args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")
    return args.trials


def _sweep(args, traffic) -> SweepSpec:
    if args.var is None or args.start is None:
        raise UsageError("a sweep needs --var and --start")
    stop = args.start if args.stop is None else args.stop
    return SweepSpec(args.var, args.start, stop, args.step, overrides=traffic,
                     trials=_trials(args, DEFAULT_TRIALS),
                     slots=args.slots, warmup=args.warmup, seed=args.seed, workers=args.workers)


def run_analytic(args) -> int:
    config, traffic = _build(args)
    table = cmd_analytic(_sweep(args, traffic), args.which, config)
    with _output(args.out) as out:
        table.write(out)
    return EXIT_OK


def run_simulate(args) -> int:
    config, traffic = _build(args)
    schemes = [Scheme.CONVENTIONAL, Scheme.EXPLORATION] if args.scheme == "both" else [Scheme(args.scheme)]
    table = cmd_simulate(schemes, _sweep(args, traffic), config)
    with _output(args.out) as out:
        table.write(out)
    return EXIT_OK


def run_phy(args) -> int:
    config, traffic = _build(args)
    spec = _sweep(args, traffic)
    with contextlib.ExitStack() as stack:
        dump = stack.enter_context(_output(args.dump)) if args.dump else None
        table = cmd_phy(spec, config, dump)
    with _output(args.out) as out:
        table.write(out)
    return EXIT_OK


def run_figure(args) -> int:
    config, traffic = _build(args)
    if traffic:
        raise UsageError(f"figure presets fix their own traffic; drop --set {', '.join(traffic)}")
    grid = None
    if args.start is not None:
        stop = args.start if args.stop is None else args.stop
        grid = (args.start, stop, args.step)
    table = cmd_figure(args.command, config, trials=_trials(args, DEFAULT_TRIALS), slots=args.slots,
                       warmup=args.warmup, seed=args.seed, workers=args.workers, grid=grid)
    with _output(args.out) as out:
        table.write(out)
    return EXIT_OK


def run_selftest(args) -> int:
    results = cmd_selftest(trials=_trials(args, SELFTEST_TRIALS), seed=args.seed)
    with _output(args.out) as out:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}", file=out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("failed checks: %s", ", ".join(failed))
        return EXIT_FAILED
    return EXIT_OK


def run_config(args) -> int:
    """Print a commented template, or load a config file and print the resolved values."""
    if args.example:
        print(SystemConfig.example())
        return EXIT_OK
    try:
        config = SystemConfig(env_path=args.file, **split_overrides(_overrides(args))[0])
    except EpalohaError as e:
        print(f"Configuration check failed: {e}", file=sys.stderr)
        return EXIT_FAILED
    for key, value in config.to_dict(by_key=True).items():
        print(f"{key} = {getattr(value, 'value', value)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", metavar="FILE",
                        help="config file (flat key=value, .json or .toml); repeatable, later wins")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, or fix a traffic value (lambda, lambda0, K, alpha, alpha0, delta)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point (selftest: 200000, else 10000)")
    common.add_argument("--slots", type=int, default=100_000, help="measured slots of a fast-retrial chain")
    common.add_argument("--warmup", type=int, default=1_000, help="slots discarded before measuring")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", metavar="FILE", help="write CSV here instead of stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--quiet", action="store_true")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--start", type=float)
    grid.add_argument("--stop", type=float)
    grid.add_argument("--step", type=float, default=1.0)
    sweep = argparse.ArgumentParser(add_help=False, parents=[grid])
    sweep.add_argument("--var", choices=VARIABLES)

    parser = argparse.ArgumentParser(prog="epaloha",
                                     description="Multichannel ALOHA with an exploration phase: "
                                                 "closed forms, Monte Carlo and preamble detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", parents=[common, sweep], help="tabulate closed-form expressions")
    p.add_argument("which", help=f"formula family: {', '.join(sorted(FORMULAS))}")
    p.set_defaults(func=run_analytic)

    p = sub.add_parser("simulate", parents=[common, sweep], help="Monte Carlo sweep")
    p.add_argument("--scheme", choices=("ma", "ep", "both"), default="both")
    p.add_argument("--mode", choices=("ideal", "pool", "phy"), help="count estimation mode")
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("phy", parents=[common, sweep], help="preamble detection accuracy")
    p.add_argument("--dump", metavar="FILE", help="write (snr_db, k, k_hat, count) confusion rows")
    p.set_defaults(func=run_phy)

    p = sub.add_parser("selftest", parents=[common], help="run the built-in consistency checks")
    p.set_defaults(func=run_selftest)

    for name, preset in PRESETS.items():
        p = sub.add_parser(name, parents=[common, grid], help=preset.help)
        p.set_defaults(func=run_figure)

    p = sub.add_parser("config", parents=[common], help="check a config file or print a template")
    p.add_argument("file", nargs="?", help="config file to load and print")
    p.add_argument("--example", action="store_true", help="print a commented template")
    p.set_defaults(func=run_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except EpalohaError as e:
        logger.debug("command failed", exc_info=True)
        print(f"epaloha: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
pfedac CLI - run, sweep, check-assumptions and verify
"""
import os
import sys
from typing import Optional

import click
from colorama import Fore, Style, init as colorama_init
from dotenv import load_dotenv

from pfedac.flow import configure_logging, run_assumption_check, run_experiment, verify
from pfedac.utils.config import RunConfig, parse_config
from pfedac.utils.error_handler import UNEXPECTED_ERROR_EXIT_CODE, ErrorReporter, InvariantViolation

load_dotenv()

DEBUG_MODE = os.getenv("PFEDAC_DEBUG", "0") == "1"

error_reporter = ErrorReporter()


def _fail(error: BaseException) -> None:
    """Log the error, print one machine-parsable line on stderr and exit with its code"""
    context = error_reporter.handle_error(error)
    click.echo(ErrorReporter.format_error_line(context), err=True)
    sys.exit(context.exit_code or UNEXPECTED_ERROR_EXIT_CODE)


def _load(config_path: str, seed: Optional[int], workers: Optional[int], output: Optional[str],
          debug_invariants: bool) -> RunConfig:
    config = parse_config(config_path)
    return config.with_overrides(
        seed=seed,
        workers=workers,
        output_dir=output,
        debug_invariants=True if (debug_invariants or DEBUG_MODE) else None,
    )


def _run_options(func):
    func = click.option("--verbose", is_flag=True, help="Log at DEBUG level")(func)
    func = click.option("--debug-invariants", is_flag=True, help="Check runtime invariants every round")(func)
    func = click.option("--output", type=click.Path(file_okay=False), help="Override output_dir")(func)
    func = click.option("--workers", type=click.IntRange(min=1), help="Worker threads for the agents")(func)
    func = click.option("--seed", type=int, help="Override the root seed")(func)
    func = click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
                        help="Path to the YAML run config")(func)
    return func


@click.group()
def main():
    """pfedac - personalized federated actor-critic simulator on finite MDPs"""
    colorama_init()


@main.command()
@_run_options
def run(config_path, seed, workers, output, debug_invariants, verbose):
    """Run pfedac (or the configured baseline) and write metrics.csv and summary.json"""
    try:
        config = _load(config_path, seed, workers, output, debug_invariants)
        configure_logging(config.output_dir, verbose)
        summary = run_experiment(config, config_path)
    except Exception as e:
        _fail(e)
    averages = summary.get("time_averages", {})
    click.echo(f"mode={summary.get('mode', config.mode)} output={config.output_dir}")
    if averages:
        click.echo(f"x_bar_T={averages['x_bar_T']} pad_T={averages['pad_T']} g_bar_T={averages['g_bar_T']}")


@main.command()
@_run_options
def sweep(config_path, seed, workers, output, debug_invariants, verbose):
    """Linear-speedup sweep over K_list; writes summary.json with the monotonicity verdict"""
    try:
        config = _load(config_path, seed, workers, output, debug_invariants).with_overrides(mode="sweep")
        configure_logging(config.output_dir, verbose)
        summary = run_experiment(config, config_path)
    except Exception as e:
        _fail(e)
    for row in summary["rows"]:
        click.echo(f"K={row['K']} x_bar_T={row['x_bar_T']} g_bar_T={row['g_bar_T']}")
    verdict = summary["monotone_nonincreasing"]
    click.echo(f"monotone_nonincreasing x_bar_T={verdict['x_bar_T']} g_bar_T={verdict['g_bar_T']}")


@main.command("check-assumptions")
@_run_options
def check_assumptions_command(config_path, seed, workers, output, debug_invariants, verbose):
    """Diagnose exploration, feature bounds and subspace coverage at the initial policies"""
    try:
        config = _load(config_path, seed, workers, output, debug_invariants)
        configure_logging(config.output_dir, verbose)
        report = run_assumption_check(config, config_path)
    except Exception as e:
        _fail(e)
    click.echo(f"nu_hat={report.nu_hat} rank={report.rank} r={report.r} "
               f"min_lambda_margin={min(report.lambda_margin)}")
    for flag, value in sorted(report.flags.items()):
        click.echo(f"{flag}={value}")


@main.command("verify")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the verification fixtures")
@click.option("--verbose", is_flag=True, help="Log at DEBUG level")
def verify_command(seed, verbose):
    """Run the identity and invariant suite on seeded fixtures and print pass/fail"""
    try:
        configure_logging(None, verbose)
        report = verify(seed)
    except Exception as e:
        _fail(e)
    for line in report.lines():
        status = f"{Fore.GREEN}PASS" if line["failures"] == 0 else f"{Fore.RED}FAIL"
        click.echo(f"{status}{Style.RESET_ALL} {line['check']} checks={line['count']} failures={line['failures']}")
    click.echo(f"total_checks={report.monitor.total_checks} failures={report.monitor.total_violations}")
    if not report.passed:
        _fail(InvariantViolation(f"{report.monitor.total_violations} identity check(s) failed"))


if __name__ == "__main__":
    main()

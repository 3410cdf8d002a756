from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from contagion_lab import CONTAGION_LAB
from contagion_lab.__version__ import __version__
from contagion_lab.balance_sheets import (
    BankPopulation,
    generate_synthetic_population,
    load_population,
    write_population,
)
from contagion_lab.config import (
    COMMAND_CONFIGS,
    EstimateConfig,
    ExperimentConfig,
    HistogramConfig,
    LossesConfig,
    RankConfig,
    RunConfig,
    StressConfig,
    SynthConfig,
    VarConfig,
    build_config,
    load_config_file,
)
from contagion_lab.contagion import ALGORITHMS
from contagion_lab.errors import ConfigError, ContagionLabError
from contagion_lab.experiment import (
    build_decay_schedule,
    ensemble_ranking,
    histogram,
    impact_histogram,
    read_sweep,
    run_failure_sweep,
    select_nodes,
    write_histogram,
    write_ranking,
    write_sweep,
)
from contagion_lab.risk import (
    ScenarioGrid,
    ShockDistribution,
    loss_distribution,
    read_losses,
    sample_shocks,
    stress_sweep,
    value_at_risk,
    write_losses,
    write_stress,
    write_var,
)
from contagion_lab.storage import EnsembleBundle, estimate_ensemble, read_ensemble, write_ensemble
from contagion_lab.traceback import rich_traceback
from contagion_lab.weights import constraint_violations

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 2

console = Console(stderr=True)


def info(text: str) -> None:
    console.print(f"[+] {CONTAGION_LAB}: {text}", markup=False, highlight=False)


def error(text: str) -> None:
    console.print(f"[-] {CONTAGION_LAB}: {text}", markup=False, highlight=False, style="red")


def _output_path(path: str) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _population_at_step(bundle: EnsembleBundle, factor: float, step: int) -> BankPopulation:
    schedule = build_decay_schedule(bundle.population, steps=step, factor=factor)
    return schedule.population_at(bundle.population, step)


@rich_traceback
def cmd_synth(config: SynthConfig) -> int:
    population = generate_synthetic_population(config.n, config.seed, config.synth_params())
    out = _output_path(config.output)
    write_population(population, out)
    info(f"wrote {population.n} banks to {out}")
    return EXIT_OK


@rich_traceback
def cmd_estimate(config: EstimateConfig) -> int:
    population = load_population(config.population)
    bundle = estimate_ensemble(
        population,
        config.edges,
        size=config.size,
        master_seed=config.seed,
        increment=config.increment,
        max_sweeps=config.max_sweeps,
        jobs=config.jobs,
    )
    violations = sum(constraint_violations(net) for net in bundle.networks)
    if violations:
        logger.warning("%d lending constraint violations across the ensemble", violations)

    manifest = write_ensemble(bundle, config.output)
    stats = bundle.density
    table = Table(title="Ensemble density", highlight=True)
    for column in ("z", "target", "mean", "sd", "min", "max"):
        table.add_column(column, justify="right")
    table.add_row(
        f"{bundle.calibration.z:.6g}",
        f"{config.edges:g}",
        f"{stats.mean:.2f}",
        f"{stats.sd:.2f}",
        str(stats.min),
        str(stats.max),
    )
    console.print(table)
    info(f"wrote {len(bundle)} members and {manifest}")
    return EXIT_OK


@rich_traceback
def cmd_experiment(config: ExperimentConfig) -> int:
    bundle = read_ensemble(config.ensemble)
    nodes = select_nodes(bundle.population, config.nodes)
    schedule = build_decay_schedule(bundle.population, config.steps, config.factor)
    sweep = run_failure_sweep(
        bundle.networks, schedule, nodes, config.algorithms, jobs=config.jobs
    )
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep(sweep, out / "sweep_long.csv", out / "sweep_aggregate.csv")
    if config.plot:
        from contagion_lab.plotting import plot_sweep

        plot_sweep(sweep, out)
    info(f"swept nodes {list(sweep.nodes)} over {schedule.steps} steps into {out}")
    return EXIT_OK


@rich_traceback
def cmd_histogram(config: HistogramConfig) -> int:
    sweep = read_sweep(config.sweep)
    hist = impact_histogram(sweep, config.node, config.step, config.algorithm, config.bins)
    out = _output_path(config.output)
    write_histogram(hist, out)
    if config.plot:
        from contagion_lab.plotting import plot_histogram

        plot_histogram(
            hist,
            out.with_suffix(".png"),
            title=f"node {config.node}, step {config.step}, {config.algorithm}",
        )
    info(f"wrote histogram to {out}")
    return EXIT_OK


@rich_traceback
def cmd_stress(config: StressConfig) -> int:
    bundle = read_ensemble(config.ensemble)
    population = _population_at_step(bundle, config.factor, config.step)
    grid = ScenarioGrid.uniform(
        config.node, config.levels, config.level_min, config.level_max, step=config.step
    )
    result = stress_sweep(bundle.networks, population, grid, jobs=config.jobs)
    out = _output_path(config.output)
    write_stress(result, out)
    if config.plot:
        from contagion_lab.plotting import plot_stress

        plot_stress(result.bands, out.with_suffix(".png"))
    info(f"wrote {len(result.bands)} stress levels to {out}")
    return EXIT_OK


@rich_traceback
def cmd_losses(config: LossesConfig) -> int:
    bundle = read_ensemble(config.ensemble)
    population = _population_at_step(bundle, config.factor, config.step)
    dist = ShockDistribution(
        mean=config.dist_mean,
        sd=config.dist_sd,
        sample_count=config.samples,
        seed=config.seed,
    )
    losses = loss_distribution(
        bundle.networks,
        population,
        config.shock_node,
        sample_shocks(dist),
        scope=config.scope,
        observed=config.observe or None,
        jobs=config.jobs,
        conditioning=dist.describe(),
    )
    out = _output_path(config.output)
    write_losses(losses, out)
    if config.plot:
        from contagion_lab.plotting import plot_histogram

        plot_histogram(histogram(losses.losses, bins=20), out.with_suffix(".png"), title=losses.conditioning)
    info(f"wrote {len(losses)} loss samples to {out}")
    return EXIT_OK


@rich_traceback
def cmd_var(config: VarConfig) -> int:
    losses = read_losses(config.losses)
    report = value_at_risk(losses, config.alpha)
    out = _output_path(config.output)
    write_var(report, out)
    table = Table(title="Value at Risk", highlight=True)
    table.add_column("alpha", justify="right")
    table.add_column("VaR", justify="right")
    table.add_column("samples", justify="right")
    table.add_row(f"{report.alpha:g}", f"{report.var_value:.6g}", str(report.n_samples))
    console.print(table)
    info(f"wrote {out}")
    return EXIT_OK


@rich_traceback
def cmd_rank(config: RankConfig) -> int:
    bundle = read_ensemble(config.ensemble)
    population = _population_at_step(bundle, config.factor, config.step)
    rows = ensemble_ranking(bundle.networks, population, config.algorithm, jobs=config.jobs)
    if config.top is not None:
        rows = rows[: config.top]
    out = _output_path(config.output)
    write_ranking(rows, out)

    table = Table(title=f"Systemic ranking at step {config.step} ({config.algorithm})")
    for column in ("node", "mean", "min", "max"):
        table.add_column(column, justify="right")
    for r in rows[:10]:
        table.add_row(str(r.node), f"{r.mean:.4f}", f"{r.min:.4f}", f"{r.max:.4f}")
    console.print(table)
    info(f"wrote {len(rows)} ranked nodes to {out}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[Any], int]] = {
    "synth": cmd_synth,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "histogram": cmd_histogram,
    "stress": cmd_stress,
    "losses": cmd_losses,
    "var": cmd_var,
    "rank": cmd_rank,
}


class _Parser(argparse.ArgumentParser):
    "Usage errors are configuration errors (exit 3), not argparse's exit 2."

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="count", help="-v for info, -vv for debug")
    common.add_argument("--config", help="JSON file with one section per command")
    common.add_argument("--jobs", type=int, help="worker threads (default: $CONTAGION_LAB_JOBS or CPU count)")

    parser = _Parser(prog=CONTAGION_LAB, description="Interbank contagion toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(
            name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS
        )

    p = add("synth", "generate a synthetic bank population")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")
    p.add_argument("--pareto-shape", type=float)
    p.add_argument("--pareto-scale", type=float)
    p.add_argument("--cap-fraction", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--ib-asset-fraction", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--ib-liab-fraction", type=float, nargs=2, metavar=("LO", "HI"))

    p = add("estimate", "calibrate, sample and weight an ensemble")
    p.add_argument("-p", "--population")
    p.add_argument("--edges", type=float, help="target edge count K")
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--increment", type=float)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("-o", "--output", help="ensemble directory")

    p = add("experiment", "capitalisation-decay failure sweep")
    p.add_argument("-e", "--ensemble")
    p.add_argument("--steps", type=int)
    p.add_argument("--factor", type=float)
    p.add_argument("--nodes", help="topK, all, or a comma separated id list")
    p.add_argument("--algorithms", nargs="+", choices=ALGORITHMS)
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--plot", action="store_true")

    p = add("histogram", "impact histogram of one sweep cell")
    p.add_argument("--sweep", help="long-form sweep CSV")
    p.add_argument("--node", type=int)
    p.add_argument("--step", type=int)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--bins", type=int)
    p.add_argument("-o", "--output")
    p.add_argument("--plot", action="store_true")

    p = add("stress", "DebtRank stress sweep over shock levels")
    p.add_argument("-e", "--ensemble")
    p.add_argument("--node", type=int, nargs="+")
    p.add_argument("--levels", type=int)
    p.add_argument("--min", dest="level_min", type=float)
    p.add_argument("--max", dest="level_max", type=float)
    p.add_argument("--step", type=int)
    p.add_argument("--factor", type=float)
    p.add_argument("-o", "--output")
    p.add_argument("--plot", action="store_true")

    p = add("losses", "loss distribution under random shocks")
    p.add_argument("-e", "--ensemble")
    p.add_argument("--shock-node", type=int, nargs="+")
    p.add_argument("--dist-mean", type=float)
    p.add_argument("--dist-sd", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scope", choices=["node", "group", "network"])
    p.add_argument("--observe", type=int, nargs="+")
    p.add_argument("--step", type=int)
    p.add_argument("--factor", type=float)
    p.add_argument("-o", "--output")
    p.add_argument("--plot", action="store_true")

    p = add("var", "empirical Value at Risk of a loss file")
    p.add_argument("--losses")
    p.add_argument("--alpha", type=float)
    p.add_argument("-o", "--output")

    p = add("rank", "ensemble systemic ranking at one decay step")
    p.add_argument("-e", "--ensemble")
    p.add_argument("--step", type=int)
    p.add_argument("--factor", type=float)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--top", type=int)
    p.add_argument("-o", "--output")

    return parser


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def parse_config(argv: Optional[Sequence[str]] = None) -> tuple[str, RunConfig]:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    configure_logging(args.pop("verbose", 0) or 0)
    config_path = args.pop("config", None)
    section = load_config_file(config_path).get(command, {}) if config_path else {}
    return command, build_config(COMMAND_CONFIGS[command], args, section)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        command, config = parse_config(argv)
        logger.debug("running %s with %r", command, config)
        return COMMANDS[command](config)
    except ContagionLabError as e:
        error(str(e))
        return e.exit_code
    except OSError as e:
        error(str(e))
        return EXIT_IO

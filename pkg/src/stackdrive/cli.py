"""Command-line interface for stackdrive."""

import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import click

from . import __version__
from .config import ScenarioConfig, emit_config, packaged_scenario, parse_config
from .errors import StackdriveError, VerdictFailure
from .experiments import (
    PopulationCounts,
    fig14_sweep,
    monte_carlo_surface,
    nhtsa_compare,
    run_unit_suite,
    section_runs,
)
from .manifest import RunManifest
from .reporting import (
    read_section_stats,
    read_trace_poses,
    write_comparison,
    write_events,
    write_pair_scores,
    write_section_stats,
    write_surface,
    write_sweep,
    write_trace,
    write_verdicts,
)
from .sim_engine import detect_events, score_poses

LOG_FORMAT = "%(levelname)-8s %(name)s: %(message)s"


class StackdriveGroup(click.Group):
    """Maps usage errors to exit code 1 and stackdrive errors to their own codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.show()
            ctx.exit(1)
        except StackdriveError as e:
            click.echo(f"✗ {e}", err=True)
            ctx.exit(e.exit_code)


def _setup_logging(verbose: int) -> None:
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _int_list(value: str, name: str) -> List[int]:
    try:
        items = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(
            f"expected comma-separated integers, got {value!r}", param_hint=name
        )
    if not items or min(items) < 1:
        raise click.BadParameter("values must be positive integers", param_hint=name)
    return items


def _load(
    config_path: Optional[str], default: str, seed: Optional[int]
) -> ScenarioConfig:
    path = Path(config_path) if config_path else packaged_scenario(default)
    config = parse_config(path)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def _manifest(
    ctx: click.Context,
    config: ScenarioConfig,
    out: Path,
    options: Dict[str, Any],
) -> None:
    RunManifest.create(
        ctx.command.name,
        config,
        ctx.obj.get("config_path"),
        config.seed,
        out,
        options,
    ).save(out)


config_option = click.option(
    "--config",
    "-c",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="Scenario YAML file (default: the packaged scenario for the command)",
)
seed_option = click.option(
    "--seed", type=int, default=None, help="Override the scenario seed"
)
out_option = click.option(
    "--out",
    "-o",
    type=click.Path(file_okay=False),
    default=".",
    show_default=True,
    help="Output directory",
)


@click.group(cls=StackdriveGroup)
@click.version_option(__version__, prog_name="stackdrive")
@click.option(
    "--verbose", "-v", count=True, help="Log progress to stderr (-vv for debug)"
)
@click.pass_context
def cli(ctx, verbose: int):
    """stackdrive - Stackelberg lane-change decisions in three-lane traffic.

    Runs the unit disposition scenarios, Monte Carlo collision surfaces and
    density-maintained section simulations. Data goes to files in --out;
    stdout carries progress only.
    """
    ctx.ensure_object(dict)
    _setup_logging(verbose)


@cli.command()
@config_option
@seed_option
@out_option
@click.option("--compact", is_flag=True, help="gzip trace files")
@click.pass_context
def unit(ctx, config_path, seed, out, compact):
    """Run the four two-vehicle disposition scenarios and check their verdicts."""
    ctx.obj["config_path"] = config_path
    config = _load(config_path, "two_vehicle", seed)
    out = Path(out)

    click.echo("Running unit scenarios...")
    suite = run_unit_suite(config)
    events = []
    for result in suite.results.values():
        trace_file = out / f"trace_{result.combo.slug}.csv"
        path = write_trace(result.trace, trace_file, compact)
        click.echo(f"  • {result.combo.name}: peak I_col {result.peak:.3f} -> {path}")
        found = detect_events(
            result.trace, config.events.near_threshold, config.events.release_threshold
        )
        events.extend((result.combo.name, e) for e in found)
    write_events(events, out / "events.csv")
    write_verdicts(suite.verdicts, out / "verdicts.csv")
    _manifest(ctx, config, out, {"compact": compact})

    for verdict in suite.verdicts:
        mark = "✓" if verdict.passed else "✗"
        click.echo(f"{mark} {verdict.name}")
    if suite.failed:
        raise VerdictFailure(suite.failed)


@cli.command()
@config_option
@seed_option
@out_option
@click.option(
    "--runs", type=int, default=100, show_default=True, help="Random placements"
)
@click.pass_context
def montecarlo(ctx, config_path, seed, out, runs):
    """Collision possibility surface over random initial separations."""
    if runs < 1:
        raise click.BadParameter("must be at least 1", param_hint="--runs")
    ctx.obj["config_path"] = config_path
    config = _load(config_path, "two_vehicle", seed)
    out = Path(out)

    click.echo(f"Running {runs} placements per combination...")
    result = monte_carlo_surface(config, n=runs, seed=config.seed)
    write_surface(
        result,
        out / "surface.csv",
        out / "surface_samples.csv",
        out / "surface_checks.csv",
    )
    _manifest(ctx, config, out, {"runs": runs})
    click.echo(f"Surface written to {out / 'surface.csv'}")
    for check in result.checks:
        click.echo(f"{'✓' if check.passed else '✗'} {check.name}: {check.detail}")
    failed = [c.name for c in result.checks if not c.passed]
    if failed:
        raise VerdictFailure(failed)


@cli.command()
@config_option
@seed_option
@out_option
@click.option("--density", type=int, default=None, help="Vehicles per section")
@click.option(
    "--mix", default=None, help="Population mix, e.g. attentive or inattentive75"
)
@click.option("--duration", type=float, default=None, help="Simulated seconds per run")
@click.option("--runs", type=int, default=1, show_default=True, help="Independent runs")
@click.pass_context
def section(ctx, config_path, seed, out, density, mix, duration, runs):
    """Density-maintained section runs with event counts and exposure."""
    if runs < 1:
        raise click.BadParameter("must be at least 1", param_hint="--runs")
    if density is not None and density < 1:
        raise click.BadParameter("must be at least 1", param_hint="--density")
    if duration is not None and duration <= 0:
        raise click.BadParameter("must be positive", param_hint="--duration")
    ctx.obj["config_path"] = config_path
    config = _load(config_path, "section", seed)
    if mix is not None:
        try:
            config = replace(config, section=replace(config.section, mix=mix))
            config.section.validate()
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--mix")
    density = config.section.density if density is None else density
    out = Path(out)

    mix = config.section.mix
    click.echo(f"Running {runs} section run(s), density {density}, mix {mix}...")
    stats = section_runs(config, runs, config.seed, density, duration)
    path = write_section_stats(stats, out / f"section_{mix}_d{density}.csv")
    options = {"density": density, "mix": mix, "duration": duration, "runs": runs}
    _manifest(ctx, config, out, options)
    totals = PopulationCounts.from_stats(stats)
    click.echo(
        f"✓ {totals.crashes} crashes, {totals.near_crashes} near crashes over "
        f"{totals.vehicle_miles:.3f} vehicle miles -> {path}"
    )


@cli.command("fig14")
@config_option
@seed_option
@out_option
@click.option(
    "--density", default="6,8", show_default=True, help="Comma-separated densities"
)
@click.option(
    "--runs", default="5,50,500", show_default=True, help="Comma-separated run counts"
)
@click.option(
    "--mix",
    default="aggr_timid,aggr_aggr",
    show_default=True,
    help="Comma-separated mixes",
)
@click.option("--duration", type=float, default=None, help="Simulated seconds per run")
@click.pass_context
def fig14(ctx, config_path, seed, out, density, runs, mix, duration):
    """Cumulative collision possibility over density, run count and mix.

    Also available as `stackdrive sweep`.
    """
    densities = _int_list(density, "--density")
    run_counts = _int_list(runs, "--runs")
    mixes = [m.strip() for m in mix.split(",") if m.strip()]
    if not mixes:
        raise click.BadParameter("at least one mix is required", param_hint="--mix")
    ctx.obj["config_path"] = config_path
    config = _load(config_path, "section", seed)
    for name in mixes:
        try:
            replace(config.section, mix=name).validate()
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--mix")
    out = Path(out)

    click.echo("Running density/mix sweep...")
    result = fig14_sweep(config, densities, run_counts, mixes, config.seed, duration)
    write_sweep(result, out / "sweep.csv", out / "sweep_checks.csv")
    options = {"density": density, "runs": runs, "mix": mix, "duration": duration}
    _manifest(ctx, config, out, options)
    for check in result.checks:
        click.echo(f"{'✓' if check.passed else '✗'} {check.name}")
    failed = [c.name for c in result.checks if not c.passed]
    if failed:
        raise VerdictFailure(failed)


@cli.command("score-trace")
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@config_option
@out_option
@click.pass_context
def score_trace(ctx, trace, config_path, out):
    """Score a recorded trace with the collision possibility index.

    TRACE is a trace CSV (optionally gzipped) with t, id, x, y and theta columns.
    """
    ctx.obj["config_path"] = config_path
    config = _load(config_path, "two_vehicle", None)
    out = Path(out)
    try:
        frames = read_trace_poses(Path(trace))
    except (KeyError, ValueError) as e:
        raise click.BadParameter(f"not a trace file: {e}", param_hint="TRACE")
    scored = score_poses(
        frames, config.vehicle, config.collision.scale, config.collision.broad_phase
    )
    write_pair_scores(scored, out / "pair_scores.csv")
    events = detect_events(
        scored, config.events.near_threshold, config.events.release_threshold
    )
    write_events([(Path(trace).name, e) for e in events], out / "events.csv")
    _manifest(ctx, config, out, {"trace": str(trace)})
    click.echo(f"✓ {len(frames)} steps scored, {len(events)} event(s)")


@cli.command()
@click.argument("attentive", type=click.Path(exists=True, dir_okay=False))
@click.argument("inattentive", type=click.Path(exists=True, dir_okay=False))
@out_option
def compare(attentive, inattentive, out):
    """Compare two section stats files against the 100-car study counts.

    ATTENTIVE and INATTENTIVE are files written by `stackdrive section`.
    """
    comparison = nhtsa_compare(
        PopulationCounts.from_stats(read_section_stats(Path(attentive))),
        PopulationCounts.from_stats(read_section_stats(Path(inattentive))),
    )
    path = write_comparison(comparison, Path(out) / "comparison.csv")
    for check in comparison.checks:
        click.echo(f"{'✓' if check.passed else '✗'} {check.name}: {check.detail}")
    click.echo(f"Note: {comparison.note}")
    click.echo(f"Comparison written to {path}")
    failed = [c.name for c in comparison.checks if not c.passed]
    if failed:
        raise VerdictFailure(failed)


@cli.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option(
    "--out",
    "-o",
    type=click.Path(file_okay=False),
    required=True,
    help="Output directory",
)
@click.pass_context
def replay(ctx, manifest, out):
    """Re-run a recorded run from its manifest alone.

    MANIFEST is a manifest.json file or a directory containing one.
    """
    record = RunManifest.load(Path(manifest))
    config = record.scenario()
    command = cli.commands.get(record.subcommand)
    if command is None or record.subcommand == "replay":
        raise click.UsageError(
            f"manifest records an unknown command {record.subcommand!r}"
        )
    if record.subcommand in ("score-trace", "compare"):
        raise click.UsageError(f"{record.subcommand} runs are not replayable")

    # Replays read the embedded scenario, never the original file.
    replay_config = Path(out) / "scenario.yaml"
    replay_config.parent.mkdir(parents=True, exist_ok=True)
    replay_config.write_text(emit_config(config))
    args: Dict[str, Any] = {
        "config_path": str(replay_config),
        "seed": record.seed,
        "out": out,
    }
    args.update({k: v for k, v in record.options.items() if k != "trace"})
    click.echo(f"Replaying {record.subcommand} (build {record.build_id})...")
    ctx.invoke(command, **args)


cli.add_command(fig14, name="sweep")


def main():
    """Main entry point for CLI."""
    cli(obj={})


if __name__ == "__main__":
    main()

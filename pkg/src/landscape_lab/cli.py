"""Command line: ``landscape-lab {simulate,analyze,classify,render,check}``.

Exit codes: 0 when every hard check passes, 1 when one fails, 2 for usage
errors (bad flags, invalid configuration, missing stage inputs).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline
from .config import PRESETS, RunConfig, load_config
from .errors import ConfigError, ParameterError


def _options(f):
    f = click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None, help="Named starting config.")(f)
    f = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
                     help="Output directory (overrides run.out).")(f)
    f = click.option("--seed", type=int, default=None, help="Single seed (overrides run.seeds).")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     default=None, help="Config file with 'section.key = value' lines.")(f)
    return f


def _config(config_path: Path | None, preset: str | None, seed: int | None, out: Path | None) -> RunConfig:
    overrides = {}
    if seed is not None:
        overrides["run.seeds"] = str(seed)
    if out is not None:
        overrides["run.out"] = str(out)
    try:
        return load_config(config_path, preset, overrides)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def _finish(report: pipeline.RunReport) -> None:
    for line in report.summary_lines():
        click.echo(line)
    sys.exit(0 if report.passed else 1)


def _stage(cfg: RunConfig, stages: tuple[str, ...]) -> pipeline.RunReport:
    try:
        return pipeline.run(cfg, stages=stages)
    except (FileNotFoundError, ParameterError) as exc:
        raise click.UsageError(str(exc)) from exc


@click.group()
def main() -> None:
    """Busemann instability and shock experiments on last-passage models."""


@main.command()
@_options
def simulate(config_path, preset, seed, out):
    """Generate and save the environment for every seed."""
    cfg = _config(config_path, preset, seed, out)
    report = _stage(cfg, ("simulate",))
    click.echo(f"wrote {len(report.seeds)} environment(s) under {cfg.out}")


@main.command()
@_options
def analyze(config_path, preset, seed, out):
    """Difference field checks, the instability graph and islands."""
    _finish(_stage(_config(config_path, preset, seed, out), ("analyze",)))


@main.command()
@_options
def classify(config_path, preset, seed, out):
    """Taxonomy census, shock census, interface checks and island round trips."""
    _finish(_stage(_config(config_path, preset, seed, out), ("classify",)))


@main.command()
@_options
def render(config_path, preset, seed, out):
    """SVG pictures from the saved environment and graph."""
    cfg = _config(config_path, preset, seed, out)
    paths = []
    try:
        for s in cfg.seeds:
            paths += pipeline.render(pipeline.SeedState(cfg, s, cfg.out))
    except (FileNotFoundError, ParameterError) as exc:
        raise click.UsageError(str(exc)) from exc
    for p in paths:
        click.echo(f"wrote {p}")


@main.command()
@_options
def check(config_path, preset, seed, out):
    """Run every stage and report; exits 1 if a hard check fails."""
    _finish(_stage(_config(config_path, preset, seed, out), ("simulate", "analyze", "classify", "render")))


if __name__ == "__main__":
    main()

"""Command-line entry point: ``dynamask generate|train|explain|evaluate|reproduce``."""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import experiments as ex
from .kernels import BACKEND

EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3


def _fail_config(msg: str):
    click.echo(f"config error: {msg}", err=True)
    sys.exit(EXIT_CONFIG)


def _parse_sets(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            _fail_config(f"--set expects path=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _load_file(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _fail_config(f"cannot read {path}: {exc}")
    if not isinstance(doc, dict):
        _fail_config(f"{path} must hold a JSON object")
    return doc


def _resolve(name, config, seed, scale, sets, fallback_dir=None) -> dict:
    """Defaults < saved config of an earlier stage < --config file < flags."""
    file_cfg = {}
    if fallback_dir is not None and (Path(fallback_dir) / "config.json").exists():
        file_cfg = _load_file(Path(fallback_dir) / "config.json")
    file_cfg = ex._merge(file_cfg, _load_file(config))
    overrides = _parse_sets(sets)
    if seed is not None:
        overrides["seed"] = seed
    try:
        return ex.build_config(name, scale, file_cfg, overrides)
    except ex.ConfigError as exc:
        _fail_config(str(exc))


def _out_dir(out, name) -> Path:
    return Path(out) if out else ex.timestamped_dir("runs", name)


def common(fn):
    fn = click.option("--config", type=click.Path(dir_okay=False), help="JSON config file.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), help="Master seed.")(fn)
    fn = click.option("--scale", type=click.Choice(["desk", "paper"]), help="Preset sizes.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), help="Output directory.")(fn)
    fn = click.option("--jobs", type=click.IntRange(1), default=ex.default_jobs, show_default="$DYNAMASK_JOBS or 1",
                      help="Worker processes.")(fn)
    fn = click.option("--set", "sets", multiple=True, metavar="PATH=VALUE",
                      help="Override a config field by dotted path (value parsed as JSON).")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug).")
def main(verbose):
    """Fit dynamic perturbation masks and run the synthetic saliency benchmarks."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s: %(message)s")
    logging.getLogger(__name__).debug("kernel backend: %s", BACKEND)


@main.command()
@click.argument("experiment", required=False)
@common
def generate(experiment, config, seed, scale, out, jobs, sets):
    """Generate the synthetic dataset for EXPERIMENT."""
    cfg = _resolve(experiment, config, seed, scale, sets)
    path = ex.generate(cfg, _out_dir(out, f"{cfg['experiment']}-data"))
    click.echo(str(path))


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@common
def train(data_dir, config, seed, scale, out, jobs, sets):
    """Train the GRU classifier(s) on a generated state dataset."""
    cfg = _resolve(None, config, seed, scale, sets, fallback_dir=data_dir)
    try:
        path = ex.train(cfg, data_dir, _out_dir(out, f"{cfg['experiment']}-models"), jobs)
    except ex.ConfigError as exc:
        _fail_config(str(exc))
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc))
    click.echo(str(path))


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--model", "model_dir", type=click.Path(file_okay=False), help="Output of 'train'.")
@common
def explain(data_dir, model_dir, config, seed, scale, out, jobs, sets):
    """Fit masks and baseline scores for every instance."""
    cfg = _resolve(None, config, seed, scale, sets, fallback_dir=data_dir)
    try:
        path = ex.explain(cfg, data_dir, _out_dir(out, f"{cfg['experiment']}-explain"), model_dir, jobs)
    except ex.ConfigError as exc:
        _fail_config(str(exc))
    except FileNotFoundError as exc:
        raise click.ClickException(str(exc))
    click.echo(str(path))


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--explained", "explain_dir", required=True, type=click.Path(file_okay=False))
@click.option("--heatmaps/--no-heatmaps", default=False, help="Also write PGM heatmaps.")
@common
def evaluate(data_dir, explain_dir, heatmaps, config, seed, scale, out, jobs, sets):
    """Score explanations against the ground truth and write report.json/report.csv."""
    cfg = _resolve(None, config, seed, scale, sets, fallback_dir=explain_dir)
    out_dir = _out_dir(out, f"{cfg['experiment']}-report")
    try:
        report = ex.evaluate(cfg, data_dir, explain_dir)
    except (FileNotFoundError, ValueError) as exc:
        raise click.ClickException(str(exc))
    rows = ex.acceptance(report)
    report["acceptance"] = [{"criterion": c, "passed": ok, "value": d} for c, ok, d in rows]
    ex.write_report(report, out_dir)
    if heatmaps:
        ex.write_heatmaps(cfg, explain_dir, out_dir)
    click.echo(ex.format_table(report))
    click.echo(ex.format_acceptance(rows))
    click.echo(str(out_dir))


@main.command()
@click.argument("name")
@click.option("--heatmaps/--no-heatmaps", default=False, help="Also write PGM heatmaps.")
@common
def reproduce(name, heatmaps, config, seed, scale, out, jobs, sets):
    """Run generate -> train -> explain -> evaluate for NAME and check the targets.

    Exits with status 3 when any acceptance criterion fails.
    """
    if name in ex.UNSUPPORTED:
        click.echo(f"unsupported experiment {name!r}: {ex.UNSUPPORTED[name]}", err=True)
        sys.exit(EXIT_CONFIG)
    cfg = _resolve(name, config, seed, scale, sets)
    out_dir = _out_dir(out, name)
    report = ex.reproduce(name, out_dir, cfg, jobs, heatmaps)
    click.echo(ex.format_table(report))
    click.echo(ex.format_acceptance(report["all_rows"]))
    click.echo(f"runtime: {report['runtime']['total_seconds']:.1f} s; outputs in {out_dir}")
    if not all(ok for _, ok, _ in report["all_rows"]):
        sys.exit(EXIT_ACCEPTANCE)


if __name__ == "__main__":
    main()

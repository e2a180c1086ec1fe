"""Command-line entry points for the surrogate-modeling workflow."""

from __future__ import annotations

import dataclasses
import functools
import sys
from pathlib import Path

import click

from . import pipeline, plots
from .config import CaseConfig, example_yaml, preset_names
from .errors import (
    DivergenceFailureError,
    InvalidArgumentError,
    NumericalFailureError,
    StiffnessFailureError,
)

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _load_config(config_path: str, seed) -> CaseConfig:
    path = Path(config_path)
    if not path.exists():
        raise InvalidArgumentError(f"config file not found: {path}")
    cfg = CaseConfig.from_yaml(path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=int(seed))
    return cfg


def run_options(fn):
    @click.option("--config", "config_path", required=True, type=click.Path(), help="Case configuration YAML.")
    @click.option("--out", "out_dir", required=True, type=click.Path(), help="Run directory for all artifacts.")
    @click.option("--seed", type=int, default=None, help="Override the configured master seed.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InvalidArgumentError, ValueError) as err:
            click.echo(f"validation error: {err}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (StiffnessFailureError, DivergenceFailureError, NumericalFailureError) as err:
            click.echo(f"numerical failure: {err}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


@click.group()
def main():
    """Surrogate modeling of nonlinear structural dynamics with an
    uncertainty-aware recurrent network."""


@main.command()
@click.option("--preset", "preset_name", default="case1_desk", show_default=True,
              type=click.Choice(preset_names()), help="Preset to render.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the annotated YAML here instead of stdout.")
def init_config(preset_name, out_path):
    """Emit an annotated configuration file for a preset."""
    text = example_yaml(preset_name)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@main.command()
@run_options
def gen(config_path, out_dir, seed):
    """Simulate the training corpus and freeze the data split."""
    cfg = _load_config(config_path, seed)
    splits = pipeline.generate_dataset(cfg, out_dir)
    click.echo(
        f"generated {cfg.n_samples} samples "
        f"({len(splits['failed'])} failed); split "
        f"{len(splits['train'])}/{len(splits['val'])}/{len(splits['test'])}"
    )


@main.command("fit-transforms")
@run_options
def fit_transforms(config_path, out_dir, seed):
    """Calibrate the reduction and normalization stages on the training split."""
    cfg = _load_config(config_path, seed)
    tf = pipeline.fit_transforms(cfg, out_dir)
    click.echo(f"transforms fitted: n_r={tf.n_r}, n_tau={tf.wavelet.n_tau}")


@main.command()
@run_options
def train(config_path, out_dir, seed):
    """Train the network and persist the best-validation parameters."""
    cfg = _load_config(config_path, seed)
    result = pipeline.run_training(cfg, out_dir)
    click.echo(
        f"trained {len(result.history)} epochs; "
        f"best epoch {result.best_epoch}, val loss {result.best_val_loss:.6g}"
    )


@main.command()
@run_options
@click.option("--index", "indices", type=int, multiple=True, required=True,
              help="Dataset sample index to predict (repeatable).")
def predict(config_path, out_dir, seed, indices):
    """Run the MC-dropout ensemble for stored samples."""
    cfg = _load_config(config_path, seed)
    run_dir = Path(out_dir)
    tf = pipeline.load_transforms(run_dir / "transforms")
    net = pipeline.load_model(run_dir)
    from . import arrayio

    for i in indices:
        record, real, _, _ = pipeline.load_sample(cfg, run_dir, i)
        out = pipeline.predict_sample(cfg, tf, net, record, real, seed_key=i)
        dest = run_dir / "predictions" / f"sample_{i:05d}"
        for key in ("mean", "lower", "upper"):
            arrayio.save_array(dest / key, out[key])
        click.echo(f"sample {i}: wrote mean/lower/upper to {dest}")


@main.command("eval")
@run_options
def eval_cmd(config_path, out_dir, seed):
    """Score the test split and write the evaluation report."""
    cfg = _load_config(config_path, seed)
    report = pipeline.evaluate(cfg, out_dir)
    click.echo(
        f"evaluated {report['n_test']} samples: "
        f"rel RMSE {report['mean_rel_rmse']:.4f}, "
        f"peak correlation {report['peak_correlation_pooled']:.4f}, "
        f"CI coverage {report['mean_ci_coverage']:.3f}"
    )


@main.command("plots")
@run_options
def plots_cmd(config_path, out_dir, seed):
    """Render report CSVs and figures."""
    _load_config(config_path, seed)
    written = plots.emit_plots(out_dir)
    click.echo(f"wrote {len(written)} plot files under {Path(out_dir) / 'plots'}")


@main.command("all")
@run_options
def all_cmd(config_path, out_dir, seed):
    """Full chain: gen, fit-transforms, train, eval, plots."""
    cfg = _load_config(config_path, seed)
    report = pipeline.run_all(cfg, out_dir)
    plots.emit_plots(out_dir)
    click.echo(
        f"done: rel RMSE {report['mean_rel_rmse']:.4f}, "
        f"peak correlation {report['peak_correlation_pooled']:.4f}, "
        f"CI coverage {report['mean_ci_coverage']:.3f}"
    )


if __name__ == "__main__":
    main()

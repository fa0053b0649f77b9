"""Command-line front end: simulate, fit, snr, train, and compare.

Every subcommand is deterministic given its flags; outputs are CSV (17
significant digits) or JSON. Exit codes: 0 success, 2 usage or config
error, 1 runtime/numeric failure.
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .numerics import InvalidInputError, SeededRng
from .rankstats import (
    FAMILIES,
    ConvergenceError,
    EmpiricalRankDistribution,
    fit_report,
    simulate_gaussian_softmax,
    snr_curve,
    write_reports_json,
)
from .training import METHODS, TrainConfig, TrainingDivergedError, train_model


@click.group()
def main():
    """Zipf label smoothing laboratory."""


def _usage(exc: Exception) -> click.UsageError:
    return click.UsageError(str(exc))


def _failure(exc: Exception) -> click.ClickException:
    return click.ClickException(str(exc))


@main.command("simulate")
@click.option("--n-samples", default=1000, show_default=True, help="Rows of Gaussian logits.")
@click.option("--n-classes", default=1000, show_default=True, help="Logits per row.")
@click.option("--top-k", default=32, show_default=True, help="Ranks kept in the output.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output CSV path.")
def cmd_simulate(n_samples: int, n_classes: int, top_k: int, seed: int, out: str):
    """Average sorted softmax of standard normal logits -> (rank, mean_prob) CSV."""
    try:
        emp = simulate_gaussian_softmax(SeededRng(seed), n_samples, n_classes, top_k)
    except InvalidInputError as exc:
        raise _usage(exc)
    emp.to_csv(out)
    click.echo(f"wrote {emp.top_k} ranks to {out}")


@main.command("fit")
@click.argument("in_csv", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--families",
    default=",".join(FAMILIES),
    show_default=True,
    help="Comma-separated subset of: " + ", ".join(FAMILIES),
)
@click.option("--n-mc", default=100_000, show_default=True, help="Monte-Carlo draws for chi-square/KS.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output JSON path.")
def cmd_fit(in_csv: str, families: str, n_mc: int, seed: int, out: str):
    """Fit distributions to a (rank, mean_prob) CSV and score each fit."""
    wanted = [f.strip() for f in families.split(",") if f.strip()]
    if not wanted:
        raise click.UsageError("no families given")
    for fam in wanted:
        if fam not in FAMILIES:
            raise click.UsageError(f"unknown family {fam!r}; choose from {', '.join(FAMILIES)}")
    try:
        emp = EmpiricalRankDistribution.from_csv(in_csv)
    except (InvalidInputError, OSError) as exc:
        raise _usage(exc)
    streams = SeededRng(seed).spawn(len(wanted))
    try:
        reports = [fit_report(emp, fam, rng, n_mc) for fam, rng in zip(wanted, streams)]
    except InvalidInputError as exc:
        raise _usage(exc)
    except ConvergenceError as exc:
        raise _failure(exc)
    write_reports_json(reports, out)
    ranked = sorted(reports, key=lambda r: r.r_squared, reverse=True)
    click.echo("R^2 ranking: " + " > ".join(f"{r.family}={r.r_squared:.5f}" for r in ranked))


@main.command("snr")
@click.argument("in_csv", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--from-sim", is_flag=True, help="Use the Gaussian-logits simulation as input.")
@click.option("--n-samples", default=1000, show_default=True)
@click.option("--n-classes", default=1000, show_default=True)
@click.option("--top-k", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output CSV path.")
def cmd_snr(in_csv, from_sim: bool, n_samples: int, n_classes: int, top_k: int, seed: int, out: str):
    """Per-rank mean/std/SNR -> CSV, from a per-sample matrix CSV or the simulation."""
    if from_sim == (in_csv is not None):
        raise click.UsageError("give exactly one input: IN_CSV or --from-sim")
    if from_sim:
        try:
            emp = simulate_gaussian_softmax(SeededRng(seed), n_samples, n_classes, top_k)
        except InvalidInputError as exc:
            raise _usage(exc)
        matrix = emp.per_sample_probs
    else:
        try:
            matrix = np.loadtxt(in_csv, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise _usage(exc)
    try:
        curve = snr_curve(matrix)
    except InvalidInputError as exc:
        raise _usage(exc)
    curve.to_csv(out)
    crossing, is_prefix = curve.above_unity_prefix()
    click.echo(
        f"wrote {curve.top_k} ranks to {out}; SNR > 1 for the first {crossing} ranks"
        + ("" if is_prefix else " (region not a clean prefix)")
    )


@main.command("train")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False), help="TrainConfig JSON.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False), help="Directory for metrics.csv and summary.json.")
def cmd_train(config: str, out_dir: str):
    """One training run -> per-epoch metrics CSV + summary JSON."""
    try:
        cfg = TrainConfig.from_json(config)
    except InvalidInputError as exc:
        raise _usage(exc)
    try:
        _net, _ds, history = train_model(cfg)
    except TrainingDivergedError as exc:
        raise _failure(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    history.to_csv(out / "metrics.csv")
    history.write_summary(out / "summary.json")
    summary = history.summary()
    click.echo(
        f"{cfg.method} seed {cfg.seed}: train {summary['final_train_accuracy']:.4f}, "
        f"test {summary['final_test_accuracy']:.4f}, "
        f"non-target entropy {summary['final_nontarget_entropy']:.4f}"
    )


@main.command("compare")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False), help="Base TrainConfig JSON; its method field is ignored.")
@click.option("--seeds", default="0", show_default=True, help="Comma-separated seed list.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output JSON path.")
def cmd_compare(config: str, seeds: str, out: str):
    """Run every method across the seed list and aggregate test metrics."""
    try:
        base = TrainConfig.from_json(config).to_dict()
    except InvalidInputError as exc:
        raise _usage(exc)
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise _usage(exc)
    if not seed_list:
        raise click.UsageError("no seeds given")

    table: dict[str, dict] = {}
    for method in METHODS:
        per_seed = []
        for seed in seed_list:
            try:
                cfg = TrainConfig.from_dict({**base, "method": method, "seed": seed})
                _net, _ds, history = train_model(cfg)
            except InvalidInputError as exc:
                raise _usage(exc)
            except TrainingDivergedError as exc:
                raise _failure(exc)
            per_seed.append(history.summary())
        table[method] = {
            metric: _aggregate([s[key] for s in per_seed])
            for metric, key in (
                ("train_accuracy", "final_train_accuracy"),
                ("test_accuracy", "final_test_accuracy"),
                ("nontarget_entropy", "final_nontarget_entropy"),
            )
        }
        agg = table[method]
        click.echo(
            f"{method:>10s}: test {agg['test_accuracy']['mean']:.4f} "
            f"+/- {agg['test_accuracy']['std']:.4f}, "
            f"entropy {agg['nontarget_entropy']['mean']:.4f}"
        )
    payload = {"seeds": seed_list, "methods": table}
    Path(out).write_text(json.dumps(payload, indent=2) + "\n")


def _aggregate(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "per_seed": values}


if __name__ == "__main__":
    main()

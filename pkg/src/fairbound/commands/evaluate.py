"""fairbound evaluate - score a persisted predictor on the test split."""
from pathlib import Path
from typing import Optional

import typer

from ..core import read_dataset_csv
from ..estimation import ZGrid, load_density
from ..evaluation import evaluate_predictor
from ..training import Predictor, predictor_bounds
from ..utils.artifacts import output_dir, write_frame, write_json, write_resolved_config
from ..utils.cli import exit_on_error
from ..utils.config import load_run_config, resolve_settings
from .train import evaluation_split, load_splits

app = typer.Typer()

DEFAULTS = {
    "data": None,
    "model": None,
    "splits": None,
    "gamma_m": 2.0,
    "constraint_mode": "scalar-expectation",
    "omega": 0.5,
    "seed": 0,
    "out": None,
}


@app.callback(invoke_without_command=True)
def evaluate(
    data: Optional[str] = typer.Option(None, "--data", "-d", help="Dataset CSV"),
    model: Optional[str] = typer.Option(None, "--model", "-m", help="Directory written by `train`"),
    splits: Optional[str] = typer.Option(None, "--splits", help="splits.json (default: next to the data)"),
    gamma_m: Optional[float] = typer.Option(None, "--gamma-m", help="Mediator sensitivity for the bounds"),
    constraint_mode: Optional[str] = typer.Option(None, "--constraint-mode", help="scalar-expectation or per-class"),
    omega: Optional[float] = typer.Option(None, "--omega", help="Utility weight of prediction quality"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for a fresh split when no split file exists"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="JSON or YAML run config"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory (default: the model directory)"),
):
    """Report prediction quality, fairness score and utility of a trained predictor."""
    with exit_on_error():
        settings = resolve_settings(DEFAULTS, load_run_config(config), "evaluate", {
            "data": data, "model": model, "splits": splits, "gamma_m": gamma_m,
            "constraint_mode": constraint_mode, "omega": omega, "seed": seed, "out": out,
        })
        if not settings["data"] or not settings["model"]:
            typer.echo("Both --data and --model are required.")
            raise typer.Exit(code=2)
        model_dir = Path(settings["model"])
        predictor = Predictor.load(model_dir / "predictor.json")
        g_a = load_density(model_dir / "g_a.json")
        g_m = load_density(model_dir / "g_m.json")
        dataset = read_dataset_csv(settings["data"])
        split = load_splits(settings["data"], settings["splits"], dataset.n, int(settings["seed"]))
        z_grid = ZGrid.from_dataset(dataset.subset(split["train"]))
        effect_bounds = predictor_bounds(
            predictor, g_a, g_m, float(settings["gamma_m"]), z_grid, settings["constraint_mode"],
        )
        report = evaluate_predictor(predictor, evaluation_split(dataset, split), effect_bounds, float(settings["omega"]))
        out_dir = output_dir(settings["out"] or model_dir)
        write_json(out_dir / "eval_report.json", report.to_dict())
        write_frame(out_dir / "eval.csv", report.to_frame())
        write_resolved_config(out_dir, "evaluate", settings)

    typer.echo(f"{report.metric}={abs(report.r):.4f} fairness={report.fairness:.4f} utility={report.utility:.4f}")
    for e, value in report.max_abs.items():
        typer.echo(f"  max |{e.upper()}| bound: {value:.4f}")

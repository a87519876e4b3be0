"""fairbound train - fit a standard or bound-constrained predictor."""
import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import typer

from ..core import Dataset, read_dataset_csv
from ..estimation import ZGrid, fit_densities, save_density
from ..evaluation import evaluate_predictor
from ..neural import MlpConfig
from ..synthesis import split_indices
from ..training import LagrangianConfig, predictor_bounds, train_fair, train_standard
from ..utils.artifacts import output_dir, read_json, write_frame, write_json, write_resolved_config
from ..utils.cli import exit_on_error, parse_floats, parse_ints
from ..utils.config import load_run_config, resolve_settings

logger = logging.getLogger(__name__)

app = typer.Typer()

CONSTRAINT_KEYS = ("gamma", "lambda0", "mu0", "alpha", "update_rule", "max_iterations", "nested_epochs", "epsilon")

DEFAULTS = {
    "data": None,
    "splits": None,
    "mode": "fair",
    "constraint_mode": "scalar-expectation",
    "gamma_m": 2.0,
    "gamma": [0.02],
    "lambda0": 0.1,
    "mu0": 0.02,
    "alpha": 1.5,
    "update_rule": "verbatim",
    "max_iterations": 20,
    "nested_epochs": 5,
    "epsilon": 1.0,
    "hidden": [32, 32],
    "dropout": 0.1,
    "lr": 1e-4,
    "batch_size": 128,
    "epochs": 20,
    "density": "frequency",
    "density_epochs": 20,
    "smoothing": 0.5,
    "omega": 0.5,
    "seed": 0,
    "out": "model",
}


def load_splits(data_path: str, splits_path: Optional[str], n: int, seed: int) -> Dict[str, np.ndarray]:
    """Splits written by `generate` next to the data, or a fresh seeded 60/20/20 split."""
    path = Path(splits_path) if splits_path else Path(data_path).parent / "splits.json"
    if path.exists():
        raw = read_json(path)
        splits = {k: np.asarray(raw[k], dtype=np.int64) for k in ("train", "validation", "test")}
        if any(len(idx) and idx.max() >= n for idx in splits.values()):
            typer.echo(f"Split file {path} does not match the dataset size")
            raise typer.Exit(code=2)
        return splits
    return split_indices(n, seed)


def evaluation_split(dataset: Dataset, splits: Dict[str, np.ndarray]) -> Dataset:
    idx = splits["test"] if len(splits["test"]) else splits["train"]
    return dataset.subset(idx)


@app.callback(invoke_without_command=True)
def train(
    data: Optional[str] = typer.Option(None, "--data", "-d", help="Dataset CSV"),
    splits: Optional[str] = typer.Option(None, "--splits", help="splits.json (default: next to the data)"),
    mode: Optional[str] = typer.Option(None, "--mode", help="standard or fair"),
    constraint_mode: Optional[str] = typer.Option(None, "--constraint-mode", help="scalar-expectation or per-class"),
    gamma_m: Optional[float] = typer.Option(None, "--gamma-m", help="Mediator sensitivity used by the constraints"),
    gamma: Optional[str] = typer.Option(None, "--gamma", help="Constraint threshold(s), one value or one per constraint"),
    lambda0: Optional[float] = typer.Option(None, "--lambda0", help="Initial Lagrange multiplier"),
    mu0: Optional[float] = typer.Option(None, "--mu0", help="Initial penalty"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Penalty growth factor (> 1)"),
    update_rule: Optional[str] = typer.Option(None, "--update-rule", help="verbatim, ascent or fixed"),
    max_iterations: Optional[int] = typer.Option(None, "--max-iterations", help="Outer iterations"),
    nested_epochs: Optional[int] = typer.Option(None, "--nested-epochs", help="Epochs per outer iteration"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Loss level required for early stopping"),
    hidden: Optional[str] = typer.Option(None, "--hidden", help="Hidden layer widths, e.g. '32,32'"),
    dropout: Optional[float] = typer.Option(None, "--dropout", help="Dropout rate"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Adam learning rate"),
    batch_size: Optional[int] = typer.Option(None, "--batch-size", help="Minibatch size"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Epochs for standard training"),
    density: Optional[str] = typer.Option(None, "--density", help="Density backend: frequency or neural"),
    omega: Optional[float] = typer.Option(None, "--omega", help="Utility weight of prediction quality"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="JSON or YAML run config"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Train a predictor and evaluate it on the test split.

    Writes predictor.json, g_a.json, g_m.json, train_report.json,
    eval_report.json, eval.csv and resolved_config.json.
    """
    flags = {
        "data": data, "splits": splits, "mode": mode, "constraint_mode": constraint_mode,
        "gamma_m": gamma_m, "gamma": parse_floats(gamma, "--gamma"), "lambda0": lambda0, "mu0": mu0,
        "alpha": alpha, "update_rule": update_rule, "max_iterations": max_iterations,
        "nested_epochs": nested_epochs, "epsilon": epsilon, "hidden": parse_ints(hidden, "--hidden"),
        "dropout": dropout, "lr": lr, "batch_size": batch_size, "epochs": epochs, "density": density,
        "omega": omega, "seed": seed, "out": out,
    }
    with exit_on_error():
        settings = resolve_settings(DEFAULTS, load_run_config(config), "train", flags)
        if not settings["data"]:
            typer.echo("A dataset is required (--data or 'data' in the config).")
            raise typer.Exit(code=2)
        if settings["mode"] not in ("standard", "fair"):
            typer.echo(f"Unknown mode '{settings['mode']}'; use standard or fair.")
            raise typer.Exit(code=2)
        if settings["mode"] == "standard" and any(flags[k] is not None for k in CONSTRAINT_KEYS):
            typer.echo("Warning: standard mode ignores the constraint options")

        seed_value = int(settings["seed"])
        dataset = read_dataset_csv(settings["data"])
        split = load_splits(settings["data"], settings["splits"], dataset.n, seed_value)
        train_data = dataset.subset(split["train"])
        net_config = MlpConfig.for_task(
            1, tuple(settings["hidden"]), 1,
            dropout_rate=float(settings["dropout"]), learning_rate=float(settings["lr"]),
            batch_size=int(settings["batch_size"]), seed=seed_value,
        )
        g_a, g_m = fit_densities(
            train_data, backend=settings["density"], smoothing=float(settings["smoothing"]),
            seed=seed_value, epochs=int(settings["density_epochs"]),
        )
        z_grid = ZGrid.from_dataset(train_data)

        if settings["mode"] == "standard":
            predictor, report = train_standard(train_data, net_config, epochs=int(settings["epochs"]), seed=seed_value)
        else:
            lagrangian = LagrangianConfig(
                gamma=tuple(settings["gamma"]), lambda0=float(settings["lambda0"]), mu0=float(settings["mu0"]),
                alpha=float(settings["alpha"]), max_iterations=int(settings["max_iterations"]),
                nested_epochs=int(settings["nested_epochs"]), epsilon=float(settings["epsilon"]),
                update_rule=settings["update_rule"],
            )
            predictor, report = train_fair(
                train_data, g_a, g_m, float(settings["gamma_m"]), lagrangian, settings["constraint_mode"],
                net_config, seed=seed_value, z_grid=z_grid,
            )

        constraint_mode_eval = settings["constraint_mode"] if settings["mode"] == "fair" else "scalar-expectation"
        final_bounds = predictor_bounds(predictor, g_a, g_m, float(settings["gamma_m"]), z_grid, constraint_mode_eval)
        evaluation = evaluate_predictor(
            predictor, evaluation_split(dataset, split), final_bounds, float(settings["omega"]),
        )

        out_dir = output_dir(settings["out"])
        predictor.save(out_dir / "predictor.json")
        save_density(g_a, out_dir / "g_a.json")
        save_density(g_m, out_dir / "g_m.json")
        write_json(out_dir / "train_report.json", report.to_dict())
        write_json(out_dir / "eval_report.json", evaluation.to_dict())
        write_frame(out_dir / "eval.csv", evaluation.to_frame())
        write_resolved_config(out_dir, "train", settings)

    if settings["mode"] == "fair" and not report.converged:
        typer.echo(f"Constraints not met after {report.iterations} iterations (converged=false)")
    typer.echo(
        f"{evaluation.metric}={abs(evaluation.r):.4f} fairness={evaluation.fairness:.4f} "
        f"utility={evaluation.utility:.4f}"
    )
    typer.echo(f"Wrote model artifacts to {out_dir}")

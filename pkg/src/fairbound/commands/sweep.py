"""fairbound sweep - effect bounds over an ascending grid of sensitivity parameters."""
from typing import Optional

import pandas as pd
import typer

from ..bounds import bound_sweep
from ..core import EFFECTS, read_dataset_csv
from ..estimation import fit_frequency_tables
from ..utils.artifacts import output_dir, write_frame, write_json, write_resolved_config
from ..utils.cli import exit_on_error, parse_floats, parse_target
from ..utils.config import load_run_config, resolve_settings

app = typer.Typer()

DEFAULTS = {
    "data": None,
    "grid": [1.2, 2.0, 5.0],
    "y": None,
    "a_i": 0,
    "a_j": 1,
    "smoothing": 0.5,
    "ordering": "natural",
    "seed": 0,
    "out": "sweep",
}


def sweep_frame(results) -> pd.DataFrame:
    rows = []
    for b in results:
        row = {"gamma": b.gamma_m}
        for e in EFFECTS:
            iv = b.interval(e)
            row[f"{e}_lo"] = iv.lo
            row[f"{e}_hi"] = iv.hi
        for e in EFFECTS:
            row[f"{e}_naive"] = b.naive(e)
        rows.append(row)
    return pd.DataFrame(rows)


@app.callback(invoke_without_command=True)
def sweep(
    data: Optional[str] = typer.Option(None, "--data", "-d", help="Dataset CSV"),
    grid: Optional[str] = typer.Option(None, "--grid", help="Ascending gamma values, e.g. '1.2,2.0,5.0'"),
    y: Optional[str] = typer.Option(None, "--y", help="Outcome category or 'expectation'"),
    a_i: Optional[int] = typer.Option(None, "--a-i", help="Reference attribute value"),
    a_j: Optional[int] = typer.Option(None, "--a-j", help="Contrast attribute value"),
    smoothing: Optional[float] = typer.Option(None, "--smoothing", help="Additive smoothing for frequency tables"),
    ordering: Optional[str] = typer.Option(None, "--ordering", help="Mediator shift ordering: natural or value"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="JSON or YAML run config"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Bounds for each gamma (shared by mediator and outcome), one CSV row per value."""
    with exit_on_error():
        settings = resolve_settings(DEFAULTS, load_run_config(config), "sweep", {
            "data": data, "grid": parse_floats(grid, "--grid"), "y": parse_target(y),
            "a_i": a_i, "a_j": a_j, "smoothing": smoothing, "ordering": ordering, "seed": seed, "out": out,
        })
        if not settings["data"]:
            typer.echo("A dataset is required (--data or 'data' in the config).")
            raise typer.Exit(code=2)
        dataset = read_dataset_csv(settings["data"])
        target = settings["y"]
        if target is None:
            target = "expectation" if dataset.y_is_continuous else 1
        settings["y"] = target
        tables = fit_frequency_tables(dataset, smoothing=float(settings["smoothing"]))
        results = bound_sweep(
            tables, settings["grid"], target, int(settings["a_i"]), int(settings["a_j"]), settings["ordering"],
        )
        out_dir = output_dir(settings["out"])
        frame = sweep_frame(results)
        write_frame(out_dir / "sweep.csv", frame)
        write_json(out_dir / "sweep.json", [b.to_dict() for b in results])
        write_resolved_config(out_dir, "sweep", settings)

    typer.echo(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    typer.echo(f"Wrote {out_dir / 'sweep.csv'}")

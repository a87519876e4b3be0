"""fairbound bounds - closed-form effect bounds for one sensitivity setting."""
from pathlib import Path
from typing import Optional

import typer

from ..bounds import bound_effects, bound_face
from ..core import EFFECTS, CounterfactualEffects, SensitivityParams, read_dataset_csv
from ..estimation import fit_frequency_tables
from ..utils.artifacts import output_dir, read_json, render_summary, write_json, write_resolved_config
from ..utils.cli import exit_on_error, parse_target
from ..utils.config import load_run_config, resolve_settings

app = typer.Typer()

DEFAULTS = {
    "data": None,
    "gamma_m": 1.0,
    "gamma_y": 1.0,
    "y": None,
    "a_i": 0,
    "a_j": 1,
    "smoothing": 0.5,
    "ordering": "natural",
    "oracle": None,
    "face": False,
    "seed": 0,
    "out": "bounds",
}

CONTAINMENT_TOL = 1e-9


def oracle_comparison(report: dict, oracle_path: str) -> dict:
    truth = CounterfactualEffects.from_dict(read_json(oracle_path))
    values = {e: truth.value(e) for e in EFFECTS}
    contained = {
        e: report[e]["lo"] - CONTAINMENT_TOL <= values[e] <= report[e]["hi"] + CONTAINMENT_TOL
        for e in EFFECTS
    }
    return {"oracle": values, "containment": contained}


@app.callback(invoke_without_command=True)
def bounds(
    data: Optional[str] = typer.Option(None, "--data", "-d", help="Dataset CSV"),
    gamma_m: Optional[float] = typer.Option(None, "--gamma-m", help="Sensitivity parameter for the mediator"),
    gamma_y: Optional[float] = typer.Option(None, "--gamma-y", help="Sensitivity parameter for the outcome"),
    y: Optional[str] = typer.Option(None, "--y", help="Outcome category or 'expectation'"),
    a_i: Optional[int] = typer.Option(None, "--a-i", help="Reference attribute value"),
    a_j: Optional[int] = typer.Option(None, "--a-j", help="Contrast attribute value"),
    smoothing: Optional[float] = typer.Option(None, "--smoothing", help="Additive smoothing for frequency tables"),
    ordering: Optional[str] = typer.Option(None, "--ordering", help="Mediator shift ordering: natural or value"),
    oracle: Optional[str] = typer.Option(None, "--oracle", help="oracle.json written by `generate`"),
    face: Optional[bool] = typer.Option(None, "--face/--no-face", help="Also bound FACE and AFACE"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="JSON or YAML run config"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Bound DE, IE and SE of a dataset under the given sensitivity parameters.

    Writes bounds.json, tables.json, summary.md and resolved_config.json.
    """
    with exit_on_error():
        settings = resolve_settings(DEFAULTS, load_run_config(config), "bounds", {
            "data": data, "gamma_m": gamma_m, "gamma_y": gamma_y, "y": parse_target(y),
            "a_i": a_i, "a_j": a_j, "smoothing": smoothing, "ordering": ordering,
            "oracle": oracle, "face": face, "seed": seed, "out": out,
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
        params = SensitivityParams(float(settings["gamma_m"]), float(settings["gamma_y"]))
        effect_bounds = bound_effects(
            tables, params, target, int(settings["a_i"]), int(settings["a_j"]), settings["ordering"],
        )
        report = effect_bounds.to_dict()
        comparison = oracle_comparison(report, settings["oracle"]) if settings["oracle"] else {}
        report.update(comparison)
        if settings["face"]:
            report["face"] = bound_face(tables, params, int(settings["a_i"]), settings["ordering"]).to_dict()

        out_dir = output_dir(settings["out"])
        write_json(out_dir / "bounds.json", report)
        tables.save(out_dir / "tables.json")
        render_summary(
            "bounds_summary.md.jinja", out_dir / "summary.md",
            bounds=report, effects=EFFECTS, data_path=Path(settings["data"]).name,
            oracle=comparison.get("oracle"), containment=comparison.get("containment"),
        )
        write_resolved_config(out_dir, "bounds", settings)

    for e in EFFECTS:
        iv = report[e]
        typer.echo(f"{e.upper()} ({report['conditioning'][e]}): [{iv['lo']:.4f}, {iv['hi']:.4f}] naive {iv['naive']:.4f}")
    if comparison and not all(comparison["containment"].values()):
        typer.echo("Warning: the oracle effects are not all inside the bounds")
    typer.echo(f"Wrote {out_dir / 'bounds.json'}")

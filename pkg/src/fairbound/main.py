"""fairbound CLI entrypoint."""
import typer

from . import __version__
from .commands import bounds as bounds_cmd
from .commands import evaluate as evaluate_cmd
from .commands import generate as generate_cmd
from .commands import oracle_check as oracle_check_cmd
from .commands import sweep as sweep_cmd
from .commands import train as train_cmd
from .utils.cli import configure_logging

app = typer.Typer(help="fairbound - bounds on causal fairness effects under unobserved confounding")


@app.callback()
def main(
    verbose: int = typer.Option(0, "--verbose", "-v", count=True, help="Repeat for more log output"),
):
    configure_logging(verbose)


# fairbound generate
app.add_typer(generate_cmd.app, name="generate")

# fairbound bounds
app.add_typer(bounds_cmd.app, name="bounds")

# fairbound sweep
app.add_typer(sweep_cmd.app, name="sweep")

# fairbound train
app.add_typer(train_cmd.app, name="train")

# fairbound evaluate
app.add_typer(evaluate_cmd.app, name="evaluate")

# fairbound oracle-check
app.add_typer(oracle_check_cmd.app, name="oracle-check")


@app.command()
def version():
    """Show fairbound version info."""
    typer.echo(f"fairbound {__version__}")


if __name__ == "__main__":
    app()

"""Command modules; each exposes a Typer sub-app mounted in fairbound.main."""

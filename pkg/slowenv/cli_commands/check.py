# slowenv/cli_commands/check.py
"""
Command for validating a run configuration.
"""

import typer
import json
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.panel import Panel

console = Console()

# Create a 'Typer' app for the 'check' command
app = typer.Typer(
    no_args_is_help=False,
    context_settings={"allow_interspersed_args": True},
    help="Validate a config file and show the resolved values.",
)


@app.callback(invoke_without_command=True)
def check(
    ctx: typer.Context,
    config: Optional[Path] = typer.Argument(None, help="Config file (.json, .yaml or .yml)"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    json_output: bool = typer.Option(
        False, "--json", "-j", help="Print the resolved config as JSON"
    ),
) -> None:
    """
    Validate the config without running anything.

    Reports the same exit codes as `slowenv run` for config problems.

    Example:
        slowenv check lyapunov.json
        slowenv check sweep.yaml --json
    """
    if ctx.invoked_subcommand is not None:
        return

    if config is None:
        console.print("[red]Error: No config file given.[/red]")
        raise typer.Exit(code=2)

    from ..config import parse_config
    from ..core import ConfigError
    from ..results import run_id

    try:
        cfg = parse_config(config, {"seed": seed})
    except ConfigError as e:
        console.print(f"[red]✗[/red] {e}")
        raise typer.Exit(code=e.exit_code)

    resolved = cfg.model_dump(mode="json")
    if json_output:
        console.print(json.dumps(resolved, indent=2))
        return

    console.print(Panel.fit(
        f"[bold]Config:[/bold] {config}\n"
        f"[bold]Subcommand:[/bold] {cfg.subcommand}\n"
        f"[bold]Run id:[/bold] {run_id(cfg.canonical())}",
        border_style="blue"
    ))
    for key, value in resolved.items():
        if value is not None:
            console.print(f"  [cyan]{key}[/cyan] = {value}")
    console.print("\n[green bold]✓ Config is valid[/green bold]")

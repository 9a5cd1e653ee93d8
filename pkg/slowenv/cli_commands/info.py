# slowenv/cli_commands/info.py
"""
Command for displaying what the toolkit can run.
"""

import typer
import json

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

console = Console()

# Create a 'Typer' app for the 'info' command
app = typer.Typer(
    no_args_is_help=False,
    help="Display subcommands, noise kinds and configuration defaults.",
)

SUBCOMMAND_HELP = {
    "lyapunov": "time-average estimate of lambda(tau)",
    "furstenberg": "independent-pair Furstenberg estimate",
    "sweep": "lambda(tau) over a list of taus",
    "smalltau": "lambda/tau extrapolated to 0 against the variance functional",
    "sqrtlaw": "lambda/sqrt(tau) for white noise against the chaos constant",
    "spectrum": "Monte Carlo E[zeta] and E[mu]",
    "bounds": "lambda_hat against E[zeta] and E[zeta - mu/tau]",
    "sync": "decay rate of the projective distance of two profiles",
    "birkhoff": "empirical Birkhoff coefficient of one period",
    "chaos-const": "zeroth-chaos constant and its period average",
    "validate": "propagation schemes against the eigen reference",
}


@app.callback(invoke_without_command=True)
def info(
    ctx: typer.Context,
    json_output: bool = typer.Option(
        False, "--json", "-j", help="Output as JSON"
    ),
) -> None:
    """
    Display the available subcommands, noise kinds and defaults.

    Example:
        slowenv info
        slowenv info --json
    """
    # If a subcommand is being invoked, skip the callback logic
    if ctx.invoked_subcommand is not None:
        return

    from .. import __version__
    from ..config import SUBCOMMANDS, CliConfig
    from ..noise import NOISE_KINDS
    from ..results import SCHEMA_VERSION

    defaults = {
        name: field.default
        for name, field in CliConfig.model_fields.items()
        if not field.is_required() and field.default is not None
    }
    defaults = json.loads(json.dumps(defaults, default=lambda v: getattr(v, "value", str(v))))
    kinds = NOISE_KINDS

    if json_output:
        console.print(json.dumps({
            "version": __version__,
            "result_schema": SCHEMA_VERSION,
            "subcommands": list(SUBCOMMANDS),
            "noise_kinds": sorted(kinds),
            "defaults": defaults,
        }, indent=2))
        return

    console.print(Panel.fit(
        f"[bold cyan]slowenv {__version__}[/bold cyan]\n"
        f"[dim]Parabolic Anderson model in a slow random environment[/dim]\n\n"
        f"[bold]Result schema:[/bold] v{SCHEMA_VERSION}\n"
        f"[bold]Noise kinds:[/bold] {', '.join(sorted(kinds))}",
        title="slowenv Info",
        border_style="blue"
    ))

    table = Table(title="Subcommands")
    table.add_column("Subcommand", style="cyan")
    table.add_column("Computes")
    for name in SUBCOMMANDS:
        table.add_row(name, SUBCOMMAND_HELP.get(name, ""))
    console.print("")
    console.print(table)

    table = Table(title="Defaults")
    table.add_column("Key", style="cyan")
    table.add_column("Default", justify="right")
    for key, value in defaults.items():
        table.add_row(key, str(value))
    console.print("")
    console.print(table)

# slowenv/cli_commands/run.py
"""
Command for running an experiment.
"""

import typer
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.table import Table
from rich.panel import Panel

console = Console()

# Create a 'Typer' app for the 'run' command
app = typer.Typer(
    no_args_is_help=False,
    context_settings={"allow_interspersed_args": True},
    help="Run an experiment described by a JSON (or YAML) config.",
)


def rows_table(rows: list, title: str) -> Table:
    """Table of the columns that carry a value in at least one row."""
    from ..results import HEADER, format_value

    skip = {"schema_version", "run_id", "subcommand", "noise_params"}
    shown = [name for name in HEADER if name not in skip and any(row.get(name) is not None for row in rows)]

    table = Table(title=title)
    for name in shown:
        table.add_column(name, style="cyan" if name in ("lambda_hat", "slope", "extrapolated") else None)
    for row in rows:
        table.add_row(*[format_value(row.get(name)) for name in shown])
    return table


@app.callback(invoke_without_command=True)
def run(
    ctx: typer.Context,
    config: Optional[Path] = typer.Argument(None, help="Config file (.json, .yaml or .yml)"),
    tau: Optional[float] = typer.Option(None, "--tau", help="Renewal period"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed (overrides config and SLOWENV_SEED)"),
    grid_n: Optional[int] = typer.Option(None, "--grid-n", help="Number of grid nodes"),
    scheme: Optional[str] = typer.Option(None, "--scheme", help="eigen, strang or crank_nicolson"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Result file"),
    output_format: Optional[str] = typer.Option(None, "--format", "-f", help="csv or json"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker threads"),
    report: Optional[Path] = typer.Option(None, "--report", help="Also write a Markdown report"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
) -> None:
    """
    Run one experiment and write its result rows.

    Exit codes: 0 success, 1 numerical breakdown, 2 missing config,
    3 malformed config, 4 unknown key, 5 out-of-range value.

    Example:
        slowenv run lyapunov.json --out lyapunov.csv
        slowenv run sweep.yaml --seed 7 --workers 4
    """
    # If a subcommand is being invoked, skip the callback logic
    if ctx.invoked_subcommand is not None:
        return

    if config is None:
        console.print("[red]Error: No config file given.[/red]")
        raise typer.Exit(code=2)

    from ..config import parse_config
    from ..core import ConfigError, setup_logging
    from ..runner import run as run_experiment

    overrides = {
        "tau": tau,
        "seed": seed,
        "n": grid_n,
        "scheme": scheme,
        "output_path": str(out) if out else None,
        "output_format": output_format,
        "workers": workers,
        "report_path": str(report) if report else None,
        "log_level": log_level,
    }

    try:
        cfg = parse_config(config, overrides)
    except ConfigError as e:
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(code=e.exit_code)

    setup_logging(cfg.log_level)

    console.print(Panel.fit(
        f"[bold]Running:[/bold] {cfg.subcommand}\n"
        f"[dim]config {config} | n={cfg.n_grid} | scheme={cfg.scheme.value} | seed={cfg.seed}[/dim]",
        border_style="blue"
    ))

    result = run_experiment(cfg)

    if result.get("rows"):
        console.print(rows_table(result["rows"], title=f"{cfg.subcommand} results"))

    if result.get("output_path"):
        console.print(f"[green]✓ Wrote {len(result['rows'])} row(s) to {result['output_path']}[/green]")
    if cfg.report_path:
        console.print(f"[green]✓ Report written to {cfg.report_path}[/green]")

    if not result.get("success"):
        console.print(f"[red]Error: {result.get('error')}[/red]")
        raise typer.Exit(code=result.get("exit_code", 1))

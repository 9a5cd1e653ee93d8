# Import dependencies
import typer
from .cli_commands import check, info, run

# Initialize the cli app
app = typer.Typer(
    no_args_is_help=True,
    add_completion=True,
    help="slowenv - Lyapunov exponents of the parabolic Anderson model in a slow random environment",
)

# Command groups for the cli
app.add_typer(run.app, name="run", help="Run an experiment from a config file")
app.add_typer(check.app, name="check", help="Validate a config file without running it")
app.add_typer(info.app, name="info", help="List subcommands, noise kinds and defaults")

if __name__ == "__main__":
    app()

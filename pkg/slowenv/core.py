"""
Core module with shared utilities, error types and the report environment.
"""

from pathlib import Path
from typing import Any, Optional
import logging
import os

from jinja2 import Environment, FileSystemLoader
from rich.console import Console
from rich.logging import RichHandler

# Floor applied to non-positive values right before a logarithm
EPS_POS = 1e-300

SEED_ENV_VAR = "SLOWENV_SEED"

console = Console()
err_console = Console(stderr=True)

# Load templates
template_dir = Path(__file__).parent / "templates"
jinja_env = Environment(
    loader=FileSystemLoader(template_dir),
    autoescape=False,  # Markdown output
    keep_trailing_newline=True,
)


class SlowEnvError(Exception):
    """Base error; `diagnostics` carries whatever state helps a post-mortem."""

    def __init__(self, message: str, diagnostics: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InvalidArgumentError(SlowEnvError, ValueError):
    pass


class UnsupportedNoiseError(InvalidArgumentError):
    pass


class GridResolutionError(InvalidArgumentError):
    pass


class ChaosCutoffError(InvalidArgumentError):
    def __init__(self, message: str, estimated_tail: float):
        super().__init__(message, {"estimated_tail": estimated_tail})
        self.estimated_tail = estimated_tail


class NumericalBreakdownError(SlowEnvError, ArithmeticError):
    pass


class DegenerateMassError(NumericalBreakdownError):
    pass


class PerronViolationError(NumericalBreakdownError):
    pass


class NotFiniteError(SlowEnvError, ArithmeticError):
    pass


class ConfigError(SlowEnvError):
    exit_code = 1


class MissingConfigError(ConfigError):
    exit_code = 2


class MalformedConfigError(ConfigError):
    exit_code = 3


class UnknownKeyError(ConfigError):
    exit_code = 4


class OutOfRangeError(ConfigError):
    exit_code = 5


def setup_logging(level: str = "WARNING") -> logging.Logger:
    """
    Attach a single Rich handler to the package logger.

    Safe to call repeatedly; later calls only change the level.
    """
    logger = logging.getLogger("slowenv")
    logger.setLevel(level.upper())
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=err_console, show_path=False, rich_tracebacks=True)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
    return logger


def resolve_seed(explicit: Optional[int] = None) -> Optional[int]:
    """
    Resolve the master seed.

    Priority (highest to lowest):
    1. Explicit value (CLI flag or config key)
    2. SLOWENV_SEED environment variable
    3. None (caller decides whether that is an error)

    Raises:
        OutOfRangeError: If the environment variable is not an integer
    """
    if explicit is not None:
        return explicit

    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise OutOfRangeError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")

"""
Result rows: a fixed, versioned flat schema written as CSV or JSON lines.
"""

from pathlib import Path
from typing import Any, Iterable, Optional, Union
import csv
import hashlib
import io
import json
import math

from .core import InvalidArgumentError

SCHEMA_VERSION = 2

# Column order is part of the schema; new columns need a new SCHEMA_VERSION
HEADER: tuple[str, ...] = (
    "schema_version",
    "run_id",
    "subcommand",
    "noise_kind",
    "noise_params",
    "kappa",
    "tau",
    "n_grid",
    "scheme",
    "dt_max",
    "n_periods",
    "burn_in",
    "seed",
    "lambda_hat",
    "stderr",
    "target",
    "extrapolated",
    "closed_form",
    "chaos_value",
    "zeta_mean",
    "mu_mean",
    "slope",
    "negative_fraction",
    "mu_hat_birkhoff",
    "scheme_delta",
    "clamp_events",
    "status",
    "wall_time_s",
)

INT_COLUMNS = frozenset({"schema_version", "n_grid", "n_periods", "burn_in", "seed", "clamp_events"})
STR_COLUMNS = frozenset({"run_id", "subcommand", "noise_kind", "noise_params", "scheme", "status"})
FLOAT_COLUMNS = frozenset(HEADER) - INT_COLUMNS - STR_COLUMNS

ResultRow = dict[str, Any]


def run_id(canonical: dict[str, Any]) -> str:
    """Short content hash of the configuration that produced a run."""
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_row(**values: Any) -> ResultRow:
    unknown = set(values) - set(HEADER)
    if unknown:
        raise InvalidArgumentError(f"not part of the result schema: {sorted(unknown)}")
    row: ResultRow = {name: None for name in HEADER}
    row["schema_version"] = SCHEMA_VERSION
    row.update(values)
    return row


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    text = str(getattr(value, "value", value))
    if "," in text or "\n" in text:
        raise InvalidArgumentError(f"field value {text!r} would need quoting")
    return text


def _json_value(value: Any) -> Any:
    if isinstance(value, float):
        return float(format(value, ".17g")) if math.isfinite(value) else format(value, ".17g")
    if value is None or isinstance(value, (bool, int)):
        return value
    return str(getattr(value, "value", value))


def render(rows: Iterable[ResultRow], fmt: str = "csv") -> str:
    rows = list(rows)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(HEADER)
        for row in rows:
            writer.writerow([format_value(row.get(name)) for name in HEADER])
        return buf.getvalue()
    if fmt == "json":
        return "".join(
            json.dumps({name: _json_value(row.get(name)) for name in HEADER}) + "\n" for row in rows
        )
    raise InvalidArgumentError(f"unknown output format {fmt!r}")


def write_rows(rows: Iterable[ResultRow], path: Union[str, Path], fmt: str = "csv") -> Path:
    """Write all rows at once (single writer), UTF-8 with LF line endings."""
    out = Path(path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as f:
        f.write(render(rows, fmt))
    return out


def _parse_value(name: str, text: str) -> Any:
    if text == "":
        return None
    if name in INT_COLUMNS:
        return int(text)
    if name in FLOAT_COLUMNS:
        return float(text)
    return text


def read_rows(path: Union[str, Path], fmt: Optional[str] = None) -> list[ResultRow]:
    """
    Parse a result file back into typed rows.

    Raises:
        InvalidArgumentError: If the header does not match this schema version
    """
    p = Path(path)
    fmt = fmt or ("json" if p.suffix in (".json", ".jsonl") else "csv")
    text = p.read_text(encoding="utf-8")
    if fmt == "json":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        for row in rows:
            if tuple(row) != HEADER:
                raise InvalidArgumentError("JSON row keys do not match the result schema")
        return rows

    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader, ()))
    if header != HEADER:
        raise InvalidArgumentError("CSV header does not match the result schema")
    return [{name: _parse_value(name, cell) for name, cell in zip(HEADER, record)} for record in reader]

"""
Machine-readable report output for the CLI.

JSON is the canonical format: one envelope per invocation with the tool
version, command, parameters, results and warnings. CSV is offered for
tabular results. Floats are written with 17 significant digits in both.
"""

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO

import numpy as np

from . import config_base as config


def _plain(value: Any) -> Any:
    """Convert numpy scalars and enums to JSON-native values; reject NaN and inf."""
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite number {value!r} in report")
        return value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    return value


def format_float(value: float) -> str:
    text = format(value, config.FLOAT_FORMAT)
    if "." not in text and "e" not in text:
        # keep integral floats floats for JSON readers
        text += ".0"
    return text


class FixedDigitsEncoder(json.JSONEncoder):
    """JSON encoder that writes finite floats with FLOAT_FORMAT instead of repr."""

    def iterencode(self, o: Any, _one_shot: bool = False):
        def floatstr(value: float) -> str:
            if not math.isfinite(value):
                raise ValueError(f"non-finite number {value!r} in report")
            return format_float(value)

        encoder = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        # The C accelerator ignores floatstr, so always take the pure-Python path.
        _iterencode = json.encoder._make_iterencode(
            {} if self.check_circular else None,
            self.default,
            encoder,
            self.indent,
            floatstr,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot,
        )
        return _iterencode(o, 0)


@dataclass
class ReportEnvelope:
    command: str
    parameters: Dict[str, Any]
    results: Any
    warnings: List[str] = field(default_factory=list)
    tool_version: str = config.TOOL_VERSION

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "command": self.command,
            "parameters": _plain(self.parameters),
            "results": _plain(self.results),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False, cls=FixedDigitsEncoder)


def format_cell(value: Any) -> str:
    value = _plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, config.FLOAT_FORMAT)
    return str(value)


def write_csv(rows: Iterable[Dict[str, Any]], stream: TextIO, columns: Optional[Sequence[str]] = None) -> int:
    """Write flat dict rows; returns the number of data rows."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(column)) for column in columns])
    return len(rows)


def csv_text(rows: Iterable[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    buffer = io.StringIO()
    write_csv(rows, buffer, columns)
    return buffer.getvalue()


def flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Nested dicts become dotted column names, e.g. conditions.mu1_ok."""
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat

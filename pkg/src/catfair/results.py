"""Writing and reading result files.

Tabular output is a CSV file with one row per record and the record's
field order as columns. Mapping-valued fields are stored as JSON text,
missing values as empty cells. Structured output is one JSON document
holding the tool version, the configuration echo and the records.
"""

from __future__ import annotations

import csv
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .harness import SweepRecord, SynthRecord

FORMATS = ("tabular", "structured")
RECORD_TYPES = {"sweep": SweepRecord, "synth": SynthRecord}


def _record_type(records) -> str:
    for name, cls in RECORD_TYPES.items():
        if isinstance(records[0], cls):
            return name
    raise TypeError(f"unsupported record type {type(records[0]).__name__}")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=False)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(
    records: Sequence,
    path: str | Path,
    format: str = "tabular",
    config: dict | None = None,
    extra: dict | None = None,
) -> Path:
    if not records:
        raise ValueError("no records to write")
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    kind = _record_type(records)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if format == "structured":
            doc = {
                "tool": "catfair",
                "version": __version__,
                "record_type": kind,
                "config": config or {},
                "records": [r.to_dict() for r in records],
            }
            if extra:
                doc.update(extra)
            path.write_text(json.dumps(doc, indent=1))
        else:
            names = [f.name for f in fields(RECORD_TYPES[kind])]
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(names)
                for r in records:
                    d = r.to_dict()
                    writer.writerow([_cell(d[n]) for n in names])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def _parse(value: str, annotation: str):
    if value == "":
        return None
    if annotation.startswith("dict"):
        return json.loads(value)
    if annotation.startswith("float"):
        return float(value)
    if annotation.startswith("int"):
        return int(value)
    return value


def read_results(path: str | Path) -> list:
    """Records from a file written by :func:`emit_results`."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        cls = RECORD_TYPES[doc["record_type"]]
        return [cls.from_dict(r) for r in doc["records"]]
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    for cls in RECORD_TYPES.values():
        spec = {f.name: str(f.type) for f in fields(cls)}
        if header == list(spec):
            return [cls.from_dict({n: _parse(v, spec[n]) for n, v in zip(header, row)}) for row in rows[1:]]
    raise ValueError(f"{path}: unrecognised result header")

"""Comma-separated report tables and their sidecar metadata."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from . import __version__


def _cell(value):
    if isinstance(value, float):
        return repr(float(value))  # shortest round-trip form, numpy 2 scalars included
    if hasattr(value, "item"):  # numpy scalar
        return _cell(value.item())
    return value


def write_table(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_table(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_metadata(path, **fields) -> Path:
    """JSON sidecar; always records the code version. Keep timestamps out so reruns match."""
    doc = {"code_version": __version__, **fields}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_report(out_dir, name, report, **meta) -> Path:
    """``<name>.csv`` from a report's header()/rows(), plus ``<name>.meta.json``."""
    out_dir = Path(out_dir)
    path = write_table(out_dir / f"{name}.csv", report.header(), report.rows())
    write_metadata(out_dir / f"{name}.meta.json", report=name, **meta)
    return path

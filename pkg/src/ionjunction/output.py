"""Delimited tables with a metadata header, and the run manifest.

CSV files start with ``#`` comment lines (gnuplot and numpy.loadtxt skip
them) holding the metadata as ``# key: json-value``; the column header and
rows follow.  Floats are written with ``repr`` so identical inputs give
byte-identical bodies.  Anything time dependent goes into the manifest,
not the tables.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def _cell(v):
    if isinstance(v, float):
        v = float(v)  # numpy scalars repr as np.float64(...)
        return "nan" if math.isnan(v) else repr(v)
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def _jsonable(v):
    if hasattr(v, "item") and not isinstance(v, (list, tuple, dict)):
        try:
            return v.item()
        except (ValueError, AttributeError):
            pass
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def to_json(obj, **kw) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, **kw)


def write_table(path: Path, columns: list[str], rows, metadata: dict, fmt: str = "csv") -> Path:
    """Write ``rows`` to ``path`` (suffix replaced by the format) and return the path."""
    path = Path(path).with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [list(r) for r in rows]
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row has {len(r)} cells, expected {len(columns)}")
    if fmt == "csv":
        buf = io.StringIO()
        for k in sorted(metadata):
            buf.write(f"# {k}: {to_json(metadata[k])}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        path.write_text(buf.getvalue())
    elif fmt == "json":
        path.write_text(to_json({"metadata": metadata, "columns": columns, "rows": rows}, indent=1) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def read_csv(path: Path) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of :func:`write_table` for CSV; values stay strings."""
    meta = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("# "):
            k, v = ln[2:].split(": ", 1)
            meta[k] = json.loads(v)
        else:
            body.append(ln)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(obj, indent=1) + "\n")
    return path


@dataclass
class Manifest:
    """Record of one command invocation."""

    command: str
    config_hash: str
    files: list[str] = field(default_factory=list)
    basis: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    checks: dict[str, dict] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    started: float = field(default_factory=time.time)

    @property
    def run_id(self) -> str:
        return f"{self.command}-{self.config_hash}-{int(self.started)}"

    def add(self, path: Path):
        self.files.append(str(path))

    def check(self, name: str, ok: bool, **detail):
        self.checks[name] = {"ok": bool(ok), **detail}

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks.values())

    def write(self, directory: Path) -> Path:
        d = {"run_id": self.run_id, "command": self.command, "config_hash": self.config_hash,
             "code_version": __version__, "files": sorted(self.files), "basis_cache": self.basis,
             "timings_s": self.timings, "checks": self.checks, "failures": self.failures,
             "started_unix": self.started}
        return write_json(Path(directory) / f"manifest_{self.command}.json", d)

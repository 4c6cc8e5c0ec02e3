"""CSV with '#' key=value header comments, and gnuplot script emission."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

__all__ = ["write_csv", "read_csv", "write_gnuplot", "format_value"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


def write_csv(path, columns, rows, meta: dict | None = None) -> Path:
    """Write ``rows`` (iterables matching ``columns``) with a metadata header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={format_value(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            r = list(r)
            if len(r) != len(columns):
                raise ValueError(f"row has {len(r)} fields, expected {len(columns)}")
            w.writerow([format_value(v) for v in r])
    return path


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path):
    """Return ``(meta, columns, rows)``; numeric fields are parsed."""
    meta = {}
    lines = []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = _parse(v.strip())
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    rows = [[_parse(x) for x in r] for r in reader if r]
    return meta, columns, rows


def write_gnuplot(path, data_file: str, x: str, ys, columns, title: str = "", logscale: str = "",
                  xlabel: str | None = None, ylabel: str | None = None) -> Path:
    """Emit a gnuplot script plotting ``ys`` against ``x`` from a CSV file."""
    path = Path(path)
    ix = columns.index(x) + 1
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{xlabel or x}'",
        f"set ylabel '{ylabel or ', '.join(ys)}'",
        "set grid",
    ]
    if logscale:
        lines.append(f"set logscale {logscale}")
    plots = [f"'{data_file}' using {ix}:{columns.index(y) + 1} with linespoints" for y in ys]
    lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("pause -1")
    path.write_text("\n".join(lines) + "\n")
    return path

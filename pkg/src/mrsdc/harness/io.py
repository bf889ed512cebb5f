"""CSV, legacy-VTK and manifest writers."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

__all__ = ["format_value", "write_csv", "csv_text", "write_field_csv", "write_vtk", "write_manifest", "read_manifest"]


def format_value(value):
    """Deterministic text for CSV cells; floats in round-trip scientific notation."""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return f"{value:.16e}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows))
    return path


def write_field_csv(path, coords, T):
    rows = ((x, y, t) for (x, y), t in zip(coords, T))
    return write_csv(path, ("x", "y", "T"), rows)


def write_vtk(path, problem, T, title="temperature"):
    """Legacy ASCII VTK on the structured node grid (x index fastest)."""
    cfg = problem.config
    nx, ny = int(cfg.nx) + 1, int(cfg.ny) + 1
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        "ORIGIN 0 0 0",
        f"SPACING {problem.hx:.16e} {problem.hy:.16e} 1",
        f"POINT_DATA {nx * ny}",
        "SCALARS temperature double 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(f"{t:.16e}" for t in T)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_manifest(path, entries):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def text(v):
        # shortest round-trip form reads better than the fixed CSV format
        return repr(float(v)) if isinstance(v, (float, np.floating)) else format_value(v)

    path.write_text("".join(f"{k} = {text(v)}\n" for k, v in entries.items()))
    return path


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out

"""Diagnostics tables and field snapshots.

Both formats are plain text with a versioned comment header.  Numbers are
written with 17 significant digits, which round-trips IEEE doubles exactly,
and every write goes through a temporary file followed by an atomic rename
so readers never observe a partial file.
"""

import os

import numpy as np

from crossdiff.grid import Grid, SpeciesField
from crossdiff.stepper import StepReport

DIAGNOSTICS_FORMAT = "crossdiff-diagnostics v1"
FIELD_FORMAT = "crossdiff-field v1"

_DELIM = "\t"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def diagnostics_columns(n: int) -> list:
    """Column order of a diagnostics table for n species."""
    cols = ["time"]
    for name in ("mass", "l1", "l2", "l3", "fisher"):
        cols += [f"{name}_{i + 1}" for i in range(n)]
    cols += ["entropy_heps", "dissipation", "h_eta"]
    cols += [f"ck_bound_{i + 1}" for i in range(n)]
    cols.append("newton_iters")
    return cols


def diagnostics_row(report: StepReport) -> list:
    vals = [report.time]
    vals += list(report.mass)
    vals += list(report.l1)
    vals += list(report.l2)
    vals += list(report.l3)
    vals += list(report.fisher)
    vals += [report.entropy_heps, report.dissipation, report.h_eta]
    vals += list(report.ck_rhs)
    vals.append(float(report.newton_iters))
    return vals


def write_diagnostics(reports, n: int, path):
    """Write one row per report, tab separated, with a named header row."""
    columns = diagnostics_columns(n)
    lines = [f"# {DIAGNOSTICS_FORMAT}", _DELIM.join(columns)]
    expected = len(columns)
    for report in reports:
        row = diagnostics_row(report)
        if len(row) != expected:
            raise ValueError(f"report carries {len(row)} values, expected {expected}")
        lines.append(_DELIM.join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_diagnostics(path):
    """Return (column names, rows as a 2D array)."""
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().strip()
        if first != f"# {DIAGNOSTICS_FORMAT}":
            raise ValueError(f"{path}: expected a '{DIAGNOSTICS_FORMAT}' header, got {first!r}")
        columns = handle.readline().strip().split(_DELIM)
        data = np.loadtxt(handle, delimiter=_DELIM, ndmin=2)
    if data.size and data.shape[1] != len(columns):
        raise ValueError(f"{path}: {data.shape[1]} columns of data but {len(columns)} names")
    return columns, data


def write_field(field: SpeciesField, path):
    """Snapshot a species field: grid metadata header, then one cell per row."""
    grid = field.grid
    header = [
        f"# {FIELD_FORMAT}",
        f"# cells: {' '.join(str(c) for c in grid.cells)}",
        f"# lengths: {' '.join(_fmt(length) for length in grid.lengths)}",
        f"# species: {field.n}",
    ]
    table = field.values.reshape(field.n, -1).T
    rows = [_DELIM.join(_fmt(v) for v in row) for row in table]
    _atomic_write(path, "\n".join(header + rows) + "\n")


def read_field(path) -> SpeciesField:
    """Load a snapshot written by :func:`write_field`, bit-exactly."""
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline().strip()
        if first != f"# {FIELD_FORMAT}":
            raise ValueError(f"{path}: expected a '{FIELD_FORMAT}' header, got {first!r}")
        meta = {}
        for _ in range(3):
            line = handle.readline().strip()
            if not line.startswith("# ") or ":" not in line:
                raise ValueError(f"{path}: malformed metadata line {line!r}")
            key, _, rest = line[2:].partition(":")
            meta[key.strip()] = rest.split()
        for key in ("cells", "lengths", "species"):
            if key not in meta:
                raise ValueError(f"{path}: missing metadata '{key}'")
        cells = tuple(int(c) for c in meta["cells"])
        lengths = tuple(float(v) for v in meta["lengths"])
        n = int(meta["species"][0])
        data = np.loadtxt(handle, delimiter=_DELIM, ndmin=2)
    grid = Grid(cells=cells, lengths=lengths)
    if data.shape != (grid.total_cells, n):
        raise ValueError(
            f"{path}: data shape {data.shape} does not match {grid.total_cells} cells x {n} species"
        )
    return SpeciesField(grid, data.T.reshape((n,) + cells))

"""Trace and report persistence: lossless CSV traces and JSON manifests.

CSV layout: header ``t,mode,<state names...>`` where the name set is the
union across topology changes; states absent from a row's layout are empty
fields.  Values are written in scientific notation with 17 significant
digits, which round-trips float64 exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .hmm import MODE_NAMES

__all__ = ["write_trace_csv", "read_trace_csv", "CsvTrace", "write_json"]


def _fmt(v: float) -> str:
    return format(v, ".16e")


def write_trace_csv(trace, path, decimate: int = 1) -> int:
    """Write every `decimate`-th node of the trace; returns rows written."""
    if decimate < 1:
        raise ValueError(f"decimation factor must be >= 1, got {decimate}")
    names = trace.all_column_names()
    path = Path(path)
    rows = 0
    with path.open("w", newline="") as fh:
        fh.write("t,mode," + ",".join(names) + "\n")
        node = 0
        for seg in trace.segments:
            present = [n in seg.layout for n in names]
            idx = [seg.layout.index(n) if n in seg.layout else -1 for n in names]
            for i in range(len(seg.times)):
                if node % decimate == 0:
                    vals = seg.states[i]
                    cells = [
                        _fmt(vals[idx[j]]) if present[j] else "" for j in range(len(names))
                    ]
                    fh.write(
                        _fmt(seg.times[i])
                        + ","
                        + MODE_NAMES[seg.modes[i]]
                        + ","
                        + ",".join(cells)
                        + "\n"
                    )
                    rows += 1
                node += 1
    return rows


class CsvTrace:
    """Columnar view of a trace CSV; duck-compatible with SimulationTrace
    for comparison purposes (times / modes / column / has_column)."""

    def __init__(self, times, modes, columns):
        self.times = times
        self.modes = modes
        self._columns = columns

    @staticmethod
    def _envelope_parts(name):
        if name.startswith("env(") and name.endswith(")"):
            base = name[4:-1]
            return base + "_D", base + "_Q"
        return None

    def has_column(self, name: str) -> bool:
        env = self._envelope_parts(name)
        if env is not None:
            return all(p in self._columns for p in env)
        return name in self._columns

    def column(self, name: str) -> np.ndarray:
        env = self._envelope_parts(name)
        if env is not None:
            return np.hypot(self._columns[env[0]], self._columns[env[1]])
        return self._columns[name]

    @property
    def column_names(self):
        return list(self._columns)


def read_trace_csv(path) -> CsvTrace:
    """Exact inverse of write_trace_csv (empty fields become NaN)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["t", "mode"]:
            raise ValueError(f"{path}: not a trace CSV (header starts {header[:2]})")
        names = header[2:]
        times, modes = [], []
        cols = [[] for _ in names]
        for line in fh:
            cells = line.rstrip("\n").split(",")
            times.append(float(cells[0]))
            modes.append(MODE_NAMES.index(cells[1]))
            for j, cell in enumerate(cells[2:]):
                cols[j].append(float(cell) if cell else np.nan)
    return CsvTrace(
        times=np.array(times),
        modes=np.array(modes, dtype=np.uint8),
        columns={n: np.array(c) for n, c in zip(names, cols)},
    )


def write_json(obj, path):
    path = Path(path)
    with path.open("w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Time-indexed run records and their CSV serialization.

Every producing module (dynamics, admission, swarm) fills a TrajectoryLog
with its own fixed column schema. The CSV form carries the metadata
header as '# key: value' comment lines so a log round-trips through a
file without a sidecar.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import SchemaError


class TrajectoryLog:
    """Append-only table with named columns and a metadata header."""

    def __init__(self, columns, meta=None):
        self.columns = tuple(columns)
        self.meta = dict(meta or {})
        self.rows = []

    def append(self, row):
        row = tuple(row)
        if len(row) != len(self.columns):
            raise ValueError(
                f"row has {len(row)} fields, schema has {len(self.columns)}"
            )
        self.rows.append(row)

    def column(self, name):
        """One column as an array (float where possible, else object)."""
        try:
            k = self.columns.index(name)
        except ValueError:
            raise SchemaError(f"no column {name!r}; have {self.columns}") from None
        values = [r[k] for r in self.rows]
        try:
            return np.array([float(v) for v in values])
        except (TypeError, ValueError):
            return np.array(values, dtype=object)

    def validate(self):
        """Check the first (time) column is monotone nondecreasing."""
        t = self.column(self.columns[0])
        if len(t) > 1 and (np.diff(t) < 0).any():
            raise ValueError("time column is not monotone")

    def _cell(self, v):
        # np.float64 subclasses float, so normalize before repr: plain
        # Python floats print shortest-round-trip decimals.
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return str(v)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            for key, value in self.meta.items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([self._cell(v) for v in row])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        header = None
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                if line.startswith("#"):
                    body = line[1:].strip()
                    if ":" in body:
                        key, _, value = body.partition(":")
                        meta[key.strip()] = value.strip()
                    continue
                if not line.strip():
                    continue
                parsed = next(csv.reader([line]))
                if header is None:
                    header = parsed
                    continue
                rows.append(tuple(_maybe_number(v) for v in parsed))
        if header is None:
            raise SchemaError(f"{path}: no header row")
        log = cls(header, meta)
        for row in rows:
            log.append(row)
        return log


def _maybe_number(text):
    try:
        return float(text)
    except ValueError:
        return text

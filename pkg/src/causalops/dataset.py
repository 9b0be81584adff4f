"""Tabular telemetry: one column per observed metric node, one row per request."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TelemetryDataset:
    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)

    def __post_init__(self):
        self._matrix: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def matrix(self) -> np.ndarray:
        if self._matrix is None or self._matrix.shape[0] != len(self.rows):
            self._matrix = np.asarray(self.rows, dtype=float).reshape(len(self.rows), len(self.columns))
        return self._matrix

    def column(self, name: str) -> np.ndarray:
        return self.matrix()[:, self.columns.index(name)]

    def select(self, names: list[str]) -> np.ndarray:
        idx = [self.columns.index(n) for n in names]
        return self.matrix()[:, idx]

    def to_csv(self) -> bytes:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue().encode("utf-8")

    @classmethod
    def from_csv(cls, data: bytes | str) -> "TelemetryDataset":
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        lines = [ln for ln in data.split("\n") if ln != ""]
        columns = lines[0].split(",")
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        return cls(columns=columns, rows=rows)


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))

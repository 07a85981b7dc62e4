"""Dataset container and CSV round trip.

The on-disk format is a plain comma-separated file with a mandatory header
``z1..z{d'},y1..y{d}``, dot decimals, UTF-8, numeric-only fields.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


class CsvFormatError(ValueError):
    """Malformed CSV; message names the offending line."""


@dataclass(frozen=True)
class Dataset:
    """n rows of (z_t, y_t) pairs."""

    inputs: np.ndarray   # (n, d')
    outputs: np.ndarray  # (n, d)

    def __post_init__(self):
        z = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float)
        if z.ndim != 2 or y.ndim != 2 or z.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"inconsistent dataset shapes {z.shape}, {y.shape}")
        object.__setattr__(self, "inputs", z)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]


def save_csv(path, ds: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"z{i + 1}" for i in range(ds.input_dim)]
        header += [f"y{i + 1}" for i in range(ds.output_dim)]
        writer.writerow(header)
        for zt, yt in zip(ds.inputs, ds.outputs):
            writer.writerow([repr(float(v)) for v in zt] + [repr(float(v)) for v in yt])


def load_csv(path) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("line 1: empty file, header required") from None
        din = sum(1 for name in header if name.strip().startswith("z"))
        dout = sum(1 for name in header if name.strip().startswith("y"))
        if din < 1 or dout < 1 or din + dout != len(header):
            raise CsvFormatError(f"line 1: header must be z1..z{{d'}},y1..y{{d}}, got {header}")
        zs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != din + dout:
                raise CsvFormatError(f"line {lineno}: expected {din + dout} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise CsvFormatError(f"line {lineno}: non-numeric field") from None
            zs.append(vals[:din])
            ys.append(vals[din:])
    if not zs:
        raise CsvFormatError("line 2: no data rows")
    return Dataset(np.asarray(zs), np.asarray(ys))

"""Field containers shared by every stage of the pipeline, plus their file formats.

A field file (``.fld``) is plain text::

    FLD1 <n> <m> <dx> <dt> <Lx>
    <n floats of snapshot 0>
    ...
    <n floats of snapshot m-1>

Floats use Python's shortest round-trip ``repr`` so a write/read cycle is exact.
Sensor traces are CSV with one header row holding the sensor indices.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class FieldSeries:
    """Scalar field u(x, t) stored space-major: ``data[i, k]`` is cell i at snapshot k."""

    data: np.ndarray
    dx: float
    dt: float
    domain_length: float
    label: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise FieldError(f"field data must be 2-D (n x m), got shape {data.shape}")
        n, m = data.shape
        if n < 4 or m < 1:
            raise FieldError(f"field needs n >= 4 and m >= 1, got n={n}, m={m}")
        if not np.all(np.isfinite(data)):
            raise FieldError("field contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def with_data(self, data: np.ndarray, **changes) -> "FieldSeries":
        return replace(self, data=np.asarray(data, dtype=np.float64), **changes)

    def window(self, start: int, stop: int) -> "FieldSeries":
        if not 0 <= start < stop <= self.m:
            raise FieldError(f"window [{start}, {stop}) outside 0..{self.m}")
        return self.with_data(self.data[:, start:stop])


@dataclass(frozen=True)
class SensorTrace:
    """p sensor rows sampled from an n-cell field; ``data`` is p x m."""

    data: np.ndarray
    sensor_indices: np.ndarray
    n_source: int
    dt: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        idx = np.asarray(self.sensor_indices, dtype=np.int64)
        if data.ndim != 2 or data.shape[0] != idx.size:
            raise FieldError("sensor data must be p x m with p == len(sensor_indices)")
        if idx.size == 0 or idx.size > self.n_source:
            raise FieldError(f"need 1 <= p <= n, got p={idx.size}, n={self.n_source}")
        if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.n_source:
            raise FieldError("sensor indices must be strictly increasing and inside [0, n)")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "sensor_indices", idx)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode())


def write_field(path, series: FieldSeries) -> None:
    lines = [f"FLD1 {series.n} {series.m} {series.dx!r} {series.dt!r} {series.domain_length!r}"]
    for k in range(series.m):
        lines.append(" ".join(repr(float(v)) for v in series.data[:, k]))
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_field(path, label: str = "") -> FieldSeries:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != "FLD1":
            raise FieldError(f"{path}: not a FLD1 file")
        n, m = int(header[1]), int(header[2])
        dx, dt, lx = (float(v) for v in header[3:])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise FieldError(f"{path}: expected {m} rows of {n} values")
    data = np.array([[float(v) for v in r] for r in rows]).T
    return FieldSeries(data, dx, dt, lx, label=label or Path(path).stem)


def write_trace(path, trace: SensorTrace) -> None:
    lines = [",".join(str(int(i)) for i in trace.sensor_indices)]
    for k in range(trace.m):
        lines.append(",".join(repr(float(v)) for v in trace.data[:, k]))
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_trace(path, n_source: int, dt: float = 1.0) -> SensorTrace:
    with open(path) as fh:
        idx = [int(v) for v in fh.readline().strip().split(",")]
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return SensorTrace(np.array(rows).T.reshape(len(idx), -1), np.array(idx), n_source, dt)

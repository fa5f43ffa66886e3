"""Uniform periodic grids on ``[-L, L)^n`` and the binary checkpoint format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CDBF1"
_HEADER = struct.Struct("<IIdd")


class FieldError(ValueError):
    pass


def is_power_of_two(N: int) -> bool:
    return N >= 2 and (N & (N - 1)) == 0


@dataclass
class Field:
    """Samples ``values[i_1, ..., i_n] = u(t, -L + i_1 h, ..., -L + i_n h)`` with ``h = 2L/N``."""

    n: int
    N: int
    L: float
    t: float
    values: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= 5:
            raise FieldError(f"dimension {self.n} outside 1..5")
        if not is_power_of_two(self.N):
            raise FieldError(f"N = {self.N} is not a power of two")
        if not self.L > 0:
            raise FieldError("box half-width must be positive")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.N,) * self.n:
            raise FieldError(f"values have shape {self.values.shape}, expected {(self.N,) * self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h**self.n

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    def coords(self) -> list[np.ndarray]:
        """Open-mesh coordinate arrays, broadcastable to the full grid."""
        return grid_coords(self.n, self.N, self.L)

    def integral(self, weight=None) -> float:
        v = self.values if weight is None else self.values * weight
        return float(v.sum() * self.cell_volume)

    def tail_ratio(self) -> float:
        """Max of ``|u|`` on the outermost shell of grid points relative to the global max."""
        return shell_max(self.values) / max(float(np.abs(self.values).max()), 1e-300)

    def like(self, values, t: float | None = None) -> "Field":
        return Field(self.n, self.N, self.L, self.t if t is None else t, values)

    # -- checkpoint I/O -------------------------------------------------
    def save(self, path) -> Path:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(self.n, self.N, self.L, self.t))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path) -> "Field":
        raw = Path(path).read_bytes()
        if raw[:5] != MAGIC:
            raise FieldError(f"{path}: bad magic {raw[:5]!r}")
        n, N, L, t = _HEADER.unpack_from(raw, 5)
        off = 5 + _HEADER.size
        count = N**n
        if len(raw) != off + 8 * count:
            raise FieldError(f"{path}: expected {count} values, file has {(len(raw) - off) // 8}")
        values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape((N,) * n).copy()
        return cls(n, N, L, t, values)


def grid_coords(n: int, N: int, L: float) -> list[np.ndarray]:
    x = -L + (2.0 * L / N) * np.arange(N)
    return [x.reshape([-1 if j == i else 1 for j in range(n)]) for i in range(n)]


def shell_max(values: np.ndarray) -> float:
    out = 0.0
    for ax in range(values.ndim):
        for idx in (0, -1):
            out = max(out, float(np.abs(np.take(values, idx, axis=ax)).max()))
    return out

"""Axis-aligned grid functions and their CSV exchange format.

File layout::

    # maxlab-grid v1
    # shape=5,7
    # origin=-1.0,-1.5
    # spacing=0.5,0.5
    v_00,v_01,...      (row-major, last axis fastest; one row per leading index)
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

HEADER = "# maxlab-grid v1"


@dataclass(frozen=True)
class GridFunction:
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        origin = np.atleast_1d(np.asarray(self.origin, float))
        spacing = np.atleast_1d(np.asarray(self.spacing, float))
        values = np.asarray(self.values, float)
        if values.ndim != origin.shape[0] or spacing.shape != origin.shape:
            raise ValueError("origin, spacing and values disagree on dimension")
        if np.any(spacing <= 0):
            raise ValueError("grid spacing must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, f: Callable, lo, hi, shape) -> "GridFunction":
        """Sample ``f`` (vectorised over an ``(N, m)`` array) on a box."""
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        spacing = (hi - lo) / (np.array(shape) - 1)
        g = cls(lo, spacing, np.zeros(shape))
        vals = np.asarray(f(g.points()), float).reshape(shape)
        return cls(lo, spacing, vals)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        return [self.origin[k] + self.spacing[k] * np.arange(self.shape[k]) for k in range(self.dim)]

    def points(self) -> np.ndarray:
        """All nodes as an ``(N, m)`` array in row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    def node(self, index) -> np.ndarray:
        return self.origin + self.spacing * np.asarray(index, float)

    def index_of(self, x, tol: float = 1e-9):
        """Multi-index of the node at ``x`` (raises if ``x`` is not a node)."""
        k = (np.asarray(x, float) - self.origin) / self.spacing
        idx = np.rint(k).astype(int)
        if np.any(np.abs(k - idx) > tol) or np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise ValueError(f"{x} is not a grid node")
        return tuple(int(i) for i in idx)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, bool)
        mask[tuple(slice(1, -1) for _ in range(self.dim))] = True
        return mask

    def lower(self) -> np.ndarray:
        return self.origin.copy()

    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * (np.array(self.shape) - 1)

    def same_grid(self, other: "GridFunction") -> bool:
        return (self.shape == other.shape and np.allclose(self.origin, other.origin)
                and np.allclose(self.spacing, other.spacing))

    # Finite differences ------------------------------------------------------

    def gradient_at(self, index) -> np.ndarray:
        idx = np.array(index)
        g = np.empty(self.dim)
        for k in range(self.dim):
            e = np.zeros(self.dim, int)
            e[k] = 1
            g[k] = (self.values[tuple(idx + e)] - self.values[tuple(idx - e)]) / (2 * self.spacing[k])
        return g

    def hessian_at(self, index) -> np.ndarray:
        """Centred second-order stencil; valid at interior nodes only."""
        idx = np.array(index)
        v = self.values
        m = self.dim
        H = np.empty((m, m))
        for i in range(m):
            ei = np.zeros(m, int)
            ei[i] = 1
            H[i, i] = (v[tuple(idx + ei)] - 2 * v[tuple(idx)] + v[tuple(idx - ei)]) / self.spacing[i] ** 2
            for j in range(i + 1, m):
                ej = np.zeros(m, int)
                ej[j] = 1
                H[i, j] = H[j, i] = (v[tuple(idx + ei + ej)] - v[tuple(idx + ei - ej)]
                                     - v[tuple(idx - ei + ej)] + v[tuple(idx - ei - ej)]) / (
                    4 * self.spacing[i] * self.spacing[j])
        return H

    # IO ----------------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(HEADER + "\n")
        buf.write("# shape=" + ",".join(str(s) for s in self.shape) + "\n")
        buf.write("# origin=" + ",".join(repr(float(v)) for v in self.origin) + "\n")
        buf.write("# spacing=" + ",".join(repr(float(v)) for v in self.spacing) + "\n")
        rows = self.values.reshape(self.shape[0], -1) if self.dim > 1 else self.values[None]
        writer = csv.writer(buf, lineterminator="\n")
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "GridFunction":
        text = Path(source).read_text() if not _looks_like_csv_text(source) else source
        lines = text.splitlines()
        if not lines or lines[0].strip() != HEADER:
            raise ValueError(f"line 1: expected header {HEADER!r}")
        meta = {}
        body_start = 1
        for n, line in enumerate(lines[1:], start=2):
            if not line.startswith("#"):
                body_start = n - 1
                break
            key, _, val = line[1:].strip().partition("=")
            try:
                meta[key.strip()] = [float(v) for v in val.split(",")]
            except ValueError:
                raise ValueError(f"line {n}: cannot parse {key.strip()!r}") from None
        else:
            body_start = len(lines)
        for key in ("shape", "origin", "spacing"):
            if key not in meta:
                raise ValueError(f"missing header field {key!r}")
        shape = tuple(int(s) for s in meta["shape"])
        rows = []
        for n, line in enumerate(lines[body_start:], start=body_start + 1):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise ValueError(f"line {n}: non-numeric value") from None
        values = np.array(rows, float)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"expected {int(np.prod(shape))} values, found {values.size}")
        return cls(meta["origin"], meta["spacing"], values.reshape(shape))


def _looks_like_csv_text(source) -> bool:
    return isinstance(source, str) and ("\n" in source or source.lstrip().startswith(HEADER))

"""Uniform periodic grids and complex scalar fields.

All spatial fields in this package live on a square uniform grid with nodes
x_i = -L + i*h, h = 2L/n, and are differentiated pseudo-spectrally on the
periodic box [-L, L)^2.  Physically meaningful fields decay exponentially, so
the wrap-around error of the periodic Laplacian stays below the boundary-ring
level of the field itself.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid2D:
    """Square periodic grid: n nodes per side (power of two), half-width extent."""

    n: int
    extent: float

    def __post_init__(self):
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid n must be a power of two >= 4, got {self.n}")
        if self.extent <= 0:
            raise ValueError("grid extent must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def x(self) -> np.ndarray:
        return -self.extent + self.h * np.arange(self.n)

    def mesh(self):
        """(X1, X2) coordinate arrays, indexing='ij' (axis 0 is x1)."""
        x = self.x
        return np.meshgrid(x, x, indexing="ij")

    def wavenumbers(self):
        k = 2.0 * np.pi * sfft.fftfreq(self.n, d=self.h)
        return np.meshgrid(k, k, indexing="ij")

    def k2(self) -> np.ndarray:
        kx, ky = self.wavenumbers()
        return kx * kx + ky * ky

    def rsq(self) -> np.ndarray:
        X, Y = self.mesh()
        return X * X + Y * Y

    @property
    def origin_index(self) -> int:
        # x = 0 sits exactly on node n/2
        return self.n // 2


@dataclass
class ComplexField2D:
    """Complex scalar sampled on a Grid2D; values[i, j] = f(x_i, x_j)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError("field values must be (n, n)")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def extent(self) -> float:
        return self.grid.extent

    def copy(self) -> "ComplexField2D":
        return ComplexField2D(self.grid, self.values.copy())

    def boundary_ring_ratio(self) -> float:
        """max |value| on the outermost node ring relative to max |value|."""
        v = np.abs(self.values)
        peak = v.max()
        if peak == 0.0:
            return 0.0
        ring = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
        return float(ring / peak)


def same_grid(*fields) -> Grid2D:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grids differ: {f.grid} vs {g}")
    return g


# ---------------------------------------------------------------------------
# spectral operators (work on raw (n, n) or stacked (..., n, n) arrays)

def laplacian(values: np.ndarray, grid: Grid2D) -> np.ndarray:
    vh = sfft.fft2(values, axes=(-2, -1))
    return sfft.ifft2(-grid.k2() * vh, axes=(-2, -1))


def gradient(values: np.ndarray, grid: Grid2D):
    kx, ky = grid.wavenumbers()
    vh = sfft.fft2(values, axes=(-2, -1))
    return (sfft.ifft2(1j * kx * vh, axes=(-2, -1)),
            sfft.ifft2(1j * ky * vh, axes=(-2, -1)))


def integrate(values: np.ndarray, grid: Grid2D):
    """Trapezoid rule on the periodic box (h^2 * sum); spectrally accurate."""
    return values.sum(axis=(-2, -1)) * grid.h * grid.h


def norm2(values: np.ndarray, grid: Grid2D) -> float:
    return float(np.sqrt((np.abs(values) ** 2).sum() * grid.h * grid.h))


def inner(a: np.ndarray, b: np.ndarray, grid: Grid2D) -> complex:
    """L2 inner product int a * conj(b)."""
    return complex((a * np.conj(b)).sum() * grid.h * grid.h)


def re_inner(a: np.ndarray, b: np.ndarray, grid: Grid2D) -> float:
    return float((a * np.conj(b)).real.sum() * grid.h * grid.h)


# ---------------------------------------------------------------------------
# persistence: one JSON header line, then raw little-endian float64 (re, im)
# pairs in row-major order.  Round-trips bit-exactly.

def save_field(path, f: ComplexField2D, kind: str = "field", units: str = "dimensionless",
               config_hash: str | None = None) -> None:
    header = {"n": f.grid.n, "extent": f.grid.extent, "kind": kind, "units": units}
    if config_hash is not None:
        header["config_hash"] = config_hash
    pairs = np.empty((f.grid.n * f.grid.n, 2), dtype="<f8")
    pairs[:, 0] = f.values.real.ravel(order="C")
    pairs[:, 1] = f.values.imag.ravel(order="C")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(pairs.tobytes())


def load_field(path) -> tuple[ComplexField2D, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = fh.read()
    n = int(header["n"])
    pairs = np.frombuffer(raw, dtype="<f8").reshape(n * n, 2)
    values = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(n, n)
    grid = Grid2D(n=n, extent=float(header["extent"]))
    return ComplexField2D(grid, values), header

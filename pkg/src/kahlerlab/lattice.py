"""Periodic spectral fields on flat complex tori.

Real coordinates are ordered ``(x1, y1, x2, y2)`` with ``z^a = x_a + i y_a`` and
each axis has period ``2*pi``.  Complex derivatives follow
``d/dz = (d/dx - i d/dy) / 2``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch

PERIOD = 2.0 * np.pi
_MAGIC = b"KLF1"


@dataclass(frozen=True)
class TorusGrid:
    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.N < 8 or self.N > 256 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two in [8, 256], got {self.N}")

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.ndim

    @property
    def size(self) -> int:
        return self.N ** self.ndim

    @property
    def spacing(self) -> float:
        return PERIOD / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.ndim

    @property
    def volume(self) -> float:
        return PERIOD ** self.ndim

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.N) * self.spacing
        return tuple(np.meshgrid(*([x] * self.ndim), indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per real axis, broadcastable to ``shape``."""
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        out = []
        for ax in range(self.ndim):
            sh = [1] * self.ndim
            sh[ax] = self.N
            out.append(k.reshape(sh))
        return tuple(out)

    @cached_property
    def _odd_mask(self) -> np.ndarray:
        # Nyquist modes carry no well-defined odd derivative.
        mask = np.ones(self.shape)
        for k in self.wavenumbers:
            mask = mask * (np.abs(k) != self.N // 2)
        return mask

    @cached_property
    def hol_multipliers(self) -> tuple[np.ndarray, ...]:
        """Fourier symbols of d/dz^a."""
        kk = self.wavenumbers
        return tuple(0.5 * (1j * kk[2 * a] + kk[2 * a + 1]) * self._odd_mask for a in range(self.n))

    @cached_property
    def antihol_multipliers(self) -> tuple[np.ndarray, ...]:
        """Fourier symbols of d/dzbar^a."""
        kk = self.wavenumbers
        return tuple(0.5 * (1j * kk[2 * a] - kk[2 * a + 1]) * self._odd_mask for a in range(self.n))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cut = self.N // 3
        mask = np.ones(self.shape, dtype=bool)
        for k in self.wavenumbers:
            mask = mask & (np.abs(k) <= cut)
        return mask


@dataclass(frozen=True, eq=False)
class Field:
    """Immutable sampled function on a torus grid."""

    grid: TorusGrid
    values: np.ndarray
    purity: str | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        purity = self.purity
        if purity is None:
            scale = np.max(np.abs(v), initial=0.0)
            purity = "real" if np.max(np.abs(v.imag), initial=0.0) <= 1e-12 * scale else "complex"
        elif purity not in ("real", "complex"):
            raise ValueError(f"purity must be 'real' or 'complex', got {purity!r}")
        if purity == "real":
            # round-off imaginary parts are discarded so real fields are exactly real
            v = v.real.astype(complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "purity", purity)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def coefficients(self) -> np.ndarray:
        return np.fft.fftn(self.values) / self.grid.size

    @classmethod
    def from_coefficients(cls, grid: TorusGrid, coeffs) -> "Field":
        return cls(grid, np.fft.ifftn(np.asarray(coeffs) * grid.size))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "Field":
        return cls(grid, fn(*grid.coords))


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f)


def _same_grid(*fields):
    grids = {f.grid for f in fields if isinstance(f, Field)}
    if len(grids) > 1:
        raise GridMismatch("fields live on different grids")


def derivative(values, grid: TorusGrid, axis: int, kind: str = "holomorphic") -> np.ndarray:
    if not 0 <= axis < grid.n:
        raise ValueError(f"axis {axis} out of range for n = {grid.n}")
    if kind not in ("holomorphic", "antiholomorphic"):
        raise ValueError(f"unknown derivative kind {kind!r}")
    mult = grid.hol_multipliers if kind == "holomorphic" else grid.antihol_multipliers
    return np.fft.ifftn(np.fft.fftn(values) * mult[axis])


def spectral_derivative(f: Field, axis: int, kind: str = "holomorphic") -> Field:
    """d f / dz^axis or d f / dzbar^axis by Fourier multiplier."""
    return Field(f.grid, derivative(f.values, f.grid, axis, kind), purity="complex")


def gradients(values, grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """All first derivatives ``(d_a f, dbar_a f)`` stacked on a leading axis."""
    fh = np.fft.fftn(values)
    d = np.stack([np.fft.ifftn(fh * m) for m in grid.hol_multipliers])
    db = np.stack([np.fft.ifftn(fh * m) for m in grid.antihol_multipliers])
    return d, db


def complex_hessian(values, grid: TorusGrid) -> np.ndarray:
    """``H[a, b] = d_a dbar_b f`` with shape ``(n, n) + grid.shape``."""
    fh = np.fft.fftn(values)
    n = grid.n
    H = np.empty((n, n) + grid.shape, dtype=complex)
    for a in range(n):
        for b in range(n):
            H[a, b] = np.fft.ifftn(fh * grid.hol_multipliers[a] * grid.antihol_multipliers[b])
    return H


def dealias(values, grid: TorusGrid) -> np.ndarray:
    """Low-pass filter onto the lower 2/3 of modes on every axis."""
    return np.fft.ifftn(np.fft.fftn(values) * grid.dealias_mask)


def integrate(f, density, grid: TorusGrid | None = None) -> complex:
    """Trapezoid sum of ``f * density`` over the fundamental domain."""
    _same_grid(f, density)
    grid = grid or next(x.grid for x in (f, density) if isinstance(x, Field))
    fv, dv = np.broadcast_arrays(_values(f), _values(density))
    if fv.shape != grid.shape:
        raise GridMismatch(f"shape {fv.shape} does not match grid {grid.shape}")
    return complex(np.sum(fv * dv) * grid.cell_volume)


def inner_product(f, g, density, grid: TorusGrid | None = None) -> complex:
    _same_grid(f, g, density)
    return integrate(_values(f) * np.conj(_values(g)), density,
                     grid or next(x.grid for x in (f, g, density) if isinstance(x, Field)))


# -- serialization ---------------------------------------------------------

def _header(f: Field) -> dict:
    return {"n": f.grid.n, "N": f.grid.N, "purity": f.purity}


def field_to_json(f: Field) -> str:
    h = _header(f)
    flat = f.values.ravel(order="C")
    if h["purity"] == "real":
        data = [float(v) for v in flat.real]
    else:
        data = [[float(v.real), float(v.imag)] for v in flat]
    return json.dumps({"header": h, "values": data})


def field_from_json(text: str) -> Field:
    obj = json.loads(text)
    h = obj["header"]
    grid = TorusGrid(int(h["n"]), int(h["N"]))
    arr = np.asarray(obj["values"], dtype=float)
    if h["purity"] == "real":
        vals = arr.astype(complex)
    else:
        vals = arr[:, 0] + 1j * arr[:, 1]
    return Field(grid, vals.reshape(grid.shape), purity=h["purity"])


def field_to_bytes(f: Field) -> bytes:
    h = _header(f)
    head = json.dumps(h).encode()
    flat = f.values.ravel(order="C")
    body = flat.real.astype("<f8").tobytes() if h["purity"] == "real" else flat.astype("<c16").tobytes()
    return _MAGIC + struct.pack("<I", len(head)) + head + body


def field_from_bytes(blob: bytes) -> Field:
    if blob[:4] != _MAGIC:
        raise ValueError("not a serialized field")
    (hl,) = struct.unpack("<I", blob[4:8])
    h = json.loads(blob[8:8 + hl])
    grid = TorusGrid(int(h["n"]), int(h["N"]))
    body = blob[8 + hl:]
    if h["purity"] == "real":
        vals = np.frombuffer(body, dtype="<f8").astype(complex)
    else:
        vals = np.frombuffer(body, dtype="<c16")
    return Field(grid, vals.reshape(grid.shape), purity=h["purity"])

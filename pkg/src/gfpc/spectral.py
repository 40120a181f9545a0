"""Periodic grids, discrete Fourier transforms and diagonal Fourier multipliers.

Fields are stored as arrays indexed ``[ix, iy, iz]`` (``np.meshgrid`` with
``indexing="ij"``).  The forward transform carries the ``1/M**d`` factor so
that coefficients are the discrete Fourier coefficients of the nodal data;
the inverse transform carries no factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable

import numpy as np


class GridMismatchError(ValueError):
    """Raised when an operator and a field live on different grids."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic tensor grid.

    ``points`` holds the number of nodes per axis; nodes sit at
    ``domain_min + h * j`` for ``j = 0..M-1``.
    """

    points: tuple[int, ...]
    domain_min: tuple[float, ...]
    domain_max: tuple[float, ...]

    def __post_init__(self):
        points = tuple(int(m) for m in self.points)
        lo = tuple(float(a) for a in self.domain_min)
        hi = tuple(float(b) for b in self.domain_max)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "domain_min", lo)
        object.__setattr__(self, "domain_max", hi)
        if not 1 <= len(points) <= 3:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(points)}")
        if not len(points) == len(lo) == len(hi):
            raise ValueError("points, domain_min and domain_max must have equal length")
        for m in points:
            if m < 4 or m % 2:
                raise ValueError(f"points per axis must be even and >= 4, got {m}")
        for a, b in zip(lo, hi):
            if not b > a:
                raise ValueError(f"empty axis extent [{a}, {b}]")

    @classmethod
    def uniform(cls, dim: int, points: int, lo: float = 0.0, hi: float = 2 * math.pi) -> "Grid":
        return cls((points,) * dim, (lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return math.prod(self.points)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.domain_min, self.domain_max))

    @property
    def mesh_size(self) -> tuple[float, ...]:
        return tuple(length / m for length, m in zip(self.lengths, self.points))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.mesh_size)

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    def lattice(self, axis: int) -> np.ndarray:
        """Integer wavenumbers of one axis in FFT order, covering [-M/2, M/2-1]."""
        m = self.points[axis]
        return np.fft.fftfreq(m, d=1.0 / m).astype(np.int64)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.domain_min[axis] + self.mesh_size[axis] * np.arange(self.points[axis])

    def coordinates(self) -> tuple[np.ndarray, ...]:
        axes = [self.axis_coordinates(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def _wavenumber_axes(self, half: bool) -> list[np.ndarray]:
        ks = []
        for a in range(self.dim):
            lat = self.lattice(a).astype(float)
            if half and a == self.dim - 1:
                # rfft layout: 0..M/2, the last entry is the Nyquist (cosine) mode
                lat = np.abs(lat[: self.points[a] // 2 + 1])
            ks.append(2 * math.pi / self.lengths[a] * lat)
        return ks

    def wavenumber_squared(self, half: bool = False) -> np.ndarray:
        """|k|^2 over the mode lattice (full FFT layout or rfft half layout)."""
        ks = self._wavenumber_axes(half)
        grids = np.meshgrid(*ks, indexing="ij")
        return sum(k * k for k in grids)

    @cached_property
    def k2_half(self) -> np.ndarray:
        k2 = self.wavenumber_squared(half=True)
        k2.flags.writeable = False
        return k2

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        # rfft stores half the spectrum; interior columns stand for a conjugate pair
        m = self.points[-1]
        w = np.full(m // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        w.flags.writeable = False
        return w

    @cached_property
    def nyquist_factor_half(self) -> np.ndarray:
        """0.5 per axis on which a mode sits at the Nyquist index (half layout).

        The real trigonometric interpolant carries a Nyquist coefficient as a
        cosine split between +-M/2, so its squared gradient norm counts such a
        mode with this factor relative to the one-sided lattice -M/2..M/2-1.
        """
        factors = []
        for a in range(self.dim):
            m = self.points[a]
            f = np.ones(m // 2 + 1 if a == self.dim - 1 else m)
            f[m // 2] = 0.5
            factors.append(f)
        w = factors[0]
        for f in factors[1:]:
            w = np.multiply.outer(w, f)
        w.flags.writeable = False
        return w


@dataclass(frozen=True, eq=False)
class Field:
    """Real nodal samples on a grid.  Values are copied and frozen."""

    grid: Grid
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != self.grid.shape:
            if vals.size != self.grid.size:
                raise ValueError(
                    f"field has {vals.size} values, grid needs {self.grid.size}")
            vals = vals.reshape(self.grid.shape)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @cached_property
    def spectral_cache(self) -> np.ndarray:
        """Discrete Fourier coefficients (full layout), computed on first use."""
        coeffs = transform_forward(self)
        coeffs.flags.writeable = False
        return coeffs

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def __add__(self, other):
        return Field(self.grid, self.values + _values_on(self.grid, other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _values_on(self.grid, other))

    def __mul__(self, scalar: float):
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def _values_on(grid: Grid, other) -> np.ndarray:
    if isinstance(other, Field):
        if other.grid != grid:
            raise GridMismatchError("fields live on different grids")
        return other.values
    return np.asarray(other, dtype=float)


def as_values(field) -> np.ndarray:
    """Nodal array of a Field, or the array itself."""
    return field.values if isinstance(field, Field) else np.asarray(field, dtype=float)


def transform_forward(field: Field) -> np.ndarray:
    """Discrete Fourier coefficients with the 1/M^d normalization."""
    vals = field.values
    if not np.all(np.isfinite(vals)):
        bad = int(np.count_nonzero(~np.isfinite(vals)))
        raise ValueError(f"cannot transform field with {bad} non-finite values")
    return np.fft.fftn(vals) / field.grid.size


def transform_inverse(coeffs: np.ndarray, grid: Grid) -> Field:
    coeffs = np.asarray(coeffs)
    if coeffs.shape != grid.shape:
        raise GridMismatchError(f"coefficient shape {coeffs.shape} != grid {grid.shape}")
    return Field(grid, np.fft.ifftn(coeffs * grid.size).real)


def rfft(values: np.ndarray) -> np.ndarray:
    """Unnormalized real FFT used by the steppers (half layout)."""
    return np.fft.rfftn(values)


def irfft(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.irfftn(coeffs, s=grid.shape, axes=tuple(range(grid.dim)))


class FourierMultiplier:
    """Diagonal operator in Fourier space with a real, even symbol.

    The symbol is a function of ``|k|^2``; ``array`` holds it over the rfft
    half lattice, which is all the operators here need.
    """

    def __init__(self, grid: Grid, array: np.ndarray, name: str = "multiplier"):
        arr = np.asarray(array, dtype=float)
        if arr.shape != grid.k2_half.shape:
            arr = np.broadcast_to(arr, grid.k2_half.shape).copy()
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name}: multiplier must be finite at every mode")
        arr.flags.writeable = False
        self.grid = grid
        self.array = arr
        self.name = name

    @classmethod
    def from_symbol(cls, grid: Grid, symbol: Callable[[np.ndarray], np.ndarray],
                    name: str = "multiplier") -> "FourierMultiplier":
        return cls(grid, symbol(grid.k2_half), name)

    @classmethod
    def identity(cls, grid: Grid) -> "FourierMultiplier":
        return cls(grid, np.ones_like(grid.k2_half), "I")

    @classmethod
    def laplacian(cls, grid: Grid) -> "FourierMultiplier":
        return cls(grid, -grid.k2_half, "Delta")

    @classmethod
    def neg_laplacian(cls, grid: Grid) -> "FourierMultiplier":
        return cls(grid, grid.k2_half, "-Delta")

    @classmethod
    def stabilized(cls, grid: Grid, stabilizer: float) -> "FourierMultiplier":
        """L = -Delta + S I."""
        return cls(grid, grid.k2_half + stabilizer, "L")

    @classmethod
    def resolvent(cls, grid: Grid, eta: float) -> "FourierMultiplier":
        """(I - eta Delta)^{-1}."""
        return cls(grid, 1.0 / (1.0 + eta * grid.k2_half), "(I-eta Delta)^-1")

    def full(self) -> np.ndarray:
        """Symbol over the full FFT lattice."""
        return _half_to_full(self.grid, self.array)

    def __mul__(self, other: "FourierMultiplier") -> "FourierMultiplier":
        if not isinstance(other, FourierMultiplier):
            return NotImplemented
        if other.grid != self.grid:
            raise GridMismatchError("cannot compose multipliers on different grids")
        return FourierMultiplier(self.grid, self.array * other.array,
                                 f"{self.name}*{other.name}")

    def __repr__(self):
        return f"FourierMultiplier({self.name!r}, grid={self.grid.shape})"


def _half_to_full(grid: Grid, half: np.ndarray) -> np.ndarray:
    m = grid.points[-1]
    lat = np.abs(grid.lattice(grid.dim - 1))
    # even symbol: value at -l equals value at l along the last axis
    idx = np.minimum(lat, m // 2)
    full = np.take(half, idx, axis=-1)
    # other axes are already in full layout
    return full


def apply_multiplier(op: FourierMultiplier, field: Field) -> Field:
    if op.grid != field.grid:
        raise GridMismatchError(
            f"{op.name} lives on {op.grid.shape}, field on {field.grid.shape}")
    return Field(field.grid, irfft(op.array * rfft(field.values), field.grid))


# ---------------------------------------------------------------------------
# projection / interpolation

def _resample_axis(coeffs: np.ndarray, axis: int, m_new: int) -> np.ndarray:
    """Zero-pad or truncate a full-layout spectrum along one axis.

    The Nyquist mode is treated as a cosine: it is split evenly between
    +-M/2 when padding, and the +-M/2 pair of the finer spectrum is folded
    onto it (sine part dropped) when truncating.
    """
    m_old = coeffs.shape[axis]
    if m_new == m_old:
        return coeffs
    moved = np.moveaxis(coeffs, axis, 0)
    out_shape = (m_new,) + moved.shape[1:]
    out = np.zeros(out_shape, dtype=complex)
    if m_new > m_old:
        half = m_old // 2
        out[:half] = moved[:half]
        out[m_new - half + 1:] = moved[half + 1:]
        out[half] = 0.5 * moved[half]
        out[m_new - half] = 0.5 * moved[half]
    else:
        half = m_new // 2
        out[:half] = moved[:half]
        out[half + 1:] = moved[m_old - half + 1:]
        out[half] = moved[half] + moved[m_old - half]
    return np.moveaxis(out, 0, axis)


def resample(field: Field, grid: Grid) -> Field:
    """Evaluate the trigonometric interpolant of ``field`` on ``grid``,
    or truncate it to ``grid``'s mode lattice when ``grid`` is coarser."""
    if grid.lengths != field.grid.lengths or grid.domain_min != field.grid.domain_min:
        raise GridMismatchError("resampling requires the same physical domain")
    coeffs = transform_forward(field)
    for axis, m in enumerate(grid.points):
        coeffs = _resample_axis(coeffs, axis, m)
    return transform_inverse(coeffs, grid)


def project_interpolate(field: Field, target: str = "I_h",
                        pointwise: Callable[[np.ndarray], np.ndarray] | None = None,
                        oversample: int = 4) -> Field:
    """Apply ``I_h`` or ``P_h`` to ``pointwise(u_h)``.

    ``I_h`` samples the map at the nodes.  ``P_h`` keeps only the modes of
    the lattice of the continuous function ``pointwise(I_h u)``; its Fourier
    coefficients are computed on a grid ``oversample`` times finer, which is
    exact when the map is a polynomial of degree below ``oversample``.
    """
    if target not in ("I_h", "P_h"):
        raise ValueError(f"unknown target {target!r}, expected 'I_h' or 'P_h'")
    if pointwise is None:
        # nodal data already is its own interpolant and is band limited
        return Field(field.grid, field.values)
    if target == "I_h":
        return Field(field.grid, pointwise(field.values))
    grid = field.grid
    fine = Grid(tuple(oversample * m for m in grid.points), grid.domain_min, grid.domain_max)
    fine_vals = resample(field, fine).values
    mapped = Field(fine, pointwise(fine_vals))
    return resample(mapped, grid)


def l2_norm(grid: Grid, values: np.ndarray) -> float:
    """Discrete L2 norm sqrt(h^d sum u^2)."""
    return math.sqrt(grid.cell_volume * float(np.sum(np.square(values))))


def inner(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    return grid.cell_volume * float(np.sum(u * v))


def gradient_energy(grid: Grid, coeffs_half: np.ndarray, real_nyquist: bool = False) -> float:
    """0.5 * ||grad u||^2 of the trigonometric interpolant, from the unnormalized rfft.

    By default the interpolant lives on the lattice -M/2..M/2-1 (one-sided
    Nyquist mode), which equals 0.5 <-Delta_h u, u>_h.  With ``real_nyquist``
    the Nyquist mode is the real cosine, i.e. the norm of the real projection
    space used by ``P_h``.
    """
    n = grid.size
    weights = grid.parseval_weights * grid.k2_half
    if real_nyquist:
        weights = weights * grid.nyquist_factor_half
    power = coeffs_half.real ** 2 + coeffs_half.imag ** 2
    return 0.5 * grid.volume * float(np.sum(weights * power)) / (n * n)

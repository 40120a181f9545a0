"""Bulk potentials, gradient-flow specifications and discrete energies."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .spectral import (
    Field,
    FourierMultiplier,
    Grid,
    as_values,
    gradient_energy,
    irfft,
    rfft,
)


class PotentialKind(str, enum.Enum):
    DOUBLE_WELL = "double-well"
    FLORY_HUGGINS = "flory-huggins"
    ZERO = "zero"


class Mobility(str, enum.Enum):
    IDENTITY = "allen-cahn"
    MINUS_LAPLACIAN = "cahn-hilliard"


class EnergyForm(str, enum.Enum):
    INTERPOLATION = "interpolation"
    PROJECTION = "projection"
    FINITE_DIFFERENCE = "finite-difference"


class UnsupportedEnergyForm(ValueError):
    pass


@dataclass(frozen=True)
class PotentialModel:
    """Bulk free energy density F and its derivatives.

    Flory-Huggins values with ``|phi| > beta - extension_margin`` are
    evaluated through a Taylor extension (cubic in F, quadratic in f) about
    the junction so that predictor overshoot never hits the log singularity.
    """

    kind: PotentialKind
    epsilon: float
    beta: float = 1.0
    stabilizer: float = 0.0
    theta0: float = 3.0
    delta: float = 0.01
    extension_margin: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PotentialKind(self.kind))
        if self.epsilon <= 0 or self.beta <= 0:
            raise ValueError("epsilon and beta must be positive")
        if self.stabilizer < 0:
            raise ValueError("stabilizer must be nonnegative")
        if self.kind is PotentialKind.FLORY_HUGGINS:
            if not 0 < self.delta < self.beta:
                raise ValueError("delta must lie in (0, beta)")
            if self.extension_margin is None:
                object.__setattr__(self, "extension_margin", self.delta / 2)
            if not 0 < self.extension_margin < self.delta:
                raise ValueError("extension_margin must lie in (0, delta)")
        b = self.bound
        lo, hi = self.f(np.array([-b, b]))
        if lo > 0 or hi < 0:
            raise ValueError(
                f"sign condition f(-b) <= 0 <= f(b) fails at b={b}: f={lo:.3e}, {hi:.3e}")

    @classmethod
    def double_well(cls, epsilon: float, beta: float = 1.0, stabilizer: float | None = None):
        s = 1.0 / epsilon**2 if stabilizer is None else stabilizer
        return cls(PotentialKind.DOUBLE_WELL, epsilon, beta, s)

    @classmethod
    def flory_huggins(cls, epsilon: float, theta0: float = 3.0, beta: float = 1.0,
                      delta: float = 0.01, stabilizer: float | None = None,
                      extension_margin: float | None = None):
        s = 1.0 / epsilon**2 if stabilizer is None else stabilizer
        return cls(PotentialKind.FLORY_HUGGINS, epsilon, beta, s, theta0, delta, extension_margin)

    @classmethod
    def zero(cls, beta: float = 1.0, stabilizer: float = 0.0):
        return cls(PotentialKind.ZERO, 1.0, beta, stabilizer)

    @property
    def bound(self) -> float:
        """Effective bound enforced by the cutoff."""
        if self.kind is PotentialKind.FLORY_HUGGINS:
            return self.beta - self.delta
        return self.beta

    # -- exact Flory-Huggins pieces, valid for |phi| < beta
    def _fh(self, phi, order):
        b, e2, th = self.beta, self.epsilon**2, self.theta0
        if order == 0:
            return ((b + phi) * np.log(b + phi) + (b - phi) * np.log(b - phi)
                    - 0.5 * th * phi**2) / e2
        if order == 1:
            return (np.log(b + phi) - np.log(b - phi) - th * phi) / e2
        if order == 2:
            return (1.0 / (b + phi) + 1.0 / (b - phi) - th) / e2
        return (-1.0 / (b + phi) ** 2 + 1.0 / (b - phi) ** 2) / e2

    def _fh_extended(self, phi, order):
        phi = np.asarray(phi, dtype=float)
        junction = self.beta - self.extension_margin
        inside = np.abs(phi) <= junction
        safe = np.where(inside, phi, 0.0)
        out = np.asarray(self._fh(safe, order), dtype=float)
        if np.all(inside):
            return out
        anchor = np.where(phi > 0, junction, -junction)
        d = phi - anchor
        derivs = [self._fh(anchor, k) for k in range(4)]
        # Taylor polynomial of F to third order about the junction
        taylor = sum(derivs[order + k] * d**k / math.factorial(k) for k in range(4 - order))
        return np.where(inside, out, taylor)

    def F(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind is PotentialKind.DOUBLE_WELL:
            return (phi**2 - self.beta) ** 2 / (4 * self.epsilon**2)
        if self.kind is PotentialKind.FLORY_HUGGINS:
            return self._fh_extended(phi, 0)
        return np.zeros_like(phi)

    def f(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind is PotentialKind.DOUBLE_WELL:
            return phi * (phi**2 - self.beta) / self.epsilon**2
        if self.kind is PotentialKind.FLORY_HUGGINS:
            return self._fh_extended(phi, 1)
        return np.zeros_like(phi)

    def fprime(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind is PotentialKind.DOUBLE_WELL:
            return (3 * phi**2 - self.beta) / self.epsilon**2
        if self.kind is PotentialKind.FLORY_HUGGINS:
            return self._fh_extended(phi, 2)
        return np.zeros_like(phi)

    def g(self, phi):
        phi = np.asarray(phi, dtype=float)
        return -self.f(phi) + self.stabilizer * phi

    def max_abs_fprime(self, samples: int = 20001) -> float:
        """max |f'| over [-bound, bound], by dense sampling."""
        z = np.linspace(-self.bound, self.bound, samples)
        return float(np.max(np.abs(self.fprime(z))))


@dataclass(frozen=True)
class FlowSpec:
    """phi_t = -G mu with mu = -Delta phi + f(phi) on a periodic grid."""

    mobility: Mobility
    potential: PotentialModel
    grid: Grid

    def __post_init__(self):
        object.__setattr__(self, "mobility", Mobility(self.mobility))

    @property
    def stabilizer(self) -> float:
        return self.potential.stabilizer

    def mobility_multiplier(self) -> FourierMultiplier:
        if self.mobility is Mobility.IDENTITY:
            return FourierMultiplier.identity(self.grid)
        return FourierMultiplier.neg_laplacian(self.grid)

    def linear_multiplier(self) -> FourierMultiplier:
        return FourierMultiplier.stabilized(self.grid, self.stabilizer)


def f_eval(model: PotentialModel, field: Field) -> Field:
    return Field(field.grid, model.f(field.values))


def g_eval(model: PotentialModel, field: Field) -> Field:
    return Field(field.grid, model.g(field.values))


def spectral_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    return irfft(-grid.k2_half * rfft(values), grid)


def fd_laplacian(grid: Grid, values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    for axis, h in enumerate(grid.mesh_size):
        out += (np.roll(values, -1, axis) - 2 * values + np.roll(values, 1, axis)) / h**2
    return out


def variational_derivative(flow: FlowSpec, field: Field) -> Field:
    """mu = -Delta phi + f(phi), Laplacian applied spectrally."""
    u = field.values
    return Field(field.grid, -spectral_laplacian(flow.grid, u) + flow.potential.f(u))


def laplacian_symbol(form: EnergyForm, grid: Grid) -> np.ndarray:
    """Half-layout symbol of the -Delta_h that belongs to each energy form."""
    form = EnergyForm(form)
    if form is EnergyForm.FINITE_DIFFERENCE:
        _check_fd(grid)
        axes = [4.0 / h**2 * np.sin(0.5 * h * k) ** 2
                for h, k in zip(grid.mesh_size, grid._wavenumber_axes(half=True))]
        return sum(np.meshgrid(*axes, indexing="ij"))
    if form is EnergyForm.PROJECTION:
        return grid.k2_half * grid.nyquist_factor_half
    return grid.k2_half


def discrete_gradient(form: EnergyForm, flow: FlowSpec, values: np.ndarray) -> np.ndarray:
    """Gradient of the chosen discrete energy w.r.t. the h^d-weighted inner product."""
    form = EnergyForm(form)
    u = as_values(values)
    if form is EnergyForm.FINITE_DIFFERENCE:
        _check_fd(flow.grid)
        return -fd_laplacian(flow.grid, u) + flow.potential.f(u)
    grid = flow.grid
    return irfft(laplacian_symbol(form, grid) * rfft(u), grid) + flow.potential.f(u)


def _check_fd(grid: Grid):
    if grid.dim > 2:
        raise UnsupportedEnergyForm("finite-difference energy is defined for dim <= 2 only")


def bulk_energy(flow: FlowSpec, values: np.ndarray) -> float:
    """h^d sum F(phi_j), the exact integral of I_h F(phi)."""
    return flow.grid.cell_volume * float(np.sum(flow.potential.F(values)))


def energy(form: EnergyForm, flow: FlowSpec, field) -> float:
    """Discrete free energy of nodal data under one of the three forms.

    Both spectral forms evaluate the gradient term exactly by Parseval.
    The interpolation form uses the one-sided lattice -M/2..M/2-1, so it
    equals 0.5 <-Delta_h u, u>_h.  The projection form measures the real
    interpolant, whose Nyquist modes are cosines; on that space P_h of a
    cutoff never raises the gradient term.  The forms differ only in the
    Nyquist modes.
    """
    form = EnergyForm(form)
    grid = flow.grid
    u = as_values(field)
    if form is EnergyForm.FINITE_DIFFERENCE:
        _check_fd(grid)
        grad = 0.0
        for axis, h in enumerate(grid.mesh_size):
            grad += float(np.sum(np.square((np.roll(u, -1, axis) - u) / h)))
        return 0.5 * grid.cell_volume * grad + bulk_energy(flow, u)
    return (gradient_energy(grid, rfft(u), real_nyquist=form is EnergyForm.PROJECTION)
            + bulk_energy(flow, u))

"""Exponential time differencing Runge-Kutta integrators on periodic grids.

Coefficient functions are stored symbolically as sums ``sum w * phi_k(gamma*z)``
so the same tableau drives scalar checks (consistency, Assumption-A sweep,
order conditions) and the per-mode stepping on a Fourier lattice.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .models import FlowSpec
from .spectral import Field, irfft, rfft

# Below this |z| the recurrence cancels badly; use the Taylor series instead.
TAYLOR_THRESHOLD = 1.0
TAYLOR_TERMS = 25
MAX_PHI_INDEX = 4


class BlowUpError(FloatingPointError):
    """A stage or field became non-finite."""


def _phi_taylor(k: int, z: np.ndarray) -> np.ndarray:
    # phi_k(z) = sum_j z^j / (j+k)!, Horner form
    out = np.full_like(z, 1.0 / math.factorial(k + TAYLOR_TERMS - 1))
    for j in range(TAYLOR_TERMS - 2, -1, -1):
        out = out * z + 1.0 / math.factorial(k + j)
    return out


def phi_eval(k: int, z):
    """phi_k(z) for k = 0..4, elementwise over scalars or arrays."""
    if not 0 <= k <= MAX_PHI_INDEX:
        raise ValueError(f"phi index must be in 0..{MAX_PHI_INDEX}, got {k}")
    zarr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(zarr)):
        raise ValueError("phi_eval needs finite arguments")
    scalar = zarr.ndim == 0
    zarr = np.atleast_1d(zarr)
    if k == 0:
        out = np.exp(zarr)
    else:
        small = np.abs(zarr) < TAYLOR_THRESHOLD
        out = np.empty_like(zarr)
        if np.any(small):
            out[small] = _phi_taylor(k, zarr[small])
        big = ~small
        if np.any(big):
            zb = zarr[big]
            val = np.expm1(zb) / zb
            for j in range(1, k):
                val = (val - 1.0 / math.factorial(j)) / zb
            out[big] = val
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class PhiTerm:
    weight: float
    k: int
    scale: float = 1.0

    def __call__(self, z):
        return self.weight * phi_eval(self.k, self.scale * np.asarray(z, dtype=float))


Coefficient = tuple[PhiTerm, ...]


def eval_coefficient(coeff: Coefficient, z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    for term in coeff:
        out = out + term(z)
    return out


def _coef(*terms) -> Coefficient:
    return tuple(PhiTerm(*t) for t in terms)


@dataclass(frozen=True)
class ExponentialTableau:
    """Explicit exponential Butcher tableau.

    ``a[i][j]`` is the coefficient of stage ``j`` in stage ``i`` (0-based,
    ``j < i``; row 0 is empty).  Empty coefficients are ``()``.
    """

    name: str
    c: tuple[float, ...]
    a: tuple[tuple[Coefficient, ...], ...]
    b: tuple[Coefficient, ...]
    order: int
    energy_stable: bool

    def __post_init__(self):
        s = len(self.c)
        if len(self.b) != s or len(self.a) != s:
            raise ValueError(f"{self.name}: stage count mismatch")
        if self.c[0] != 0.0:
            raise ValueError(f"{self.name}: first node must be 0")
        for i, row in enumerate(self.a):
            if len(row) != i:
                raise ValueError(f"{self.name}: row {i} must have {i} entries (lower triangular)")

    @property
    def stages(self) -> int:
        return len(self.c)

    def a_eval(self, i: int, j: int, z):
        if j >= i:
            return np.zeros_like(np.asarray(z, dtype=float))
        return eval_coefficient(self.a[i][j], z)

    def b_eval(self, j: int, z):
        return eval_coefficient(self.b[j], z)

    def consistency_residual(self, z) -> float:
        """max over stages of |sum_j a_ij - (chi_i - 1)/z| and the same for b."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        worst = 0.0
        for i in range(1, self.stages):
            total = sum(self.a_eval(i, j, z) for j in range(i))
            target = self.c[i] * phi_eval(1, self.c[i] * z)
            worst = max(worst, float(np.max(np.abs(total - target))))
        total = sum(self.b_eval(j, z) for j in range(self.stages))
        worst = max(worst, float(np.max(np.abs(total - phi_eval(1, z)))))
        return worst


_HALF = 0.5
_TWO_THIRDS = 2.0 / 3.0

_CATALOG = {
    "ETDRK1": ExponentialTableau(
        "ETDRK1", (0.0,), ((),), (_coef((1, 1)),), order=1, energy_stable=True),
    "ETDRK2": ExponentialTableau(
        "ETDRK2", (0.0, 1.0),
        ((), (_coef((1, 1)),)),
        (_coef((1, 1), (-1, 2)), _coef((1, 2))),
        order=2, energy_stable=True),
    "ETDRK3": ExponentialTableau(
        "ETDRK3", (0.0, 1.0, _TWO_THIRDS),
        ((),
         (_coef((1, 1)),),
         (_coef((_TWO_THIRDS, 1, _TWO_THIRDS), (-4 / 9, 2, _TWO_THIRDS)),
          _coef((4 / 9, 2, _TWO_THIRDS)))),
        (_coef((0.75, 1), (-1, 2)), _coef((1, 2), (-0.5, 1)), _coef((0.75, 1))),
        order=3, energy_stable=True),
    "U-ETDRK3": ExponentialTableau(
        "U-ETDRK3", (0.0, _HALF, 1.0),
        ((),
         (_coef((_HALF, 1, _HALF)),),
         (_coef((-1, 1)), _coef((2, 1)))),
        (_coef((4, 3), (-3, 2), (1, 1)), _coef((-8, 3), (4, 2)), _coef((4, 3), (-1, 2))),
        order=3, energy_stable=False),
    "U-ETDRK4": ExponentialTableau(
        "U-ETDRK4", (0.0, _HALF, _HALF, 1.0),
        ((),
         (_coef((_HALF, 1, _HALF)),),
         (_coef((_HALF, 1, _HALF), (-1, 2, _HALF)), _coef((1, 2, _HALF))),
         (_coef((1, 1), (-2, 2)), (), _coef((2, 2)))),
        (_coef((1, 1), (-3, 2), (4, 3)), _coef((2, 2), (-4, 3)),
         _coef((2, 2), (-4, 3)), _coef((4, 3), (-1, 2))),
        order=4, energy_stable=False),
}

TABLEAU_NAMES = tuple(_CATALOG)


def tableau_catalog(name: str) -> ExponentialTableau:
    key = name.upper()
    if key not in _CATALOG:
        raise KeyError(f"unknown tableau {name!r}; known: {', '.join(TABLEAU_NAMES)}")
    return _CATALOG[key]


# ---------------------------------------------------------------------------
# stepping

@dataclass(frozen=True)
class _StepCoefficients:
    chi: tuple[np.ndarray, ...]            # chi_i(z) per stage, then chi(z)
    a: tuple[tuple[np.ndarray, ...], ...]  # tau * a_ij(z)
    b: tuple[np.ndarray, ...]              # tau * b_j(z)
    mobility: np.ndarray                   # symbol of G
    gl: np.ndarray                         # symbol of G L


@lru_cache(maxsize=64)
def _coefficients(tableau: ExponentialTableau, flow: FlowSpec, tau: float) -> _StepCoefficients:
    g = flow.mobility_multiplier().array
    gl = g * flow.linear_multiplier().array
    z = -tau * gl
    chi = tuple(np.exp(ci * z) for ci in tableau.c) + (np.exp(z),)
    a = tuple(tuple(tau * tableau.a_eval(i, j, z) for j in range(i))
              for i in range(tableau.stages))
    b = tuple(tau * tableau.b_eval(j, z) for j in range(tableau.stages))
    for arr in (*chi, *b, g, gl, *(x for row in a for x in row)):
        arr.flags.writeable = False
    return _StepCoefficients(chi, a, b, g, gl)


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise BlowUpError(f"non-finite values in {what}")


def etdrk_step_values(tableau: ExponentialTableau, flow: FlowSpec, values: np.ndarray,
                      tau: float, stabilized: bool = False) -> np.ndarray:
    """One ETDRK step on nodal arrays.

    ``stabilized=False`` uses the Duhamel form with ``chi_i``;
    ``stabilized=True`` writes every stage as an increment of ``phi^n`` driven
    by ``G g(phi^{n,j}) - G L phi^n``.  Both agree for consistent tableaus.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    grid = flow.grid
    co = _coefficients(tableau, flow, float(tau))
    g = flow.potential.g
    u_hat = rfft(values)
    gl_u = co.gl * u_hat
    forcing = []  # G g(phi^{n,j}) in Fourier space (minus G L phi^n when stabilized)
    stage = values
    for i in range(tableau.stages + 1):
        weights = co.a[i] if i < tableau.stages else co.b
        if i > 0:
            acc = u_hat.copy() if stabilized else co.chi[i] * u_hat
            for j, w in enumerate(weights):
                acc += w * forcing[j]
            stage = irfft(acc, grid)
            label = f"stage {i + 1}" if i < tableau.stages else "prediction"
            _check_finite(stage, f"{tableau.name} {label}")
        if i == tableau.stages:
            return stage
        term = co.mobility * rfft(g(stage))
        forcing.append(term - gl_u if stabilized else term)
    raise AssertionError("unreachable")


def etdrk_step(tableau: ExponentialTableau, flow: FlowSpec, field: Field, tau: float,
               stabilized: bool = False) -> Field:
    return Field(field.grid, etdrk_step_values(tableau, flow, field.values, tau, stabilized))


# ---------------------------------------------------------------------------
# Assumption A

@dataclass
class CertificationReport:
    tableau: str
    z: np.ndarray
    min_eigenvalue: np.ndarray
    certified: bool
    first_failure: float | None
    singular: list[float]

    def to_text(self) -> str:
        lines = [f"tableau: {self.tableau}",
                 f"samples: {self.z.size} in [{self.z.min():.3e}, {self.z.max():.3e}]",
                 f"certified: {self.certified}",
                 f"first failing z: {self.first_failure}",
                 f"min over sweep of lambda_min(sym P): {np.nanmin(self.min_eigenvalue):.6e}",
                 "", f"{'z':>16} {'lambda_min':>16}"]
        for zi, ev in zip(self.z, self.min_eigenvalue):
            lines.append(f"{zi:16.6e} {ev:16.6e}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["z", "min_eigenvalue"])
        for zi, ev in zip(self.z, self.min_eigenvalue):
            w.writerow([repr(float(zi)), repr(float(ev))])
        return buf.getvalue()


def assumption_matrix(tableau: ExponentialTableau, z: float) -> np.ndarray:
    """A(z): rows a_{2,.}, ..., a_{s,.}, then b."""
    s = tableau.stages
    mat = np.zeros((s, s))
    for row in range(s):
        i = row + 1
        for j in range(s):
            if i < s:
                if j < i:
                    mat[row, j] = tableau.a_eval(i, j, z)
            else:
                mat[row, j] = tableau.b_eval(j, z)
    return mat


def p_matrix(tableau: ExponentialTableau, z: float) -> np.ndarray:
    s = tableau.stages
    el = np.tril(np.ones((s, s)))
    return z * el + np.linalg.solve(assumption_matrix(tableau, z), el) - 0.5 * z * np.eye(s)


def default_sweep(samples: int = 200) -> np.ndarray:
    return -np.logspace(6, -6, samples)


def certify_assumption_A(tableau: ExponentialTableau, z: Sequence[float] | None = None
                         ) -> CertificationReport:
    zs = default_sweep() if z is None else np.asarray(z, dtype=float)
    mins = np.empty(zs.size)
    singular = []
    for n, zi in enumerate(zs):
        try:
            p = p_matrix(tableau, float(zi))
        except np.linalg.LinAlgError:
            singular.append(float(zi))
            mins[n] = np.nan
            continue
        mins[n] = np.linalg.eigvalsh(0.5 * (p + p.T))[0]
    bad = ~(mins > 0)
    first = float(zs[np.argmax(bad)]) if np.any(bad) else None
    return CertificationReport(tableau.name, zs, mins, not np.any(bad), first, singular)


# ---------------------------------------------------------------------------
# order conditions

def _psi(tableau: ExponentialTableau, j: int, z):
    total = sum(tableau.b_eval(k, z) * tableau.c[k] ** (j - 1) for k in range(tableau.stages))
    return phi_eval(j, z) - total / math.factorial(j - 1)


def _psi_stage(tableau: ExponentialTableau, j: int, i: int, z, literal_sign: bool = False):
    """psi_{j,i}; ``i`` is 1-based as in the usual notation."""
    ci = tableau.c[i - 1]
    total = sum(tableau.a_eval(i - 1, k, z) * tableau.c[k] ** (j - 1) for k in range(i - 1))
    if literal_sign:
        # phi_j at positive arguments overflows for large |z|; report inf then
        with np.errstate(over="ignore", invalid="ignore"):
            return ci**j * phi_eval(j, -ci * z) - total / math.factorial(j - 1)
    return ci**j * phi_eval(j, ci * z) - total / math.factorial(j - 1)


@dataclass
class OrderReport:
    tableau: str
    order: int
    residuals: dict[str, float]

    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def to_text(self) -> str:
        lines = [f"tableau: {self.tableau}  (checked up to order {self.order})"]
        for name, value in self.residuals.items():
            lines.append(f"  {name:<32} {value:.3e}")
        return "\n".join(lines) + "\n"


def order_sample_points(samples: int = 64) -> np.ndarray:
    return np.concatenate([-np.logspace(3, -3, samples - 1), [0.0]])


def check_order_conditions(tableau: ExponentialTableau, order: int,
                           z: Sequence[float] | None = None) -> OrderReport:
    """Max |residual| of each order condition over sampled z <= 0.

    Stage conditions are evaluated with argument ``c_i z``; the variant with
    the opposite sign inside phi_j is reported as ``(literal sign)``.  The
    order-3 coupling condition is reported both with a scalar J = 1 and
    block by block.
    """
    if not 1 <= order <= 3:
        raise ValueError("order must be 1, 2 or 3")
    if order > tableau.order:
        raise ValueError(f"{tableau.name} claims order {tableau.order} < {order}")
    zs = order_sample_points() if z is None else np.asarray(z, dtype=float)
    s = tableau.stages
    res: dict[str, float] = {}

    def sup(values):
        return float(np.max(np.abs(values)))

    res["psi_1"] = sup(_psi(tableau, 1, zs))
    if order >= 2:
        res["psi_2"] = sup(_psi(tableau, 2, zs))
        if s >= 2:
            res["psi_1,2"] = sup(_psi_stage(tableau, 1, 2, zs))
            res["psi_1,2 (literal sign)"] = sup(_psi_stage(tableau, 1, 2, zs, literal_sign=True))
    if order >= 3:
        res["psi_3(0)"] = abs(float(_psi(tableau, 3, np.array([0.0]))[0]))
        if s >= 3:
            res["psi_1,3"] = sup(_psi_stage(tableau, 1, 3, zs))
            res["psi_1,3 (literal sign)"] = sup(_psi_stage(tableau, 1, 3, zs, literal_sign=True))
        coupled = np.zeros_like(zs)
        blocks = 0.0
        for i in range(2, min(s, 3) + 1):
            bi0 = float(tableau.b_eval(i - 1, np.array([0.0]))[0])
            block = bi0 * _psi_stage(tableau, 2, i, zs)
            coupled = coupled + block
            blocks = max(blocks, sup(block))
        res["sum b_i(0) J psi_2,i (J=1)"] = sup(coupled)
        res["max_i |b_i(0) psi_2,i|"] = blocks
    return OrderReport(tableau.name, order, res)

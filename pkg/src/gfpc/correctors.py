"""Energy and bound projections, and the PCC / PCC' / PC step drivers."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .etdrk import BlowUpError, ExponentialTableau, certify_assumption_A, etdrk_step_values
from .models import EnergyForm, FlowSpec, discrete_gradient, energy, laplacian_symbol
from .spectral import Field, as_values, inner, irfft, project_interpolate, rfft

log = logging.getLogger(__name__)


class CorrectorFailure(RuntimeError):
    """The energy constraint could not be satisfied for any eta."""


@dataclass(frozen=True)
class EnergyCorrectorConfig:
    newton_rtol: float = 1e-10         # tolerance on |D| is newton_rtol * max(1, |E[phi^n]|)
    max_newton_iters: int = 30
    bisection_fallback: bool = True
    steady_state_tol: float = 1e-12
    bracket_cap: float = 1e12          # in units of tau
    method: str = "newton"             # "newton" (bisection as fallback) or "bisection"

    def __post_init__(self):
        if self.method not in ("newton", "bisection"):
            raise ValueError(f"unknown root finding method {self.method!r}")
        if self.newton_rtol <= 0 or self.steady_state_tol <= 0 or self.bracket_cap <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")


@dataclass(frozen=True)
class BoundCorrectorConfig:
    bound: float
    enforce_projection_energy: bool = False  # P_h instead of I_h after the cutoff
    oversample: int = 4

    def __post_init__(self):
        if not self.bound > 0:
            raise ValueError("bound must be positive")


@dataclass(frozen=True)
class SchemeConfig:
    """Everything a step driver needs besides the flow and tableau."""

    bound: BoundCorrectorConfig
    energy_form: EnergyForm = EnergyForm.INTERPOLATION
    energy: EnergyCorrectorConfig = dc_field(default_factory=EnergyCorrectorConfig)
    mbp_tol: float = 1e-10

    @classmethod
    def for_flow(cls, flow: FlowSpec, **kwargs) -> "SchemeConfig":
        bound_kwargs = {k: kwargs.pop(k) for k in ("enforce_projection_energy", "oversample")
                        if k in kwargs}
        return cls(BoundCorrectorConfig(flow.potential.bound, **bound_kwargs), **kwargs)


@dataclass
class StepReport:
    eta: float = 0.0
    newton_iters: int = 0
    bisection_used: bool = False
    energy_residual: float = 0.0       # D(eta) at the accepted eta
    lambda_max: float = 0.0
    lambda_min: float = 0.0
    p_min: float = math.inf            # min of p(phi^{n+1}) = b^2 - phi^2 over nodes
    lambda_p_max: float = 0.0          # max |lambda * p(phi^{n+1})|
    energy_pre: float = math.nan
    energy_post_corrector1: float = math.nan
    energy_post_corrector2: float = math.nan
    phi_min: float = math.nan
    phi_max: float = math.nan
    mass_mean: float = math.nan
    mean_drift: float = 0.0
    steady_state_reached: bool = False
    mbp_violation: bool = False
    eta_condition_ok: bool | None = None

    @property
    def energy(self) -> float:
        return self.energy_post_corrector2

    @property
    def eta_times_residual(self) -> float:
        return abs(self.eta * self.energy_residual)


class EnergyProjection(NamedTuple):
    phi: Field
    eta: float
    iterations: int
    residual: float
    steady_state: bool
    bisection_used: bool


class BoundProjection(NamedTuple):
    phi: Field
    lam: Field


# ---------------------------------------------------------------------------
# Corrector 1: energy projection

class EnergyPath:
    """phi(eta) = (I - eta Delta_h)^{-1}[u - eta f(u)] and D(eta) = E[phi(eta)] - E_ref.

    Delta_h is the Laplacian of the chosen energy form, so the path is an
    implicit gradient step of that energy and D'(0) = -||mu_h(u)||^2.
    """

    def __init__(self, flow: FlowSpec, form: EnergyForm, start: np.ndarray, energy_ref: float):
        self.flow = flow
        self.form = EnergyForm(form)
        self.energy_ref = energy_ref
        self.k2 = laplacian_symbol(self.form, flow.grid)
        self.u_hat = rfft(start)
        self.f_hat = rfft(flow.potential.f(start))

    def phi(self, eta: float) -> np.ndarray:
        return irfft((self.u_hat - eta * self.f_hat) / (1.0 + eta * self.k2), self.flow.grid)

    def dphi(self, eta: float) -> np.ndarray:
        denom = 1.0 + eta * self.k2
        hat = -self.k2 * (self.u_hat - eta * self.f_hat) / denom**2 - self.f_hat / denom
        return irfft(hat, self.flow.grid)

    def residual(self, eta: float) -> float:
        return energy(self.form, self.flow, self.phi(eta)) - self.energy_ref

    def residual_and_slope(self, eta: float) -> tuple[float, float]:
        u = self.phi(eta)
        d = energy(self.form, self.flow, u) - self.energy_ref
        mu = discrete_gradient(self.form, self.flow, u)
        return d, inner(self.flow.grid, mu, self.dphi(eta))


def _newton(path: EnergyPath, d0: float, tol: float, cfg: EnergyCorrectorConfig):
    """Safeguarded Newton from eta = 0.  Returns (eta, D, iters, bracket) where
    eta is None if the iteration had to be abandoned."""
    eta, d = 0.0, d0
    slope = path.residual_and_slope(0.0)[1]
    lo, hi = 0.0, None
    for it in range(1, cfg.max_newton_iters + 1):
        if not (slope < 0 and abs(slope) > 1e-300):
            return None, d, it - 1, (lo, hi)
        new = eta - d / slope
        if not math.isfinite(new) or new <= lo or (hi is not None and new >= hi):
            return None, d, it - 1, (lo, hi)
        step = new - eta
        eta = new
        d, slope = path.residual_and_slope(eta)
        if not math.isfinite(d):
            raise BlowUpError(f"energy residual is not finite at eta={eta:.3e}")
        if d > 0:
            lo = eta
        else:
            hi = eta
        if abs(d) <= tol and (d <= 0 or abs(step) <= 1e-10 * eta):
            return eta, d, it, (lo, hi)
    return None, d, cfg.max_newton_iters, (lo, hi)


def _bisect(path: EnergyPath, lo: float, hi: float | None, tau: float, tol: float,
            cfg: EnergyCorrectorConfig):
    evals = 0
    if hi is None:
        # scan eta = tau * 2^k upward so the first sign change is bracketed
        cap = cfg.bracket_cap * tau
        trial = tau * 2.0**-40
        while trial <= lo:
            trial *= 2.0
        samples = []
        while True:
            d = path.residual(trial)
            evals += 1
            samples.append((trial, d))
            if not math.isfinite(d):
                raise BlowUpError(f"energy residual is not finite at eta={trial:.3e}")
            if d <= 0:
                hi, d_hi = trial, d
                break
            lo = trial
            trial *= 2.0
            if trial > cap:
                best = min(samples, key=lambda ev: ev[1])
                shown = ", ".join(f"D({e:.2e})={v:.3e}" for e, v in samples[-6:])
                raise CorrectorFailure(
                    f"no eta <= {cap:.3e} with D(eta) <= 0; smallest sampled "
                    f"D({best[0]:.3e})={best[1]:.3e}; {shown}")
    else:
        d_hi = path.residual(hi)
        evals += 1
    for _ in range(200):
        if hi - lo <= 4e-16 * hi or (abs(d_hi) <= tol and hi - lo <= 1e-12 * hi):
            break
        mid = 0.5 * (lo + hi)
        d = path.residual(mid)
        evals += 1
        if d > 0:
            lo = mid
        else:
            hi, d_hi = mid, d
    if abs(d_hi) > tol:
        raise CorrectorFailure(f"bisection stalled with D={d_hi:.3e} at eta={hi:.3e}")
    return hi, d_hi, evals


def residual_norm_sq(flow: FlowSpec, values: np.ndarray) -> float:
    """||-Delta phi + f(phi)||^2, the unsteady-state indicator."""
    mu = discrete_gradient(EnergyForm.INTERPOLATION, flow, values)
    return inner(flow.grid, mu, mu)


def energy_project(flow: FlowSpec, form: EnergyForm, phi_n: Field, phi_pred: Field,
                   cfg: EnergyCorrectorConfig = EnergyCorrectorConfig(), tau: float = 1.0,
                   energy_n: float | None = None) -> EnergyProjection:
    """Smallest eta >= 0 with E[phi_*(eta)] <= E[phi^n], phi_* from an implicit
    gradient step of length eta started at ``phi_pred``."""
    grid = flow.grid
    un, up = as_values(phi_n), as_values(phi_pred)
    if residual_norm_sq(flow, un) < cfg.steady_state_tol:
        return EnergyProjection(Field(grid, up), 0.0, 0, 0.0, True, False)
    e_ref = energy(form, flow, un) if energy_n is None else energy_n
    tol = cfg.newton_rtol * max(1.0, abs(e_ref))
    path = EnergyPath(flow, form, up, e_ref)
    d0 = energy(form, flow, up) - e_ref
    if not math.isfinite(d0):
        raise BlowUpError("energy of the prediction is not finite")
    if d0 <= 0:
        return EnergyProjection(Field(grid, up), 0.0, 0, d0, False, False)
    if cfg.method == "bisection":
        eta, d, iters, (lo, hi) = None, d0, 0, (0.0, None)
    else:
        eta, d, iters, (lo, hi) = _newton(path, d0, tol, cfg)
    used_bisection = False
    if eta is None:
        if cfg.method == "newton" and not cfg.bisection_fallback:
            raise CorrectorFailure(f"Newton failed after {iters} iterations (D={d:.3e})")
        log.debug("energy corrector: falling back to bisection after %d Newton steps", iters)
        eta, d, evals = _bisect(path, lo, hi, tau, tol, cfg)
        iters += evals
        used_bisection = True
    return EnergyProjection(Field(grid, path.phi(eta)), eta, iters, d, False, used_bisection)


# ---------------------------------------------------------------------------
# Corrector 2: bound projection

def cutoff(values, bound: float):
    """Pointwise truncation to [-bound, bound]."""
    return np.clip(values, -bound, bound)


def bound_multiplier(values, bound: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lam = np.zeros_like(v)
    over, under = v > bound, v < -bound
    lam[over] = (v[over] - bound) / (2 * bound)
    lam[under] = (-bound - v[under]) / (2 * bound)
    return lam


def bound_project(phi_star: Field, cfg: BoundCorrectorConfig) -> BoundProjection:
    b = cfg.bound
    lam = bound_multiplier(phi_star.values, b)
    if cfg.enforce_projection_energy:
        out = project_interpolate(phi_star, "P_h", pointwise=lambda v: cutoff(v, b),
                                  oversample=cfg.oversample)
    else:
        out = Field(phi_star.grid, cutoff(phi_star.values, b))
    return BoundProjection(out, Field(phi_star.grid, lam))


# ---------------------------------------------------------------------------
# scheme drivers

def _fill_bound_stats(report: StepReport, proj: BoundProjection, bound: float):
    phi, lam = proj.phi.values, proj.lam.values
    p = bound * bound - phi * phi
    report.lambda_max = float(lam.max())
    report.lambda_min = float(lam.min())
    report.p_min = float(p.min())
    report.lambda_p_max = float(np.max(np.abs(lam * p)))


def _finish(report: StepReport, flow: FlowSpec, cfg: SchemeConfig, phi_n: np.ndarray,
            out: np.ndarray, energy_final: float | None = None) -> StepReport:
    report.energy_post_corrector2 = (energy(cfg.energy_form, flow, out)
                                     if energy_final is None else energy_final)
    report.phi_min = float(out.min())
    report.phi_max = float(out.max())
    report.mass_mean = float(out.mean())
    report.mean_drift = report.mass_mean - float(phi_n.mean())
    return report


def _energy_pre(flow, cfg, phi_n, energy_n):
    return energy(cfg.energy_form, flow, phi_n) if energy_n is None else energy_n


def step_plain(flow: FlowSpec, tableau: ExponentialTableau, phi_n: Field, tau: float,
               cfg: SchemeConfig, energy_n: float | None = None) -> tuple[Field, StepReport]:
    """Uncorrected ETDRK step (for comparisons)."""
    un = phi_n.values
    rep = StepReport(energy_pre=_energy_pre(flow, cfg, un, energy_n))
    pred = etdrk_step_values(tableau, flow, un, tau)
    e = energy(cfg.energy_form, flow, pred)
    rep.energy_post_corrector1 = e
    b = cfg.bound.bound
    rep.mbp_violation = bool(np.max(np.abs(pred)) > b + cfg.mbp_tol)
    return Field(phi_n.grid, pred), _finish(rep, flow, cfg, un, pred, e)


def step_pcc(flow: FlowSpec, tableau: ExponentialTableau, phi_n: Field, tau: float,
             cfg: SchemeConfig, energy_n: float | None = None) -> tuple[Field, StepReport]:
    """Predictor, energy projection against E[phi^n], then the cutoff."""
    grid = phi_n.grid
    un = phi_n.values
    e_pre = _energy_pre(flow, cfg, un, energy_n)
    rep = StepReport(energy_pre=e_pre)
    pred = Field(grid, etdrk_step_values(tableau, flow, un, tau))
    ep = energy_project(flow, cfg.energy_form, phi_n, pred, cfg.energy, tau, e_pre)
    rep.eta, rep.newton_iters, rep.energy_residual = ep.eta, ep.iterations, ep.residual
    rep.steady_state_reached, rep.bisection_used = ep.steady_state, ep.bisection_used
    rep.energy_post_corrector1 = energy(cfg.energy_form, flow, ep.phi.values)
    bp = bound_project(ep.phi, cfg.bound)
    _fill_bound_stats(rep, bp, cfg.bound.bound)
    out = bp.phi.values
    rep.mbp_violation = bool(np.max(np.abs(out)) > cfg.bound.bound + cfg.mbp_tol)
    return bp.phi, _finish(rep, flow, cfg, un, out)


def step_pcc_prime(flow: FlowSpec, tableau: ExponentialTableau, phi_n: Field, tau: float,
                   cfg: SchemeConfig, energy_n: float | None = None) -> tuple[Field, StepReport]:
    """Predictor, cutoff, then the energy projection started from the truncated field.

    The bound of the final field is only guaranteed when eta * max|f'| <= 1;
    both that condition and the actual bound are recorded, not assumed.
    """
    grid = phi_n.grid
    un = phi_n.values
    e_pre = _energy_pre(flow, cfg, un, energy_n)
    rep = StepReport(energy_pre=e_pre)
    pred = Field(grid, etdrk_step_values(tableau, flow, un, tau))
    bp = bound_project(pred, cfg.bound)
    _fill_bound_stats(rep, bp, cfg.bound.bound)
    rep.energy_post_corrector1 = energy(cfg.energy_form, flow, bp.phi.values)
    ep = energy_project(flow, cfg.energy_form, phi_n, bp.phi, cfg.energy, tau, e_pre)
    rep.eta, rep.newton_iters, rep.energy_residual = ep.eta, ep.iterations, ep.residual
    rep.steady_state_reached, rep.bisection_used = ep.steady_state, ep.bisection_used
    if ep.eta > 0:
        rep.eta_condition_ok = bool(ep.eta * _lipschitz(flow.potential) <= 1.0)
    out = ep.phi.values
    rep.mbp_violation = bool(np.max(np.abs(out)) > cfg.bound.bound + cfg.mbp_tol)
    if rep.mbp_violation:
        log.warning("PCC' step left the bound: max|phi| = %.3e (eta = %.3e)",
                    np.max(np.abs(out)), ep.eta)
    return ep.phi, _finish(rep, flow, cfg, un, out)


@lru_cache(maxsize=None)
def _lipschitz(potential) -> float:
    return potential.max_abs_fprime()


@lru_cache(maxsize=None)
def _certified(tableau: ExponentialTableau) -> bool:
    return certify_assumption_A(tableau).certified


def step_pc(flow: FlowSpec, tableau: ExponentialTableau, phi_n: Field, tau: float,
            cfg: SchemeConfig, energy_n: float | None = None) -> tuple[Field, StepReport]:
    """Energy-stable ETDRK prediction (stabilized form) followed by the cutoff."""
    if not _certified(tableau):
        warnings.warn(f"{tableau.name} does not pass the Assumption-A sweep; "
                      "PC gives no energy guarantee", stacklevel=2)
    if flow.stabilizer < _lipschitz(flow.potential):
        warnings.warn(f"stabilizer S={flow.stabilizer:.6g} is below max|f'|="
                      f"{_lipschitz(flow.potential):.6g}; PC gives no energy guarantee",
                      stacklevel=2)
    grid = phi_n.grid
    un = phi_n.values
    rep = StepReport(energy_pre=_energy_pre(flow, cfg, un, energy_n))
    pred = Field(grid, etdrk_step_values(tableau, flow, un, tau, stabilized=True))
    rep.energy_post_corrector1 = energy(cfg.energy_form, flow, pred.values)
    bp = bound_project(pred, cfg.bound)
    _fill_bound_stats(rep, bp, cfg.bound.bound)
    out = bp.phi.values
    rep.mbp_violation = bool(np.max(np.abs(out)) > cfg.bound.bound + cfg.mbp_tol)
    return bp.phi, _finish(rep, flow, cfg, un, out)


SCHEMES = {
    "plain": step_plain,
    "PCC": step_pcc,
    "PCC'": step_pcc_prime,
    "PC": step_pc,
}


def scheme_step(name: str):
    aliases = {"pcc": "PCC", "pcc'": "PCC'", "pcc-prime": "PCC'", "pccp": "PCC'",
               "pc": "PC", "plain": "plain", "none": "plain"}
    key = aliases.get(name.lower())
    if key is None:
        raise KeyError(f"unknown scheme {name!r}; known: {', '.join(SCHEMES)}")
    return SCHEMES[key]

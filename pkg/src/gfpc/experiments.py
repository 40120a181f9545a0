"""Experiment configuration, initial data, simulation and convergence drivers."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .correctors import CorrectorFailure, SchemeConfig, StepReport, scheme_step
from .etdrk import BlowUpError, ExponentialTableau, tableau_catalog
from .models import EnergyForm, FlowSpec, Mobility, PotentialKind, PotentialModel, energy
from .snapshot import snapshot_name, write_snapshot
from .spectral import Field, Grid, l2_norm

log = logging.getLogger(__name__)

PI = math.pi


class ExitStatus(enum.IntEnum):
    COMPLETED = 0
    STEADY_STATE = 3
    BLOW_UP = 4
    CORRECTOR_FAILURE = 5


# Example presets; stabilizer_factor is S * epsilon^2.
PRESETS = {
    "AC2D": dict(dim=2, domain=(0.0, 2 * PI), grid=128, mobility="allen-cahn",
                 potential="double-well", epsilon=0.1, stabilizer_factor=1.0,
                 initial="disk", scheme="PCC", tableau="U-ETDRK3", tau=0.01, tmax=0.5),
    "AC3D": dict(dim=3, domain=(-PI, PI), grid=64, mobility="allen-cahn",
                 potential="double-well", epsilon=0.1, stabilizer_factor=1.0,
                 initial="spheres", scheme="PCC", tableau="U-ETDRK3", tau=0.01, tmax=0.1),
    "CH2D": dict(dim=2, domain=(0.0, 2 * PI), grid=128, mobility="cahn-hilliard",
                 potential="flory-huggins", epsilon=0.1, stabilizer_factor=1.0,
                 initial="random", scheme="PCC", tableau="ETDRK2", tau=1e-4, tmax=0.01),
    "CH3D": dict(dim=3, domain=(-PI, PI), grid=64, mobility="cahn-hilliard",
                 potential="flory-huggins", epsilon=0.1, stabilizer_factor=5.0,
                 initial="half-spheres", scheme="PCC", tableau="ETDRK2", tau=1e-3, tmax=0.05),
    "custom": dict(dim=2, domain=(0.0, 2 * PI), grid=64, mobility="allen-cahn",
                   potential="zero", epsilon=1.0, stabilizer_factor=0.0,
                   initial="cos", scheme="PCC", tableau="ETDRK2", tau=0.01, tmax=0.1),
}

INITIAL_KINDS = ("disk", "spheres", "half-spheres", "random", "cos")
SCHEME_NAMES = ("plain", "PCC", "PCC'", "PC")


@dataclass(frozen=True)
class ExperimentConfig:
    example: str = "AC2D"
    scheme: str = "PCC"
    tableau: str = "U-ETDRK3"
    grid: int = 128
    dim: int = 2
    domain: tuple[float, float] = (0.0, 2 * PI)
    tau: float = 0.01
    tmax: float = 0.5
    mobility: str = "allen-cahn"
    potential: str = "double-well"
    epsilon: float = 0.1
    beta: float = 1.0
    stabilizer: float | None = None      # absolute S; overrides stabilizer_factor
    stabilizer_factor: float = 1.0       # S = stabilizer_factor / epsilon^2
    theta0: float = 3.0
    delta: float = 0.01
    initial: str = "disk"
    random_mean: float = 0.2
    random_amplitude: float = 0.05
    energy_form: str = "interpolation"
    projection: bool = False             # P_h post-processing after the cutoff
    seed: int = 0
    out: str | None = None
    snapshot_times: tuple[float, ...] = ()
    stop_at_steady_state: bool = False
    mbp_tol: float = 1e-10

    def __post_init__(self):
        if self.example not in PRESETS:
            raise ValueError(f"unknown example {self.example!r}; known: {', '.join(PRESETS)}")
        scheme_step(self.scheme)
        tableau_catalog(self.tableau)
        EnergyForm(self.energy_form)
        Mobility(self.mobility)
        PotentialKind(self.potential)
        if self.initial not in INITIAL_KINDS:
            raise ValueError(f"unknown initial data {self.initial!r}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.tmax >= self.tau:
            raise ValueError("tmax must be at least tau")
        if self.grid < 4 or self.grid % 2:
            raise ValueError("grid must be even and >= 4")
        if self.epsilon <= 0 or self.beta <= 0 or self.delta <= 0:
            raise ValueError("epsilon, beta and delta must be positive")
        if (self.stabilizer if self.stabilizer is not None else self.stabilizer_factor) < 0:
            raise ValueError("stabilizer must be nonnegative")
        if any(t < 0 or t > self.tmax + 1e-12 for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, tmax]")
        self.steps  # validates the tau / tmax ratio

    # -- construction
    @classmethod
    def from_preset(cls, example: str = "AC2D", **overrides) -> "ExperimentConfig":
        if example not in PRESETS:
            raise ValueError(f"unknown example {example!r}; known: {', '.join(PRESETS)}")
        values = dict(PRESETS[example], example=example)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Read an INI file (any section names; keys are field names)."""
        parser = configparser.ConfigParser(interpolation=None)
        with open(path) as fh:
            parser.read_file(fh)
        raw = {}
        for section in parser.sections():
            for key, value in parser.items(section):
                raw[key.replace("-", "_")] = value
        parsed = {key: _parse_field(key, value) for key, value in raw.items()}
        parsed.update({k: v for k, v in overrides.items() if v is not None})
        example = parsed.pop("example", "AC2D")
        return cls.from_preset(example, **parsed)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_ini(self) -> str:
        lines = ["[experiment]"]
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    # -- derived quantities
    @property
    def steps(self) -> int:
        n = round(self.tmax / self.tau)
        if abs(n * self.tau - self.tmax) > 1e-9 * self.tmax:
            raise ValueError(f"tmax={self.tmax} is not an integer multiple of tau={self.tau}")
        return n

    @property
    def stabilizer_value(self) -> float:
        if self.stabilizer is not None:
            return self.stabilizer
        return self.stabilizer_factor / self.epsilon**2

    def make_grid(self) -> Grid:
        return Grid.uniform(self.dim, self.grid, *self.domain)

    def make_potential(self) -> PotentialModel:
        kind = PotentialKind(self.potential)
        s = self.stabilizer_value
        if kind is PotentialKind.DOUBLE_WELL:
            return PotentialModel.double_well(self.epsilon, self.beta, s)
        if kind is PotentialKind.FLORY_HUGGINS:
            return PotentialModel.flory_huggins(self.epsilon, self.theta0, self.beta, self.delta, s)
        return PotentialModel.zero(self.beta, s)

    def make_flow(self) -> FlowSpec:
        return FlowSpec(Mobility(self.mobility), self.make_potential(), self.make_grid())

    def make_scheme_config(self, flow: FlowSpec | None = None) -> SchemeConfig:
        flow = flow or self.make_flow()
        return SchemeConfig.for_flow(flow, energy_form=EnergyForm(self.energy_form),
                                     enforce_projection_energy=self.projection,
                                     mbp_tol=self.mbp_tol)


_BOOL_FIELDS = {"projection", "stop_at_steady_state"}
_INT_FIELDS = {"grid", "dim", "seed"}
_STR_FIELDS = {"example", "scheme", "tableau", "mobility", "potential", "initial",
               "energy_form", "out"}


def _parse_field(key: str, value: str):
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    if key not in names:
        raise ValueError(f"unknown configuration key {key!r}")
    value = value.strip()
    if key in _STR_FIELDS:
        return value
    if key in _BOOL_FIELDS:
        return configparser.ConfigParser.BOOLEAN_STATES[value.lower()]
    if key in _INT_FIELDS:
        return int(value)
    if key == "snapshot_times":
        return tuple(float(v) for v in value.replace(",", " ").split())
    if key == "domain":
        lo, hi = (float(v) for v in value.replace(",", " ").split())
        return (lo, hi)
    if key == "stabilizer" and value.lower() in ("", "none"):
        return None
    return float(value)


# ---------------------------------------------------------------------------
# initial data

def _tanh_ball(coords, center, radius, epsilon):
    r = np.sqrt(sum((x - c) ** 2 for x, c in zip(coords, center)))
    return np.tanh((radius - r) / (math.sqrt(2) * epsilon))


def _four_spheres(grid: Grid, epsilon: float) -> np.ndarray:
    x, y, z = grid.coordinates()
    q = PI / 4
    total = (_tanh_ball((x, y, z), (-q, -q, 0.0), PI / 6, epsilon)
             + _tanh_ball((x, y, z), (-q, q, 0.0), PI / 5, epsilon)
             + _tanh_ball((x, y, z), (q, q, 0.0), PI / 6, epsilon)
             + _tanh_ball((x, y, z), (0.0, 0.0, PI / 3), PI / 6, epsilon))
    # far from all four balls the sum is -4; shifting by 3 puts it at -1
    return total + 3.0


def random_uniform(grid: Grid, seed: int) -> np.ndarray:
    """Uniform(-1, 1) samples from a Philox counter-based stream keyed by ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    return rng.uniform(-1.0, 1.0, size=grid.shape)


def initial_data(kind: str, grid: Grid, seed: int = 0, epsilon: float = 0.1,
                 mean: float = 0.2, amplitude: float = 0.05) -> Field:
    if kind == "disk":
        if grid.dim != 2:
            raise ValueError("disk initial data is two-dimensional")
        x, y = grid.coordinates()
        center = tuple(0.5 * (a + b) for a, b in zip(grid.domain_min, grid.domain_max))
        return Field(grid, _tanh_ball((x, y), center, 1.0, epsilon))
    if kind in ("spheres", "half-spheres"):
        if grid.dim != 3:
            raise ValueError(f"{kind} initial data is three-dimensional")
        u = _four_spheres(grid, epsilon)
        return Field(grid, 0.5 * u if kind == "half-spheres" else u)
    if kind == "random":
        return Field(grid, mean + amplitude * random_uniform(grid, seed))
    if kind == "cos":
        return Field(grid, np.cos(grid.coordinates()[0]))
    raise ValueError(f"unknown initial data {kind!r}")


def config_initial_data(config: ExperimentConfig, grid: Grid | None = None) -> Field:
    return initial_data(config.initial, grid or config.make_grid(), config.seed,
                        config.epsilon, config.random_mean, config.random_amplitude)


# ---------------------------------------------------------------------------
# time stepping

CSV_COLUMNS = ("n", "t", "eta", "newton_iters", "lambda_max", "energy", "phi_min", "phi_max",
               "mean", "energy_pre", "energy_corrector1", "lambda_p_max", "eta_residual",
               "bisection", "steady_state", "mbp_violation", "eta_condition")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def report_row(n: int, t: float, rep: StepReport) -> list[str]:
    eta_cond = "" if rep.eta_condition_ok is None else _fmt(rep.eta_condition_ok)
    return [_fmt(n), _fmt(t), _fmt(rep.eta), _fmt(rep.newton_iters), _fmt(rep.lambda_max),
            _fmt(rep.energy), _fmt(rep.phi_min), _fmt(rep.phi_max), _fmt(rep.mass_mean),
            _fmt(rep.energy_pre), _fmt(rep.energy_post_corrector1), _fmt(rep.lambda_p_max),
            _fmt(rep.energy_residual), _fmt(rep.bisection_used),
            _fmt(rep.steady_state_reached), _fmt(rep.mbp_violation), eta_cond]


def initial_report(form: EnergyForm, flow: FlowSpec, u0: Field) -> StepReport:
    e0 = energy(form, flow, u0)
    v = u0.values
    return StepReport(energy_pre=e0, energy_post_corrector1=e0, energy_post_corrector2=e0,
                      phi_min=float(v.min()), phi_max=float(v.max()), mass_mean=float(v.mean()))


@dataclass
class SimulationResult:
    final: Field
    reports: list[StepReport]
    snapshots: dict[float, Field]
    status: ExitStatus
    steps_taken: int
    message: str = ""
    out_dir: Path | None = None

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.reports])

    @property
    def max_abs(self) -> float:
        return max(max(abs(r.phi_min), abs(r.phi_max)) for r in self.reports)


def run_simulation(config: ExperimentConfig, write: bool = True,
                   tableau: ExponentialTableau | None = None,
                   initial: Field | None = None) -> SimulationResult:
    """Advance from t=0 to tmax with fixed tau.

    With ``write`` and ``config.out`` set, ``energy.csv`` is streamed row by
    row (so partial output survives a blow-up) and snapshots are written at
    the requested times.
    """
    flow = config.make_flow()
    cfg = config.make_scheme_config(flow)
    step = scheme_step(config.scheme)
    tab = tableau or tableau_catalog(config.tableau)
    u = initial if initial is not None else config_initial_data(config, flow.grid)
    nsteps = config.steps
    snap_steps = {round(t / config.tau): t for t in config.snapshot_times}

    out_dir = Path(config.out) if (write and config.out) else None
    writer = fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.ini").write_text(config.to_ini())
        fh = open(out_dir / "energy.csv", "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)

    rep = initial_report(cfg.energy_form, flow, u)
    reports = [rep]
    snapshots: dict[float, Field] = {}
    status, message, n = ExitStatus.COMPLETED, "", 0

    def emit(n, u, rep):
        t = n * config.tau
        if writer is not None:
            writer.writerow(report_row(n, t, rep))
            fh.flush()
        if n in snap_steps:
            snapshots[snap_steps[n]] = u
            if out_dir is not None:
                write_snapshot(u, out_dir / snapshot_name(snap_steps[n]))

    try:
        emit(0, u, rep)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for n in range(1, nsteps + 1):
                u, rep = step(flow, tab, u, config.tau, cfg, rep.energy)
                if not (math.isfinite(rep.energy) and np.isfinite(u.values).all()):
                    raise BlowUpError(f"non-finite state at step {n}")
                reports.append(rep)
                emit(n, u, rep)
                if config.stop_at_steady_state and rep.steady_state_reached:
                    status, message = ExitStatus.STEADY_STATE, f"steady state at step {n}"
                    break
    except BlowUpError as exc:
        status, message = ExitStatus.BLOW_UP, f"step {n}: {exc}"
        n -= 1
    except CorrectorFailure as exc:
        status, message = ExitStatus.CORRECTOR_FAILURE, f"step {n}: {exc}"
        n -= 1
    finally:
        if fh is not None:
            fh.close()
    if status is not ExitStatus.COMPLETED:
        log.warning("%s: %s", status.name, message)
    if out_dir is not None:
        (out_dir / "status.txt").write_text(f"{status.name} {int(status)}\n{message}\n")
    return SimulationResult(u, reports, snapshots, status, n, message, out_dir)


def _batch_worker(config: ExperimentConfig) -> tuple[str | None, int, str]:
    res = run_simulation(config)
    return config.out, int(res.status), res.message


def run_batch(configs, workers: int | None = None) -> list[tuple[str | None, int, str]]:
    """Run independent configurations on a process pool; output dirs must differ."""
    configs = list(configs)
    outs = [c.out for c in configs]
    if None in outs or len(set(map(os.path.abspath, outs))) != len(outs):
        raise ValueError("batch runs need distinct output directories")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_batch_worker, configs))


# ---------------------------------------------------------------------------
# convergence

@dataclass(frozen=True)
class ConvergenceStudy:
    ladder: tuple[int, ...] = (50, 100, 200, 400, 800)
    tmax: float = 0.1
    reference_scheme: str = "PCC"
    reference_tableau: str = "U-ETDRK4"
    reference_tau: float = 1e-4

    def __post_init__(self):
        if len(self.ladder) < 2 or any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("ladder must be increasing with at least two entries")
        finest = self.tmax / self.ladder[-1]
        if self.reference_tau > finest / 10:
            warnings.warn(f"reference tau {self.reference_tau:g} is not 10x below the finest "
                          f"ladder step {finest:g}; the last rate is biased", stacklevel=2)
        round(self.tmax / self.reference_tau)


@dataclass
class ConvergenceTable:
    label: str
    ladder: tuple[int, ...]
    taus: list[float]
    errors: list[float]
    rates: list[float | None] = dc_field(default_factory=list)

    def rows(self):
        for N, tau, err, rate in zip(self.ladder, self.taus, self.errors, self.rates):
            yield N, tau, err, rate

    def to_text(self) -> str:
        lines = [self.label, f"{'N':>6} {'tau':>12} {'L2 error':>12} {'rate':>7}"]
        for N, tau, err, rate in self.rows():
            r = "-" if rate is None else f"{rate:.3f}"
            lines.append(f"{N:6d} {tau:12.4e} {err:12.4e} {r:>7}")
        return "\n".join(lines) + "\n"


def convergence_rates(ladder, errors) -> list[float | None]:
    rates: list[float | None] = [None]
    for k in range(1, len(errors)):
        rates.append(math.log(errors[k - 1] / errors[k]) / math.log(ladder[k] / ladder[k - 1]))
    return rates


def _final_state(config: ExperimentConfig, tableau=None) -> Field:
    res = run_simulation(config, write=False, tableau=tableau)
    if res.status is not ExitStatus.COMPLETED:
        raise RuntimeError(f"run failed ({res.status.name}): {res.message}")
    return res.final


def reference_solution(study: ConvergenceStudy, config: ExperimentConfig) -> Field:
    ref = config.replace(scheme=study.reference_scheme, tableau=study.reference_tableau,
                         tau=study.reference_tau, tmax=study.tmax, snapshot_times=(), out=None)
    return _final_state(ref)


def run_convergence(study: ConvergenceStudy, config: ExperimentConfig,
                    reference: Field | None = None,
                    tableau: ExponentialTableau | None = None) -> ConvergenceTable:
    """L2 errors at tmax for tau = tmax/N over the ladder, against a fine reference."""
    if reference is None:
        reference = reference_solution(study, config)
    taus, errors = [], []
    for N in study.ladder:
        tau = study.tmax / N
        run = config.replace(tau=tau, tmax=study.tmax, snapshot_times=(), out=None)
        final = _final_state(run, tableau)
        taus.append(tau)
        errors.append(l2_norm(reference.grid, final.values - reference.values))
    name = tableau.name if tableau is not None else config.tableau
    scheme = "" if config.scheme == "plain" else f"-{config.scheme}"
    return ConvergenceTable(f"{name}{scheme}", tuple(study.ladder), taus, errors,
                            convergence_rates(study.ladder, errors))


def write_convergence_csv(tables, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "N", "tau", "l2_error", "rate"])
        for table in tables:
            for N, tau, err, rate in table.rows():
                w.writerow([table.label, N, repr(tau), repr(err), "" if rate is None else repr(rate)])

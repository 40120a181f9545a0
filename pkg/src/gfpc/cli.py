"""Command line interface: ``gfpc run|converge|certify|order-check``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .etdrk import TABLEAU_NAMES, certify_assumption_A, check_order_conditions, tableau_catalog
from .experiments import (
    PRESETS,
    ConvergenceStudy,
    ExperimentConfig,
    reference_solution,
    run_convergence,
    run_simulation,
    write_convergence_csv,
)

# scheme/tableau pairs of the standard temporal accuracy table
CONVERGENCE_SET = (("PC", "ETDRK1"), ("PC", "ETDRK2"), ("PC", "ETDRK3"),
                   ("PCC", "U-ETDRK3"), ("PCC", "U-ETDRK4"))


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="INI file; flags override its values")
    p.add_argument("--example", choices=sorted(PRESETS))
    p.add_argument("--scheme", help="plain | PCC | PCC' | PC")
    p.add_argument("--tableau", choices=TABLEAU_NAMES)
    p.add_argument("--grid", type=int, help="points per axis")
    p.add_argument("--tau", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--stabilizer-factor", type=float, help="S = factor / epsilon^2")
    p.add_argument("--stabilizer", type=float, help="absolute S; overrides the factor")
    p.add_argument("--energy-form", choices=["interpolation", "projection", "finite-difference"])
    p.add_argument("--out", help="output directory")


def _config_from_args(args) -> ExperimentConfig:
    overrides = dict(example=args.example, scheme=args.scheme, tableau=args.tableau,
                     grid=args.grid, tau=args.tau, tmax=args.tmax, seed=args.seed,
                     epsilon=args.epsilon, stabilizer_factor=args.stabilizer_factor,
                     stabilizer=args.stabilizer,
                     energy_form=args.energy_form, out=args.out)
    extra = getattr(args, "snapshot_times", None)
    if extra:
        overrides["snapshot_times"] = tuple(extra)
    if args.config is not None:
        return ExperimentConfig.from_file(args.config, **overrides)
    example = overrides.pop("example") or "AC2D"
    return ExperimentConfig.from_preset(example, **overrides)


def cmd_run(args) -> int:
    config = _config_from_args(args)
    if config.out is None:
        config = config.replace(out="gfpc-out")
    res = run_simulation(config)
    last = res.reports[-1]
    print(f"{res.status.name}: {res.steps_taken} steps, E = {last.energy:.12g}, "
          f"max|phi| = {res.max_abs:.16g}")
    if res.message:
        print(res.message)
    return int(res.status)


def cmd_converge(args) -> int:
    config = _config_from_args(args)
    study = ConvergenceStudy(ladder=tuple(args.ladder), tmax=args.tmax or 0.1,
                             reference_tau=args.reference_tau)
    pairs = CONVERGENCE_SET if args.scheme is None and args.tableau is None else \
        ((config.scheme, config.tableau),)
    ref = reference_solution(study, config)
    tables = []
    for scheme, tab in pairs:
        table = run_convergence(study, config.replace(scheme=scheme, tableau=tab), reference=ref)
        print(table.to_text())
        tables.append(table)
    out = Path(config.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_convergence_csv(tables, out / "convergence.csv")
    return 0


def cmd_certify(args) -> int:
    names = [args.tableau] if args.tableau else list(TABLEAU_NAMES)
    texts = []
    for name in names:
        report = certify_assumption_A(tableau_catalog(name))
        print(f"{name:10s} certified={report.certified} "
              f"min eigenvalue={float(report.min_eigenvalue.min()):.4e}")
        texts.append(report.to_text())
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "certification.txt").write_text("\n".join(texts))
    return 0


def cmd_order_check(args) -> int:
    names = [args.tableau] if args.tableau else list(TABLEAU_NAMES)
    for name in names:
        tab = tableau_catalog(name)
        print(check_order_conditions(tab, args.order or tab.order).to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfpc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    _add_experiment_flags(p)
    p.add_argument("--snapshot-times", type=float, nargs="+")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("converge", help="temporal convergence study")
    _add_experiment_flags(p)
    p.add_argument("--ladder", type=int, nargs="+", default=[50, 100, 200, 400, 800])
    p.add_argument("--reference-tau", type=float, default=1e-4)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("certify", help="Assumption-A sweep of tableaus")
    p.add_argument("--tableau", choices=TABLEAU_NAMES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("order-check", help="stiff order condition residuals")
    p.add_argument("--tableau", choices=TABLEAU_NAMES)
    p.add_argument("--order", type=int)
    p.set_defaults(func=cmd_order_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

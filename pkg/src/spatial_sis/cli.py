"""Command-line entry point: ``spatial-sis <command> [options]``.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical
failure, 3 no endemic equilibrium.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import evolve, io, limits, spectra, study
from .equilibrium import solve_ee, verify_bounds
from .errors import (ConfigurationError, InfeasibleError, NoEndemicEquilibrium, NumericalError,
                     RegimeError, UsageError)
from .grid import integrate
from .model import Scenario

log = logging.getLogger("spatial_sis")

COMMANDS = ("simulate", "steady", "r0", "limits", "sweep-di", "sweep-ds", "sweep-joint", "kpp", "patch")
OVERRIDABLE = ("p", "q", "d_S", "d_I", "N")


class _UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageExit(f"{self.prog}: error: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="scenario file")
    src.add_argument("--preset", choices=sorted(config_mod.PRESETS), help="built-in scenario")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help=f"override one of {', '.join(OVERRIDABLE)}")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="spatial-sis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="integrate in time")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--snapshots", type=_floats, default=[])

    p = sub.add_parser("steady", parents=[common], help="endemic equilibrium")
    p.add_argument("--method", choices=("reduction", "relax"), default="reduction")
    p.add_argument("--max-T", type=float, default=1e5)

    sub.add_parser("r0", parents=[common], help="basic reproduction number")

    p = sub.add_parser("limits", parents=[common], help="limit constants and profiles")
    p.add_argument("--sigma", type=float, default=1.0)

    for name, help_text in (("sweep-di", "d_I -> 0 study"), ("sweep-ds", "d_S -> 0 study"),
                            ("sweep-joint", "joint d_I, d_S -> 0 study")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--values", type=_floats, default=[1e-2, 1e-3, 1e-4, 1e-5])
        p.add_argument("--delta", type=float)
        if name == "sweep-joint":
            p.add_argument("--sigma", type=float, default=1.0)

    p = sub.add_parser("kpp", parents=[common], help="Fisher-KPP threshold and solution")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float, default=1.0)

    p = sub.add_parser("patch", parents=[common], help="limit patch problem on the risk set")
    p.add_argument("--mass", type=float)
    return parser


def load_config(args) -> config_mod.ScenarioConfig:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file: {exc}")
        cfg = config_mod.parse_config(text)
    elif args.preset is not None:
        cfg = config_mod.PRESETS[args.preset]()
    else:
        raise ConfigurationError("one of --config or --preset is required")
    changes = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in OVERRIDABLE:
            raise ConfigurationError(f"bad override {item!r}", key=key or None)
        try:
            changes[key] = float(value)
        except ValueError:
            raise ConfigurationError(f"expected a number in override {item!r}", key=key)
    return cfg.replace(**changes) if changes else cfg


def _out(args) -> Path | None:
    if args.out is None:
        return None
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _write_state(out: Path, stem: str, sc: Scenario, S, I, meta: dict) -> None:
    io.write_state_csv(out / f"{stem}.csv", sc.grid, S, I)
    io.write_json(out / f"{stem}.json", meta)
    if sc.grid.dim == 2:
        io.emit_heatmap(S, sc.grid, out / f"{stem}_S.pgm")
        io.emit_heatmap(I, sc.grid, out / f"{stem}_I.pgm")


def cmd_simulate(args, sc: Scenario) -> int:
    states = evolve.run_to_time(sc, args.T, args.dt, args.snapshots)
    out = _out(args)
    for st in states:
        mass = integrate(sc.grid, st.S + st.I)
        print(f"t = {st.t:.6g}  mass = {mass:.17g}  max I = {st.I.max():.6g}")
        if out is not None:
            meta = {"t": st.t, "mass": mass, "N": st.N_target, "clipped_mass": st.clipped_mass,
                    "steps": st.steps}
            _write_state(out, f"snapshot_t{st.t:g}", sc, st.S, st.I, meta)
    return 0


def cmd_steady(args, sc: Scenario) -> int:
    if args.method == "relax":
        state = evolve.relax_to_steady(sc, sc.cfg.tol_resid, args.max_T)
    else:
        state = solve_ee(sc, fallback=True)
    report = verify_bounds(state, sc)
    meta = {**state.metadata(), "bounds_ok": report.all_ok, "bound_margins": report.margins}
    print(f"kappa = {state.kappa:.17g}")
    print(f"pde_residual = {state.pde_residual:.3e}  converged = {state.converged}")
    print(f"S in [{state.S.min():.6g}, {state.S.max():.6g}]  I in [{state.I.min():.6g}, {state.I.max():.6g}]")
    out = _out(args)
    if out is not None:
        _write_state(out, "equilibrium", sc, state.S, state.I, meta)
    return 0 if state.converged else 2


def cmd_r0(args, sc: Scenario) -> int:
    res = spectra.compute_r0(sc)
    print(repr(res.value))
    out = _out(args)
    if out is not None:
        io.write_fields_csv(out / "r0_eigenfunction.csv", sc.grid, {"phi": res.eigenfunction})
        io.write_json(out / "r0.json", {"R0": res.value, "iterations": res.iterations,
                                        "residual": res.residual})
    return 0


def _limit_summary(sc: Scenario, sigma: float) -> tuple[dict, list]:
    summary = {"p": sc.p, "q": sc.q, "N": sc.N, "measure": sc.measure,
               "r_min": sc.risk.r_min, "r_max": sc.risk.r_max,
               "integral_r_root": integrate(sc.grid, sc.r_root)}
    profiles = [limits.profile_dI_to_0(sc), limits.profile_joint(sc, sigma)]
    if sc.p < 1:
        summary.update(S_star=limits.solve_S_star(sc), I_star=limits.solve_I_star(sc),
                       N_star=limits.solve_N_star(sc), M_star=limits.solve_M_star(sc))
        profiles.append(limits.profile_dS_to_0(sc))
    else:
        asym = limits.kappa_sigma_asymptotics(sc)
        summary.update(regime=asym.regime, excess=asym.excess, kappa_tilde_infty=asym.kappa_infty,
                       sigma_star=asym.sigma_star, I_large_sigma=asym.closed_form_limit_I,
                       small_sigma=asym.small_sigma)
        try:
            profiles.append(limits.profile_dS_to_0(sc))
        except (RegimeError, NumericalError) as exc:
            summary["dS_to_0"] = f"unavailable: {exc}"
    summary["sigma"] = sigma
    summary["kappa_tilde_sigma"] = profiles[1].scalars["kappa_tilde_sigma"]
    return summary, profiles


def cmd_limits(args, sc: Scenario) -> int:
    summary, profiles = _limit_summary(sc, args.sigma)
    print(json.dumps(io._jsonable(summary), indent=2, sort_keys=True))
    out = _out(args)
    if out is not None:
        io.write_json(out / "limits.json", summary)
        for prof in profiles:
            io.write_state_csv(out / f"limit_{prof.kind}.csv", sc.grid, prof.S_limit, prof.I_limit)
    return 0


def cmd_sweep(args, sc: Scenario) -> int:
    if args.command == "sweep-di":
        report = study.sweep_dI(sc, args.values, args.delta, args.jobs)
    elif args.command == "sweep-ds":
        report = study.sweep_dS(sc, args.values, args.delta, args.jobs)
    else:
        report = study.sweep_joint(sc, args.sigma, args.values, args.delta, args.jobs)
    print(f"regime = {report.regime}  fitted_slope = {report.fitted_slope}")
    print(",".join(study.CSV_COLUMNS))
    for r in report.rows:
        print(f"{r.param:.3g},{r.err_S_inf:.6g},{r.err_I:.6g},{r.concentration:.4f},"
              f"{r.kappa_over_dS:.6g},{r.residual:.3e},{int(r.converged)}")
    out = _out(args)
    if out is not None:
        report.to_csv(out / f"{args.command.replace('-', '_')}.csv")
    return 0 if all(r.converged for r in report.rows) else 2


def cmd_kpp(args, sc: Scenario) -> int:
    a_low = spectra.kpp_threshold(args.b, sc.grid, sc.beta)
    print(f"a_low = {a_low!r}")
    if args.a is not None:
        res = spectra.solve_fisher_kpp(args.a, args.b, sc.grid, sc.beta)
        print(f"a = {args.a!r}  positive = {res.positive}  max u = {res.u.max():.17g}")
        out = _out(args)
        if out is not None:
            io.write_fields_csv(out / "kpp.csv", sc.grid, {"u": res.u})
            io.write_json(out / "kpp.json", {"a": args.a, "b": args.b, "a_low": a_low,
                                             "positive": res.positive})
    return 0


def cmd_patch(args, sc: Scenario) -> int:
    sol = spectra.solve_limit_patch(sc, mass_target=args.mass)
    print(f"a_hat = {sol.a_hat!r}")
    for k, (m, t) in enumerate(zip(sol.masses, sol.thresholds)):
        print(f"patch {k}: nodes = {sol.patches[k].n}  a_low = {t:.6g}  mass = {m:.6g}")
    out = _out(args)
    if out is not None:
        field = sol.assemble(sc.grid.n)
        io.write_fields_csv(out / "patch.csv", sc.grid, {"I_hat": field})
        io.write_json(out / "patch.json", {"a_hat": sol.a_hat, "masses": sol.masses,
                                           "thresholds": sol.thresholds})
    return 0


HANDLERS = {"simulate": cmd_simulate, "steady": cmd_steady, "r0": cmd_r0, "limits": cmd_limits,
            "sweep-di": cmd_sweep, "sweep-ds": cmd_sweep, "sweep-joint": cmd_sweep,
            "kpp": cmd_kpp, "patch": cmd_patch}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        sc = Scenario.from_config(load_config(args))
        return HANDLERS[args.command](args, sc)
    except (ConfigurationError, UsageError, RegimeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NoEndemicEquilibrium as exc:
        print(f"no endemic equilibrium: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, InfeasibleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

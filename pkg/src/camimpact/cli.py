"""Command-line front end.

Every command validates its inputs before writing anything, writes its
artifacts into ``--out-dir`` together with ``run_manifest.json`` and
exits with 0 on success, 1 on numerical failure and 2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cam import TWO_PI, discontinuity_phases
from .classify import (UnobservableBoundaryError, canonicalize, classify,
                       iterate_local_map, write_local_diagram_csv)
from .corner_map import (CornerContext, CornerMapError, LocalPWLMap,
                         build_local_map, corner_pieces, estimate_map_numerically,
                         fixed_point_residual, load_map, save_map, solve_fixed_point)
from .follower import FollowerState
from .scan import (ScanConfig, locate_corner_crossing, rpm_to_rad, scan,
                   write_diagram_csv)
from .scenario import Scenario, ScenarioError, load_scenario
from .simulator import EventError, simulate, write_trajectory_csv

log = logging.getLogger("camimpact")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    """Invalid command-line input."""


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not a valid {kind.__name__}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{text!r} must be positive")
        return v
    return conv


def _vector(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of numbers") from None


def _write_manifest(out_dir: Path, argv: list, args: argparse.Namespace,
                    scenario: Scenario | None, outputs: list, extra: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "version": __version__,
        "scenario": None if scenario is None else {"source": scenario.source, **scenario.as_dict()},
        "seeds": {"seed": getattr(args, "seed", None)},
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    if extra:
        manifest.update(extra)
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def cmd_simulate(args, argv) -> int:
    scenario = load_scenario(args.scenario)
    omega = rpm_to_rad(args.omega_rpm)
    cam = scenario.cam(omega)
    t0 = scenario.config.strobe_phase / omega
    x0 = scenario.initial
    if args.start == "cam":
        c = cam.state(t0)
        x0 = FollowerState(c.position, c.velocity)
    traj = simulate(x0, t0, args.duration_periods * cam.period, cam,
                    scenario.params, scenario.config)
    out = Path(args.out_dir)
    paths = write_trajectory_csv(traj, out)
    _write_manifest(out, argv, args, scenario, list(paths.values()),
                    {"summary": {"impacts": len(traj.impacts),
                                 "sticking_intervals": len(traj.sticking),
                                 "chattering_overflow": traj.overflow}})
    print(f"{len(traj.impacts)} impacts, {len(traj.sticking)} sticking intervals"
          + (" (chattering overflow, truncated)" if traj.overflow else ""))
    return EXIT_OK


def cmd_scan(args, argv) -> int:
    scenario = load_scenario(args.scenario)
    try:
        cfg = ScanConfig(args.omega_min_rpm, args.omega_max_rpm, args.points,
                         args.transient_periods, args.record_periods,
                         not args.no_continuation, args.direction, args.workers)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    diagram = scan(cfg, scenario)
    out = Path(args.out_dir)
    paths = list(write_diagram_csv(diagram, out).values())
    extra = {}
    if args.locate_corners:
        crossings = locate_corner_crossing(diagram, scenario)
        rows = [{"omega_rpm": c.omega_rpm, "corner_phase": c.corner_phase,
                 "bracket_rpm": list(c.bracket_rpm)} for c in crossings]
        p = out / "corner_crossings.json"
        p.write_text(json.dumps(rows, indent=2) + "\n")
        paths.append(p)
        for r in rows:
            print(f"corner crossing at {r['omega_rpm']!r} rpm (corner phase {r['corner_phase']!r})")
    if args.svg:
        from .plots import render_svg
        corners = [ph for ph, _ in discontinuity_phases(scenario.geometry)]
        for name in ("impact_diagram", "strobe_diagram"):
            paths.append(render_svg(out / f"{name}.csv", out / f"{name}.svg", corners))
    _write_manifest(out, argv, args, scenario, paths, extra)
    n_err = sum(r.error is not None for r in diagram.records)
    print(f"scanned {len(diagram.records)} speeds ({n_err} failed)")
    return EXIT_OK


def _residual_report(ctx: CornerContext, m: LocalPWLMap) -> dict:
    rc, rd = m.continuity_residual()
    return {"omega_star_rpm": ctx.omega_star * 60.0 / TWO_PI, "T_star": ctx.T_star,
            "x_star": ctx.x_star.tolist(), "fixed_point_residual": ctx.fixed_point_residual,
            "corner_residual": ctx.corner_residual, "continuity_residual_C": rc,
            "continuity_residual_D": rd}


def cmd_derive_map(args, argv) -> int:
    scenario = load_scenario(args.scenario)
    ctx = solve_fixed_point(scenario, rpm_to_rad(args.omega_rpm), args.window,
                            args.corner_phase)
    m = build_local_map(ctx)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_map(m, out / "local_map.json")
    report = _residual_report(ctx, m)
    (out / "residuals.json").write_text(json.dumps(report, indent=2) + "\n")
    _write_manifest(out, argv, args, scenario, [out / "local_map.json", out / "residuals.json"])
    print(f"corner orbit at {report['omega_star_rpm']!r} rpm, T* = {ctx.T_star!r} s")
    return EXIT_OK


def context_from_map(scenario: Scenario, m: LocalPWLMap) -> CornerContext:
    """Rebuild the corner context a derived map was computed from."""
    if m.x_star is None or m.T_star is None:
        raise InputError("map file lacks x_star/T_star; it was not derived from a scenario")
    phase = float(m.metadata.get("corner_phase", scenario.phase_offset))
    cam = scenario.cam(TWO_PI / m.T_star)
    pieces = corner_pieces(cam, phase)
    ctx = CornerContext(scenario.params, scenario.geometry, phase, pieces, float(m.T_star),
                        np.asarray(m.x_star, dtype=float))
    res = fixed_point_residual(ctx)
    if res > 1e-9:
        raise InputError(f"map does not belong to this scenario (fixed-point residual {res:.3g})")
    return ctx


def cmd_estimate_map(args, argv) -> int:
    scenario = load_scenario(args.scenario)
    m = _load_map_arg(args.map)
    ctx = context_from_map(scenario, m)
    est = estimate_map_numerically(ctx, args.M, args.scale, args.seed,
                                   scenario.config, workers=args.workers)
    disc = est.discrepancy(m)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "A_minus_hat": est.A_minus.tolist(), "A_plus_hat": est.A_plus.tolist(),
        "B_minus_hat": est.B_minus.tolist(), "B_plus_hat": est.B_plus.tolist(),
        "relative_discrepancy": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                                 for k, v in disc.items()},
        "fit_residual": est.residual, "M": args.M, "perturbation_scale": args.scale,
        "seed": args.seed,
    }
    (out / "estimate.json").write_text(json.dumps(payload, indent=2) + "\n")
    _write_manifest(out, argv, args, scenario, [out / "estimate.json"])
    print(f"max relative entry discrepancy {disc['max']:.3e}")
    return EXIT_OK


def _load_map_arg(path) -> LocalPWLMap:
    try:
        return load_map(path)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _map_from_matrices(args) -> LocalPWLMap:
    try:
        A_m = np.array(args.A_minus).reshape(2, 2)
        A_p = np.array(args.A_plus).reshape(2, 2)
        B_m = np.array(args.B_minus).reshape(2)
        B_p = np.array(args.B_plus).reshape(2)
    except ValueError:
        raise InputError("A matrices need 4 entries (row-major) and B vectors 2") from None
    C = np.array(args.C) if args.C is not None else (A_p - A_m)[0]
    D = args.D if args.D is not None else float(B_p[0] - B_m[0])
    try:
        return LocalPWLMap(A_m, A_p, B_m, B_p, C, D, orientation=args.orientation)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_classify(args, argv) -> int:
    if args.map is not None:
        m = _load_map_arg(args.map)
    else:
        if None in (args.A_minus, args.A_plus, args.B_minus, args.B_plus):
            raise InputError("give a map file or all of --A-minus --A-plus --B-minus --B-plus")
        m = _map_from_matrices(args)
    if args.delta_T_range is not None and len(args.delta_T_range) != 2:
        raise InputError("--delta-T-range takes exactly two values LO,HI")
    lo, hi = args.delta_T_range if args.delta_T_range else _default_range(m)
    if not lo < hi:
        raise InputError("--delta-T-range needs LO < HI")
    result = classify(m)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"classification": result.to_dict()}
    try:
        can = canonicalize(m)
        payload["canonical"] = {
            "A_bar_minus": can.A_bar_minus.tolist(), "A_bar_plus": can.A_bar_plus.tolist(),
            "B_tilde": can.B_tilde.tolist(), "B_bar": can.B_bar.tolist(),
            "C_bar": can.C_bar.tolist(), "W": can.W.tolist(), "shift": can.shift,
            "B_tilde_conjugate": can.B_tilde_conjugate.tolist()}
    except (UnobservableBoundaryError, ValueError) as exc:
        payload["canonical"] = {"error": str(exc)}
    diagram = iterate_local_map(m, (lo, hi), args.points, seed=args.seed)
    csv_path = write_local_diagram_csv(diagram, out / "local_diagram.csv")
    (out / "classification.json").write_text(json.dumps(payload, indent=2) + "\n")
    (out / "classification.txt").write_text(result.report() + "\n")
    _write_manifest(out, argv, args, None,
                    [csv_path, out / "classification.json", out / "classification.txt"])
    print(result.report())
    return EXIT_OK


def _default_range(m: LocalPWLMap) -> tuple:
    span = 1e-3 * (m.T_star if m.T_star else 1.0)
    return -span, span


def cmd_plot(args, argv) -> int:
    from .plots import render_svg
    src = Path(args.csv)
    if not src.is_file():
        raise InputError(f"{src}: no such file")
    corners = None
    if args.scenario:
        corners = [ph for ph, _ in discontinuity_phases(load_scenario(args.scenario).geometry)]
    out = Path(args.out)
    try:
        render_svg(src, out, corners, args.title)
    except (ValueError, StopIteration) as exc:
        raise InputError(f"{src}: {exc}") from None
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camimpact", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"camimpact {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one cam speed and write trajectory CSVs")
    s.add_argument("scenario")
    s.add_argument("--omega-rpm", type=_positive(float), required=True)
    s.add_argument("--duration-periods", type=_positive(int), default=50)
    s.add_argument("--start", choices=("cam", "initial"), default="cam",
                   help="start resting on the cam or from the scenario's [initial] state")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scan", help="sweep the cam speed and write bifurcation diagrams")
    s.add_argument("scenario")
    s.add_argument("--omega-min-rpm", type=_positive(float), required=True)
    s.add_argument("--omega-max-rpm", type=_positive(float), required=True)
    s.add_argument("--points", type=_positive(int), default=200)
    s.add_argument("--transient-periods", type=int, default=200)
    s.add_argument("--record-periods", type=_positive(int), default=64)
    s.add_argument("--direction", choices=("up", "down"), default="down")
    s.add_argument("--no-continuation", action="store_true")
    s.add_argument("--workers", type=_positive(int), default=None)
    s.add_argument("--locate-corners", action="store_true",
                   help="refine speeds where a period-1 branch crosses a corner")
    s.add_argument("--svg", action="store_true")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("derive-map", help="derive the local piecewise-linear corner map")
    s.add_argument("scenario")
    s.add_argument("--omega-rpm", type=_positive(float), required=True,
                   help="seed speed near the corner-impact orbit")
    s.add_argument("--window", type=_positive(float), default=0.02,
                   help="relative speed window searched around the seed")
    s.add_argument("--corner-phase", type=float, default=None)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_derive_map)

    s = sub.add_parser("estimate-map", help="least-squares estimate of a derived map")
    s.add_argument("scenario")
    s.add_argument("map")
    s.add_argument("-M", "--M", type=_positive(int), default=60)
    s.add_argument("--scale", type=_positive(float), default=1e-6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=_positive(int), default=1)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_estimate_map)

    s = sub.add_parser("classify", help="canonical form, parity verdict and local diagram")
    s.add_argument("map", nargs="?", default=None)
    s.add_argument("--A-minus", type=_vector, default=None, help="row-major, comma separated")
    s.add_argument("--A-plus", type=_vector, default=None)
    s.add_argument("--B-minus", type=_vector, default=None)
    s.add_argument("--B-plus", type=_vector, default=None)
    s.add_argument("--C", type=_vector, default=None)
    s.add_argument("--D", type=float, default=None)
    s.add_argument("--orientation", type=int, choices=(1, -1), default=1)
    s.add_argument("--delta-T-range", type=_vector, default=None,
                   help="LO,HI in seconds (use --delta-T-range=LO,HI for negative LO)")
    s.add_argument("--points", type=_positive(int), default=41)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("plot", help="render a diagram CSV as SVG")
    s.add_argument("csv")
    s.add_argument("--out", required=True)
    s.add_argument("--scenario", default=None, help="draw corner phases of this scenario")
    s.add_argument("--title", default=None)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv: list | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (ScenarioError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CornerMapError, EventError, UnobservableBoundaryError, np.linalg.LinAlgError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

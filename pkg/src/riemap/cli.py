"""Command line front end.

    riemap check <scenario>            full run; exit 0 pass, 1 fail, 2 usage/IO
    riemap inspect <scenario> --point i
    riemap curve <scenario> --emit DIR
    riemap scenarios

``<scenario>`` is a file path or the name of a built-in scenario.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, rmap
from .errors import RiemapError, ScenarioError
from .isotropy import mean_curvature_jet
from . import scenario as sc_mod

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser():
    p = _Parser(prog="riemap", description="Numerical checks for Riemannian maps between chart manifolds.")
    p.add_argument("--version", action="version", version=f"riemap {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("scenario", help="scenario file or built-in scenario name")
    common.add_argument("--seed", type=int)
    common.add_argument("--step", type=_positive)
    for name in ("isometry", "isotropy", "spread", "condition"):
        common.add_argument(f"--tol-{name}", type=_positive, dest=f"tol_{name}")
    common.add_argument("--report", type=Path, help="write the machine-readable report here")
    common.add_argument("--quiet", action="store_true")

    c = sub.add_parser("check", parents=[common], help="run every check of a scenario")
    c.add_argument("--timing", action="store_true", help="include wall time in the JSON report")
    i = sub.add_parser("inspect", parents=[common], help="dump the jet and splits at one point")
    i.add_argument("--point", type=int, default=0)
    k = sub.add_parser("curve", parents=[common], help="write curve sample tables")
    k.add_argument("--emit", type=Path, required=True)
    sub.add_parser("scenarios", help="list built-in scenarios")
    return p


def _load(args):
    target = args.scenario
    path = Path(target)
    if path.exists():
        sc = sc_mod.load_scenario(path)
    elif target in sc_mod.builtin_names():
        sc = sc_mod.load_builtin(target)
    else:
        raise FileNotFoundError(f"no scenario file or built-in named {target!r}")
    return sc_mod.override(
        sc, seed=args.seed, step=args.step,
        isometry=args.tol_isometry, isotropy=args.tol_isotropy,
        spread=args.tol_spread, condition=args.tol_condition,
    )


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _summary(report: sc_mod.RunReport) -> str:
    lines = [f"scenario {report.scenario['name']}  (riemap {report.tool_version})"]
    for pt in report.points:
        head = f"  point {pt['index']} {pt['point']}"
        if "error" in pt:
            lines.append(f"{head}: error: {pt['error']}")
            continue
        iso = pt["isotropy"]
        lines.append(
            f"{head}: rank {pt['rank']}, isometry residual {_fmt(pt['isometry_residual'])}, "
            f"lambda in [{_fmt(iso['lambda_min'])}, {_fmt(iso['lambda_max'])}], {iso['verdict']}"
        )
        if pt.get("umbilicity"):
            u = pt["umbilicity"]
            lines.append(f"    umbilicity residual {_fmt(u['residual'])}, offdiag {_fmt(u['offdiag'])}")
    if report.theorem31:
        t = report.theorem31
        lines.append(
            f"  circle trials: max image-curvature spread {_fmt(t['max_spread'])} "
            f"({t['trials'] - t['skipped']}/{t['trials']} kept), isotropic {_fmt(t['isotropic'])}"
        )
    if report.transport:
        t = report.transport
        lines.append(
            f"  {t['mode']}: kappa~ spread {_fmt(t['kappa_spread'])}, tau~ spread {_fmt(t['tau_spread'])}, "
            f"eq31 residual {_fmt(t['eq31_residual'])}"
        )
        if t["mode"] == "helix":
            lines.append(
                f"    umbilic {_fmt(t['umbilic_residual'])}, helix condition {_fmt(t['helix_condition_residual'])}, "
                f"helix ODE {_fmt(t['eq41_residual'])}"
            )
    for c in report.checks:
        tag = "ok  " if c["passed"] else ("FAIL" if c["gated"] else "info")
        lines.append(f"  [{tag}] {c['name']} = {_fmt(c['value'])}" + (f" (limit {_fmt(c['limit'])})" if c["limit"] is not None else ""))
    for e in report.errors:
        lines.append(f"  error: {e}")
    if report.wall_time is not None:
        lines.append(f"  wall time {report.wall_time:.2f} s")
    lines.append(f"verdict: {report.verdict}")
    return "\n".join(lines)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_check(args):
    sc = _load(args)
    report = sc_mod.run(sc)
    if args.report:
        _write(args.report, report.to_json(timing=args.timing))
    if not args.quiet:
        print(_summary(report))
    return report.exit_status


def _inspect_dict(sc, index):
    if not 0 <= index < len(sc.points):
        raise IndexError(f"--point {index} out of range (scenario has {len(sc.points)} points)")
    T = sc.map
    j = rmap.jet(T, sc.points[index])
    res, ok = rmap.is_riemannian_at(T, j, sc.tolerances.isometry)
    sigma = [[j.sff(j.horiz_basis[:, a], j.horiz_basis[:, b]) for b in range(j.rank)] for a in range(j.rank)]
    return sc_mod._clean({
        "scenario": sc.name,
        "map": T.name,
        "point": list(sc.points[index]),
        "image": j.q,
        "jacobian": j.J,
        "singular_values": j.singular_values,
        "rank": j.rank,
        "kernel_basis": j.ker_basis.T,
        "horizontal_basis": j.horiz_basis.T,
        "range_basis": j.range_basis.T,
        "normal_basis": j.normal_basis.T,
        "isometry_residual": res,
        "riemannian": ok,
        "sff_on_horizontal_basis": sigma,
        "mean_curvature": mean_curvature_jet(j),
    })


def cmd_inspect(args):
    sc = _load(args)
    info = _inspect_dict(sc, args.point)
    text = json.dumps(info, indent=2) + "\n"
    if args.report:
        _write(args.report, text)
    if not args.quiet:
        with np.printoptions(precision=10, suppress=True):
            for key, value in info.items():
                print(f"{key}: {np.asarray(value) if isinstance(value, list) else value}")
    return EXIT_PASS


def cmd_curve(args):
    sc = _load(args)
    written = sc_mod.emit_tables(sc, args.emit)
    if args.report:
        _write(args.report, json.dumps({"tables": [str(p) for p in written]}, indent=2) + "\n")
    if not args.quiet:
        for p in written:
            print(p)
    return EXIT_PASS


def cmd_scenarios(args):
    for name in sc_mod.builtin_names():
        first = sc_mod.builtin_text(name).splitlines()[0].lstrip("# ").strip()
        print(f"{name:22s} {first}")
    return EXIT_PASS


COMMANDS = {"check": cmd_check, "inspect": cmd_inspect, "curve": cmd_curve, "scenarios": cmd_scenarios}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, FileNotFoundError, IsADirectoryError, PermissionError, IndexError) as exc:
        print(f"riemap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"riemap: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RiemapError as exc:
        print(f"riemap: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

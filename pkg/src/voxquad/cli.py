"""Command line entry points for the convergence study harness.

Exit codes: 0 success, 1 verification failure, 2 bad configuration,
3 solver failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import assembly as _assembly
from . import dual as _dual
from . import figures as _figures
from . import mesh as _mesh
from . import quadrature as _quadrature
from . import solver as _solver
from . import studies as _studies

__all__ = ["main", "build_parser", "GENERIC_RSTAR"]

# Default ball radius for the local-order study. It must sit in generic
# position relative to every ring radius k/rings of the schedule: radii
# within o(h) of a ring produce constant-depth slivers whose per-element
# error stalls instead of decaying at the interface order.
GENERIC_RSTAR = 1.0 / np.sqrt(3.0)


def _add_model_flags(p, rings_default=None, rstar_default=None):
    p.add_argument("--lambda-bar", type=float, default=5.0, help="reaction amplitude (default 5)")
    p.add_argument("--kappa-bar", type=float, default=1.0, help="drift potential strength (default 1)")
    if rstar_default is None:
        p.add_argument("--rstar", type=float, default=float(np.pi / 5),
                       help="radius of the reaction ball (default pi/5)")
    else:
        p.add_argument("--rstar", type=float, default=rstar_default,
                       help="radius of the reaction ball (default 1/sqrt(3); a radius "
                            "close to a ring radius k/rings hides the interface order)")
    p.add_argument("--rings", type=str, default=rings_default,
                   help="comma separated ring counts (default %s)" % (rings_default or "per study"))
    p.add_argument("--method", choices=["lump", "average", "both"], default="both",
                   help="coefficient splitting for the diagonal reaction (default both)")
    p.add_argument("--mc-seed", type=int, default=0, help="Monte Carlo seed (default 0)")
    p.add_argument("--mc-samples-per-h2", type=int, default=1000,
                   help="MC budget scale: samples per voxel = this / h^2 (default 1000)")
    p.add_argument("--tol", type=float, default=1e-10,
                   help="solver and oracle tolerance (default 1e-10)")


def _add_output_flags(p, default_out):
    p.add_argument("--out", type=str, default=default_out,
                   help=f"CSV output path (default {default_out})")
    p.add_argument("--dump-matrix", type=str, default=None,
                   help="write the finest assembled system matrix as 'row col value' lines")
    p.add_argument("--no-figure", action="store_true",
                   help="skip rendering the log-log figure next to the CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxquad",
        description="Convergence studies for diagonal-quadrature reaction-drift-diffusion solves on the unit disk.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="error vs radial reference over a ring schedule")
    _add_model_flags(p, "4,8,16,32,64")
    _add_output_flags(p, "convergence.csv")

    p = sub.add_parser("supercloseness", help="quadrature vs Galerkin reaction distance, psi = 0")
    _add_model_flags(p, "4,8,16,32,64")
    _add_output_flags(p, "supercloseness.csv")

    p = sub.add_parser("local-orders", help="per-element quadrature error orders vs the oracle")
    _add_model_flags(p, "4,8,16,32", rstar_default=GENERIC_RSTAR)
    _add_output_flags(p, "local_orders.csv")

    p = sub.add_parser("verify", help="run the cross-module invariant suite")

    p = sub.add_parser("reference", help="dump the radial reference solution")
    _add_model_flags(p)
    p.add_argument("--out", type=str, default="reference.csv",
                   help="CSV output path (default reference.csv)")
    p.add_argument("--n-elements", type=int, default=10000,
                   help="radial mesh resolution (default 10000)")

    p = sub.add_parser("solve", help="single solve on one disk mesh, nodal values to CSV")
    _add_model_flags(p, "16")
    _add_output_flags(p, "solution.csv")

    return parser


def _parse_rings(text):
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ValueError(f"bad ring list {text!r}") from exc


def _config_from(args, study):
    kwargs = dict(study=study, lambda_bar=args.lambda_bar, kappa_bar=args.kappa_bar,
                  rstar=args.rstar, method=args.method, mc_seed=args.mc_seed,
                  samples_per_h2=args.mc_samples_per_h2, tol=args.tol,
                  out=getattr(args, "out", None),
                  dump_matrix=getattr(args, "dump_matrix", None))
    if args.rings is not None:
        kwargs["rings"] = _parse_rings(args.rings)
    elif study == "local-orders":
        kwargs["rings"] = _studies.LOCAL_ORDER_RINGS
    return _studies.StudyConfig(**kwargs)


def _emit(report, args, title):
    _studies.write_csv(report, args.out)
    print("  ".join(f"{c:>12s}" for c in report.columns))
    for row in report.rows:
        print("  ".join(f"{v:12.6e}" for v in row))
    for col in report.columns[1:]:
        print(f"rate[{col}]: all-rows {report.rates_all[col]:.3f}, "
              f"finest-half {report.rates_finest_half[col]:.3f}")
    for key, val in report.extra.items():
        print(f"{key}: {val}")
    print(f"wall time: {report.wall_time:.1f} s")
    print(f"wrote {args.out}")
    if not getattr(args, "no_figure", True):
        png = _figures.render_study_figure(report, _figures.figure_path_for(args.out), title)
        print(f"wrote {png}")


def _cmd_convergence(args):
    config = _config_from(args, "convergence")
    report = _studies.run_convergence(config)
    _emit(report, args, f"kappa={config.kappa_bar:g}, lambda={config.lambda_bar:g}")
    return 0


def _cmd_supercloseness(args):
    config = _config_from(args, "supercloseness")
    report = _studies.run_supercloseness(config)
    _emit(report, args, "quadrature vs Galerkin reaction")
    return 0


def _cmd_local_orders(args):
    config = _config_from(args, "local-orders")
    report = _studies.run_local_orders(config)
    _emit(report, args, "local quadrature error orders")
    return 0


def _cmd_verify(args):
    status, checks = _studies.run_verify()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return status


def _cmd_reference(args):
    config = _studies.StudyConfig(study="reference", lambda_bar=args.lambda_bar,
                                  kappa_bar=args.kappa_bar, rstar=args.rstar)
    from . import radial as _radial
    sol = _radial.solve_radial(2, config.lambda_bar, config.kappa_bar, config.rstar,
                               n_elements=args.n_elements)
    rows = np.stack([sol.mesh.nodes[:, 0], sol.values], axis=1)
    report = _studies.StudyReport(("r", "u"), rows, {}, {}, 0.0)
    _studies.write_csv(report, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_solve(args):
    config = _config_from(args, "solve")
    rings = config.rings[-1]
    mesh = _mesh.generate_disk_mesh(rings)
    dualm = _dual.barycentric_dual(mesh)
    psi = config.kappa_bar * (mesh.nodes**2).sum(axis=1)
    A = _assembly.assemble_eafe(mesh, psi)
    mode = "lump" if config.method in ("lump", "both") else "average"
    split = _quadrature.CoefficientSplit(mode, _studies.model_profile(config.kappa_bar))
    w = _quadrature.reaction_weights(dualm, _studies.model_region(config.rstar), split,
                                     config.lambda_bar, samples_per_h2=config.samples_per_h2,
                                     seed=config.mc_seed)
    R = _assembly.assemble_reaction_diagonal(w)
    system = _assembly.LinearSystem((A + R).tocsr(), _assembly.assemble_load(dualm),
                                    np.arange(mesh.n_nodes))
    if config.dump_matrix:
        _assembly.dump_matrix(system.matrix, config.dump_matrix)
        print(f"wrote {config.dump_matrix}")
    u, rep = _solver.solve(system, tol=config.tol)
    rows = np.column_stack([mesh.nodes, u])
    _studies.write_csv(_studies.StudyReport(("x", "y", "u"), rows, {}, {}, 0.0), args.out)
    print(f"rings {rings}: {mesh.n_nodes} nodes, method {rep.method}, "
          f"iterations {rep.iterations}, residual {rep.residual:.2e}")
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "convergence": _cmd_convergence,
    "supercloseness": _cmd_supercloseness,
    "local-orders": _cmd_local_orders,
    "verify": _cmd_verify,
    "reference": _cmd_reference,
    "solve": _cmd_solve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

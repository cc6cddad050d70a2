"""Command line interface: parse a run configuration, drive the adaptive
loop, and write trace/mesh/field artifacts.

Exit codes: 0 when the target was reached (or every indicator vanished),
2 when the iteration budget truncated the run, 1 on any error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .afem import AfemError, afem_run
from .config import ConfigError, RunConfig, parse_config
from .estimator import assemble_indicators
from .output import vertex_fields, write_csv, write_vtk


def _cap_threads() -> None:
    cap = os.environ.get("RHEO_AFEM_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def run(config: RunConfig, quiet: bool = False) -> int:
    """Execute one adaptive run and write its artifacts."""
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    exps = config.afem.exponents()
    written = []

    def emit(k, state, field):
        mesh = state.space.mesh
        write_vtk(mesh, os.path.join(outdir, f"mesh_{k:04d}.vtk"),
                  title=f"mesh at iteration {k}")
        write_vtk(mesh, os.path.join(outdir, f"fields_{k:04d}.vtk"),
                  point_data=vertex_fields(state),
                  cell_data={"indicator_pde": field.pde,
                             "indicator_ic": field.ic,
                             "oscillation": field.osc},
                  title=f"fields at iteration {k}")
        written.append(k)
        if not quiet:
            print(f"k={k:3d} n={state.n:3d} elements={mesh.num_triangles:6d} "
                  f"E_total={field.E_total:.6e} E_A={field.E_A:.6e}")

    trace, state = afem_run(config.afem, config.mesh, callback=emit)
    trace.validate()
    write_csv(trace, os.path.join(outdir, "trace.csv"))
    last = trace.rows[-1]
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write(f"rheoafem {__version__}\n")
        fh.write(f"geometry: {config.geometry}\n")
        fh.write(f"pair: {config.afem.pair}\n")
        fh.write(f"graph: {config.afem.graph.kind} / {config.afem.scheme}\n")
        fh.write(f"forcing: {config.afem.forcing.name}\n")
        fh.write(f"r: {config.afem.r!r}\n")
        fh.write(f"seed: {config.seed}\n")
        fh.write(f"iterations: {len(trace.rows)}\n")
        fh.write(f"final elements: {last.elements}\n")
        fh.write(f"final n: {last.n}\n")
        fh.write(f"final E_total: {last.E_total!r}\n")
        fh.write(f"final E_A: {last.E_A!r}\n")
        fh.write(f"truncated: {trace.truncated}\n")
    if not quiet:
        print(f"wrote {os.path.join(outdir, 'trace.csv')} "
              f"({len(trace.rows)} iterations)")
    return 2 if trace.truncated else 0


def main(argv=None) -> int:
    _cap_threads()
    parser = argparse.ArgumentParser(
        prog="rheoafem",
        description="Adaptive mixed finite elements for implicitly "
                    "constituted power-law-like flows.")
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="run the adaptive loop on a config")
    solve.add_argument("config", help="path to the run configuration")
    solve.add_argument("--output", help="override the output directory")
    solve.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="SECTION.KEY=VALUE",
                       help="override a config entry")
    solve.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        text = open(args.config).read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        config = parse_config(text, overrides=args.overrides)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return 1
    if args.output:
        config.output_dir = args.output
    try:
        return run(config, quiet=args.quiet)
    except (AfemError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point.

Every verb takes a manifest path followed by ``key=value`` overrides, e.g.::

    qbcharge sweep grid.ini g=4e-3,8e-3 protocol.n_collisions=2000

``QBCHARGE_OUTPUT_ROOT`` replaces the manifest's output directory and
``QBCHARGE_THREADS`` its worker count.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import ManifestError
from .manifest import parse_manifest, serialize_manifest
from .sweep import (INDEX_NAME, convergence_report, emit_plot_scripts, fit_index,
                    run_sweep)
from .transmon import solve_spectrum, write_dispersion_csv, write_spectrum_csv

log = logging.getLogger("qbcharge")


def _cmd_spectrum(m, args) -> int:
    out = m.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    spectrum = solve_spectrum(m.transmon)
    write_spectrum_csv(spectrum, out / "spectrum.csv")
    write_dispersion_csv(m.transmon, out / "dispersion.csv")
    print(f"E_J/E_C={m.transmon.ej_over_ec:g}  bound levels={spectrum.bound_count}  "
          f"E_f={spectrum.e_f:.6g} E_C  gap={spectrum.gap(0):.6g} E_C")
    print(f"wrote {out / 'spectrum.csv'} and {out / 'dispersion.csv'}")
    return 0


def _cmd_sweep(m, args) -> int:
    print(f"{m.name}: {m.product_size} grid point(s)")
    summary = run_sweep(m)
    print(f"completed {summary['completed']}/{summary['product_size']} in "
          f"{summary['wall_time_s']:.2f} s, {summary['validity_checks']} state checks; "
          f"output in {summary['output_dir']}")
    for f in summary["failed"]:
        print(f"FAILED {f['file']}: {f['error']}", file=sys.stderr)
    return 1 if summary["failed"] else 0


def _cmd_run(m, args) -> int:
    if m.product_size != 1:
        print(f"run expects a single grid point, manifest has {m.product_size}; use sweep",
              file=sys.stderr)
        return 2
    return _cmd_sweep(m, args)


def _index_path(m, args) -> Path:
    return Path(args.index) if args.index else m.resolved_output() / INDEX_NAME


def _cmd_fit(m, args) -> int:
    path = _index_path(m, args)
    if not path.is_file():
        print(f"no index at {path}; run the sweep first", file=sys.stderr)
        return 2
    fits = fit_index(path)
    n_osc, n_sat = len(fits["damped_cosine"]), len(fits["saturation"])
    print(f"{n_osc} oscillating and {n_sat} saturating trajectories fitted; "
          f"{len(fits['errors'])} errors; wrote {path.parent / 'fits.json'}")
    return 0


def _cmd_converge(m, args) -> int:
    probe = m.configs()[0]
    report = convergence_report(m.transmon, probe)
    out = m.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    (out / "convergence.json").write_text(json.dumps(report, indent=2) + "\n")
    print("charge_cutoff battery_levels max_deviation bound_level_shift")
    for r in report["rows"]:
        flag = "  FLAGGED" if r["flagged"] else ""
        print(f"{r['charge_cutoff']:13d} {r['battery_levels']:14d} {r['max_deviation']:13.3e} "
              f"{r['bound_level_shift']:17.3e}{flag}")
    return 0


def _cmd_plots(m, args) -> int:
    path = _index_path(m, args)
    if not path.is_file():
        print(f"no index at {path}; run the sweep first", file=sys.stderr)
        return 2
    scripts = emit_plot_scripts(path)
    print(f"wrote {len(scripts)} plot script(s)")
    return 0


COMMANDS = {"spectrum": _cmd_spectrum, "run": _cmd_run, "sweep": _cmd_sweep,
            "fit": _cmd_fit, "converge": _cmd_converge, "plots": _cmd_plots}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbcharge", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("manifest")
        p.add_argument("overrides", nargs="*", metavar="key=value")
        p.add_argument("--show", action="store_true", help="print the resolved manifest first")
        if name in ("fit", "plots"):
            p.add_argument("--index", help="index file (default: <output>/index.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        m = parse_manifest(args.manifest, args.overrides)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.show:
        print(serialize_manifest(m))
    return COMMANDS[args.command](m, args)


if __name__ == "__main__":
    sys.exit(main())

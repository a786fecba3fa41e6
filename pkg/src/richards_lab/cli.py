"""Command-line entry point.

    richards-lab run --config cfg.json --out DIR
    richards-lab example1 --psi-vad -3 --out DIR
    richards-lab example2 --soil silt --out DIR
    richards-lab theory --out DIR

Exit codes: 0 success, 2 configuration error, 3 some scheme run failed
(reports are still written).
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from . import bench, theory
from .config import ConfigError, RunConfig
from .io import atomic_write_text, write_csv

log = logging.getLogger("richards_lab")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def _write_outputs(report: bench.BenchmarkReport, out: Path, basename: str, vtk: bool) -> None:
    bench.write_report(report, out, basename)
    if vtk:
        for (scheme, h), (mesh, final) in sorted(report.fields.items()):
            row = report.row(scheme, h)
            if row.converged:
                bench.write_field_vtk(mesh, final, out / "fields" / f"{_slug(scheme)}_h{1 / h:.0f}.vtk")


def _finish(report: bench.BenchmarkReport) -> int:
    failed = [r for r in report.rows if not r.converged]
    for r in failed:
        log.warning("%s (h=%.4g) failed: %s", r.scheme, r.h, r.failure_reason)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_run(args) -> int:
    cfg = RunConfig.load(args.config)
    out = Path(args.out)
    outputs = cfg.data["output"]
    report = bench.run_definition(cfg.definition(), estimate_condition=outputs["condest"], workers=1)
    atomic_write_text(out / "config.normalized.json", cfg.dumps() + "\n")
    _write_outputs(report, out, outputs["basename"], "vtk" in outputs["formats"])
    return _finish(report)


def cmd_example1(args) -> int:
    meshes = tuple(args.meshes) if args.meshes else bench.EX1_MESHES
    report = bench.example1(args.psi_vad, meshes, estimate_condition=not args.no_condest)
    _write_outputs(report, Path(args.out), f"example1_psivad{args.psi_vad:g}", args.vtk)
    return _finish(report)


def cmd_example2(args) -> int:
    report = bench.example2(args.soil, estimate_condition=not args.no_condest)
    _write_outputs(report, Path(args.out), f"example2_{args.soil}", True)
    return _finish(report)


def cmd_theory(args) -> int:
    rows = theory.contraction_sweep(bench.EX1_SOIL, meshes=tuple(args.meshes))
    write_csv(Path(args.out) / "theory.csv", theory.THEORY_COLUMNS,
              [{k: r[k] for k in theory.THEORY_COLUMNS} for r in rows])
    bad = [r for r in rows if r["max_measured_ratio"] > r["theoretical_rate"] + 1e-10]
    for r in bad:
        log.warning("ratio %.4f exceeds bound %.4f (L=%g, tau=%g, h=%g)",
                    r["max_measured_ratio"], r["theoretical_rate"], r["L"], r["tau"], r["h"])
    return EXIT_FAILED if bad else EXIT_OK


def _psi_vad(text: str) -> float:
    v = float(text)
    if v not in (-2.0, -3.0):
        raise argparse.ArgumentTypeError("psi-vad must be -2 or -3")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="richards-lab",
        description="Linearization schemes for Richards' equation: benchmark runs and L-scheme theory checks.",
        epilog="Exit codes: 0 success, 2 configuration error, 3 some run failed (reports are still written).",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a JSON-configured problem")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("example1", help="vadose-zone injection/extraction benchmark")
    p.add_argument("--psi-vad", type=_psi_vad, required=True, metavar="{-2,-3}")
    p.add_argument("--out", required=True)
    p.add_argument("--meshes", type=int, nargs="+", help="inverse mesh sizes (default 10..60)")
    p.add_argument("--vtk", action="store_true", help="also write final fields")
    p.add_argument("--no-condest", action="store_true")
    p.set_defaults(func=cmd_example1)

    p = sub.add_parser("example2", help="drainage trench recharge benchmark")
    p.add_argument("--soil", choices=["silt", "clay"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-condest", action="store_true")
    p.set_defaults(func=cmd_example2)

    p = sub.add_parser("theory", help="L-scheme contraction sweep")
    p.add_argument("--out", required=True)
    p.add_argument("--meshes", type=int, nargs="+", default=[10, 20])
    p.set_defaults(func=cmd_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line fronts for the payload tools.

Convention: positional input path plus --key=value flags; exit 0 on
success, 1 on a tool error (diagnostic on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, formats, md, raster
from .trajectory import (
    StressRecord,
    ToolkitError,
    Trajectory,
    read_stress_csv,
    write_stress_csv,
)


def _fail(exc: Exception) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return 1


def _read_traj(path: str, fmt: str | None = None) -> Trajectory:
    src = fmt or formats.sniff_format(path)
    return formats.read_dump(path) if src == "dump" else formats.read_xyz(path)


def ljmd_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sciflow-ljmd",
        description="Toy Lennard-Jones MD with an optional tensile strain ramp (reduced units).",
    )
    parser.add_argument("config", nargs="?", help="JSON config file; flags override its keys")
    for name, typ in (
        ("nx", int), ("ny", int), ("nz", int), ("spacing", float), ("dt", float),
        ("steps", int), ("sample-every", int), ("temperature", float),
        ("thermostat-tau", float), ("target-temperature", float),
        ("strain-rate", float), ("seed", int), ("cutoff", float),
    ):
        parser.add_argument(f"--{name}", type=typ, default=None)
    parser.add_argument("--thermostat", action="store_true", default=None)
    parser.add_argument("--out-traj", default="traj")
    parser.add_argument("--out-stress", default="stressrec")
    args = parser.parse_args(argv)

    doc = {}
    try:
        if args.config:
            doc = json.loads(open(args.config).read())
        for key in md.LJConfig().__dataclass_fields__:
            flag = getattr(args, key.replace("-", "_"), None)
            if flag is not None:
                doc[key] = flag
        config = md.config_from_dict(doc)
        traj, records = md.ljmd_run(config)
        formats.write_dump(traj, args.out_traj)
        write_stress_csv(records, args.out_stress)
    except (ToolkitError, ValueError, OSError) as exc:
        return _fail(exc)
    return 0


def convert_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sciflow-convert", description="Convert dump <-> xyz.")
    parser.add_argument("input")
    parser.add_argument("--to", required=True, choices=("dump", "xyz"))
    parser.add_argument("--from", dest="from_format", choices=("dump", "xyz"), default=None)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        formats.convert_trajectory(args.input, args.out, to=args.to, from_format=args.from_format)
    except (ToolkitError, ValueError, OSError) as exc:
        return _fail(exc)
    return 0


def rdf_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sciflow-rdf", description="Radial distribution function g(r).")
    parser.add_argument("input")
    parser.add_argument("--rmax", type=float, required=True)
    parser.add_argument("--bins", type=int, default=100)
    parser.add_argument("--format", choices=("dump", "xyz"), default=None)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        traj = _read_traj(args.input, args.format)
        spectrum = analysis.compute_rdf(traj, r_max=args.rmax, bins=args.bins)
        analysis.write_spectrum_csv(spectrum, args.out, "r", "g")
    except (ToolkitError, ValueError, OSError) as exc:
        return _fail(exc)
    return 0


def debye_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sciflow-debye",
        description="Debye-equation diffraction intensity of one frame (cluster mode).",
    )
    parser.add_argument("input")
    parser.add_argument("--frame", type=int, default=-1, help="frame index, default last")
    parser.add_argument("--qmin", type=float, default=1.0)
    parser.add_argument("--qmax", type=float, default=16.0)
    parser.add_argument("--qbins", type=int, default=150)
    parser.add_argument("--format", choices=("dump", "xyz"), default=None)
    parser.add_argument("--form-factor", action="append", default=[],
                        help="species=value, repeatable (default 1.0)")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        traj = _read_traj(args.input, args.format)
        frame = traj.frames[args.frame]
        ff = {}
        for spec in args.form_factor:
            name, _, value = spec.partition("=")
            ff[name] = float(value)
        q = np.linspace(args.qmin, args.qmax, args.qbins)
        spectrum = analysis.debye_intensity(frame, q, ff)
        analysis.write_spectrum_csv(spectrum, args.out, "q", "intensity")
    except (ToolkitError, ValueError, OSError, IndexError) as exc:
        return _fail(exc)
    return 0


def stress_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sciflow-stress",
        description="Stress-strain table and drop-event summary from a stress record CSV.",
    )
    parser.add_argument("input")
    parser.add_argument("--drop-fraction", type=float, default=0.3)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        records = read_stress_csv(args.input)
        table, summary = analysis.extract_stress_strain(records, drop_fraction=args.drop_fraction)
        with open(args.out, "w") as fh:
            fh.write("strain,pxx\n")
            for strain, pxx in table:
                fh.write(f"{strain:.9g},{pxx:.9g}\n")
        print(json.dumps(summary, sort_keys=True))
    except (ToolkitError, ValueError, OSError) as exc:
        return _fail(exc)
    return 0


def coord_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sciflow-coord",
        description="Coordination-number histogram per frame.",
    )
    parser.add_argument("input")
    parser.add_argument("--rc", type=float, required=True)
    parser.add_argument("--format", choices=("dump", "xyz"), default=None)
    parser.add_argument("--cluster", action="store_true", help="no periodic wrap")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        traj = _read_traj(args.input, args.format)
        series = analysis.coordination_series(traj, args.rc, periodic=not args.cluster)
        with open(args.out, "w") as fh:
            fh.write("frame,coordination,count\n")
            for k, hist in enumerate(series):
                for coordination in sorted(hist.counts):
                    fh.write(f"{k},{coordination},{hist.counts[coordination]}\n")
    except (ToolkitError, ValueError, OSError) as exc:
        return _fail(exc)
    return 0


def project_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sciflow-project",
        description="Project frames to coordination-colored PGM rasters plus an index file.",
    )
    parser.add_argument("input")
    parser.add_argument("--axis", choices=("x", "y", "z"), default="z")
    parser.add_argument("--size", type=int, default=200)
    parser.add_argument("--rc", type=float, default=1.3)
    parser.add_argument("--bulk", type=int, default=12)
    parser.add_argument("--frame", type=int, default=None, help="single frame; default all")
    parser.add_argument("--format", choices=("dump", "xyz"), default=None)
    parser.add_argument("--out", required=True,
                        help="output PGM for --frame, else prefix for <out>_<k>.pgm + <out>.index.csv")
    args = parser.parse_args(argv)
    try:
        traj = _read_traj(args.input, args.format)
        if args.frame is not None:
            img = raster.project_snapshot(traj.frames[args.frame], axis=args.axis,
                                          size=args.size, r_c=args.rc,
                                          bulk_coordination=args.bulk)
            raster.write_pgm(img, args.out)
        else:
            index_lines = ["frame,step,file"]
            for k, frame in enumerate(traj.frames):
                img = raster.project_snapshot(frame, axis=args.axis, size=args.size,
                                              r_c=args.rc, bulk_coordination=args.bulk)
                name = f"{args.out}_{k}.pgm"
                raster.write_pgm(img, name)
                index_lines.append(f"{k},{frame.step},{name}")
            with open(f"{args.out}.index.csv", "w") as fh:
                fh.write("\n".join(index_lines) + "\n")
    except (ToolkitError, ValueError, OSError, IndexError) as exc:
        return _fail(exc)
    return 0


_MAINS = {
    "ljmd": ljmd_main, "convert": convert_main, "rdf": rdf_main, "debye": debye_main,
    "stress": stress_main, "coord": coord_main, "project": project_main,
}


def main(argv=None) -> int:
    """Dispatcher for ``python -m sciflow.toolkit.cli <tool> ...``."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in _MAINS:
        print(f"usage: sciflow-toolkit {{{','.join(sorted(_MAINS))}}} ...", file=sys.stderr)
        return 2
    return _MAINS[argv[0]](argv[1:])


if __name__ == "__main__":
    sys.exit(main())

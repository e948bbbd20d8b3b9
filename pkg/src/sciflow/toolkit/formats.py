"""Trajectory file formats: a dump subset and xyz, with lossless conversion.

dump blocks:  ITEM: TIMESTEP / ITEM: NUMBER OF ATOMS /
ITEM: BOX BOUNDS pp pp pp / ITEM: ATOMS id type x y z
xyz frames:   N, then ``step=<n> box=<lx> <ly> <lz>``, then ``species x y z``.

Coordinates print at 9 significant digits in both formats, so one full
round trip is idempotent bytewise afterward. Species map to dump type ints
as ``T<k>``; unknown species tokens get types by first appearance.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .trajectory import Frame, InconsistentAtomCount, ParseError, Trajectory

_FMT = "%.9g"


def _species_to_type(species: list[str]) -> list[int]:
    mapping: dict[str, int] = {}
    types = []
    for s in species:
        m = re.fullmatch(r"T(\d+)", s)
        if m:
            types.append(int(m.group(1)))
            continue
        if s not in mapping:
            mapping[s] = len(mapping) + 1
        types.append(mapping[s])
    return types


def write_dump(traj: Trajectory, path) -> None:
    lines: list[str] = []
    for frame in traj.frames:
        types = _species_to_type(frame.species)
        lines.append("ITEM: TIMESTEP")
        lines.append(str(frame.step))
        lines.append("ITEM: NUMBER OF ATOMS")
        lines.append(str(frame.natoms))
        lines.append("ITEM: BOX BOUNDS pp pp pp")
        for axis in range(3):
            lines.append(f"0 {_FMT % frame.box[axis]}")
        lines.append("ITEM: ATOMS id type x y z")
        for i, (t, xyz) in enumerate(zip(types, frame.coords), start=1):
            lines.append(f"{i} {t} {_FMT % xyz[0]} {_FMT % xyz[1]} {_FMT % xyz[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dump(path) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    frames: list[Frame] = []
    i = 0

    def expect(tag: str) -> None:
        nonlocal i
        if i >= len(lines) or not lines[i].startswith(tag):
            raise ParseError(f"expected {tag!r}", line=i + 1)
        i += 1

    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        expect("ITEM: TIMESTEP")
        try:
            step = int(lines[i])
        except (ValueError, IndexError):
            raise ParseError("unreadable timestep", line=i + 1)
        i += 1
        expect("ITEM: NUMBER OF ATOMS")
        try:
            natoms = int(lines[i])
        except (ValueError, IndexError):
            raise ParseError("unreadable atom count", line=i + 1)
        i += 1
        expect("ITEM: BOX BOUNDS")
        box = []
        for _ in range(3):
            try:
                lo, hi = lines[i].split()
                box.append(float(hi) - float(lo))
            except (ValueError, IndexError):
                raise ParseError("unreadable box bounds", line=i + 1)
            i += 1
        expect("ITEM: ATOMS")
        species, coords = [], []
        for _ in range(natoms):
            if i >= len(lines) or lines[i].startswith("ITEM:"):
                raise InconsistentAtomCount(
                    f"frame at step {step} declares {natoms} atoms but has {len(coords)}")
            parts = lines[i].split()
            if len(parts) != 5:
                raise ParseError(f"expected 'id type x y z', got {len(parts)} fields", line=i + 1)
            try:
                species.append(f"T{int(parts[1])}")
                coords.append([float(parts[2]), float(parts[3]), float(parts[4])])
            except ValueError:
                raise ParseError("unreadable atom row", line=i + 1)
            i += 1
        if i < len(lines) and lines[i].strip() and not lines[i].startswith("ITEM:"):
            raise InconsistentAtomCount(f"frame at step {step} has more rows than the declared {natoms}")
        frames.append(Frame(step=step, box=np.array(box), species=species, coords=np.array(coords).reshape(natoms, 3)))
    if not frames:
        raise ParseError("no frames found", line=1)
    return Trajectory(frames=frames)


def write_xyz(traj: Trajectory, path) -> None:
    lines: list[str] = []
    for frame in traj.frames:
        lines.append(str(frame.natoms))
        lines.append(
            f"step={frame.step} box={_FMT % frame.box[0]} {_FMT % frame.box[1]} {_FMT % frame.box[2]}")
        for s, xyz in zip(frame.species, frame.coords):
            lines.append(f"{s} {_FMT % xyz[0]} {_FMT % xyz[1]} {_FMT % xyz[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


_XYZ_COMMENT = re.compile(r"step=(\d+)\s+box=(\S+)\s+(\S+)\s+(\S+)")


def read_xyz(path) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    frames: list[Frame] = []
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        try:
            natoms = int(lines[i])
        except ValueError:
            raise ParseError("expected atom count", line=i + 1)
        i += 1
        if i >= len(lines):
            raise ParseError("missing comment line", line=i + 1)
        m = _XYZ_COMMENT.search(lines[i])
        if not m:
            raise ParseError("comment line must carry step= and box=", line=i + 1)
        step = int(m.group(1))
        box = np.array([float(m.group(k)) for k in (2, 3, 4)])
        i += 1
        species, coords = [], []
        for _ in range(natoms):
            if i >= len(lines) or not lines[i].strip():
                raise InconsistentAtomCount(
                    f"frame at step {step} declares {natoms} atoms but has {len(coords)}")
            parts = lines[i].split()
            if len(parts) != 4:
                raise ParseError(f"expected 'species x y z', got {len(parts)} fields", line=i + 1)
            try:
                coords.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise ParseError("unreadable atom row", line=i + 1)
            species.append(parts[0])
            i += 1
        frames.append(Frame(step=step, box=box, species=species, coords=np.array(coords).reshape(natoms, 3)))
    if not frames:
        raise ParseError("no frames found", line=1)
    return Trajectory(frames=frames)


def sniff_format(path) -> str:
    with open(path) as fh:
        first = fh.readline().strip()
    return "dump" if first.startswith("ITEM:") else "xyz"


def convert_trajectory(input_path, output_path, to: str, from_format: str | None = None) -> None:
    """Convert between dump and xyz; shared fields survive losslessly."""
    src = from_format or sniff_format(input_path)
    traj = read_dump(input_path) if src == "dump" else read_xyz(input_path)
    if to == "xyz":
        write_xyz(traj, output_path)
    elif to == "dump":
        write_dump(traj, output_path)
    else:
        raise ValueError(f"unknown target format {to!r}")

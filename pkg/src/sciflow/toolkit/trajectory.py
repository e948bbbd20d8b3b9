"""Trajectory payload types shared by the MD engine and the analysis tools."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ToolkitError(Exception):
    """Raised by payload tools; the CLI maps it to exit code 1."""


class BlowUp(ToolkitError):
    """Integration produced a non-finite coordinate or energy."""


class InvalidConfig(ToolkitError):
    pass


class ParseError(ToolkitError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InconsistentAtomCount(ToolkitError):
    pass


@dataclass
class Frame:
    """One snapshot: orthorhombic box lengths and atom positions."""

    step: int
    box: np.ndarray  # (3,) lengths
    species: list[str]
    coords: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float)
        self.coords = np.asarray(self.coords, dtype=float)
        if self.box.shape != (3,) or np.any(self.box <= 0):
            raise InvalidConfig("box must be three positive lengths")
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise InvalidConfig("coords must be (N, 3)")
        if len(self.species) != len(self.coords):
            raise InconsistentAtomCount(
                f"{len(self.species)} species labels for {len(self.coords)} atoms")
        if not np.all(np.isfinite(self.coords)):
            raise BlowUp("non-finite coordinate in frame")

    @property
    def natoms(self) -> int:
        return len(self.coords)


@dataclass
class Trajectory:
    frames: list[Frame] = field(default_factory=list)

    def __post_init__(self):
        counts = {f.natoms for f in self.frames}
        if len(counts) > 1:
            raise InconsistentAtomCount(f"atom count varies across frames: {sorted(counts)}")

    def __len__(self):
        return len(self.frames)

    @property
    def natoms(self) -> int:
        return self.frames[0].natoms if self.frames else 0


@dataclass
class StressRecord:
    """One sampling interval of the tension run.

    ``pxx`` is the xx component of the internal stress with tension counted
    positive (the negative of the virial pressure component).
    """

    step: int
    strain: float
    pxx: float
    energy: float
    temperature: float


STRESS_HEADER = "step,strain,pxx,energy,temperature"


def write_stress_csv(records: Sequence[StressRecord], path) -> None:
    lines = [STRESS_HEADER]
    for r in records:
        lines.append(f"{r.step},{r.strain:.9g},{r.pxx:.9g},{r.energy:.9g},{r.temperature:.9g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_stress_csv(path) -> list[StressRecord]:
    records = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != STRESS_HEADER:
        raise ParseError("missing stress CSV header", line=1)
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 columns, got {len(parts)}", line=i)
        records.append(StressRecord(int(parts[0]), *(float(x) for x in parts[1:])))
    return records

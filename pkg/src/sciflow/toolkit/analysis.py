"""Post-processing analyses: RDF, Debye diffraction, stress-strain, coordination."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .trajectory import Frame, StressRecord, ToolkitError, Trajectory


class RMaxTooLarge(ToolkitError):
    pass


class EmptyTrajectory(ToolkitError):
    pass


class EmptyFrame(ToolkitError):
    pass


class NonpositiveQ(ToolkitError):
    pass


class TooFewRecords(ToolkitError):
    pass


class InvalidCutoff(ToolkitError):
    pass


@dataclass
class Spectrum:
    """A curve on a strictly increasing abscissa grid."""

    grid: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("spectrum grid must be strictly increasing")
        if self.grid.shape != self.values.shape:
            raise ValueError("grid/value shape mismatch")


def _pair_distances(coords: np.ndarray, box: Optional[np.ndarray]) -> np.ndarray:
    """Unique pair distances, minimum-image when a box is given."""
    n = len(coords)
    iu = np.triu_indices(n, k=1)
    dr = coords[iu[0]] - coords[iu[1]]
    if box is not None:
        dr -= box * np.round(dr / box)
    return np.sqrt((dr * dr).sum(axis=1))


def compute_rdf(traj: Trajectory, r_max: float, bins: int) -> Spectrum:
    """Pair correlation g(r), averaged uniformly over frames.

    Normalization uses the ideal-gas shell estimate rho * 4 pi r_mid^2 dr
    with rho = N/V, so summing g(r) * 4 pi r_mid^2 rho dr over all bins
    recovers exactly N-1 when r_max reaches every pair.
    """
    if not traj.frames:
        raise EmptyTrajectory("trajectory has no frames")
    if bins < 1:
        raise ValueError("bins must be positive")
    for frame in traj.frames:
        if r_max > float(frame.box.min()) / 2.0 + 1e-12:
            raise RMaxTooLarge(
                f"r_max {r_max} exceeds half the minimum box length {frame.box.min() / 2.0}")
    edges = np.linspace(0.0, r_max, bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    dr_bin = edges[1] - edges[0]
    g = np.zeros(bins)
    for frame in traj.frames:
        n = frame.natoms
        if n < 2:
            raise EmptyTrajectory("need at least two atoms for an RDF")
        dists = _pair_distances(frame.coords, frame.box)
        counts, _ = np.histogram(dists, bins=edges)
        volume = float(frame.box.prod())
        rho = n / volume
        ideal = rho * 4.0 * np.pi * mids ** 2 * dr_bin  # expected neighbors per atom per bin
        g += (2.0 * counts / n) / ideal
    g /= len(traj.frames)
    return Spectrum(grid=mids, values=g, meta={
        "kind": "rdf", "r_max": r_max, "bins": bins,
        "frames": len(traj.frames), "natoms": traj.natoms,
    })


def rdf_coordination(spectrum: Spectrum, rho: float, r_lo: float, r_hi: float) -> float:
    """Integrate g(r) * 4 pi r^2 rho dr over [r_lo, r_hi) on the binned grid."""
    mids = spectrum.grid
    dr_bin = mids[1] - mids[0] if len(mids) > 1 else mids[0] * 2
    mask = (mids >= r_lo) & (mids < r_hi)
    return float((spectrum.values[mask] * 4.0 * np.pi * mids[mask] ** 2 * rho * dr_bin).sum())


def debye_intensity(frame: Frame, q_grid: Sequence[float],
                    form_factors: Optional[Mapping[str, float]] = None) -> Spectrum:
    """Orientation-averaged diffraction from pairwise distances (cluster mode).

    I(q) = sum_ij f_i f_j sin(q r_ij) / (q r_ij); the i == j terms contribute
    f_i^2. The frame is treated as a finite non-periodic cluster.
    """
    if frame.natoms == 0:
        raise EmptyFrame("frame has no atoms")
    q = np.asarray(q_grid, dtype=float)
    if np.any(q <= 0):
        raise NonpositiveQ("q grid must be strictly positive")
    ff = form_factors or {}
    f = np.array([float(ff.get(s, 1.0)) for s in frame.species])
    intensity = np.full(len(q), float((f * f).sum()))
    n = frame.natoms
    if n > 1:
        iu = np.triu_indices(n, k=1)
        dr = frame.coords[iu[0]] - frame.coords[iu[1]]
        rij = np.sqrt((dr * dr).sum(axis=1))
        fifj = f[iu[0]] * f[iu[1]]
        # sinc guard: np.sinc(x/pi) == sin(x)/x with the x -> 0 limit built in
        for k, qk in enumerate(q):
            intensity[k] += 2.0 * float((fifj * np.sinc(qk * rij / np.pi)).sum())
    return Spectrum(grid=q, values=intensity, meta={"kind": "debye", "natoms": n})


def extract_stress_strain(records: Sequence[StressRecord],
                          drop_fraction: float = 0.3) -> tuple[list[tuple[float, float]], dict]:
    """Tabulate (strain, pxx) and detect post-peak stress drops.

    A drop event fires when pxx falls below (1 - drop_fraction) of the
    running peak; the detector re-arms once pxx climbs back above that
    threshold, so each excursion counts once.
    """
    if len(records) < 2:
        raise TooFewRecords(f"need at least 2 records, got {len(records)}")
    table = [(r.strain, r.pxx) for r in records]
    peak = records[0].pxx
    peak_strain = records[0].strain
    drops = 0
    armed = True
    for r in records[1:]:
        if r.pxx > peak:
            peak = r.pxx
            peak_strain = r.strain
            armed = True
            continue
        threshold = peak * (1.0 - drop_fraction) if peak > 0 else peak
        if armed and r.pxx < threshold:
            drops += 1
            armed = False
        elif not armed and r.pxx >= threshold:
            armed = True
    summary = {"peak_stress": peak, "strain_at_peak": peak_strain, "drops": drops}
    return table, summary


@dataclass
class CoordinationHistogram:
    cutoff: float
    counts: dict[int, int]  # coordination number -> atom count
    per_atom: np.ndarray

    def total(self) -> int:
        return int(sum(self.counts.values()))


def coordination_numbers(frame: Frame, r_c: float, periodic: bool = True) -> np.ndarray:
    if r_c <= 0:
        raise InvalidCutoff("cutoff must be positive")
    if frame.natoms == 0:
        raise EmptyFrame("frame has no atoms")
    box = frame.box if periodic else None
    if periodic and r_c > float(frame.box.min()) / 2.0:
        raise InvalidCutoff(
            f"cutoff {r_c} exceeds half the minimum box length {frame.box.min() / 2.0}")
    n = frame.natoms
    counts = np.zeros(n, dtype=int)
    if n > 1:
        iu = np.triu_indices(n, k=1)
        dr = frame.coords[iu[0]] - frame.coords[iu[1]]
        if box is not None:
            dr -= box * np.round(dr / box)
        within = (dr * dr).sum(axis=1) <= r_c * r_c
        np.add.at(counts, iu[0][within], 1)
        np.add.at(counts, iu[1][within], 1)
    return counts


def coordination_histogram(frame: Frame, r_c: float, periodic: bool = True) -> CoordinationHistogram:
    """Per-atom neighbor counts within r_c, histogrammed over the frame."""
    per_atom = coordination_numbers(frame, r_c, periodic)
    values, freq = np.unique(per_atom, return_counts=True)
    return CoordinationHistogram(
        cutoff=r_c,
        counts={int(v): int(c) for v, c in zip(values, freq)},
        per_atom=per_atom,
    )


def coordination_series(traj: Trajectory, r_c: float, periodic: bool = True) -> list[CoordinationHistogram]:
    if not traj.frames:
        raise EmptyTrajectory("trajectory has no frames")
    return [coordination_histogram(f, r_c, periodic) for f in traj.frames]


def write_spectrum_csv(spectrum: Spectrum, path, abscissa: str, ordinate: str) -> None:
    lines = [f"{abscissa},{ordinate}"]
    for x, y in zip(spectrum.grid, spectrum.values):
        lines.append(f"{x:.9g},{y:.9g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

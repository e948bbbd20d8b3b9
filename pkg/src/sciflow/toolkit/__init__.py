"""Desk-scale payload tools for the MD post-processing pipeline.

Every tool is a standalone executable with file-based I/O (reduced
Lennard-Jones units throughout, epsilon = sigma = m = 1) so it can run
unchanged in any bridge backend sandbox.
"""

from .trajectory import Frame, StressRecord, Trajectory
from .md import LJConfig, ljmd_run, fcc_positions
from .formats import read_dump, read_xyz, write_dump, write_xyz, convert_trajectory
from .analysis import (
    Spectrum,
    CoordinationHistogram,
    compute_rdf,
    coordination_histogram,
    coordination_series,
    debye_intensity,
    extract_stress_strain,
)
from .raster import project_snapshot, write_pgm

__all__ = [
    "Frame", "StressRecord", "Trajectory", "LJConfig", "ljmd_run", "fcc_positions",
    "read_dump", "read_xyz", "write_dump", "write_xyz", "convert_trajectory",
    "Spectrum", "CoordinationHistogram", "compute_rdf", "coordination_histogram",
    "coordination_series", "debye_intensity", "extract_stress_strain",
    "project_snapshot", "write_pgm",
]

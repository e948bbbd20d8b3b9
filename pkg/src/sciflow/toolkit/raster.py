"""Snapshot projection to a plain (P2) PGM raster, coordination-colored.

Atoms at bulk coordination render bright; under-coordinated atoms (surfaces,
defects) render in a distinct mid gray so structural damage stands out, in
the spirit of defect-colored lattice visualizations.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .analysis import EmptyFrame, coordination_numbers
from .trajectory import Frame

AXES = {"x": 0, "y": 1, "z": 2}

BACKGROUND = 0
DEFECT_GRAY = 128
BULK_GRAY = 255


def project_snapshot(
    frame: Frame,
    axis: str = "z",
    size: int = 200,
    r_c: float = 1.3,
    bulk_coordination: int = 12,
    dot: int = 1,
    periodic: bool = True,
) -> np.ndarray:
    """Project atom positions onto the plane normal to ``axis``.

    Returns a (size, size) uint8 image; deterministic for identical frames.
    """
    if frame.natoms == 0:
        raise EmptyFrame("frame has no atoms")
    if axis not in AXES:
        raise ValueError(f"axis must be one of {sorted(AXES)}")
    drop = AXES[axis]
    keep = [i for i in range(3) if i != drop]
    coords = frame.coords[:, keep]
    extent = frame.box[keep]
    shade = np.where(
        coordination_numbers(frame, r_c, periodic=periodic) < bulk_coordination,
        DEFECT_GRAY, BULK_GRAY,
    ).astype(np.uint8)
    img = np.zeros((size, size), dtype=np.uint8)
    scale = (size - 1) / extent
    px = np.clip((coords * scale).astype(int), 0, size - 1)
    order = np.lexsort((shade, px[:, 1], px[:, 0]))  # deterministic paint order
    for i in order:
        x, y = px[i]
        lo_x, hi_x = max(0, x - dot), min(size, x + dot + 1)
        lo_y, hi_y = max(0, y - dot), min(size, y + dot + 1)
        patch = img[lo_y:hi_y, lo_x:hi_x]
        np.maximum(patch, shade[i], out=patch)
    return img


def write_pgm(image: np.ndarray, path) -> None:
    """Plain-text PGM (magic P2), one raster row per line."""
    h, w = image.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in image:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")

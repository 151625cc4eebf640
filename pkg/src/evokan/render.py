"""8-bit grayscale heatmaps (binary PGM) with a sidecar recording the value range."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .io import fmt
from .problems import FieldSnapshot


def to_gray(field: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Map ``field`` linearly from ``[min, max]`` onto ``0..255``; a constant field is mid-gray."""
    lo, hi = float(np.min(field)), float(np.max(field))
    if hi > lo:
        img = np.rint((field - lo) / (hi - lo) * 255.0)
    else:
        img = np.full(field.shape, 128.0)
    return img.astype(np.uint8), lo, hi


def snapshot_image(snap: FieldSnapshot, component: int = 0) -> np.ndarray:
    """Image rows for one snapshot: ``y`` runs upward, ``x`` to the right."""
    vals = snap.values[component]
    if snap.dim == 1:
        return vals[None, :]
    return vals.T[::-1]


def strip_image(traj: list[FieldSnapshot], component: int = 0) -> np.ndarray:
    """Space-time strip of a 1D trajectory, time increasing downward."""
    if any(s.dim != 1 for s in traj):
        raise ValueError("space-time strips need 1D snapshots")
    return np.stack([s.values[component] for s in traj])


def write_pgm(path, field: np.ndarray, label: str = "") -> tuple[float, float]:
    """Write ``field`` (rows x columns) as a binary PGM and ``<path>.txt`` with the mapped range."""
    img, lo, hi = to_gray(np.asarray(field, dtype=float))
    path = Path(path)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode())
        fh.write(img.tobytes())
    side = path.with_name(path.name + ".txt")
    side.write_text(f"min {fmt(lo)}\nmax {fmt(hi)}\nwidth {cols}\nheight {rows}\n" + (f"field {label}\n" if label else ""))
    return lo, hi


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm` as a ``uint8`` array."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    cols, rows = int(fields[1]), int(fields[2])
    # exactly one whitespace byte separates the header from the pixels
    return np.frombuffer(data, dtype=np.uint8, count=rows * cols, offset=pos + 1).reshape(rows, cols)

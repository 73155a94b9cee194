"""Bit-exact lidar scan and label file IO.

Binary scan format: consecutive records of four little-endian IEEE-754
binary32 values ``x, y, z, reflectivity``, no header (the layout used by the
common velodyne-style ``.bin`` datasets).  Label sidecar: one raw byte per
point, values in {0, 1, 2}, no header.  A plain-text format (UTF-8, one
``x y z r`` line per point) is provided for fixtures and debugging.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

__all__ = [
    "RECORD_BYTES",
    "ScanFormatError",
    "ScanDataError",
    "read_scan",
    "write_scan",
    "read_labels",
    "write_labels",
    "read_scan_text",
    "write_scan_text",
]

RECORD_BYTES = 16
_POINT_DTYPE = np.dtype("<f4")


class ScanFormatError(ValueError):
    """File structure is not a valid scan or label buffer."""


class ScanDataError(ValueError):
    """File structure is valid but the values are not."""


def _check_finite(points: np.ndarray, path) -> np.ndarray:
    bad = ~np.isfinite(points)
    if bad.any():
        point, fld = np.argwhere(bad)[0]
        raise ScanDataError(
            f"{path}: non-finite value at point {int(point)}, field {int(fld)}"
        )
    return points


def read_scan(path) -> np.ndarray:
    """Load a binary scan as an (n, 4) float32 array.

    Raises :class:`ScanFormatError` when the file size is not a multiple of
    16 bytes and :class:`ScanDataError` on non-finite values.
    """
    path = Path(path)
    size = os.stat(path).st_size
    if size % RECORD_BYTES != 0:
        raise ScanFormatError(
            f"{path}: size {size} is not a multiple of {RECORD_BYTES} bytes"
        )
    with open(path, "rb") as fh:
        raw = fh.read()
    points = np.frombuffer(raw, dtype=_POINT_DTYPE).reshape(-1, 4).copy()
    return _check_finite(points, path)


def write_scan(points, path) -> None:
    """Write an (n, 4) array as little-endian float32 records."""
    points = np.asarray(points)
    if points.ndim != 2 or points.shape[1] != 4:
        raise ScanFormatError(f"scan must have shape (n, 4), got {points.shape}")
    out = np.ascontiguousarray(points, dtype=_POINT_DTYPE)
    _check_finite(out, path)
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


def read_labels(path, expected_count: int | None = None) -> np.ndarray:
    """Load a label sidecar as a uint8 array with values in {0, 1, 2}."""
    path = Path(path)
    with open(path, "rb") as fh:
        labels = np.frombuffer(fh.read(), dtype=np.uint8).copy()
    if (labels > 2).any():
        bad = int(np.argwhere(labels > 2)[0])
        raise ScanDataError(f"{path}: invalid label {labels[bad]} at point {bad}")
    if expected_count is not None and labels.size != expected_count:
        raise ScanFormatError(
            f"{path}: {labels.size} labels for {expected_count} points"
        )
    return labels


def write_labels(labels, path) -> None:
    """Write labels as one raw byte per point."""
    labels = np.asarray(labels)
    if ((labels < 0) | (labels > 2)).any():
        raise ScanDataError("labels must be in {0, 1, 2}")
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


def read_scan_text(path) -> np.ndarray:
    """Load the plain-text fixture format as an (n, 4) float32 array."""
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ScanFormatError(
                    f"{path}:{lineno}: expected 4 fields, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ScanDataError(f"{path}:{lineno}: {exc}") from None
    points = np.asarray(rows, dtype=_POINT_DTYPE).reshape(-1, 4)
    return _check_finite(points, path)


def write_scan_text(points, path) -> None:
    """Write a scan in the plain-text fixture format (9 significant digits,
    enough to round-trip float32 exactly)."""
    points = np.asarray(points, dtype=_POINT_DTYPE)
    if points.ndim != 2 or points.shape[1] != 4:
        raise ScanFormatError(f"scan must have shape (n, 4), got {points.shape}")
    with open(path, "w", encoding="utf-8") as fh:
        for row in points:
            fh.write(f"{row[0]:.9g} {row[1]:.9g} {row[2]:.9g} {row[3]:.9g}\n")

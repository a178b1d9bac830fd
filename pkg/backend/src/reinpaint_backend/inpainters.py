"""Bundled inpainters.

An inpainter is any callable (image, keep, seed) -> image where image is a
uint8 (h, w, 3) RGB array, keep is a bool (h, w) array (True = visible
pixel), and the result has the same shape and dtype. Wrap a real model by
registering such a callable; the server never looks inside.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

MID_GRAY = 128


def identity_inpaint(image: np.ndarray, keep: np.ndarray, seed: int) -> np.ndarray:
    """Returns the input untouched; exists for wire-protocol testing."""
    return image


def _offsets_for_square(r2: int) -> list[tuple[int, int]]:
    """Integer (dy, dx) with dy^2 + dx^2 == r2, in scan order."""
    out = []
    radius = math.isqrt(r2)
    for dy in range(-radius, radius + 1):
        rem = r2 - dy * dy
        dx = math.isqrt(rem)
        if dx * dx != rem:
            continue
        if dx == 0:
            out.append((dy, 0))
        else:
            out.append((dy, -dx))
            out.append((dy, dx))
    return out


def nearest_boundary_fill(image: np.ndarray, keep: np.ndarray, seed: int) -> np.ndarray:
    """Every masked pixel copies the nearest kept pixel (Euclidean metric).

    Distance ties go to the kept pixel that comes first in scan order
    (smallest row, then column). The distance field comes from an exact
    Euclidean distance transform; ties are then resolved by walking the
    integer offsets of each squared distance in scan order, which touches
    only a handful of candidates per pixel. An all-masked image fills with
    mid-gray.
    """
    masked = ~keep
    if not masked.any():
        return image
    out = image.copy()
    if not keep.any():
        out[:] = MID_GRAY
        return out
    h, w = keep.shape
    dist = ndimage.distance_transform_edt(masked)
    rows, cols = np.nonzero(masked)
    r2 = np.rint(dist[rows, cols] ** 2).astype(np.int64)
    for value in np.unique(r2):
        sel = r2 == value
        ys, xs = rows[sel], cols[sel]
        pending = np.ones(ys.size, dtype=bool)
        for dy, dx in _offsets_for_square(int(value)):
            if not pending.any():
                break
            sy, sx = ys + dy, xs + dx
            hit = (pending & (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w))
            hit[hit] = keep[sy[hit], sx[hit]]
            if hit.any():
                out[ys[hit], xs[hit]] = image[sy[hit], sx[hit]]
                pending &= ~hit
        assert not pending.any(), "distance transform missed a source pixel"
    return out


INPAINTERS = {
    "identity": identity_inpaint,
    "nearest": nearest_boundary_fill,
}

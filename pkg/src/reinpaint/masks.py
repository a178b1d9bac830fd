"""Mask generators: brush/box masks, patch-grid masks, and second-mask composition.

Two generators cover the two masking regimes used by the evaluation:

* random_mask draws connected brush strokes or boxes, the kind of damage an
  inpainting method sees in practice. An optional target band on the masked
  fraction is met by rejection sampling over derived sub-seeds.
* patch_mask partitions the image into an S x S grid and masks each patch
  independently with probability P, giving scattered small holes whose
  expected coverage equals P.

compose_second_mask restricts a patch mask so that it never re-masks a
pixel the first mask already removed; re-inpainting therefore only touches
regions where the first inpainting left original content.

All generators are pure functions of (dimensions, params, seed). Random
draws come from a counter-based Philox stream keyed by the seed, with a
documented draw order, so masks are bit-reproducible across platforms and
independent of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadParams, DimensionMismatch, RatioUnreachable
from .image import BinaryMask
from .seeds import derive_seed

# Defaults below are tuned for 512x512 rasters; for_size() rescales them.
_REFERENCE_SIDE = 512


@dataclass(frozen=True)
class RandomMaskParams:
    """Knobs for the brush/box generator.

    brush_prob is the probability of the brush branch; otherwise boxes are
    drawn. submask_count_range bounds the number of strokes or boxes
    (inclusive). Geometry ranges are in pixels, angles in radians.
    """

    brush_prob: float = 0.5
    submask_count_range: tuple[int, int] = (1, 4)
    brush_length_range: tuple[float, float] = (50.0, 200.0)
    brush_width_range: tuple[float, float] = (20.0, 80.0)
    brush_angle_range: tuple[float, float] = (0.0, 2.0 * math.pi)
    box_width_range: tuple[int, int] = (60, 200)
    box_height_range: tuple[int, int] = (60, 200)
    target_ratio_band: tuple[float, float] | None = None
    max_attempts: int = 1000

    def __post_init__(self) -> None:
        if not 0.0 <= self.brush_prob <= 1.0:
            raise BadParams("brush_prob must lie in [0, 1]")
        lo, hi = self.submask_count_range
        if lo < 0 or hi < lo:
            raise BadParams("submask_count_range must be a non-empty interval of ints >= 0")
        for name in ("brush_length_range", "brush_width_range",
                     "box_width_range", "box_height_range"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise BadParams(f"{name} must be a non-empty positive interval")
        lo, hi = self.brush_angle_range
        if hi < lo:
            raise BadParams("brush_angle_range must be a non-empty interval")
        if self.target_ratio_band is not None:
            lo, hi = self.target_ratio_band
            if not (0.0 <= lo <= hi <= 1.0):
                raise BadParams("target_ratio_band must be an interval inside [0, 1]")
        if self.max_attempts < 1:
            raise BadParams("max_attempts must be positive")

    @classmethod
    def for_size(cls, width: int, height: int, **overrides) -> "RandomMaskParams":
        """Defaults rescaled from the 512px reference to min(width, height)."""
        s = min(width, height) / _REFERENCE_SIDE
        scale = lambda v: max(1.0, v * s)
        scale_i = lambda v: max(1, round(v * s))
        base = cls()
        params = replace(
            base,
            brush_length_range=tuple(scale(v) for v in base.brush_length_range),
            brush_width_range=tuple(scale(v) for v in base.brush_width_range),
            box_width_range=tuple(scale_i(v) for v in base.box_width_range),
            box_height_range=tuple(scale_i(v) for v in base.box_height_range),
        )
        return replace(params, **overrides) if overrides else params


@dataclass(frozen=True)
class PatchMaskParams:
    """Patch grid cell size and per-patch masking probability."""

    patch_size: int = 32
    mask_prob: float = 0.4

    def __post_init__(self) -> None:
        if self.patch_size < 1:
            raise BadParams("patch_size must be >= 1")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise BadParams("mask_prob must lie in [0, 1]")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _draw_thick_segment(masked: np.ndarray, x0: float, y0: float,
                        x1: float, y1: float, width: float) -> None:
    """Mark every pixel within width/2 of the segment (round caps)."""
    h, w = masked.shape
    r = width / 2.0
    cmin = max(0, int(math.floor(min(x0, x1) - r - 1)))
    cmax = min(w - 1, int(math.ceil(max(x0, x1) + r + 1)))
    rmin = max(0, int(math.floor(min(y0, y1) - r - 1)))
    rmax = min(h - 1, int(math.ceil(max(y0, y1) + r + 1)))
    if cmin > cmax or rmin > rmax:
        return
    xs = np.arange(cmin, cmax + 1, dtype=np.float64)[None, :]
    ys = np.arange(rmin, rmax + 1, dtype=np.float64)[:, None]
    dx, dy = x1 - x0, y1 - y0
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        d2 = (xs - x0) ** 2 + (ys - y0) ** 2
    else:
        t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / seg_len2, 0.0, 1.0)
        d2 = (xs - (x0 + t * dx)) ** 2 + (ys - (y0 + t * dy)) ** 2
    masked[rmin:rmax + 1, cmin:cmax + 1] |= d2 <= r * r


def _generate_random(width: int, height: int, params: RandomMaskParams,
                     seed: int) -> BinaryMask:
    """One unconstrained draw. Stream order: branch float R, count n, then
    per stroke (length, width, angle) or per box (bw, bh, x, y); the first
    stroke also draws its start point, later strokes chain from the previous
    endpoint."""
    rng = _rng(seed)
    masked = np.zeros((height, width), dtype=bool)
    branch_roll = rng.random()
    n_lo, n_hi = params.submask_count_range
    n = int(rng.integers(n_lo, n_hi + 1))
    if branch_roll <= params.brush_prob:
        if n > 0:
            x = rng.uniform(0.0, width)
            y = rng.uniform(0.0, height)
            for _ in range(n):
                length = rng.uniform(*params.brush_length_range)
                bw = rng.uniform(*params.brush_width_range)
                angle = rng.uniform(*params.brush_angle_range)
                x2 = x + length * math.cos(angle)
                y2 = y + length * math.sin(angle)
                _draw_thick_segment(masked, x, y, x2, y2, bw)
                x, y = x2, y2
    else:
        for _ in range(n):
            bw = min(int(rng.integers(params.box_width_range[0],
                                      params.box_width_range[1] + 1)), width)
            bh = min(int(rng.integers(params.box_height_range[0],
                                      params.box_height_range[1] + 1)), height)
            x0 = int(rng.integers(0, width - bw + 1))
            y0 = int(rng.integers(0, height - bh + 1))
            masked[y0:y0 + bh, x0:x0 + bw] = True
    return BinaryMask(~masked)


_ESCALATION_BLOCK = 20
_MAX_COUNT_SCALE = 32


def random_mask(width: int, height: int, params: RandomMaskParams, seed: int) -> BinaryMask:
    """Brush-stroke or box mask, optionally rejection-sampled into a ratio band.

    Banded generation rejects draws outside [lo, hi], regenerating with
    derived sub-seeds. High-coverage bands are unreachable with small
    submask counts, so whenever a whole block of attempts undershoots the
    band the count range is doubled (halved on consistent overshoot, never
    below the configured range). The escalation depends only on the drawn
    ratios, so the result is still a pure function of (inputs, seed).
    """
    if width < 1 or height < 1:
        raise BadParams("mask dimensions must be >= 1")
    band = params.target_ratio_band
    if band is None:
        return _generate_random(width, height, params, seed)
    lo, hi = band
    if hi == 0.0:
        # The empty mask is the only one with ratio 0; sampling cannot hit it.
        return BinaryMask.all_keep(width, height)
    n_lo, n_hi = params.submask_count_range
    scale = 1
    block: list[float] = []
    for attempt in range(params.max_attempts):
        attempt_params = params if scale == 1 else replace(
            params, submask_count_range=(n_lo * scale, n_hi * scale))
        mask = _generate_random(width, height, attempt_params,
                                derive_seed(seed, "attempt", attempt))
        ratio = mask_ratio(mask)
        if lo <= ratio <= hi:
            return mask
        block.append(ratio)
        if len(block) == _ESCALATION_BLOCK:
            if all(r < lo for r in block):
                scale = min(scale * 2, _MAX_COUNT_SCALE)
            elif all(r > hi for r in block):
                scale = max(scale // 2, 1)
            block = []
    raise RatioUnreachable(
        f"no mask with ratio in [{lo}, {hi}] after {params.max_attempts} attempts"
    )


def patch_mask(width: int, height: int, params: PatchMaskParams, seed: int) -> BinaryMask:
    """Independent per-patch Bernoulli mask on a ceil(w/S) x ceil(h/S) grid.

    Edge patches are truncated. One uniform draw per patch, consumed in
    row-major patch order; a patch is masked iff its draw < mask_prob, so
    mask_prob 0 and 1 yield the all-keep and all-masked masks exactly.
    """
    if width < 1 or height < 1:
        raise BadParams("mask dimensions must be >= 1")
    s = params.patch_size
    nx = -(-width // s)
    ny = -(-height // s)
    draws = _rng(seed).random(ny * nx).reshape(ny, nx)
    cells = draws < params.mask_prob
    masked = np.repeat(np.repeat(cells, s, axis=0), s, axis=1)[:height, :width]
    return BinaryMask(~masked)


def mask_ratio(mask: BinaryMask) -> float:
    """Fraction of pixels that are masked."""
    return float(np.count_nonzero(mask.masked)) / (mask.width * mask.height)


def compose_second_mask(patch: BinaryMask, first: BinaryMask) -> BinaryMask:
    """Restrict a patch mask to pixels the first mask kept.

    The output masks a pixel iff the patch mask masks it AND the first mask
    kept it; pixels already masked in the first pass always come out kept,
    so a second inpainting pass never regenerates first-pass content.
    """
    if patch.width != first.width or patch.height != first.height:
        raise DimensionMismatch(
            f"patch {patch.width}x{patch.height} vs first {first.width}x{first.height}"
        )
    return BinaryMask(~(patch.masked & first.keep))

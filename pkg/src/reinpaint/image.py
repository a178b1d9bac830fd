"""Float RGB rasters, binary keep/masked rasters, and the pixel algebra they share.

Images are float32 arrays of shape (height, width, 3) with samples in
[0, 1]; masks are boolean arrays of shape (height, width) where True means
the pixel is kept (visible) and False means it is masked (to be filled).
Both types are immutable after construction and safe to share across
threads. PNG is the only file format: 8-bit RGB (or grayscale, promoted)
for images, 8-bit grayscale with 255=keep / 0=masked for masks.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import PIL.Image
from PIL import UnidentifiedImageError

from .errors import BadParams, DimensionMismatch, IoFailure, UnsupportedFormat

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageBuffer:
    """RGB raster, float32 samples clamped to [0, 1], shape (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise BadParams(f"image must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise BadParams("image must be at least 1x1")
        if not np.isfinite(px).all():
            raise BadParams("image contains non-finite samples")
        px = np.clip(px, 0.0, 1.0).astype(np.float32)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def same_size(self, other: "ImageBuffer | BinaryMask") -> bool:
        return self.width == other.width and self.height == other.height


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel keep/masked raster; keep[r, c] is True where the pixel is visible."""

    keep: np.ndarray

    def __post_init__(self) -> None:
        k = np.asarray(self.keep)
        if k.ndim != 2:
            raise BadParams(f"mask must have shape (h, w), got {k.shape}")
        if k.shape[0] < 1 or k.shape[1] < 1:
            raise BadParams("mask must be at least 1x1")
        k = k.astype(bool)
        k.setflags(write=False)
        object.__setattr__(self, "keep", k)

    @property
    def width(self) -> int:
        return self.keep.shape[1]

    @property
    def height(self) -> int:
        return self.keep.shape[0]

    @property
    def masked(self) -> np.ndarray:
        return ~self.keep

    @classmethod
    def all_keep(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def all_masked(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


def apply_mask(img: ImageBuffer, mask: BinaryMask) -> ImageBuffer:
    """Zero out masked pixels; kept pixels pass through unchanged."""
    if not img.same_size(mask):
        raise DimensionMismatch(
            f"image {img.width}x{img.height} vs mask {mask.width}x{mask.height}"
        )
    out = img.pixels * mask.keep[:, :, None].astype(np.float32)
    return ImageBuffer(out)


def to_grayscale(img: ImageBuffer) -> np.ndarray:
    """Luminance raster (h, w) float64: Y = 0.299 R + 0.587 G + 0.114 B."""
    return img.pixels.astype(np.float64) @ np.asarray(GRAY_WEIGHTS, dtype=np.float64)


def resize_array_bilinear(arr: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resample with half-pixel-centered sampling.

    Works on (h, w) or (h, w, c) float arrays. Output sample i maps to
    source coordinate (i + 0.5) * size_in / size_out - 0.5, clamped to the
    source extent, so constant inputs stay constant and output values stay
    inside [min(input), max(input)].
    """
    if new_w < 1 or new_h < 1:
        raise BadParams("target size must be at least 1x1")
    h, w = arr.shape[:2]
    src_y = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0.0, h - 1.0)
    src_x = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0).astype(arr.dtype if arr.dtype.kind == "f" else np.float64)
    wx = (src_x - x0).astype(wy.dtype)
    if arr.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
    top = arr[y0][:, x0] * (1 - wx) + arr[y0][:, x1] * wx
    bot = arr[y1][:, x0] * (1 - wx) + arr[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def resize_bilinear(img: ImageBuffer, new_w: int, new_h: int) -> ImageBuffer:
    return ImageBuffer(resize_array_bilinear(img.pixels.astype(np.float64), new_w, new_h))


# --- PNG encoding/decoding -------------------------------------------------
#
# Saved samples are quantized with round(x * 255), so a save/load round trip
# moves every channel by at most 0.5/255.


def _quantize(img: ImageBuffer) -> np.ndarray:
    return np.rint(img.pixels * 255.0).astype(np.uint8)


def encode_image_png(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    PIL.Image.fromarray(_quantize(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_image_png(data: bytes) -> ImageBuffer:
    return _image_from_pil(_open_png(io.BytesIO(data)))


def encode_mask_png(mask: BinaryMask) -> bytes:
    buf = io.BytesIO()
    arr = np.where(mask.keep, 255, 0).astype(np.uint8)
    PIL.Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_mask_png(data: bytes) -> BinaryMask:
    return _mask_from_pil(_open_png(io.BytesIO(data)))


def _open_png(fp) -> PIL.Image.Image:
    try:
        im = PIL.Image.open(fp)
        im.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"not a decodable image: {exc}") from exc
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        raise IoFailure(str(exc)) from exc
    except OSError as exc:  # truncated / corrupt stream
        raise UnsupportedFormat(f"corrupt image data: {exc}") from exc
    if im.format != "PNG":
        raise UnsupportedFormat(f"expected PNG, got {im.format}")
    return im


def _image_from_pil(im: PIL.Image.Image) -> ImageBuffer:
    if im.mode == "L":
        gray = np.asarray(im, dtype=np.float32) / 255.0
        return ImageBuffer(np.repeat(gray[:, :, None], 3, axis=2))
    if im.mode == "RGB":
        return ImageBuffer(np.asarray(im, dtype=np.float32) / 255.0)
    raise UnsupportedFormat(f"unsupported PNG mode {im.mode!r} (need 8-bit RGB or grayscale)")


def _mask_from_pil(im: PIL.Image.Image) -> BinaryMask:
    if im.mode != "L":
        raise UnsupportedFormat(f"mask PNG must be 8-bit grayscale, got mode {im.mode!r}")
    arr = np.asarray(im)
    return BinaryMask(arr >= 128)


def load_image(path) -> ImageBuffer:
    try:
        fp = open(path, "rb")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    with fp:
        return _image_from_pil(_open_png(fp))


def save_image(img: ImageBuffer, path) -> None:
    try:
        with open(path, "wb") as fp:
            fp.write(encode_image_png(img))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_mask(path) -> BinaryMask:
    try:
        fp = open(path, "rb")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    with fp:
        return _mask_from_pil(_open_png(fp))


def save_mask(mask: BinaryMask, path) -> None:
    try:
        with open(path, "wb") as fp:
            fp.write(encode_mask_png(mask))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def max_channel_error(a: ImageBuffer, b: ImageBuffer) -> float:
    """Largest per-sample absolute difference; handy for round-trip checks."""
    if not a.same_size(b):
        raise DimensionMismatch("images differ in size")
    return float(np.max(np.abs(a.pixels.astype(np.float64) - b.pixels.astype(np.float64))))

"""Pairwise image distances: MSE, PSNR, SSIM, and a perceptual distance.

The perceptual distance has two modes. The built-in mode is a deterministic
multi-scale statistic comparison that needs no model weights, so the whole
toolkit stays self-contained and reproducible. The external mode loads a
user-supplied TorchScript module (two (1, 3, H, W) float tensors in [0, 1]
in, scalar distance out) so learned metrics can be swapped in; the module
owns its preprocessing and weighting.

Dynamic range is 1.0 everywhere: images are float rasters in [0, 1].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BadParams, DimensionMismatch, ModelLoadError, TooSmall
from .image import ImageBuffer, resize_array_bilinear, to_grayscale

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


class SubMetric(enum.Enum):
    MSE = "mse"
    PSNR = "psnr"
    SSIM = "ssim"
    PERCEPTUAL = "perceptual"

    @property
    def higher_is_better(self) -> bool:
        return self in (SubMetric.PSNR, SubMetric.SSIM)


def _check_dims(a: ImageBuffer, b: ImageBuffer) -> None:
    if not a.same_size(b):
        raise DimensionMismatch(
            f"images differ in size: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    _check_dims(a, b)
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """10 log10(1 / MSE) in dB; identical images return +inf."""
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / m)


def _gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _window_filter_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable weighted window means at fully-inside positions only."""
    cols = sliding_window_view(x, kernel.size, axis=1) @ kernel
    return sliding_window_view(cols, kernel.size, axis=0) @ kernel


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean local structural similarity over the grayscale images.

    Gaussian 11x11 window (sigma 1.5), C1 = (0.01 L)^2, C2 = (0.03 L)^2,
    L = 1; windows are evaluated only where they fit entirely inside the
    image, so both sides must be at least 11 pixels.
    """
    _check_dims(a, b)
    if min(a.width, a.height) < SSIM_WINDOW:
        raise TooSmall(f"ssim needs at least {SSIM_WINDOW}px per side")
    ga = to_grayscale(a)
    gb = to_grayscale(b)
    kernel = _gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = _window_filter_valid(ga, kernel)
    mu_b = _window_filter_valid(gb, kernel)
    var_a = _window_filter_valid(ga * ga, kernel) - mu_a * mu_a
    var_b = _window_filter_valid(gb * gb, kernel) - mu_b * mu_b
    cov = _window_filter_valid(ga * gb, kernel) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


# --- perceptual distance ----------------------------------------------------


@dataclass(frozen=True)
class BuiltinPerceptual:
    """Deterministic multi-scale structural distance.

    A pyramid of grayscale levels is built by bilinear halving. Each level
    is cut into window x window cells (edges truncated); every cell
    contributes its mean, standard deviation, and gradient-orientation
    moments (mean |gx|, mean |gy|, mean gx*gy: the structure-tensor view of
    local orientation). The per-level statistic vectors are normalized to
    unit length and the L2 distance between them is averaged over levels.
    Zero iff the inputs agree, symmetric, and it grows with structural
    disagreement; mirroring both inputs permutes cells and flips the sign
    of the mixed moment, leaving the distance unchanged whenever the cell
    grid tiles the image exactly.
    """

    levels: int = 4
    window: int = 8

    def __post_init__(self) -> None:
        if self.levels < 1 or self.window < 1:
            raise BadParams("levels and window must be >= 1")

    def _level_stats(self, gray: np.ndarray) -> np.ndarray:
        h, w = gray.shape
        s = self.window
        gy, gx = np.gradient(gray)
        row_starts = np.arange(0, h, s)
        col_starts = np.arange(0, w, s)

        def cell_sum(x: np.ndarray) -> np.ndarray:
            return np.add.reduceat(np.add.reduceat(x, row_starts, axis=0), col_starts, axis=1)

        counts = np.outer(np.diff(np.append(row_starts, h)),
                          np.diff(np.append(col_starts, w))).astype(np.float64)
        mean = cell_sum(gray) / counts
        var = cell_sum(gray * gray) / counts - mean * mean
        std = np.sqrt(np.maximum(var, 0.0))
        orient = [cell_sum(np.abs(gx)) / counts,
                  cell_sum(np.abs(gy)) / counts,
                  cell_sum(gx * gy) / counts]
        return np.stack([mean, std, *orient], axis=-1).ravel()

    def distance(self, a: ImageBuffer, b: ImageBuffer) -> float:
        _check_dims(a, b)
        ga = to_grayscale(a)
        gb = to_grayscale(b)
        total = 0.0
        used = 0
        for level in range(self.levels):
            va = self._level_stats(ga)
            vb = self._level_stats(gb)
            na = np.linalg.norm(va)
            nb = np.linalg.norm(vb)
            if na > 0.0:
                va = va / na
            if nb > 0.0:
                vb = vb / nb
            total += float(np.linalg.norm(va - vb))
            used += 1
            nh, nw = -(-ga.shape[0] // 2), -(-ga.shape[1] // 2)
            if used == self.levels or min(nh, nw) < self.window:
                break
            ga = resize_array_bilinear(ga, nw, nh)
            gb = resize_array_bilinear(gb, nw, nh)
        return total / used


class TorchscriptPerceptual:
    """Perceptual distance delegated to a serialized TorchScript module.

    The module receives both images as (1, 3, H, W) float32 tensors with
    values in [0, 1] and must return a single scalar; any preprocessing or
    feature weighting lives inside the module.
    """

    def __init__(self, model_path: str):
        try:
            import torch
        except ImportError as exc:
            raise ModelLoadError(
                "external perceptual mode needs the optional 'torch' dependency"
            ) from exc
        self._torch = torch
        try:
            self._model = torch.jit.load(model_path, map_location="cpu").eval()
        except Exception as exc:
            raise ModelLoadError(f"cannot load TorchScript model {model_path!r}: {exc}") from exc
        self.model_path = model_path

    def distance(self, a: ImageBuffer, b: ImageBuffer) -> float:
        _check_dims(a, b)
        torch = self._torch
        ta = torch.from_numpy(np.ascontiguousarray(a.pixels.transpose(2, 0, 1)))[None]
        tb = torch.from_numpy(np.ascontiguousarray(b.pixels.transpose(2, 0, 1)))[None]
        with torch.no_grad():
            out = self._model(ta, tb)
        value = float(out.reshape(-1)[0]) if hasattr(out, "reshape") else float(out)
        if not math.isfinite(value):
            raise ModelLoadError(f"model {self.model_path!r} produced a non-finite distance")
        return value


PerceptualBackend = BuiltinPerceptual | TorchscriptPerceptual


def make_perceptual_backend(model_path: str | None) -> PerceptualBackend:
    if model_path:
        return TorchscriptPerceptual(model_path)
    return BuiltinPerceptual()


def perceptual(a: ImageBuffer, b: ImageBuffer,
               backend: PerceptualBackend | None = None) -> float:
    backend = backend or BuiltinPerceptual()
    return backend.distance(a, b)


def score(metric: SubMetric, a: ImageBuffer, b: ImageBuffer,
          perceptual_backend: PerceptualBackend | None = None) -> float:
    """Dispatch to the chosen sub-metric."""
    if metric is SubMetric.MSE:
        return mse(a, b)
    if metric is SubMetric.PSNR:
        return psnr(a, b)
    if metric is SubMetric.SSIM:
        return ssim(a, b)
    if metric is SubMetric.PERCEPTUAL:
        return perceptual(a, b, perceptual_backend)
    raise BadParams(f"unknown sub-metric {metric!r}")

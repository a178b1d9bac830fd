"""Pluggable inpainting backends and the synthetic degradation fills.

Every backend maps (masked image, mask, seed) -> full image of the same
size, where the masked image already has masked pixels zeroed. Kept pixels
always survive unchanged: built-ins preserve them by construction, and the
subprocess/HTTP clients overwrite the kept region from the input after
every call because external models cannot be trusted to leave it alone.

Built-ins are classical stand-ins with pinned numerics so runs are
reproducible without model weights:

* echo        - returns its input (test double).
* mean-fill   - masked pixels get the per-channel mean of kept pixels.
* diffusion   - masked pixels solve the discrete Laplace equation with the
                kept pixels as Dirichlet data (red-black Gauss-Seidel).
* jitter-diffusion - diffusion plus seeded noise in the filled region,
                emulating a stochastic model for variance studies.

degrade_blend and degrade_noise synthesize deliberately bad first-pass
inpaintings (foreign content / blurred noise) for metric validation runs.
"""

from __future__ import annotations

import base64
import logging
import os
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import (BackendFailure, BackendTimeout, BadParams, DimensionMismatch,
                     ProtocolViolation)
from .image import (BinaryMask, ImageBuffer, decode_image_png, encode_image_png,
                    encode_mask_png, load_image, resize_array_bilinear, save_image,
                    save_mask)

log = logging.getLogger(__name__)

HTTP_TIMEOUT_ENV = "REINPAINT_HTTP_TIMEOUT_MS"
DEFAULT_HTTP_TIMEOUT_MS = 120_000


def _check_pair(img: ImageBuffer, mask: BinaryMask) -> None:
    if not img.same_size(mask):
        raise DimensionMismatch(
            f"image {img.width}x{img.height} vs mask {mask.width}x{mask.height}"
        )


class InpaintBackend:
    """Interface: fill the masked region of an already-masked image."""

    name: str = "backend"

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        raise NotImplementedError


def inpaint(backend: InpaintBackend, masked: ImageBuffer, mask: BinaryMask,
            seed: int) -> ImageBuffer:
    """Run a backend and enforce the invariants every caller relies on."""
    _check_pair(masked, mask)
    out = backend.inpaint(masked, mask, seed)
    if not out.same_size(masked):
        raise ProtocolViolation(
            f"backend {backend.name!r} returned {out.width}x{out.height} "
            f"for a {masked.width}x{masked.height} input"
        )
    merged = np.where(mask.keep[:, :, None], masked.pixels, out.pixels)
    return ImageBuffer(merged)


class EchoBackend(InpaintBackend):
    """Returns the masked input unchanged; fills nothing."""

    name = "echo"

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        _check_pair(masked, mask)
        return masked


class MeanFillBackend(InpaintBackend):
    """Masked pixels take the per-channel mean of the kept pixels."""

    name = "mean-fill"

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        _check_pair(masked, mask)
        return builtin_mean_fill(masked, mask)


def builtin_mean_fill(masked: ImageBuffer, mask: BinaryMask) -> ImageBuffer:
    if not mask.keep.any():
        log.warning("mean-fill with no kept pixels; filling 0.5")
        return ImageBuffer(np.full_like(masked.pixels, 0.5))
    means = masked.pixels[mask.keep].astype(np.float64).mean(axis=0)
    out = np.where(mask.keep[:, :, None], masked.pixels,
                   means.astype(np.float32))
    return ImageBuffer(out)


@dataclass(frozen=True)
class DiffusionParams:
    """max_iters defaults to 10 * max(w, h) when None; tol is the largest
    per-sweep update below which the solve stops."""

    tol: float = 1e-5
    max_iters: int | None = None

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise BadParams("tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise BadParams("max_iters must be >= 1")


def _checkerboard_groups(rows: np.ndarray, cols: np.ndarray, h: int, w: int):
    """Gather tables for red-black sweeps over one set of masked pixels.

    For each parity class: the flat indices of its pixels, the flat indices
    of their 4-neighbors (weight 0 where off-image), and the in-image
    neighbor counts. Gathering through flat indices touches only the masked
    pixels, which is what makes large sparse masks cheap.
    """
    color = (rows + cols) % 2
    groups = []
    for bit in (0, 1):
        sel = color == bit
        r, c = rows[sel], cols[sel]
        if r.size == 0:
            continue
        idx = np.empty((r.size, 4), dtype=np.intp)
        weight = np.empty((r.size, 4), dtype=np.float64)
        for j, (dr, dc) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
            rr, cc = r + dr, c + dc
            valid = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            weight[:, j] = valid
            idx[:, j] = np.where(valid, rr * w + cc, 0)
        counts = weight.sum(axis=1)
        groups.append((r * w + c, idx, weight, counts))
    return groups


def _sweep_numpy(flat: np.ndarray, tgt: np.ndarray, idx: np.ndarray,
                 weight: np.ndarray, counts: np.ndarray) -> float:
    new = np.einsum("nkc,nk->nc", flat[idx], weight) / counts[:, None]
    worst = float(np.max(np.abs(new - flat[tgt])))
    flat[tgt] = new
    return worst


def _sweep_scalar(flat, tgt, idx, weight, counts):
    # compiled by numba when available; the loop nest is the whole point
    worst = 0.0
    for i in range(tgt.shape[0]):
        t = tgt[i]
        for ch in range(3):
            acc = 0.0
            for j in range(4):
                acc += flat[idx[i, j], ch] * weight[i, j]
            new = acc / counts[i]
            delta = abs(new - flat[t, ch])
            if delta > worst:
                worst = delta
            flat[t, ch] = new
    return worst


try:
    from numba import njit

    _sweep = njit(cache=True, fastmath=False)(_sweep_scalar)
except ImportError:  # pragma: no cover - exercised only without numba
    _sweep = _sweep_numpy


def builtin_diffusion(masked: ImageBuffer, mask: BinaryMask,
                      params: DiffusionParams = DiffusionParams()) -> ImageBuffer:
    """Fill masked pixels with the discrete harmonic extension of the kept ones.

    Red-black Gauss-Seidel over the masked pixels: each sweep replaces a
    pixel by the mean of its in-image 4-neighbors, black pixels seeing
    freshly updated reds, until the largest update drops below tol or the
    iteration cap is hit. Values obey the discrete maximum principle:
    each channel stays within the range of its boundary values.
    """
    _check_pair(masked, mask)
    if not mask.keep.any():
        log.warning("diffusion with no kept pixels; filling 0.5")
        return ImageBuffer(np.full_like(masked.pixels, 0.5))
    if mask.keep.all():
        return masked
    h, w = mask.keep.shape
    max_iters = params.max_iters if params.max_iters is not None else 10 * max(w, h)
    vals = masked.pixels.astype(np.float64)
    init = vals[mask.keep].mean(axis=0)
    vals[mask.masked] = init
    flat = vals.reshape(-1, 3)
    rows, cols = np.nonzero(mask.masked)
    groups = _checkerboard_groups(rows, cols, h, w)
    for _ in range(max_iters):
        worst = 0.0
        for tgt, idx, weight, counts in groups:
            worst = max(worst, _sweep(flat, tgt, idx, weight, counts))
        if worst < params.tol:
            break
    return ImageBuffer(np.clip(vals, 0.0, 1.0))


class DiffusionBackend(InpaintBackend):
    name = "diffusion"

    def __init__(self, params: DiffusionParams = DiffusionParams()):
        self.params = params

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        return builtin_diffusion(masked, mask, self.params)


class JitterDiffusionBackend(InpaintBackend):
    """Diffusion fill plus seeded Gaussian jitter inside the filled region.

    Stands in for a stochastic model: different seeds give different but
    reproducible outputs, which is what variance studies need.
    """

    name = "jitter-diffusion"

    def __init__(self, jitter_sigma: float = 0.05,
                 params: DiffusionParams = DiffusionParams()):
        if jitter_sigma < 0:
            raise BadParams("jitter_sigma must be >= 0")
        self.jitter_sigma = jitter_sigma
        self.params = params

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        base = builtin_diffusion(masked, mask, self.params)
        if self.jitter_sigma == 0.0:
            return base
        rng = np.random.Generator(np.random.Philox(seed))
        noise = rng.normal(0.0, self.jitter_sigma, base.pixels.shape)
        out = base.pixels + noise * mask.masked[:, :, None]
        return ImageBuffer(np.clip(out, 0.0, 1.0))


# --- synthetic bad inpaintings ----------------------------------------------


def degrade_blend(original: ImageBuffer, mask: BinaryMask,
                  donor: ImageBuffer) -> ImageBuffer:
    """Fill the masked region with content from a donor image.

    The result is locally plausible but globally inconsistent, emulating an
    inpainting that ignores context.
    """
    _check_pair(original, mask)
    if not donor.same_size(original):
        raise DimensionMismatch("donor image size differs from original")
    out = np.where(mask.keep[:, :, None], original.pixels, donor.pixels)
    return ImageBuffer(out)


@dataclass(frozen=True)
class DegradeNoiseParams:
    """sigma is the target std of the blurred noise field; down_factor is
    the low-resolution grid divisor before bilinear upsampling."""

    sigma: float = 0.5
    down_factor: int = 16

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise BadParams("sigma must be >= 0")
        if self.down_factor < 1:
            raise BadParams("down_factor must be >= 1")


def degrade_noise(original: ImageBuffer, mask: BinaryMask,
                  params: DegradeNoiseParams, seed: int) -> ImageBuffer:
    """Add blurred Gaussian noise to the masked region.

    Noise is drawn on a ceil(w/f) x ceil(h/f) grid, bilinearly upsampled
    f-fold, cropped, and rescaled so the upsampled field's std equals sigma
    (interpolation alone would shrink it); it is then added inside the
    masked region only and the result clamped to [0, 1]. This emulates the
    soft low-frequency artifacts of a low-fidelity inpainting.
    """
    _check_pair(original, mask)
    if params.sigma == 0.0:
        return original
    f = params.down_factor
    h, w = original.height, original.width
    lw, lh = -(-w // f), -(-h // f)
    rng = np.random.Generator(np.random.Philox(seed))
    low = rng.normal(0.0, params.sigma, (lh, lw, 3))
    field = resize_array_bilinear(low, lw * f, lh * f)[:h, :w]
    observed = float(field.std())
    if observed > 0.0:
        field = field * (params.sigma / observed)
    out = original.pixels + field * mask.masked[:, :, None]
    return ImageBuffer(np.clip(out, 0.0, 1.0))


# --- external backends -------------------------------------------------------


def http_timeout_seconds() -> float:
    raw = os.environ.get(HTTP_TIMEOUT_ENV, "")
    try:
        ms = int(raw) if raw else DEFAULT_HTTP_TIMEOUT_MS
    except ValueError:
        raise BadParams(f"{HTTP_TIMEOUT_ENV} must be an integer, got {raw!r}")
    return ms / 1000.0


def _with_retries(call, attempts: int, backoff: float, name: str):
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return call()
        except (BackendFailure, BackendTimeout) as exc:
            last = exc
            if attempt + 1 < attempts:
                delay = backoff * (2 ** attempt)
                log.warning("backend %s attempt %d failed (%s); retrying in %.1fs",
                            name, attempt + 1, exc, delay)
                time.sleep(delay)
    assert last is not None
    raise last


class SubprocessBackend(InpaintBackend):
    """Runs a command template with {in} {mask} {out} {seed} placeholders.

    The command must exit 0 and write the inpainted PNG to {out}. Masks are
    written as 8-bit grayscale PNGs with 255=keep / 0=masked.
    """

    def __init__(self, command: str, name: str = "subprocess",
                 retries: int = 2, backoff: float = 0.5,
                 timeout: float | None = None):
        if not command:
            raise BackendFailure("subprocess backend requires a command template")
        self.command = command
        self.name = name
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout if timeout is not None else http_timeout_seconds()

    def _run_once(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        with tempfile.TemporaryDirectory(prefix="reinpaint-") as tmp:
            tmp_path = Path(tmp)
            in_path = tmp_path / "in.png"
            mask_path = tmp_path / "mask.png"
            out_path = tmp_path / "out.png"
            save_image(masked, in_path)
            save_mask(mask, mask_path)
            fields = {"in": str(in_path), "mask": str(mask_path),
                      "out": str(out_path), "seed": str(seed)}
            argv = [tok.format(**fields) for tok in shlex.split(self.command)]
            try:
                proc = subprocess.run(argv, capture_output=True, timeout=self.timeout)
            except subprocess.TimeoutExpired as exc:
                raise BackendTimeout(f"{self.name}: command timed out") from exc
            except OSError as exc:
                raise BackendFailure(f"{self.name}: cannot run command: {exc}") from exc
            if proc.returncode != 0:
                tail = proc.stderr.decode("utf-8", "replace")[-500:]
                raise BackendFailure(
                    f"{self.name}: exit code {proc.returncode}: {tail}"
                )
            if not out_path.exists():
                raise ProtocolViolation(f"{self.name}: command wrote no output PNG")
            try:
                reply = load_image(out_path)
            except Exception as exc:
                raise ProtocolViolation(f"{self.name}: unreadable output PNG: {exc}") from exc
            return reply

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        _check_pair(masked, mask)
        reply = _with_retries(lambda: self._run_once(masked, mask, seed),
                              self.retries + 1, self.backoff, self.name)
        return _merge_reply(masked, mask, reply, self.name)


def _merge_reply(masked: ImageBuffer, mask: BinaryMask, reply: ImageBuffer,
                 name: str) -> ImageBuffer:
    if not reply.same_size(masked):
        raise ProtocolViolation(
            f"{name}: reply is {reply.width}x{reply.height}, "
            f"expected {masked.width}x{masked.height}"
        )
    merged = np.where(mask.keep[:, :, None], masked.pixels, reply.pixels)
    return ImageBuffer(merged)


class HttpBackend(InpaintBackend):
    """POSTs base64 PNGs to {endpoint}/inpaint per the wire protocol."""

    def __init__(self, url: str, name: str = "http", retries: int = 2,
                 backoff: float = 0.5, max_inflight: int = 4,
                 timeout: float | None = None):
        if not url:
            raise BackendFailure("http backend requires an endpoint url")
        self.url = url.rstrip("/")
        self.name = name
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout if timeout is not None else http_timeout_seconds()
        self._inflight = threading.Semaphore(max_inflight)

    def _post_once(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        body = {
            "image": base64.b64encode(encode_image_png(masked)).decode("ascii"),
            "mask": base64.b64encode(encode_mask_png(mask)).decode("ascii"),
            "seed": int(seed),
        }
        try:
            resp = requests.post(f"{self.url}/inpaint", json=body, timeout=self.timeout)
        except requests.Timeout as exc:
            raise BackendTimeout(f"{self.name}: request timed out") from exc
        except requests.RequestException as exc:
            raise BackendFailure(f"{self.name}: request failed: {exc}") from exc
        if resp.status_code != 200:
            try:
                detail = resp.json().get("error", "")
            except (ValueError, AttributeError):
                detail = resp.text[:200]
            raise BackendFailure(f"{self.name}: HTTP {resp.status_code}: {detail}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(f"{self.name}: reply is not JSON") from exc
        if not isinstance(payload, dict) or "image" not in payload:
            raise ProtocolViolation(f"{self.name}: reply lacks an 'image' field")
        try:
            png = base64.b64decode(payload["image"], validate=True)
            reply = decode_image_png(png)
        except Exception as exc:
            raise ProtocolViolation(f"{self.name}: undecodable reply image: {exc}") from exc
        return reply

    def inpaint(self, masked: ImageBuffer, mask: BinaryMask, seed: int) -> ImageBuffer:
        _check_pair(masked, mask)
        with self._inflight:
            reply = _with_retries(lambda: self._post_once(masked, mask, seed),
                                  self.retries + 1, self.backoff, self.name)
        return _merge_reply(masked, mask, reply, self.name)


# --- backend construction from config ----------------------------------------

BUILTIN_VARIANTS = ("echo", "mean-fill", "diffusion", "jitter-diffusion")


def make_backend(spec: dict) -> InpaintBackend:
    """Build a backend from a config mapping ({"kind": ..., ...})."""
    if not isinstance(spec, dict):
        raise BadParams(f"backend spec must be a mapping, got {type(spec).__name__}")
    kind = spec.get("kind", "builtin")
    if kind == "builtin":
        variant = spec.get("variant", "diffusion")
        if variant == "echo":
            backend = EchoBackend()
        elif variant == "mean-fill":
            backend = MeanFillBackend()
        elif variant == "diffusion":
            backend = DiffusionBackend(DiffusionParams(
                tol=float(spec.get("tol", 1e-5)),
                max_iters=spec.get("max_iters"),
            ))
        elif variant == "jitter-diffusion":
            backend = JitterDiffusionBackend(
                jitter_sigma=float(spec.get("jitter_sigma", 0.05)))
        else:
            raise BadParams(f"unknown builtin variant {variant!r}; "
                            f"choose from {BUILTIN_VARIANTS}")
    elif kind == "subprocess":
        backend = SubprocessBackend(
            spec.get("command", ""),
            name=spec.get("name", "subprocess"),
            retries=int(spec.get("retries", 2)),
            backoff=float(spec.get("backoff", 0.5)),
        )
    elif kind == "http":
        backend = HttpBackend(
            spec.get("url", ""),
            name=spec.get("name", "http"),
            retries=int(spec.get("retries", 2)),
            backoff=float(spec.get("backoff", 0.5)),
            max_inflight=int(spec.get("max_inflight", 4)),
        )
    else:
        raise BadParams(f"unknown backend kind {kind!r}")
    if "name" in spec:
        backend.name = str(spec["name"])
    return backend

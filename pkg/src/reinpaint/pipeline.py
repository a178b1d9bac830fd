"""Multi-pass evaluation pipeline.

For each corpus image and each first-pass method the pipeline:

1. draws a brush/box mask inside the configured ratio band and inpaints the
   masked image with the method under test (or loads a precomputed result);
2. draws K patch masks, composes each with the first mask so first-pass
   content is never re-masked, and re-inpaints with the second backend;
3. scores the chosen sub-metric between the first inpainting and each of
   the K re-inpaintings; their mean is the method's consistency score for
   that image (lower is better for MSE/perceptual, higher for PSNR/SSIM);
4. optionally also scores the original-vs-first and original-vs-second
   objectives, which need the pristine image. The first-second objective
   never reads it.

Seeds are content-derived from (run_seed, image id, method name, pass
index), so results are independent of worker count and scheduling; records
land in the output file in a stable sorted order, making identical runs
byte-identical. A backend failure poisons one record, not the run.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from threading import Lock

import numpy as np

from . import backends as bk
from .config import EvalConfig, Objective, backend_display_name
from .errors import AllBackendsFailed, BadParams, EmptyCorpus, MissingOriginal
from .image import BinaryMask, ImageBuffer, apply_mask, load_image, load_mask
from .masks import (PatchMaskParams, RandomMaskParams, compose_second_mask,
                    mask_ratio, patch_mask, random_mask)
from .metrics import PerceptualBackend, SubMetric, make_perceptual_backend, score
from .seeds import derive_seed

log = logging.getLogger(__name__)

RECORDS_FILENAME = "records.jsonl"
SYNTH_VARIANTS = ("natural", "blend", "noise")


# --- records ------------------------------------------------------------------


def _enc(x: float):
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return x


def _dec(x) -> float:
    if x == "Infinity":
        return math.inf
    if x == "-Infinity":
        return -math.inf
    return float(x)


def record_to_line(rec: dict) -> str:
    """Canonical one-line JSON; +/-Infinity encoded as strings."""
    out = dict(rec)
    if out.get("sub_scores") is not None:
        out["sub_scores"] = [_enc(v) for v in out["sub_scores"]]
    if out.get("consistency") is not None:
        out["consistency"] = _enc(out["consistency"])
    if out.get("objectives"):
        out["objectives"] = {k: _enc(v) for k, v in out["objectives"].items()}
    return json.dumps(out, sort_keys=True, separators=(",", ":"), allow_nan=False)


def record_from_line(line: str) -> dict:
    rec = json.loads(line)
    if rec.get("sub_scores") is not None:
        rec["sub_scores"] = [_dec(v) for v in rec["sub_scores"]]
    if rec.get("consistency") is not None:
        rec["consistency"] = _dec(rec["consistency"])
    if rec.get("objectives"):
        rec["objectives"] = {k: _dec(v) for k, v in rec["objectives"].items()}
    return rec


def read_records(path: str | Path, tolerant: bool = False) -> tuple[list[dict], int]:
    """Read a JSON-lines records file; returns (records, corrupt_line_count)."""
    records: list[dict] = []
    corrupt = 0
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = record_from_line(line)
                if not isinstance(rec, dict) or "image_id" not in rec or "method" not in rec:
                    raise ValueError("missing required fields")
            except (ValueError, TypeError) as exc:
                if not tolerant:
                    raise
                corrupt += 1
                log.warning("skipping corrupt record line %d: %s", lineno, exc)
                continue
            records.append(rec)
    return records, corrupt


# --- single-image operations ----------------------------------------------------


def first_pass(img: ImageBuffer, cfg: EvalConfig, backend: bk.InpaintBackend,
               mask_seed: int, inpaint_seed: int) -> tuple[BinaryMask, ImageBuffer, list[str]]:
    """Draw the first mask inside the configured band and inpaint it."""
    params = RandomMaskParams.for_size(img.width, img.height,
                                       target_ratio_band=cfg.first_mask_band)
    m1 = random_mask(img.width, img.height, params, mask_seed)
    flags = []
    if not m1.keep.any():
        flags.append("first_mask_all_masked")
    x1 = bk.inpaint(backend, apply_mask(img, m1), m1, inpaint_seed)
    return m1, x1, flags


@dataclass
class ConsistencyResult:
    value: float
    sub_scores: list[float]
    mask_ids: list[str]
    second_images: list[ImageBuffer] = field(repr=False, default_factory=list)


def consistency_score(first_img: ImageBuffer, first_mask: BinaryMask,
                      cfg: EvalConfig, second_backend: bk.InpaintBackend,
                      perceptual: PerceptualBackend | None,
                      seed_for_pass, keep_images: bool = False) -> ConsistencyResult:
    """Mean sub-metric distance between the first inpainting and K re-inpaintings.

    seed_for_pass(k) must yield the seed for pass k (1-based). The mean uses
    exact summation, so it is invariant to the order of the K passes.
    """
    sub_scores: list[float] = []
    mask_ids: list[str] = []
    seconds: list[ImageBuffer] = []
    w, h = first_img.width, first_img.height
    for k in range(1, cfg.k + 1):
        seed_k = seed_for_pass(k)
        if cfg.second_mask_band is not None:
            lo, hi = cfg.second_mask_band
            rng = np.random.Generator(np.random.Philox(derive_seed(seed_k, "ratio")))
            prob = lo + (hi - lo) * rng.random()
        else:
            prob = cfg.second_mask_ratio
        mp = patch_mask(w, h, PatchMaskParams(cfg.patch_size, prob),
                        derive_seed(seed_k, "cells"))
        m2 = compose_second_mask(mp, first_mask)
        assert not (m2.masked & first_mask.masked).any(), \
            "second mask re-masked first-pass pixels"
        x2 = bk.inpaint(second_backend, apply_mask(first_img, m2), m2,
                        derive_seed(seed_k, "inpaint"))
        sub_scores.append(score(cfg.sub_metric, first_img, x2, perceptual))
        mask_ids.append(f"mp-{seed_k:016x}")
        if keep_images:
            seconds.append(x2)
    return ConsistencyResult(
        value=math.fsum(sub_scores) / len(sub_scores),
        sub_scores=sub_scores,
        mask_ids=mask_ids,
        second_images=seconds,
    )


def objective_scores(original: ImageBuffer | None, first_img: ImageBuffer,
                     second_images: list[ImageBuffer], metric: SubMetric,
                     perceptual: PerceptualBackend | None,
                     objectives: tuple[Objective, ...],
                     first_second_scores: list[float] | None = None) -> dict[str, float]:
    """Score the requested objectives. Original-* need the pristine image;
    first-second works without it."""
    out: dict[str, float] = {}
    for obj in objectives:
        if obj in (Objective.ORIG_FIRST, Objective.ORIG_SECOND) and original is None:
            raise MissingOriginal(f"objective {obj.value} needs the original image")
        if obj is Objective.ORIG_FIRST:
            out[obj.value] = score(metric, original, first_img, perceptual)
        elif obj is Objective.ORIG_SECOND:
            vals = [score(metric, original, x2, perceptual) for x2 in second_images]
            out[obj.value] = math.fsum(vals) / len(vals)
        else:
            vals = first_second_scores
            if vals is None:
                vals = [score(metric, first_img, x2, perceptual) for x2 in second_images]
            out[obj.value] = math.fsum(vals) / len(vals)
    return out


# --- first-pass sources ---------------------------------------------------------


class FirstPassSource:
    """Produces (first mask, first inpainting, flags) for one image."""

    name: str
    needs_original = True
    f1_label: str

    def produce(self, image_id: str, original: ImageBuffer | None,
                cfg: EvalConfig) -> tuple[BinaryMask, ImageBuffer, list[str]]:
        raise NotImplementedError

    def mask_id(self, image_id: str, cfg: EvalConfig) -> str:
        return f"m1-{derive_seed(cfg.run_seed, image_id, 'm1'):016x}"


class BackendSource(FirstPassSource):
    def __init__(self, backend: bk.InpaintBackend, name: str):
        self.backend = backend
        self.name = name
        self.f1_label = name

    def produce(self, image_id, original, cfg):
        m1_seed = derive_seed(cfg.run_seed, image_id, "m1")
        f1_seed = derive_seed(cfg.run_seed, image_id, self.name, "f1")
        return first_pass(original, cfg, self.backend, m1_seed, f1_seed)


class PrecomputedSource(FirstPassSource):
    """Loads <id>.png / <id>_mask.png pairs produced by an external method."""

    needs_original = False

    def __init__(self, directory: str, name: str):
        self.directory = Path(directory)
        self.name = name
        self.f1_label = name

    def list_ids(self) -> list[str]:
        ids = sorted(p.stem for p in self.directory.glob("*.png")
                     if not p.stem.endswith("_mask"))
        return ids

    def produce(self, image_id, original, cfg):
        x1 = load_image(self.directory / f"{image_id}.png")
        m1 = load_mask(self.directory / f"{image_id}_mask.png")
        return m1, x1, []

    def mask_id(self, image_id, cfg):
        return f"{image_id}_mask.png"


class BlendSource(FirstPassSource):
    """Synthetic bad inpainting: masked region filled from a donor image."""

    name = "blend"
    f1_label = "degrade-blend"

    def __init__(self, corpus_ids: list[str], corpus_dir: str):
        self.corpus_ids = corpus_ids
        self.corpus_dir = Path(corpus_dir)

    def produce(self, image_id, original, cfg):
        m1_seed = derive_seed(cfg.run_seed, image_id, "m1")
        params = RandomMaskParams.for_size(original.width, original.height,
                                           target_ratio_band=cfg.first_mask_band)
        m1 = random_mask(original.width, original.height, params, m1_seed)
        donor_root = cfg.donor_seed if cfg.donor_seed is not None else cfg.run_seed
        others = [i for i in self.corpus_ids if i != image_id]
        if not others:
            raise BadParams("blend degradation needs at least two corpus images")
        rng = np.random.Generator(np.random.Philox(derive_seed(donor_root, "donor", image_id)))
        donor_id = others[int(rng.integers(len(others)))]
        donor = load_image(self.corpus_dir / f"{donor_id}.png")
        return m1, bk.degrade_blend(original, m1, donor), [f"donor:{donor_id}"]


class NoiseSource(FirstPassSource):
    """Synthetic bad inpainting: blurred noise added to the masked region."""

    name = "noise"
    f1_label = "degrade-noise"

    def produce(self, image_id, original, cfg):
        m1_seed = derive_seed(cfg.run_seed, image_id, "m1")
        params = RandomMaskParams.for_size(original.width, original.height,
                                           target_ratio_band=cfg.first_mask_band)
        m1 = random_mask(original.width, original.height, params, m1_seed)
        noise_params = bk.DegradeNoiseParams(cfg.noise_sigma, cfg.noise_down_factor)
        noise_seed = derive_seed(cfg.run_seed, image_id, "degrade-noise")
        return m1, bk.degrade_noise(original, m1, noise_params, noise_seed), []


# --- corpus ----------------------------------------------------------------------


def list_corpus_ids(corpus_dir: str | Path) -> list[str]:
    return sorted(p.stem for p in Path(corpus_dir).glob("*.png"))


def _sources_for_evaluate(cfg: EvalConfig) -> list[FirstPassSource]:
    sources: list[FirstPassSource] = []
    for i, spec in enumerate(cfg.first_backends):
        name = backend_display_name(spec, i)
        if spec.get("kind") == "precomputed":
            directory = spec.get("dir")
            if not directory:
                raise BadParams("precomputed backend spec needs a 'dir'")
            sources.append(PrecomputedSource(directory, name))
        else:
            sources.append(BackendSource(bk.make_backend(spec), name))
    return sources


def _resolve_image_ids(cfg: EvalConfig, sources: list[FirstPassSource]) -> list[str]:
    if cfg.corpus_dir:
        ids = list_corpus_ids(cfg.corpus_dir)
        if not ids:
            raise EmptyCorpus(f"no PNG images in corpus dir {cfg.corpus_dir!r}")
        return ids
    precomputed = [s for s in sources if isinstance(s, PrecomputedSource)]
    if len(precomputed) != len(sources):
        raise BadParams("corpus_dir is required unless every first backend is precomputed")
    needs_original = any(o is not Objective.FIRST_SECOND for o in cfg.objectives)
    if needs_original:
        raise MissingOriginal("original-* objectives need a corpus_dir with originals")
    ids = precomputed[0].list_ids()
    if not ids:
        raise EmptyCorpus(f"no precomputed images in {precomputed[0].directory}")
    return ids


# --- run -------------------------------------------------------------------------


def _evaluate_one(cfg: EvalConfig, source: FirstPassSource, image_id: str,
                  second_backend: bk.InpaintBackend,
                  perceptual: PerceptualBackend | None) -> dict:
    started = time.monotonic()
    record = {
        "image_id": image_id,
        "method": source.name,
        "status": "ok",
        "error": None,
        "error_kind": None,
        "sub_metric": cfg.sub_metric.value,
        "f1": source.f1_label,
        "f2": second_backend.name,
        "flags": [],
        "first_mask_id": None,
        "first_mask_ratio": None,
        "second_mask_ids": None,
        "sub_scores": None,
        "consistency": None,
        "objectives": None,
    }
    try:
        original = None
        needs_original = source.needs_original or any(
            o is not Objective.FIRST_SECOND for o in cfg.objectives)
        if needs_original:
            if not cfg.corpus_dir:
                raise MissingOriginal(
                    f"method {source.name!r} needs originals but no corpus_dir is set")
            original = load_image(Path(cfg.corpus_dir) / f"{image_id}.png")
        m1, x1, flags = source.produce(image_id, original, cfg)
        record["flags"] = flags
        record["first_mask_id"] = source.mask_id(image_id, cfg)
        record["first_mask_ratio"] = mask_ratio(m1)
        keep_seconds = Objective.ORIG_SECOND in cfg.objectives
        result = consistency_score(
            x1, m1, cfg, second_backend, perceptual,
            seed_for_pass=lambda k: derive_seed(cfg.run_seed, image_id, source.name, k),
            keep_images=keep_seconds,
        )
        record["second_mask_ids"] = result.mask_ids
        record["sub_scores"] = result.sub_scores
        record["consistency"] = result.value
        record["objectives"] = objective_scores(
            original, x1, result.second_images, cfg.sub_metric, perceptual,
            cfg.objectives, first_second_scores=result.sub_scores)
    except Exception as exc:  # per-record isolation; the run continues
        if isinstance(exc, (KeyboardInterrupt, SystemExit)):
            raise
        record["status"] = "failed"
        record["error"] = str(exc)
        record["error_kind"] = type(exc).__name__
        log.warning("record (%s, %s) failed: %s", image_id, source.name, exc)
    if cfg.record_timing:
        record["timing_ms"] = round((time.monotonic() - started) * 1000.0, 3)
    return record


def _run_sources(cfg: EvalConfig, sources: list[FirstPassSource],
                 image_ids: list[str]) -> list[dict]:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / RECORDS_FILENAME

    done: dict[tuple[str, str], dict] = {}
    if cfg.resume and records_path.exists():
        previous, corrupt = read_records(records_path, tolerant=True)
        if corrupt:
            log.warning("resume: ignored %d corrupt lines", corrupt)
        for rec in previous:
            # failed records are retried; successful ones are kept verbatim
            if rec.get("status") == "ok":
                done[(rec["image_id"], rec["method"])] = rec
        log.info("resume: %d completed records carried over", len(done))

    perceptual = (make_perceptual_backend(cfg.perceptual_model)
                  if cfg.sub_metric is SubMetric.PERCEPTUAL else None)
    second = bk.make_backend(cfg.second_backend or {})

    todo = [(img, src) for img in image_ids for src in sources
            if (img, src.name) not in done]
    records = list(done.values())
    write_lock = Lock()
    mode = "a" if (cfg.resume and records_path.exists()) else "w"
    with open(records_path, mode, encoding="utf-8") as fp:
        def handle(rec: dict) -> None:
            with write_lock:
                records.append(rec)
                fp.write(record_to_line(rec) + "\n")
                fp.flush()

        if cfg.effective_workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=cfg.effective_workers) as pool:
                futures = [pool.submit(_evaluate_one, cfg, src, img, second, perceptual)
                           for img, src in todo]
                for fut in as_completed(futures):
                    handle(fut.result())
        else:
            for img, src in todo:
                handle(_evaluate_one(cfg, src, img, second, perceptual))

    records.sort(key=lambda r: (r["image_id"], r["method"]))
    tmp = records_path.with_suffix(".jsonl.tmp")
    with open(tmp, "w", encoding="utf-8") as fp:
        for rec in records:
            fp.write(record_to_line(rec) + "\n")
    tmp.replace(records_path)

    if records and not any(r["status"] == "ok" for r in records):
        raise AllBackendsFailed(
            f"all {len(records)} records failed; first error: {records[0]['error']}")
    return records


def run(cfg: EvalConfig) -> list[dict]:
    """Evaluate every configured first backend over the corpus.

    Returns the sorted records; they are also written incrementally to
    <output_dir>/records.jsonl (resumable), then rewritten in stable order.
    """
    sources = _sources_for_evaluate(cfg)
    image_ids = _resolve_image_ids(cfg, sources)
    log.info("evaluating %d methods over %d images (K=%d, metric=%s)",
             len(sources), len(image_ids), cfg.k, cfg.sub_metric.value)
    return _run_sources(cfg, sources, image_ids)


def validate_synth(cfg: EvalConfig) -> dict:
    """Score natural vs synthesized-bad first inpaintings (blend / noise).

    A sound consistency metric gives the natural variant the best mean
    score. Returns a summary dict with per-variant means and the ordering
    verdict; per-record details land in records.jsonl like a normal run.
    """
    if not cfg.corpus_dir:
        raise MissingOriginal("validate-synth needs a corpus_dir with originals")
    image_ids = list_corpus_ids(cfg.corpus_dir)
    if not image_ids:
        raise EmptyCorpus(f"no PNG images in corpus dir {cfg.corpus_dir!r}")
    real = [s for s in cfg.first_backends if s.get("kind") != "precomputed"]
    if not real:
        raise BadParams("validate-synth needs a non-precomputed first backend")
    natural = BackendSource(bk.make_backend(real[0]), "natural")
    natural.f1_label = backend_display_name(real[0], 0)
    sources: list[FirstPassSource] = [
        natural,
        BlendSource(image_ids, cfg.corpus_dir),
        NoiseSource(),
    ]
    records = _run_sources(cfg, sources, image_ids)
    return summarize_synth(records, cfg)


def summarize_synth(records: list[dict], cfg: EvalConfig) -> dict:
    """Aggregate synth-run records into per-variant means and a verdict."""
    means: dict[str, float | None] = {}
    for variant in SYNTH_VARIANTS:
        vals = [r["consistency"] for r in records
                if r["method"] == variant and r["status"] == "ok"
                and r["consistency"] is not None and math.isfinite(r["consistency"])]
        means[variant] = (math.fsum(vals) / len(vals)) if vals else None
    nat, blend, noise = means["natural"], means["blend"], means["noise"]
    better = (lambda a, b: a > b) if cfg.sub_metric.higher_is_better else (lambda a, b: a < b)
    verdict = (nat is not None and blend is not None and noise is not None
               and better(nat, blend) and better(nat, noise))
    return {
        "sub_metric": cfg.sub_metric.value,
        "higher_is_better": cfg.sub_metric.higher_is_better,
        "mean_consistency": means,
        "natural_best": verdict,
        "n_records": len(records),
        "n_failed": sum(1 for r in records if r["status"] != "ok"),
    }

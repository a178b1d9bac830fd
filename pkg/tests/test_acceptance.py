"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines
(they also land in captured output on failure). The long direction-check
builds a 20-image 128px corpus and runs the full pipeline; everything is
seeded, so results are stable across machines and runs.
"""

import itertools
import json
import math
import time
import warnings

import numpy as np

from reinpaint.backends import JitterDiffusionBackend, builtin_diffusion, inpaint
from reinpaint.cli import main as cli_main
from reinpaint.config import EvalConfig, Objective
from reinpaint.image import BinaryMask, ImageBuffer, apply_mask
from reinpaint.masks import (PatchMaskParams, RandomMaskParams,
                             compose_second_mask, mask_ratio, patch_mask,
                             random_mask)
from reinpaint.metrics import BuiltinPerceptual, SubMetric, mse, psnr, ssim
from reinpaint.pipeline import run, validate_synth
from reinpaint.seeds import derive_seed

from conftest import build_corpus, random_image, smooth_image
from test_metrics import mse_oracle, ssim_oracle


def report_line(name: str, ok: bool, detail: str = "") -> None:
    state = "PASS" if ok else "FAIL"
    print(f"{state} {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def const_image(value: float, size: int = 32) -> ImageBuffer:
    return ImageBuffer(np.full((size, size, 3), value))


class TestAcceptance:
    def test_01_metric_oracles(self):
        t0 = time.monotonic()
        p = psnr(const_image(0.5), const_image(0.25))
        assert abs(p - 12.0412) <= 1e-4, p
        x = random_image(32, 32, 1)
        assert abs(ssim(x, x) - 1.0) <= 1e-9
        s = ssim(const_image(0.5), const_image(0.25))
        assert abs(s - 0.80007) <= 1e-4, s
        worst_mse = worst_ssim = 0.0
        for i in range(50):
            a = random_image(32, 32, 1000 + i)
            b = random_image(32, 32, 2000 + i)
            worst_mse = max(worst_mse, abs(mse(a, b) - mse_oracle(a, b)))
            worst_ssim = max(worst_ssim, abs(ssim(a, b) - ssim_oracle(a, b)))
        elapsed = time.monotonic() - t0
        ok = worst_mse <= 1e-6 and worst_ssim <= 1e-6 and elapsed < 5.0
        report_line("metric-oracles", ok,
                    f"psnr={p:.5f} ssim_const={s:.5f} worst_mse_err={worst_mse:.2e} "
                    f"worst_ssim_err={worst_ssim:.2e} runtime={elapsed:.1f}s")

    def test_02_mask_statistics(self):
        t0 = time.monotonic()
        details = []
        ok = True
        for prob in (0.2, 0.4, 0.6):
            ratios = [mask_ratio(patch_mask(512, 512, PatchMaskParams(32, prob), s))
                      for s in range(100)]
            mean = float(np.mean(ratios))
            details.append(f"P={prob}: mean={mean:.4f}")
            ok = ok and abs(mean - prob) <= 0.01
        for band in ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6)):
            params = RandomMaskParams.for_size(512, 512, target_ratio_band=band)
            for seed in range(4):
                r = mask_ratio(random_mask(512, 512, params, seed))
                ok = ok and band[0] <= r <= band[1]
        elapsed = time.monotonic() - t0
        ok = ok and elapsed < 10.0
        report_line("mask-statistics", ok,
                    "; ".join(details) + f"; banded in-band; runtime={elapsed:.1f}s")

    def test_03_composition_identities(self):
        rng = np.random.default_rng(3)
        first = BinaryMask(rng.random((16, 16)) > 0.5)
        patch = BinaryMask(rng.random((16, 16)) > 0.5)
        ok = compose_second_mask(BinaryMask.all_keep(16, 16), first).keep.all()
        ok = ok and np.array_equal(
            compose_second_mask(patch, BinaryMask.all_keep(16, 16)).keep, patch.keep)
        ok = ok and compose_second_mask(patch, BinaryMask.all_masked(16, 16)).keep.all()
        for _ in range(1000):
            p = BinaryMask(rng.random((12, 12)) > rng.random())
            f = BinaryMask(rng.random((12, 12)) > rng.random())
            out = compose_second_mask(p, f)
            if (out.masked & f.masked).any():
                ok = False
                break
        report_line("composition-identities", ok,
                    "3 identities exact; 1000 random pairs never re-mask")

    def test_04_echo_degenerate(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_corpus(corpus, count=3, size=32, seed=60)
        cfg = EvalConfig(
            output_dir=str(tmp_path / "out"),
            corpus_dir=str(corpus),
            first_backends=[{"kind": "builtin", "variant": "mean-fill"}],
            second_backend={"kind": "builtin", "variant": "echo"},
            first_mask_band=(0.1, 0.5),
            second_mask_ratio=0.0,  # empty second masks: echo returns the image intact
            k=4, patch_size=8,
            sub_metric=SubMetric.MSE,
            objectives=(Objective.FIRST_SECOND,),
            run_seed=61, workers=1,
        )
        records = run(cfg)
        ok = all(r["status"] == "ok" and r["consistency"] == 0.0 for r in records)

        # permutation invariance of the K-mean on a nonzero run
        cfg2 = EvalConfig(
            output_dir=str(tmp_path / "out2"),
            corpus_dir=str(corpus),
            first_backends=[{"kind": "builtin", "variant": "mean-fill"}],
            second_backend={"kind": "builtin", "variant": "mean-fill"},
            first_mask_band=(0.1, 0.5),
            second_mask_ratio=0.4,
            k=4, patch_size=8,
            sub_metric=SubMetric.MSE,
            objectives=(Objective.FIRST_SECOND,),
            run_seed=61, workers=1,
        )
        rec = run(cfg2)[0]
        scores = rec["sub_scores"]
        perm_ok = all(
            math.fsum(perm) / len(perm) == rec["consistency"]
            for perm in itertools.permutations(scores))
        report_line("echo-degenerate", ok and perm_ok,
                    f"D=0 exact on {len(records)} records; "
                    f"K-mean invariant over {math.factorial(len(scores))} permutations")

    def test_05_brute_force_equivalence(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_corpus(corpus, count=1, size=8, seed=70)
        run_seed = 71
        cfg = EvalConfig(
            output_dir=str(tmp_path / "out"),
            corpus_dir=str(corpus),
            first_backends=[{"kind": "builtin", "variant": "mean-fill"}],
            second_backend={"kind": "builtin", "variant": "mean-fill"},
            first_mask_band=(0.1, 0.6),
            second_mask_ratio=0.4,
            k=3, patch_size=4,
            sub_metric=SubMetric.MSE,
            objectives=(Objective.FIRST_SECOND,),
            run_seed=run_seed, workers=1,
        )
        record = run(cfg)[0]

        # straight-line re-implementation: same seed schedule and mask
        # generators, everything else re-coded from scratch; images kept in
        # float32 like the pipeline's rasters, arithmetic in float64
        from reinpaint.image import load_image
        img = load_image(corpus / "img_000.png").pixels.astype(np.float32)
        params = RandomMaskParams.for_size(8, 8, target_ratio_band=(0.1, 0.6))
        m1 = random_mask(8, 8, params, derive_seed(run_seed, "img_000", "m1"))
        k1 = m1.keep

        def naive_mean_fill(px, keep):
            out = (px * keep[:, :, None]).astype(np.float32)
            fill = np.float32(out[keep].astype(np.float64).mean(axis=0))
            for r in range(8):
                for c in range(8):
                    if not keep[r, c]:
                        out[r, c] = fill
            return out

        x1 = naive_mean_fill(img, k1)
        vals = []
        for k in range(1, 4):
            sk = derive_seed(run_seed, "img_000", "mean-fill", k)
            mp = patch_mask(8, 8, PatchMaskParams(4, 0.4), derive_seed(sk, "cells"))
            m2_masked = mp.masked & k1
            x2 = naive_mean_fill(x1, ~m2_masked)
            total = 0.0
            for r in range(8):
                for c in range(8):
                    for ch in range(3):
                        d = float(x1[r, c, ch]) - float(x2[r, c, ch])
                        total += d * d
            vals.append(total / (8 * 8 * 3))
        expected = math.fsum(vals) / 3
        err = abs(record["consistency"] - expected)
        report_line("brute-force-equivalence", err <= 1e-9,
                    f"|pipeline - straight-line| = {err:.2e}")

    def test_06_diffusion_solver(self):
        # dense Laplace oracle on a 16x16 ramp with a 4x4 hole
        w = h = 16
        ramp = np.tile(np.linspace(0.0, 1.0, w)[None, :, None], (h, 1, 3))
        keep = np.ones((h, w), dtype=bool)
        keep[6:10, 6:10] = False
        mask = BinaryMask(keep)
        img = ImageBuffer(ramp)
        masked = apply_mask(img, mask)
        got = builtin_diffusion(masked, mask)

        holes = [(r, c) for r in range(h) for c in range(w) if not keep[r, c]]
        index = {rc: i for i, rc in enumerate(holes)}
        n = len(holes)
        worst = 0.0
        for ch in range(3):
            A = np.zeros((n, n))
            b = np.zeros(n)
            for (r, c), i in index.items():
                neighbors = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                deg = 0
                for (nr, nc) in neighbors:
                    if 0 <= nr < h and 0 <= nc < w:
                        deg += 1
                        if keep[nr, nc]:
                            b[i] += masked.pixels[nr, nc, ch]
                        else:
                            A[i, index[(nr, nc)]] -= 1.0
                A[i, i] += deg
            exact = np.linalg.solve(A, b)
            for (r, c), i in index.items():
                worst = max(worst, abs(float(got.pixels[r, c, ch]) - exact[i]))
        solver_ok = worst <= 1e-3

        # discrete maximum principle on 100 random fixtures
        rng = np.random.default_rng(80)
        principle_ok = True
        for trial in range(100):
            fx = random_image(16, 16, 8000 + trial)
            k = rng.random((16, 16)) > rng.uniform(0.2, 0.8)
            if not k.any():
                continue
            m = BinaryMask(k)
            mk = apply_mask(fx, m)
            out = builtin_diffusion(mk, m)
            if k.all():
                continue
            for ch in range(3):
                lo = mk.pixels[k, ch].min()
                hi = mk.pixels[k, ch].max()
                vals = out.pixels[~k, ch]
                if vals.min() < lo - 1e-6 or vals.max() > hi + 1e-6:
                    principle_ok = False
        report_line("diffusion-solver", solver_ok and principle_ok,
                    f"max |iterative - dense solve| = {worst:.2e}; "
                    f"maximum principle held on 100 fixtures")

    def test_07_synth_direction(self, tmp_path):
        t0 = time.monotonic()
        corpus = tmp_path / "corpus"
        build_corpus(corpus, count=20, size=128, seed=90)
        cfg = EvalConfig(
            output_dir=str(tmp_path / "out"),
            corpus_dir=str(corpus),
            first_backends=[{"kind": "builtin", "variant": "diffusion"}],
            second_backend={"kind": "builtin", "variant": "diffusion"},
            first_mask_band=(0.2, 0.4),
            second_mask_band=(0.2, 0.6),
            k=10, patch_size=16,
            sub_metric=SubMetric.PERCEPTUAL,
            objectives=(Objective.FIRST_SECOND,),
            run_seed=91, workers=1,
            noise_sigma=0.5,
        )
        summary = validate_synth(cfg)
        elapsed = time.monotonic() - t0
        means = summary["mean_consistency"]
        ok = (summary["n_failed"] == 0 and summary["natural_best"]
              and elapsed < 300.0)
        report_line(
            "synth-direction", ok,
            f"natural={means['natural']:.5f} blend={means['blend']:.5f} "
            f"noise={means['noise']:.5f}; runtime={elapsed:.0f}s")

    def test_08_variance_property_soft(self):
        # stability protocol: one image, one first mask, one fixed patch
        # mask; only the stochastic backend's seed varies between runs
        x = smooth_image(64, 64, 95)
        params = RandomMaskParams.for_size(64, 64, target_ratio_band=(0.2, 0.4))
        m1 = random_mask(64, 64, params, derive_seed(96, "m1"))
        mp = patch_mask(64, 64, PatchMaskParams(16, 0.4), derive_seed(96, "mp"))
        m2 = compose_second_mask(mp, m1)
        backend = JitterDiffusionBackend(jitter_sigma=0.05)
        perc = BuiltinPerceptual()
        orig_first = []
        first_second = []
        masked1 = apply_mask(x, m1)
        for s in range(30):
            x1 = inpaint(backend, masked1, m1, derive_seed(97, "f1", s))
            orig_first.append(perc.distance(x, x1))
            masked2 = apply_mask(x1, m2)
            per_k = [perc.distance(x1, inpaint(backend, masked2, m2,
                                               derive_seed(97, "f2", s, k)))
                     for k in range(10)]
            first_second.append(math.fsum(per_k) / len(per_k))
        of_std = float(np.std(orig_first))
        fs_std = float(np.std(first_second))
        detail = (f"first-second std={fs_std:.6f} vs orig-first std={of_std:.6f} "
                  f"over 30 seeds")
        if fs_std <= of_std:
            report_line("variance-property", True, detail)
        else:
            warnings.warn(f"variance-property soft failure: {detail}")
            print(f"WARN variance-property (soft): {detail}")

    def test_09_determinism(self, tmp_path):
        corpus = tmp_path / "corpus"
        build_corpus(corpus, count=2, size=32, seed=98)
        out = tmp_path / "out"
        config = {
            "corpus_dir": str(corpus),
            "output_dir": str(out),
            "run_seed": 99,
            "k": 3,
            "patch_size": 8,
            "sub_metric": "mse",
            "objectives": ["first-second"],
            "first_mask": {"band": [0.1, 0.5]},
            "second_mask": {"ratio": 0.4},
            "first_backends": [{"kind": "builtin", "variant": "mean-fill"},
                               {"kind": "builtin", "variant": "diffusion"}],
            "second_backend": {"kind": "builtin", "variant": "diffusion"},
            "workers": 2,
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(config))
        assert cli_main(["evaluate", "--config", str(cfg_path)]) == 0
        artifacts = ["records.jsonl", "report.json", "report.csv", "report.txt"]
        first = {name: (out / name).read_bytes() for name in artifacts}
        assert cli_main(["evaluate", "--config", str(cfg_path)]) == 0
        same = {name: first[name] == (out / name).read_bytes() for name in artifacts}
        report_line("determinism", all(same.values()),
                    "byte-identical: " + ", ".join(artifacts))

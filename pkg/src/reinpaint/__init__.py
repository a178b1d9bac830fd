"""Reference-free image inpainting evaluation via re-inpainting self-consistency."""

__version__ = "0.1.0"

from .config import EvalConfig, Objective
from .image import BinaryMask, ImageBuffer, apply_mask, load_image, load_mask, \
    resize_bilinear, save_image, save_mask, to_grayscale
from .masks import (PatchMaskParams, RandomMaskParams, compose_second_mask,
                    mask_ratio, patch_mask, random_mask)
from .metrics import (BuiltinPerceptual, SubMetric, TorchscriptPerceptual, mse,
                      perceptual, psnr, score, ssim)
from .backends import (DegradeNoiseParams, DiffusionParams, EchoBackend,
                       DiffusionBackend, HttpBackend, InpaintBackend,
                       JitterDiffusionBackend, MeanFillBackend, SubprocessBackend,
                       builtin_diffusion, builtin_mean_fill, degrade_blend,
                       degrade_noise, inpaint, make_backend)
from .pipeline import (consistency_score, first_pass, objective_scores,
                       read_records, run, validate_synth)
from .report import aggregate, emit, histogram, selection_frequency

__all__ = [
    "__version__",
    "EvalConfig", "Objective",
    "BinaryMask", "ImageBuffer", "apply_mask", "load_image", "load_mask",
    "resize_bilinear", "save_image", "save_mask", "to_grayscale",
    "PatchMaskParams", "RandomMaskParams", "compose_second_mask", "mask_ratio",
    "patch_mask", "random_mask",
    "BuiltinPerceptual", "SubMetric", "TorchscriptPerceptual", "mse",
    "perceptual", "psnr", "score", "ssim",
    "DegradeNoiseParams", "DiffusionParams", "EchoBackend", "DiffusionBackend",
    "HttpBackend", "InpaintBackend", "JitterDiffusionBackend", "MeanFillBackend",
    "SubprocessBackend", "builtin_diffusion", "builtin_mean_fill",
    "degrade_blend", "degrade_noise", "inpaint", "make_backend",
    "consistency_score", "first_pass", "objective_scores", "read_records",
    "run", "validate_synth",
    "aggregate", "emit", "histogram", "selection_frequency",
]

"""Run configuration: the EvalConfig record, config file parsing, overrides.

The config file (TOML or JSON) is the source of truth for a run; CLI flags
override individual keys. An optional [matrix] table maps dotted key paths
to lists of values and expands into the cross product of runs, which is how
ratio-grid sweeps are expressed declaratively.
"""

from __future__ import annotations

import enum
import itertools
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import BadParams, ConfigError
from .metrics import SubMetric


class Objective(enum.Enum):
    """Which pair of images the sub-metric compares."""

    ORIG_FIRST = "orig-first"
    ORIG_SECOND = "orig-second"
    FIRST_SECOND = "first-second"


@dataclass
class EvalConfig:
    output_dir: str
    first_backends: list[dict]
    second_backend: dict | None = None
    corpus_dir: str | None = None
    first_mask_band: tuple[float, float] = (0.2, 0.4)
    second_mask_ratio: float | None = 0.4
    second_mask_band: tuple[float, float] | None = None
    k: int = 10
    patch_size: int = 32
    sub_metric: SubMetric = SubMetric.PERCEPTUAL
    perceptual_model: str | None = None
    objectives: tuple[Objective, ...] = (Objective.FIRST_SECOND,)
    run_seed: int = 0
    workers: int = 0  # 0 = number of available cores
    resume: bool = False
    record_timing: bool = False  # opt-in: wall-clock per record breaks byte reproducibility
    noise_sigma: float = 0.5
    noise_down_factor: int = 16
    donor_seed: int | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise BadParams("k must be >= 1")
        if self.patch_size < 1:
            raise BadParams("patch_size must be >= 1")
        if not self.objectives:
            raise BadParams("at least one objective is required")
        for band in (self.first_mask_band, self.second_mask_band):
            if band is not None and not (0.0 <= band[0] <= band[1] <= 1.0):
                raise BadParams(f"mask band {band} must be an interval inside [0, 1]")
        if self.second_mask_band is None:
            if self.second_mask_ratio is None:
                raise BadParams("second mask needs a ratio or a band")
            if not 0.0 <= self.second_mask_ratio <= 1.0:
                raise BadParams("second_mask_ratio must lie in [0, 1]")
        if not self.first_backends:
            raise BadParams("at least one first backend is required")
        names = [_backend_name(spec, i) for i, spec in enumerate(self.first_backends)]
        if len(set(names)) != len(names):
            raise BadParams(f"first backend names must be unique, got {names}")
        if self.workers < 0:
            raise BadParams("workers must be >= 0")

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        """JSON-friendly echo of the resolved configuration."""
        return {
            "output_dir": self.output_dir,
            "corpus_dir": self.corpus_dir,
            "first_backends": self.first_backends,
            "second_backend": self.second_backend,
            "first_mask": {"band": list(self.first_mask_band)},
            "second_mask": (
                {"band": list(self.second_mask_band)}
                if self.second_mask_band is not None
                else {"ratio": self.second_mask_ratio}
            ),
            "k": self.k,
            "patch_size": self.patch_size,
            "sub_metric": self.sub_metric.value,
            "perceptual_model": self.perceptual_model,
            "objectives": [o.value for o in self.objectives],
            "run_seed": self.run_seed,
            "workers": self.workers,
            "synth": {
                "noise_sigma": self.noise_sigma,
                "noise_down_factor": self.noise_down_factor,
                "donor_seed": self.donor_seed,
            },
        }


def _backend_name(spec: dict, index: int) -> str:
    if not isinstance(spec, dict):
        raise BadParams("backend specs must be mappings")
    if "name" in spec:
        return str(spec["name"])
    if spec.get("kind", "builtin") == "builtin":
        return str(spec.get("variant", "diffusion"))
    if spec.get("kind") == "precomputed":
        return f"precomputed-{index}"
    return f"{spec.get('kind')}-{index}"


def backend_display_name(spec: dict, index: int = 0) -> str:
    return _backend_name(spec, index)


def _as_band(value, key: str) -> tuple[float, float]:
    try:
        lo, hi = float(value[0]), float(value[1])
    except (TypeError, ValueError, IndexError) as exc:
        raise BadParams(f"{key} must be a two-element [lo, hi] list") from exc
    return (lo, hi)


def config_from_dict(raw: dict, output_dir: str | None = None) -> EvalConfig:
    """Validate a parsed config mapping into an EvalConfig."""
    if not isinstance(raw, dict):
        raise BadParams("config root must be a mapping")
    known = {
        "output_dir", "corpus_dir", "first_backends", "second_backend",
        "first_mask", "second_mask", "k", "patch_size", "sub_metric",
        "perceptual_model", "objectives", "run_seed", "workers", "synth",
        "matrix", "record_timing",
    }
    unknown = set(raw) - known
    if unknown:
        raise BadParams(f"unknown config keys: {sorted(unknown)}")

    first_mask = raw.get("first_mask", {})
    second_mask = raw.get("second_mask", {})
    band = _as_band(first_mask.get("band", [0.2, 0.4]), "first_mask.band")
    second_ratio: float | None = None
    second_band: tuple[float, float] | None = None
    if "band" in second_mask:
        second_band = _as_band(second_mask["band"], "second_mask.band")
    else:
        second_ratio = float(second_mask.get("ratio", 0.4))

    metric_name = str(raw.get("sub_metric", "perceptual"))
    try:
        metric = SubMetric(metric_name)
    except ValueError as exc:
        raise BadParams(f"unknown sub_metric {metric_name!r}") from exc

    objective_names = raw.get("objectives", ["first-second"])
    try:
        objectives = tuple(Objective(str(o)) for o in objective_names)
    except ValueError as exc:
        raise BadParams(f"unknown objective in {objective_names!r}") from exc

    synth = raw.get("synth", {})
    out = output_dir or raw.get("output_dir")
    if not out:
        raise BadParams("output_dir is required (config key or --out)")

    return EvalConfig(
        output_dir=str(out),
        corpus_dir=(str(raw["corpus_dir"]) if raw.get("corpus_dir") else None),
        first_backends=list(raw.get("first_backends", [])),
        second_backend=raw.get("second_backend"),
        first_mask_band=band,
        second_mask_ratio=second_ratio,
        second_mask_band=second_band,
        k=int(raw.get("k", 10)),
        patch_size=int(raw.get("patch_size", 32)),
        sub_metric=metric,
        perceptual_model=(str(raw["perceptual_model"]) if raw.get("perceptual_model") else None),
        objectives=objectives,
        run_seed=int(raw.get("run_seed", 0)),
        workers=int(raw.get("workers", 0)),
        record_timing=bool(raw.get("record_timing", False)),
        noise_sigma=float(synth.get("noise_sigma", 0.5)),
        noise_down_factor=int(synth.get("noise_down_factor", 16)),
        donor_seed=(int(synth["donor_seed"]) if synth.get("donor_seed") is not None else None),
    )


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        try:
            return json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid JSON config {path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ImportError:
            import tomli as tomllib
        try:
            return tomllib.loads(data.decode("utf-8"))
        except Exception as exc:
            raise ConfigError(f"invalid TOML config {path}: {exc}") from exc
    raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")


def set_by_path(raw: dict, dotted: str, value) -> None:
    """Assign raw['a']['b'] = value for dotted path 'a.b', creating tables."""
    parts = dotted.split(".")
    node = raw
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[parts[-1]] = value


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply KEY.PATH=VALUE overrides; values parse as JSON, else strings."""
    for item in overrides:
        if "=" not in item:
            raise BadParams(f"override {item!r} must look like key.path=value")
        key, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        set_by_path(raw, key.strip(), value)
    return raw


def expand_matrix(raw: dict) -> list[tuple[str, dict]]:
    """Expand a [matrix] table into (label, config) pairs, cross-product order.

    Without a matrix the original mapping comes back under the empty label.
    """
    matrix = raw.get("matrix")
    if not matrix:
        return [("", {k: v for k, v in raw.items() if k != "matrix"})]
    if not isinstance(matrix, dict) or not all(isinstance(v, list) for v in matrix.values()):
        raise BadParams("matrix must map dotted config keys to lists of values")
    base = {k: v for k, v in raw.items() if k != "matrix"}
    keys = sorted(matrix)
    combos = itertools.product(*(matrix[k] for k in keys))
    expanded = []
    for idx, combo in enumerate(combos):
        variant = json.loads(json.dumps(base))  # deep copy of plain data
        parts = []
        for key, value in zip(keys, combo):
            set_by_path(variant, key, value)
            parts.append(f"{key.split('.')[-1]}={_short(value)}")
        expanded.append((f"run-{idx:03d}-" + "-".join(parts), variant))
    return expanded


def _short(value) -> str:
    if isinstance(value, list):
        return "-".join(_short(v) for v in value)
    return str(value)

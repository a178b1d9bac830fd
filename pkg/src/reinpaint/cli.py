"""Command-line entry point.

Subcommands:

* gen-masks       write brush/box or patch mask PNGs plus a JSON index
* evaluate        run the multi-pass consistency evaluation over a corpus
* validate-synth  compare natural vs synthesized-bad first inpaintings
* report          re-aggregate an existing records file, no inpainting

Exit codes: 0 success, 2 configuration problems, 3 backend problems,
4 file I/O problems. The config file is the source of truth; flags override
individual keys, and a [matrix] table expands into multiple runs.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import (Objective, apply_overrides, config_from_dict, expand_matrix,
                     load_config_file)
from .errors import (BackendError, BadArgs, ConfigError, IoFailure, NoRecords,
                     ReinpaintError)
from .image import save_mask
from .masks import (PatchMaskParams, RandomMaskParams, mask_ratio, patch_mask,
                    random_mask)
from .metrics import SubMetric
from .pipeline import read_records, run, validate_synth
from .report import aggregate, emit, report_text
from .seeds import derive_seed

log = logging.getLogger(__name__)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise BadArgs(f"--size must look like 512x512, got {text!r}") from exc


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(",")
        return float(lo), float(hi)
    except ValueError as exc:
        raise BadArgs(f"--ratio-band must look like 0.2,0.4, got {text!r}") from exc


def cmd_gen_masks(args) -> int:
    w, h = _parse_size(args.size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.count):
        seed = derive_seed(args.seed, "mask", i)
        if args.kind == "patch":
            ratio = args.ratio if args.ratio is not None else 0.4
            mask = patch_mask(w, h, PatchMaskParams(args.patch_size, ratio), seed)
        else:
            band = _parse_band(args.ratio_band) if args.ratio_band else None
            params = RandomMaskParams.for_size(w, h, target_ratio_band=band)
            mask = random_mask(w, h, params, seed)
        name = f"mask_{i:03d}.png"
        save_mask(mask, out_dir / name)
        entries.append({"file": name, "ratio": round(mask_ratio(mask), 6),
                        "seed": seed})
    index = {
        "kind": args.kind,
        "size": [w, h],
        "count": args.count,
        "root_seed": args.seed,
        "masks": entries,
    }
    (out_dir / "index.json").write_text(
        json.dumps(index, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %d masks to %s", args.count, out_dir)
    return 0


def _load_run_config(args) -> list[tuple[str, dict]]:
    raw = load_config_file(args.config)
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"run_seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if getattr(args, "k", None) is not None:
        overrides.append(f"k={args.k}")
    if getattr(args, "metric", None):
        overrides.append(f'sub_metric="{args.metric}"')
    if getattr(args, "objective", None):
        raw["objectives"] = list(args.objective)
    apply_overrides(raw, overrides)
    return expand_matrix(raw)


def _write_manifest(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _run_single(raw: dict, args, out_dir: str, synth: bool) -> int:
    cfg = config_from_dict(raw, output_dir=out_dir)
    cfg.resume = bool(getattr(args, "resume", False))
    if synth:
        if getattr(args, "sigma", None) is not None:
            cfg.noise_sigma = args.sigma
        if getattr(args, "donor_seed", None) is not None:
            cfg.donor_seed = args.donor_seed
    out = Path(cfg.output_dir)
    manifest = {
        "config_path": str(args.config),
        "config": cfg.to_dict(),
        "output_dir": str(out),
        "tool_version": __version__,
        "command": "validate-synth" if synth else "evaluate",
        "started_at": _utcnow(),
        "finished_at": None,
        "exit_status": None,
    }
    _write_manifest(out, manifest)
    try:
        if synth:
            summary = validate_synth(cfg)
            (out / "synth.json").write_text(
                json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
            _print_synth(summary)
            records, _ = read_records(out / "records.jsonl")
        else:
            records = run(cfg)
        report = aggregate(records, cfg.sub_metric.higher_is_better)
        report["config"] = cfg.to_dict()
        report["tool_version"] = __version__
        report["sub_metric"] = cfg.sub_metric.value
        emit(report, out)
        print(report_text(report))
    except BaseException as exc:
        manifest["finished_at"] = _utcnow()
        manifest["exit_status"] = f"error: {type(exc).__name__}"
        _write_manifest(out, manifest)
        raise
    manifest["finished_at"] = _utcnow()
    manifest["exit_status"] = "ok"
    _write_manifest(out, manifest)
    return 0


def _print_synth(summary: dict) -> None:
    means = summary["mean_consistency"]
    fmt = lambda v: "-" if v is None else f"{v:.6f}"
    direction = "higher" if summary["higher_is_better"] else "lower"
    print(f"mean consistency ({summary['sub_metric']}, {direction} is better):")
    for variant in ("natural", "blend", "noise"):
        print(f"  {variant:<8} {fmt(means[variant])}")
    verdict = "natural scores best" if summary["natural_best"] else \
        "WARNING: a synthesized variant scored at least as well as natural"
    print(f"verdict: {verdict}")


def cmd_evaluate(args) -> int:
    variants = _load_run_config(args)
    base_out = args.out
    status = 0
    for label, raw in variants:
        out_dir = base_out or raw.get("output_dir")
        if label:
            if not out_dir:
                raise ConfigError("matrix runs need output_dir (config key or --out)")
            out_dir = str(Path(out_dir) / label)
            log.info("matrix run %s", label)
        status = _run_single(raw, args, out_dir, synth=False)
    return status


def cmd_validate_synth(args) -> int:
    variants = _load_run_config(args)
    if len(variants) > 1:
        raise ConfigError("validate-synth does not support matrix configs")
    label, raw = variants[0]
    return _run_single(raw, args, args.out or raw.get("output_dir"), synth=True)


def cmd_report(args) -> int:
    records_path = Path(args.records)
    if not records_path.exists():
        raise IoFailure(f"records file {records_path} does not exist")
    records, corrupt = read_records(records_path, tolerant=True)
    if corrupt:
        log.warning("ignored %d corrupt record lines", corrupt)
    if not records:
        raise NoRecords(f"no records in {records_path}")
    metrics = {r.get("sub_metric") for r in records if r.get("sub_metric")}
    if len(metrics) != 1:
        raise ConfigError(f"records mix sub-metrics: {sorted(metrics)}")
    metric = SubMetric(metrics.pop())
    report = aggregate(records, metric.higher_is_better)
    report["sub_metric"] = metric.value
    report["tool_version"] = __version__
    report["corrupt_lines"] = corrupt
    out_dir = Path(args.out) if args.out else records_path.parent
    emit(report, out_dir)
    print(report_text(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reinpaint",
        description="Reference-free inpainting evaluation via re-inpainting self-consistency",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-masks", help="generate mask PNGs plus a JSON index")
    g.add_argument("--kind", choices=("normal", "patch"), required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--size", required=True, help="WxH, e.g. 512x512")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--ratio-band", dest="ratio_band",
                   help="lo,hi masked-fraction band (normal masks)")
    g.add_argument("--ratio", type=float, help="per-patch masking probability")
    g.add_argument("--patch-size", dest="patch_size", type=int, default=32)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_masks)

    def add_run_flags(p):
        p.add_argument("--config", required=True, help="TOML or JSON run config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="override run_seed")
        p.add_argument("--workers", type=int, help="worker threads (default: cores)")
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override any config key (repeatable)")

    e = sub.add_parser("evaluate", help="run the consistency evaluation")
    add_run_flags(e)
    e.add_argument("--objective", action="append",
                   choices=[o.value for o in Objective],
                   help="objective(s) to score (repeatable)")
    e.add_argument("--metric", choices=[m.value for m in SubMetric])
    e.add_argument("--k", type=int, help="number of second-pass masks")
    e.add_argument("--resume", action="store_true",
                   help="skip records already present in records.jsonl")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("validate-synth",
                       help="check that synthesized bad inpaintings score worse")
    add_run_flags(s)
    s.add_argument("--sigma", type=float, help="blurred-noise std (default 0.5)")
    s.add_argument("--donor-seed", dest="donor_seed", type=int,
                   help="seed for donor image selection")
    s.set_defaults(func=cmd_validate_synth)

    r = sub.add_parser("report", help="re-aggregate an existing records file")
    r.add_argument("--records", required=True)
    r.add_argument("--out", help="output directory (default: records directory)")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except BackendError as exc:
        log.error("%s", exc)
        return 3
    except IoFailure as exc:
        log.error("%s", exc)
        return 4
    except ReinpaintError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

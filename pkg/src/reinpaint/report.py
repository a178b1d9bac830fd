"""Aggregation of evaluation records into per-method statistics and reports.

aggregate() walks the records once and produces, per method and objective:
mean / std / median over the finite scores, the count of +inf sentinels
(identical-image PSNR), and an equal-width histogram. When every image has
a score for every method it also computes the selection frequency: the
percentage of images on which each method scores best, ties split equally.

Emission is deterministic: identical records give byte-identical JSON (keys
sorted, floats fixed to 6 significant digits), one CSV row per (method,
objective, statistic), and a ranked plain-text table.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import (BadParams, IncompleteGrid, IoFailure, NoFiniteValues,
                     NoRecords)

SCHEMA_VERSION = 1
STAT_KINDS = ("mean", "std", "median", "count", "inf_count")


def histogram(values: list[float], bins: int = 10) -> dict:
    """Equal-width histogram over [min, max]; the last bin is right-closed."""
    if bins < 1:
        raise BadParams("bins must be >= 1")
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        raise NoFiniteValues("histogram needs at least one finite value")
    lo, hi = min(finite), max(finite)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(np.asarray(finite), bins=bins, range=(lo, hi))
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def _stats(values: list[float], sample_std: bool) -> dict:
    # sorted canonical order makes the floating-point sums, and therefore
    # the whole aggregation, invariant to record permutation
    finite = sorted(v for v in values if math.isfinite(v))
    inf_count = sum(1 for v in values if math.isinf(v))
    if not finite:
        return {"mean": None, "std": None, "median": None,
                "count": 0, "inf_count": inf_count, "histogram": None}
    arr = np.asarray(finite, dtype=np.float64)
    ddof = 1 if (sample_std and arr.size > 1) else 0
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=ddof)),
        "median": float(np.median(arr)),
        "count": int(arr.size),
        "inf_count": inf_count,
        "histogram": histogram(finite),
    }


def selection_frequency(scores_by_image: dict[str, dict[str, float]],
                        methods: list[str], higher_is_better: bool) -> dict[str, float]:
    """Percent of images on which each method scores best; ties split equally.

    +inf PSNR counts as best-possible. Every image must carry a score for
    every method, otherwise the comparison would be apples to oranges.
    """
    if not scores_by_image:
        raise IncompleteGrid("no scored images")
    shares: dict[str, list[float]] = {m: [] for m in methods}
    for image_id, per_method in scores_by_image.items():
        missing = [m for m in methods if m not in per_method]
        if missing:
            raise IncompleteGrid(f"image {image_id!r} lacks scores for {missing}")
        vals = {m: per_method[m] for m in methods}
        best = max(vals.values()) if higher_is_better else min(vals.values())
        winners = [m for m, v in vals.items() if v == best]
        for m in winners:
            shares[m].append(1.0 / len(winners))
    n = len(scores_by_image)
    return {m: 100.0 * math.fsum(shares[m]) / n for m in methods}


def aggregate(records: list[dict], higher_is_better: bool,
              sample_std: bool = False) -> dict:
    """Fold records into the per-method report core."""
    ok = [r for r in records if r.get("status") == "ok" and r.get("objectives")]
    if not ok:
        raise NoRecords("no successful records to aggregate")
    methods = sorted({r["method"] for r in records})
    objectives = sorted({obj for r in ok for obj in r["objectives"]})

    method_block: dict[str, dict] = {}
    for m in methods:
        mine = [r for r in ok if r["method"] == m]
        obj_block = {}
        for obj in objectives:
            values = [r["objectives"][obj] for r in mine if obj in r["objectives"]]
            obj_block[obj] = _stats(values, sample_std)
        failures = sum(1 for r in records if r["method"] == m and r["status"] != "ok")
        method_block[m] = {"objectives": obj_block, "failures": failures}

    selection: dict[str, dict | str] = {}
    for obj in objectives:
        grid: dict[str, dict[str, float]] = {}
        for r in ok:
            if obj in r["objectives"]:
                grid.setdefault(r["image_id"], {})[r["method"]] = r["objectives"][obj]
        try:
            selection[obj] = selection_frequency(grid, methods, higher_is_better)
        except IncompleteGrid:
            selection[obj] = "incomplete"

    return {
        "schema_version": SCHEMA_VERSION,
        "higher_is_better": higher_is_better,
        "records_total": len(records),
        "records_ok": len(ok),
        "methods": method_block,
        "objectives": objectives,
        "selection_frequency": selection,
    }


# --- emission ----------------------------------------------------------------


def _round_floats(value):
    """6 significant digits on every float, recursively; infs become strings."""
    if isinstance(value, float):
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        if math.isnan(value):
            return "NaN"
        return float(f"{value:.6g}")
    if isinstance(value, dict):
        return {k: _round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v) for v in value]
    return value


def report_json_text(report: dict) -> str:
    return json.dumps(_round_floats(report), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def report_csv_text(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "objective", "statistic", "value"])
    for method in sorted(report["methods"]):
        block = report["methods"][method]["objectives"]
        for obj in sorted(block):
            stats = block[obj]
            for kind in STAT_KINDS:
                v = stats[kind]
                if isinstance(v, float):
                    v = f"{v:.6g}"
                writer.writerow([method, obj, kind, "" if v is None else v])
    return buf.getvalue()


def report_text(report: dict) -> str:
    """Ranked per-objective tables, best method first."""
    hib = report["higher_is_better"]
    lines = []
    direction = "higher is better" if hib else "lower is better"
    lines.append(f"records: {report['records_ok']} ok / {report['records_total']} total")
    for obj in report["objectives"]:
        lines.append("")
        lines.append(f"== {obj} ({direction}) ==")
        rows = []
        for method, block in report["methods"].items():
            stats = block["objectives"][obj]
            sel = report["selection_frequency"].get(obj)
            sel_pct = sel.get(method) if isinstance(sel, dict) else None
            rows.append((method, stats, sel_pct))

        def sort_key(row):
            mean = row[1]["mean"]
            if mean is None:
                return math.inf
            return -mean if hib else mean

        rows.sort(key=sort_key)
        header = f"{'rank':<5}{'method':<20}{'mean':>10}{'std':>10}{'median':>10}{'n':>6}{'inf':>5}{'sel%':>8}"
        lines.append(header)
        for rank, (method, stats, sel_pct) in enumerate(rows, start=1):
            fmt = lambda v: "-" if v is None else f"{v:.4f}"
            lines.append(
                f"{rank:<5}{method:<20}{fmt(stats['mean']):>10}{fmt(stats['std']):>10}"
                f"{fmt(stats['median']):>10}{stats['count']:>6}{stats['inf_count']:>5}"
                f"{('-' if sel_pct is None else f'{sel_pct:.1f}'):>8}"
            )
    lines.append("")
    return "\n".join(lines)


def emit(report: dict, out_dir: str | Path,
         formats: tuple[str, ...] = ("json", "csv", "text")) -> dict[str, Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths: dict[str, Path] = {}
        if "json" in formats:
            paths["json"] = out_dir / "report.json"
            paths["json"].write_text(report_json_text(report), encoding="utf-8")
        if "csv" in formats:
            paths["csv"] = out_dir / "report.csv"
            paths["csv"].write_text(report_csv_text(report), encoding="utf-8")
        if "text" in formats:
            paths["text"] = out_dir / "report.txt"
            paths["text"].write_text(report_text(report), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out_dir}: {exc}") from exc
    return paths

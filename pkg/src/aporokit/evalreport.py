"""Metrics and report tables: accuracy plus support-weighted P/R/F1,
per-class breakdowns, per-slice (region/topic) scores, seed averaging, the
region-restricted training ablation, and table emission.

Per-class precision or recall with an empty denominator is defined as 0 and
flagged, so weighted averages stay total. Support weights always come from
the gold labels.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .bench import DatasetRow, DatasetSplit
from .annotation.store import LABELS


class EvalError(Exception):
    pass


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    zero_division: bool = False


@dataclass
class EvalReport:
    model_id: str
    seeds: list[int]
    n: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict[str, ClassMetrics]
    per_region: dict[str, dict] = field(default_factory=dict)
    per_topic: dict[str, dict] = field(default_factory=dict)
    parse_failure_count: int = 0
    gold_fingerprint: str = ""
    spread: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "seeds": self.seeds,
            "n": self.n,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": {
                label: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "zero_division": m.zero_division,
                }
                for label, m in self.per_class.items()
            },
            "per_region": self.per_region,
            "per_topic": self.per_topic,
            "parse_failure_count": self.parse_failure_count,
            "gold_fingerprint": self.gold_fingerprint,
            "spread": self.spread,
            "metadata": self.metadata,
        }


def gold_fingerprint(ids: list[str], gold: list[str]) -> str:
    material = "\n".join(f"{i}\t{g}" for i, g in zip(ids, gold))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]


def weighted_metrics(gold: list[str], pred: list[str], labels: list[str] | None = None) -> dict:
    """Accuracy and support-weighted precision/recall/F1 plus the per-class
    table. Classes with no predictions or no gold instances score 0 on the
    undefined metric and are flagged."""
    if len(gold) != len(pred):
        raise EvalError("gold and pred must have equal length")
    if not gold:
        raise EvalError("empty label vectors")
    if labels is None:
        labels = sorted(set(gold) | set(pred))
    n = len(gold)
    per_class: dict[str, ClassMetrics] = {}
    for label in labels:
        tp = sum(1 for g, p in zip(gold, pred) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold, pred) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold, pred) if g == label and p != label)
        support = tp + fn
        zero = False
        if tp + fp == 0:
            precision, zero = 0.0, True
        else:
            precision = tp / (tp + fp)
        if support == 0:
            recall, zero = 0.0, True
        else:
            recall = tp / support
        if precision + recall == 0:
            f1 = 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
        per_class[label] = ClassMetrics(precision, recall, f1, support, zero)
    accuracy = sum(1 for g, p in zip(gold, pred) if g == p) / n
    weighted = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    for label in labels:
        weight = per_class[label].support / n
        weighted["precision"] += weight * per_class[label].precision
        weighted["recall"] += weight * per_class[label].recall
        weighted["f1"] += weight * per_class[label].f1
    return {
        "n": n,
        "accuracy": accuracy,
        "precision": weighted["precision"],
        "recall": weighted["recall"],
        "f1": weighted["f1"],
        "per_class": per_class,
    }


def build_report(
    model_id: str,
    ids: list[str],
    gold: list[str],
    pred: list[str],
    seed: int | None = None,
    regions: dict[str, str] | None = None,
    topics: dict[str, object] | None = None,
    parse_flags: list[bool] | None = None,
    min_support: int = 1,
) -> EvalReport:
    metrics = weighted_metrics(gold, pred, labels=list(LABELS))
    report = EvalReport(
        model_id=model_id,
        seeds=[seed] if seed is not None else [],
        n=metrics["n"],
        accuracy=metrics["accuracy"],
        precision=metrics["precision"],
        recall=metrics["recall"],
        f1=metrics["f1"],
        per_class=metrics["per_class"],
        parse_failure_count=sum(1 for f in (parse_flags or []) if f),
        gold_fingerprint=gold_fingerprint(ids, gold),
    )
    if regions is not None:
        report.per_region = slice_report(gold, pred, [regions[i] for i in ids], min_support=min_support)
    if topics is not None:
        report.per_topic = slice_report(
            gold, pred, [str(topics[i]) for i in ids], min_support=min_support
        )
    return report


def slice_report(
    gold: list[str], pred: list[str], slices: list[str | None], min_support: int = 1
) -> dict[str, dict]:
    """Support-weighted F1 within each slice; thin slices are flagged."""
    if any(s is None or s == "" for s in slices):
        raise EvalError("every item must carry a slice tag")
    if not (len(gold) == len(pred) == len(slices)):
        raise EvalError("gold/pred/slices must align")
    out: dict[str, dict] = {}
    for value in sorted(set(slices)):
        idx = [i for i, s in enumerate(slices) if s == value]
        sub = weighted_metrics([gold[i] for i in idx], [pred[i] for i in idx], labels=list(LABELS))
        out[value] = {
            "f1": sub["f1"],
            "accuracy": sub["accuracy"],
            "support": len(idx),
            "low_support": len(idx) < min_support,
            "per_class_f1": {label: m.f1 for label, m in sub["per_class"].items()},
        }
    return out


def seed_average(reports: list[EvalReport]) -> EvalReport:
    """Arithmetic mean over per-seed reports sharing one gold set and model;
    per-metric spread (max - min) is recorded alongside."""
    if not reports:
        raise EvalError("no reports to average")
    first = reports[0]
    for report in reports[1:]:
        if report.gold_fingerprint != first.gold_fingerprint:
            raise EvalError("reports disagree on the gold set")
        if report.model_id != first.model_id:
            raise EvalError("reports come from different models")

    def mean(values: list[float]) -> float:
        return sum(values) / len(values)

    def spread(values: list[float]) -> float:
        return max(values) - min(values)

    top = {m: [getattr(r, m) for r in reports] for m in ("accuracy", "precision", "recall", "f1")}
    per_class = {}
    for label in first.per_class:
        per_class[label] = ClassMetrics(
            precision=mean([r.per_class[label].precision for r in reports]),
            recall=mean([r.per_class[label].recall for r in reports]),
            f1=mean([r.per_class[label].f1 for r in reports]),
            support=first.per_class[label].support,
            zero_division=any(r.per_class[label].zero_division for r in reports),
        )
    per_region: dict[str, dict] = {}
    for region in first.per_region:
        per_region[region] = {
            "f1": mean([r.per_region[region]["f1"] for r in reports]),
            "accuracy": mean([r.per_region[region]["accuracy"] for r in reports]),
            "support": first.per_region[region]["support"],
            "low_support": first.per_region[region]["low_support"],
            "per_class_f1": {
                label: mean([r.per_region[region]["per_class_f1"][label] for r in reports])
                for label in first.per_region[region]["per_class_f1"]
            },
        }
    per_topic: dict[str, dict] = {}
    for topic in first.per_topic:
        per_topic[topic] = {
            "f1": mean([r.per_topic[topic]["f1"] for r in reports]),
            "accuracy": mean([r.per_topic[topic]["accuracy"] for r in reports]),
            "support": first.per_topic[topic]["support"],
            "low_support": first.per_topic[topic]["low_support"],
            "per_class_f1": {
                label: mean([r.per_topic[topic]["per_class_f1"][label] for r in reports])
                for label in first.per_topic[topic]["per_class_f1"]
            },
        }
    return EvalReport(
        model_id=first.model_id,
        seeds=sorted(s for r in reports for s in r.seeds),
        n=first.n,
        accuracy=mean(top["accuracy"]),
        precision=mean(top["precision"]),
        recall=mean(top["recall"]),
        f1=mean(top["f1"]),
        per_class=per_class,
        per_region=per_region,
        per_topic=per_topic,
        parse_failure_count=sum(r.parse_failure_count for r in reports),
        gold_fingerprint=first.gold_fingerprint,
        spread={m: spread(v) for m, v in top.items()},
        metadata=dict(first.metadata),
    )


def region_ablation(
    rows: list[DatasetRow],
    split: DatasetSplit,
    adapter_factory,
    seeds: list[int],
    regions_kept: tuple[str, ...] = ("NorthAmerica", "Other"),
) -> dict:
    """Train only on rows from regions_kept, evaluate on the full test set,
    and pair per-region scores with the full-training baseline."""
    from .adapters import train_and_predict

    rows_by_id = {r.id: r for r in rows}
    kept_train = [i for i in split.train_ids if rows_by_id[i].region in regions_kept]
    if not kept_train:
        raise EvalError("region filter leaves the training side empty")
    ablated_split = DatasetSplit(
        train_ids=kept_train, test_ids=list(split.test_ids), cut_timestamp=split.cut_timestamp
    )

    def run(split_used: DatasetSplit) -> tuple[dict[int, list[str]], list[EvalReport]]:
        per_seed = train_and_predict(adapter_factory, split_used, rows_by_id, seeds)
        reports = []
        preds = {}
        for seed, pset in per_seed.items():
            regions = {i: rows_by_id[i].region for i in pset.ids}
            reports.append(
                build_report("ablation", pset.ids, pset.gold, pset.pred, seed=seed, regions=regions)
            )
            preds[seed] = pset.pred
        return preds, reports

    baseline_preds, baseline_reports = run(split)
    ablated_preds, ablated_reports = run(ablated_split)
    baseline = seed_average(baseline_reports)
    ablated = seed_average(ablated_reports)

    table_rows = []
    for region in sorted(set(baseline.per_region) | set(ablated.per_region)):
        entry = {"region": region}
        ab = ablated.per_region.get(region)
        if ab:
            entry.update({label: ab["per_class_f1"].get(label, 0.0) for label in LABELS})
            entry["overall_ablated"] = ab["f1"]
        base = baseline.per_region.get(region)
        entry["overall_baseline"] = base["f1"] if base else 0.0
        table_rows.append(entry)
    all_row = {"region": "All"}
    all_row.update({label: ablated.per_class[label].f1 for label in LABELS})
    all_row["overall_ablated"] = ablated.f1
    all_row["overall_baseline"] = baseline.f1
    table_rows.append(all_row)

    return {
        "regions_kept": list(regions_kept),
        "seeds": list(seeds),
        "ablated": ablated.to_dict(),
        "baseline": baseline.to_dict(),
        "table": table_rows,
        "predictions": {
            "baseline": {str(s): p for s, p in baseline_preds.items()},
            "ablated": {str(s): p for s, p in ablated_preds.items()},
        },
    }


def round_half_up(value: float, places: int = 2) -> float:
    quant = Decimal(10) ** -places
    return float(Decimal(repr(value)).quantize(quant, rounding=ROUND_HALF_UP))


def _write_table(path_md: Path, path_csv: Path | None, header: list[str], rows: list[list]) -> None:
    path_md.parent.mkdir(parents=True, exist_ok=True)
    lines = ["| " + " | ".join(header) + " |", "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    path_md.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if path_csv is not None:
        with path_csv.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)


def emit_tables(bundle: dict, out_dir: str | Path, fmt: str = "markdown") -> list[Path]:
    """Write the five report tables (split stats, model results, per-region
    dataset stats, binary results, region ablation). Metrics are rounded to
    two decimals, half-up."""
    if fmt not in ("markdown", "csv"):
        raise EvalError(f"unknown table format {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, header: list[str], rows: list[list]) -> None:
        md = out_dir / f"{name}.md"
        csv_path = out_dir / f"{name}.csv"
        if fmt == "markdown":
            _write_table(md, None, header, rows)
            written.append(md)
        else:
            _write_table(md, csv_path, header, rows)
            written.append(csv_path)

    split_stats = bundle.get("split_stats", {})
    rows = []
    for name in ("train", "test", "overall"):
        counts = split_stats.get(name, {})
        rows.append(
            [name, counts.get("Direct", 0), counts.get("Reporting", 0), counts.get("None", 0),
             sum(counts.get(l, 0) for l in LABELS)]
        )
    emit("table_split", ["subset", "Direct", "Reporting", "None", "Total"], rows)

    rows = []
    for model_id, metrics in bundle.get("results", {}).items():
        rows.append(
            [model_id]
            + [round_half_up(metrics[m]) for m in ("accuracy", "precision", "recall", "f1")]
        )
    emit("table_results", ["model", "Acc.", "P", "R", "F1"], rows)

    rows = []
    for region, counts in bundle.get("region_stats", {}).items():
        rows.append(
            [region, counts.get("Direct", 0), counts.get("Reporting", 0), counts.get("None", 0),
             sum(counts.get(l, 0) for l in LABELS)]
        )
    emit("table_regions", ["region", "Direct", "Reporting", "None", "Total"], rows)

    rows = []
    for model_id, metrics in bundle.get("binary_results", {}).items():
        rows.append(
            [model_id]
            + [round_half_up(metrics[m]) for m in ("accuracy", "precision", "recall", "f1")]
        )
    emit("table_binary", ["model", "Acc.", "P", "R", "F1"], rows)

    rows = []
    for entry in bundle.get("ablation", {}).get("table", []):
        rows.append(
            [
                entry["region"],
                *(round_half_up(entry.get(label, 0.0)) for label in LABELS),
                round_half_up(entry.get("overall_ablated", 0.0)),
                round_half_up(entry.get("overall_baseline", 0.0)),
            ]
        )
    emit(
        "table_ablation",
        ["region", "Direct", "Reporting", "None", "Overall (region-restricted)", "Overall (full training)"],
        rows,
    )
    return written


def save_report(bundle: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8")

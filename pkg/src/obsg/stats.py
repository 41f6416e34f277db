"""Exhaustive dataset statistics and report emission.

Everything is a plain count over the dataset: per-category object and
relation totals, per-image histograms, size-class fractions and the
log-scaled subject-to-object co-occurrence matrix.  JSON round-trips
loss-free; CSV mirrors the two category tables with one count column per
split.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .datamodel import Dataset, SIZE_CLASS_NAMES, size_class
from .errors import ManifestError

SPLIT_ORDER = ("train", "val", "test")


@dataclass(frozen=True)
class StatsReport:
    """Counting summary of one dataset split.

    Histograms map an integer per-image value to the number of images with
    that value; their masses sum to ``num_images``.  ``cooccurrence_log``
    is ``log(1 + count)`` of relations between a subject row and an object
    column, in registry order.
    """

    split: str
    object_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    num_images: int
    object_counts: tuple[int, ...]
    relation_counts: tuple[int, ...]
    objects_per_image: dict[int, int]
    object_categories_per_image: dict[int, int]
    relations_per_image: dict[int, int]
    relation_categories_per_image: dict[int, int]
    size_class_fractions: dict[str, float]
    cooccurrence_log: tuple[tuple[float, ...], ...]


def compute_stats(dataset: Dataset) -> StatsReport:
    """Exhaustive recount of a dataset; an empty dataset gives zeros."""
    registry = dataset.registry
    num_objects = registry.num_objects
    num_relations = registry.num_relations
    object_counts = [0] * num_objects
    relation_counts = [0] * num_relations
    size_counts = {name: 0 for name in SIZE_CLASS_NAMES}
    cooccurrence = [[0] * num_objects for _ in range(num_objects)]
    objects_hist: Counter[int] = Counter()
    object_cats_hist: Counter[int] = Counter()
    relations_hist: Counter[int] = Counter()
    relation_cats_hist: Counter[int] = Counter()
    for scene in dataset.scenes:
        category_of = {obj.id: obj.category for obj in scene.objects}
        for obj in scene.objects:
            object_counts[obj.category] += 1
            size_counts[size_class(obj.box.area)] += 1
        for rel in scene.relations:
            relation_counts[rel.predicate] += 1
            cooccurrence[category_of[rel.subject]][category_of[rel.object]] += 1
        objects_hist[len(scene.objects)] += 1
        object_cats_hist[len({o.category for o in scene.objects})] += 1
        relations_hist[len(scene.relations)] += 1
        relation_cats_hist[len({r.predicate for r in scene.relations})] += 1
    total_objects = sum(object_counts)
    if total_objects > 0:
        fractions = {
            name: size_counts[name] / total_objects for name in SIZE_CLASS_NAMES
        }
    else:
        fractions = {name: 0.0 for name in SIZE_CLASS_NAMES}
    return StatsReport(
        split=dataset.split,
        object_names=registry.object_names,
        relation_names=registry.relation_names,
        num_images=len(dataset.scenes),
        object_counts=tuple(object_counts),
        relation_counts=tuple(relation_counts),
        objects_per_image=dict(sorted(objects_hist.items())),
        object_categories_per_image=dict(sorted(object_cats_hist.items())),
        relations_per_image=dict(sorted(relations_hist.items())),
        relation_categories_per_image=dict(sorted(relation_cats_hist.items())),
        size_class_fractions=fractions,
        cooccurrence_log=tuple(
            tuple(math.log(1 + c) for c in row) for row in cooccurrence
        ),
    )


def _hist_json(hist: dict[int, int]) -> list[list[int]]:
    return [[k, v] for k, v in sorted(hist.items())]


def _hist_from_json(raw: list) -> dict[int, int]:
    return {int(k): int(v) for k, v in raw}


def report_to_json(report: StatsReport) -> str:
    doc = {
        "kind": "stats",
        "split": report.split,
        "object_categories": list(report.object_names),
        "relation_categories": list(report.relation_names),
        "num_images": report.num_images,
        "object_counts": list(report.object_counts),
        "relation_counts": list(report.relation_counts),
        "per_image_histograms": {
            "objects": _hist_json(report.objects_per_image),
            "object_categories": _hist_json(report.object_categories_per_image),
            "relations": _hist_json(report.relations_per_image),
            "relation_categories": _hist_json(report.relation_categories_per_image),
        },
        "size_class_fractions": {
            name: report.size_class_fractions[name] for name in SIZE_CLASS_NAMES
        },
        "cooccurrence_log": [list(row) for row in report.cooccurrence_log],
    }
    return json.dumps(doc, separators=(",", ":"))


def report_from_json(text: str | bytes) -> StatsReport:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid stats JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("kind") != "stats":
        raise ManifestError("expected a stats report document")
    hists = doc["per_image_histograms"]
    return StatsReport(
        split=doc["split"],
        object_names=tuple(doc["object_categories"]),
        relation_names=tuple(doc["relation_categories"]),
        num_images=int(doc["num_images"]),
        object_counts=tuple(int(c) for c in doc["object_counts"]),
        relation_counts=tuple(int(c) for c in doc["relation_counts"]),
        objects_per_image=_hist_from_json(hists["objects"]),
        object_categories_per_image=_hist_from_json(hists["object_categories"]),
        relations_per_image=_hist_from_json(hists["relations"]),
        relation_categories_per_image=_hist_from_json(hists["relation_categories"]),
        size_class_fractions={
            name: float(doc["size_class_fractions"][name])
            for name in SIZE_CLASS_NAMES
        },
        cooccurrence_log=tuple(
            tuple(float(v) for v in row) for row in doc["cooccurrence_log"]
        ),
    )


def _csv_cell(text: str) -> str:
    if any(ch in text for ch in ",\"\n"):
        return '"' + text.replace('"', '""') + '"'
    return text


def report_to_csv(reports: StatsReport | Sequence[StatsReport]) -> str:
    """Category count tables as CSV, one count column per split.

    A single report emits ``category,count``; several reports (one per
    split, same registry) emit one column per present split in
    train/val/test order.  Object and relation tables are separated by a
    blank line.
    """
    if isinstance(reports, StatsReport):
        reports = [reports]
    if not reports:
        raise ValueError("no reports to emit")
    first = reports[0]
    for report in reports[1:]:
        if (
            report.object_names != first.object_names
            or report.relation_names != first.relation_names
        ):
            raise ValueError("reports use different category registries")
    splits = [r.split for r in reports]
    if len(set(splits)) != len(splits):
        raise ValueError(f"duplicate splits: {splits}")
    ordered = sorted(reports, key=lambda r: SPLIT_ORDER.index(r.split))
    if len(ordered) == 1:
        columns = ["count"]
    else:
        columns = [r.split for r in ordered]
    lines = ["category," + ",".join(columns)]
    for idx, name in enumerate(first.object_names):
        cells = ",".join(str(r.object_counts[idx]) for r in ordered)
        lines.append(f"{_csv_cell(name)},{cells}")
    lines.append("")
    lines.append("category," + ",".join(columns))
    for idx, name in enumerate(first.relation_names):
        cells = ",".join(str(r.relation_counts[idx]) for r in ordered)
        lines.append(f"{_csv_cell(name)},{cells}")
    return "\n".join(lines) + "\n"

"""Detection and scene-graph evaluation.

Detection side: greedy score-ordered matching against ground truth at a
rotated-IoU threshold, all-point interpolated average precision per
category, and mAP over categories that have at least one ground-truth box.

Scene-graph side: triplet matching for the three standard subtasks.  A
predicted triplet matches a ground-truth triplet when the predicate and
both endpoint class labels agree and the endpoints correspond: by ground
truth box identity for ``predcls`` and ``sgcls``, by rotated IoU at the
configured threshold on both boxes for ``sgdet``.  Each ground truth is
matched at most once.  With the graph constraint (default) only the highest
scored predicate of each ordered box pair enters the ranking.  Recall@K
counts ground truth matched by predictions inside each image's top K;
dataset numbers aggregate matched/total tallies over images, and mean
recall averages the per-predicate recalls of predicates with ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .datamodel import Dataset, PredictionScene, PredictionSet, SceneAnnotation
from .errors import DataError, RegistryMismatchError
from .geometry import OrientedBox, rotated_iou
from .ingest import Detection

SUBTASKS = ("predcls", "sgcls", "sgdet")
DEFAULT_K_VALUES = (20, 50, 100, 500)
IDENTITY_SUBTASKS = ("predcls", "sgcls")


def precision(tp: int, fp: int) -> float:
    """tp / (tp + fp); requires at least one prediction."""
    if tp < 0 or fp < 0:
        raise ValueError(f"negative count: tp={tp} fp={fp}")
    if tp + fp == 0:
        raise ValueError("precision undefined without predictions")
    return tp / (tp + fp)


def recall(tp: int, fn: int) -> float:
    """tp / (tp + fn); requires at least one ground truth."""
    if tp < 0 or fn < 0:
        raise ValueError(f"negative count: tp={tp} fn={fn}")
    if tp + fn == 0:
        raise ValueError("recall undefined without ground truth")
    return tp / (tp + fn)


@dataclass(frozen=True)
class MatchConfig:
    """Knobs of scene-graph evaluation."""

    subtask: str = "predcls"
    iou_threshold: float = 0.5
    k_values: tuple[int, ...] = DEFAULT_K_VALUES
    graph_constraint: bool = True

    def __post_init__(self) -> None:
        if self.subtask not in SUBTASKS:
            raise ValueError(f"subtask must be one of {SUBTASKS}: {self.subtask!r}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1]: {self.iou_threshold}")
        if not self.k_values:
            raise ValueError("k_values must not be empty")
        if any(k <= 0 for k in self.k_values):
            raise ValueError(f"k values must be positive: {self.k_values}")
        if any(b <= a for a, b in zip(self.k_values, self.k_values[1:])):
            raise ValueError(
                f"k values must be strictly ascending: {self.k_values}"
            )


@dataclass(frozen=True)
class PredictedTriplet:
    """One scored relation hypothesis between two detections.

    ``score`` is the composite ranking score (subject score times predicate
    probability times object score).  ``subject_id``/``object_id`` carry the
    ground-truth box identity for the identity-matched subtasks and may stay
    ``None`` for sgdet.
    """

    subject: Detection
    predicate: int
    object: Detection
    score: float
    predicate_prob: float | None = None
    subject_id: int | None = None
    object_id: int | None = None


@dataclass(frozen=True)
class TripletTarget:
    """A ground-truth triplet resolved to classes and boxes."""

    subject_id: int
    object_id: int
    predicate: int
    subject_category: int
    object_category: int
    subject_box: OrientedBox
    object_box: OrientedBox


@dataclass(frozen=True)
class TripletMatchResult:
    """Ranked matching outcome for one image.

    ``ranking`` holds indices into the prediction list, best score first,
    after graph-constraint filtering.  ``matched`` is aligned with
    ``ranking`` and holds the matched ground-truth index or -1.
    """

    ranking: tuple[int, ...]
    matched: tuple[int, ...]

    def flags(self) -> list[bool]:
        return [g >= 0 for g in self.matched]


def match_detections(
    predictions: Sequence[Detection],
    truths: Sequence[OrientedBox],
    iou_threshold: float = 0.5,
) -> list[bool]:
    """Per-prediction TP flags for one image and one category.

    Predictions are visited by descending score, ties by input order.  A
    prediction is a TP iff its best-IoU still-unmatched ground truth reaches
    ``iou_threshold`` (equal IoUs resolve to the lowest ground-truth index);
    that ground truth is then consumed.  Flags are returned in input order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1]: {iou_threshold}")
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    flags = [False] * len(predictions)
    taken = [False] * len(truths)
    for i in order:
        best_iou = 0.0
        best_gt = -1
        for g, gt_box in enumerate(truths):
            if taken[g]:
                continue
            iou = rotated_iou(predictions[i].box, gt_box)
            if iou > best_iou:
                best_iou = iou
                best_gt = g
        if best_gt >= 0 and best_iou >= iou_threshold:
            flags[i] = True
            taken[best_gt] = True
    return flags


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """All-point interpolated AP from rank-ordered TP/FP flags.

    Precision is replaced by its monotone non-increasing envelope and
    integrated over recall.  ``flags`` must already be in ranking order.
    """
    if n_gt <= 0:
        raise ValueError("average precision undefined without ground truth")
    if not flags:
        return 0.0
    precisions: list[float] = []
    recalls: list[float] = []
    tp = 0
    for i, flag in enumerate(flags):
        if flag:
            tp += 1
        precisions.append(tp / (i + 1))
        recalls.append(tp / n_gt)
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for p, r in zip(precisions, recalls):
        ap += (r - prev_recall) * p
        prev_recall = r
    return ap


def mean_ap(per_class_ap: Sequence[float]) -> float:
    """Arithmetic mean of per-category AP values."""
    if not per_class_ap:
        raise ValueError("mean AP needs at least one category")
    return sum(per_class_ap) / len(per_class_ap)


def recall_at_k(flags: Sequence[bool], n_gt: int, k: int) -> float:
    """Matched ground-truth count within the top ``k`` ranks over ``n_gt``."""
    if n_gt <= 0:
        raise ValueError("recall undefined without ground truth")
    if k <= 0:
        raise ValueError(f"k must be positive: {k}")
    return sum(bool(f) for f in flags[:k]) / n_gt


def mean_recall_at_k(per_predicate_recall: Sequence[float]) -> float:
    """Mean of per-predicate recalls (predicates with ground truth only)."""
    if not per_predicate_recall:
        raise ValueError("mean recall needs at least one predicate")
    return sum(per_predicate_recall) / len(per_predicate_recall)


def _pair_key(pred: PredictedTriplet) -> tuple:
    if pred.subject_id is not None and pred.object_id is not None:
        return (pred.subject_id, pred.object_id)
    return (
        pred.subject.box.vertices,
        pred.subject.category,
        pred.object.box.vertices,
        pred.object.category,
    )


def match_triplets(
    predictions: Sequence[PredictedTriplet],
    targets: Sequence[TripletTarget],
    config: MatchConfig,
) -> TripletMatchResult:
    """Greedy ranked matching of predicted against ground-truth triplets.

    Predictions are ranked by descending composite score, ties by input
    order.  Under the graph constraint only the first-ranked predicate per
    ordered pair key survives.  Matching consumes each ground truth at most
    once; among eligible ground truths a prediction takes the one with the
    largest minimum endpoint IoU, remaining ties to the lowest index.
    """
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    if config.graph_constraint:
        seen: set[tuple] = set()
        ranking = []
        for i in order:
            key = _pair_key(predictions[i])
            if key in seen:
                continue
            seen.add(key)
            ranking.append(i)
    else:
        ranking = order
    identity = config.subtask in IDENTITY_SUBTASKS
    taken = [False] * len(targets)
    matched: list[int] = []
    for i in ranking:
        pred = predictions[i]
        if identity and (pred.subject_id is None or pred.object_id is None):
            raise DataError(
                f"subtask {config.subtask!r} needs ground-truth box identities"
            )
        best_gt = -1
        best_quality = -1.0
        for g, target in enumerate(targets):
            if taken[g]:
                continue
            if target.predicate != pred.predicate:
                continue
            if pred.subject.category != target.subject_category:
                continue
            if pred.object.category != target.object_category:
                continue
            if identity:
                if (
                    pred.subject_id != target.subject_id
                    or pred.object_id != target.object_id
                ):
                    continue
                quality = 1.0
            else:
                iou_s = rotated_iou(pred.subject.box, target.subject_box)
                if iou_s < config.iou_threshold:
                    continue
                iou_o = rotated_iou(pred.object.box, target.object_box)
                if iou_o < config.iou_threshold:
                    continue
                quality = min(iou_s, iou_o)
            if quality > best_quality:
                best_quality = quality
                best_gt = g
        if best_gt >= 0:
            taken[best_gt] = True
        matched.append(best_gt)
    return TripletMatchResult(tuple(ranking), tuple(matched))


@dataclass(frozen=True)
class EvalReport:
    """Evaluation results of one run; detection or scene-graph fields are set.

    ``counts`` maps a category (or predicate) name to its tp/fp/fn tally.
    Recall dictionaries are keyed by K.
    """

    kind: str
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    per_class_ap: dict[str, float] | None = None
    mean_ap: float | None = None
    recall_at_k: dict[int, float] | None = None
    per_predicate_recall_at_k: dict[str, dict[int, float]] | None = None
    mean_recall_at_k: dict[int, float] | None = None


def _check_names(gt: Dataset, predictions: PredictionSet) -> None:
    if (
        predictions.object_names != gt.registry.object_names
        or predictions.relation_names != gt.registry.relation_names
    ):
        raise RegistryMismatchError(
            "prediction file and ground truth use different category lists"
        )


def _prediction_index(predictions: PredictionSet) -> dict[str, PredictionScene]:
    index: dict[str, PredictionScene] = {}
    for scene in predictions.scenes:
        if scene.image_id in index:
            raise DataError(f"duplicate prediction image id {scene.image_id!r}")
        index[scene.image_id] = scene
    return index


def evaluate_detections(
    gt: Dataset,
    predictions: PredictionSet,
    iou_threshold: float = 0.5,
    include_empty_classes: bool = False,
) -> EvalReport:
    """Detection mAP report over a dataset.

    Per category, detections from all images are ranked globally by score
    (ties follow ground-truth scene order, then file order) with matching
    done per image.  Categories without ground truth are excluded from the
    mean unless ``include_empty_classes`` pins their AP to 0.
    """
    _check_names(gt, predictions)
    pred_index = _prediction_index(predictions)
    names = gt.registry.object_names
    num_classes = len(names)
    # (score, global input order) plus flag, per class
    scored_flags: list[list[tuple[float, int, bool]]] = [[] for _ in range(num_classes)]
    gt_totals = [0] * num_classes
    counter = 0
    for scene in gt.scenes:
        pred_scene = pred_index.get(scene.image_id)
        scene_preds = pred_scene.objects if pred_scene is not None else ()
        for c in range(num_classes):
            truths = [o.box for o in scene.objects if o.category == c]
            gt_totals[c] += len(truths)
            dets = [
                Detection(o.box, o.category, o.score)
                for o in scene_preds
                if o.category == c
            ]
            flags = match_detections(dets, truths, iou_threshold)
            for det, flag in zip(dets, flags):
                scored_flags[c].append((det.score, counter, flag))
                counter += 1
    if sum(gt_totals) == 0:
        raise DataError("ground truth contains no objects")
    per_class_ap: dict[str, float] = {}
    counts: dict[str, dict[str, int]] = {}
    for c in range(num_classes):
        rows = sorted(scored_flags[c], key=lambda r: (-r[0], r[1]))
        flags = [flag for _, _, flag in rows]
        tp = sum(flags)
        counts[names[c]] = {
            "tp": tp,
            "fp": len(flags) - tp,
            "fn": gt_totals[c] - tp,
        }
        if gt_totals[c] > 0:
            per_class_ap[names[c]] = average_precision(flags, gt_totals[c])
        elif include_empty_classes:
            per_class_ap[names[c]] = 0.0
    return EvalReport(
        kind="detection",
        counts=counts,
        per_class_ap=per_class_ap,
        mean_ap=mean_ap(list(per_class_ap.values())),
    )


def targets_from_scene(scene: SceneAnnotation) -> list[TripletTarget]:
    """Resolve a scene's relation triplets to boxes and class labels."""
    by_id = {obj.id: obj for obj in scene.objects}
    targets = []
    for rel in scene.relations:
        subj = by_id[rel.subject]
        obj = by_id[rel.object]
        targets.append(
            TripletTarget(
                subject_id=rel.subject,
                object_id=rel.object,
                predicate=rel.predicate,
                subject_category=subj.category,
                object_category=obj.category,
                subject_box=subj.box,
                object_box=obj.box,
            )
        )
    return targets


def triplets_from_prediction_scene(scene: PredictionScene) -> list[PredictedTriplet]:
    """Expand a prediction scene's relations into scored triplets.

    The composite score multiplies both endpoint scores with the relation
    score; endpoint ids are kept for identity matching.
    """
    by_id = {obj.id: obj for obj in scene.objects}
    triplets = []
    for rel in scene.relations:
        subj = by_id[rel.subject]
        obj = by_id[rel.object]
        triplets.append(
            PredictedTriplet(
                subject=Detection(subj.box, subj.category, subj.score),
                predicate=rel.predicate,
                object=Detection(obj.box, obj.category, obj.score),
                score=subj.score * rel.score * obj.score,
                predicate_prob=rel.score,
                subject_id=rel.subject,
                object_id=rel.object,
            )
        )
    return triplets


def evaluate_scene_graphs(
    gt: Dataset, predictions: PredictionSet, config: MatchConfig | None = None
) -> EvalReport:
    """Recall@K report over a dataset for one scene-graph subtask.

    Overall recall divides the ground truth matched within each image's top
    K by the total ground-truth triplet count; per-predicate recalls do the
    same per predicate, and their mean (over predicates with ground truth)
    is the mean recall.
    """
    config = config or MatchConfig()
    _check_names(gt, predictions)
    pred_index = _prediction_index(predictions)
    rel_names = gt.registry.relation_names
    ks = config.k_values
    gt_total = 0
    matched_total = {k: 0 for k in ks}
    gt_per_pred = [0] * len(rel_names)
    matched_per_pred = {k: [0] * len(rel_names) for k in ks}
    tp_per_pred = [0] * len(rel_names)
    fp_per_pred = [0] * len(rel_names)
    for scene in gt.scenes:
        targets = targets_from_scene(scene)
        pred_scene = pred_index.get(scene.image_id)
        preds = (
            triplets_from_prediction_scene(pred_scene)
            if pred_scene is not None
            else []
        )
        result = match_triplets(preds, targets, config)
        gt_total += len(targets)
        for target in targets:
            gt_per_pred[target.predicate] += 1
        for rank, (pred_idx, g) in enumerate(zip(result.ranking, result.matched)):
            predicate = preds[pred_idx].predicate
            if g >= 0:
                tp_per_pred[predicate] += 1
                for k in ks:
                    if rank < k:
                        matched_total[k] += 1
                        matched_per_pred[k][predicate] += 1
            else:
                fp_per_pred[predicate] += 1
    if gt_total == 0:
        raise DataError("ground truth contains no relation triplets")
    overall = {k: matched_total[k] / gt_total for k in ks}
    per_predicate: dict[str, dict[int, float]] = {}
    for p, name in enumerate(rel_names):
        if gt_per_pred[p] > 0:
            per_predicate[name] = {
                k: matched_per_pred[k][p] / gt_per_pred[p] for k in ks
            }
    mean_recall = {
        k: mean_recall_at_k([r[k] for r in per_predicate.values()]) for k in ks
    }
    counts = {
        name: {
            "tp": tp_per_pred[p],
            "fp": fp_per_pred[p],
            "fn": gt_per_pred[p] - tp_per_pred[p],
        }
        for p, name in enumerate(rel_names)
        if gt_per_pred[p] > 0 or tp_per_pred[p] + fp_per_pred[p] > 0
    }
    return EvalReport(
        kind="scene_graph",
        counts=counts,
        recall_at_k=overall,
        per_predicate_recall_at_k=per_predicate,
        mean_recall_at_k=mean_recall,
    )


# --- report emission ------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def report_to_json(report: EvalReport) -> str:
    doc: dict = {"kind": report.kind, "counts": report.counts}
    if report.per_class_ap is not None:
        doc["per_class_ap"] = report.per_class_ap
        doc["map"] = report.mean_ap
    if report.recall_at_k is not None:
        doc["recall_at_k"] = {str(k): v for k, v in report.recall_at_k.items()}
        doc["per_predicate_recall_at_k"] = {
            name: {str(k): v for k, v in rs.items()}
            for name, rs in (report.per_predicate_recall_at_k or {}).items()
        }
        doc["mean_recall_at_k"] = {
            str(k): v for k, v in (report.mean_recall_at_k or {}).items()
        }
    return json.dumps(doc, separators=(",", ":"))


def report_to_csv(report: EvalReport) -> str:
    """Fixed-layout CSV: category AP rows or per-predicate recall rows.

    The final row holds the mean over the listed rows.
    """
    lines: list[str] = []
    if report.kind == "detection":
        if report.per_class_ap is None:
            raise ValueError("detection report has no AP data")
        lines.append("category,ap")
        for name, ap in report.per_class_ap.items():
            lines.append(f"{_csv_cell(name)},{_fmt(ap)}")
        lines.append(f"mean,{_fmt(report.mean_ap or 0.0)}")
    else:
        if report.per_predicate_recall_at_k is None or report.recall_at_k is None:
            raise ValueError("scene-graph report has no recall data")
        ks = sorted(report.recall_at_k)
        header = "predicate," + ",".join(f"r@{k}" for k in ks)
        lines.append(header)
        for name, recalls in report.per_predicate_recall_at_k.items():
            cells = ",".join(_fmt(recalls[k]) for k in ks)
            lines.append(f"{_csv_cell(name)},{cells}")
        mean_cells = ",".join(_fmt((report.mean_recall_at_k or {})[k]) for k in ks)
        lines.append(f"mean,{mean_cells}")
    return "\n".join(lines) + "\n"


def _csv_cell(text: str) -> str:
    if any(ch in text for ch in ",\"\n"):
        return '"' + text.replace('"', '""') + '"'
    return text

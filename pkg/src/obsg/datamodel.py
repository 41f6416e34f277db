"""Dataset model, manifest parsing/serialization and validation.

A manifest is a single JSON document::

    {"version": "1.0", "split": "train",
     "object_categories": [...], "relation_categories": [...],
     "images": [{"id": "...", "width": W, "height": H,
                 "objects": [{"id": 0, "category": 3,
                              "obb": [[x1,y1],[x2,y2],[x3,y3],[x4,y4]],
                              "truncated": false}],
                 "relations": [{"subject": 0, "predicate": 12, "object": 1}]}]}

Prediction files use the same skeleton with an additional ``score`` on every
object and relation.  An optional top-level ``relation_kinds`` list persists
spatial/semantic tags for registries that deviate from the canonical
vocabulary; when absent, tags are inferred by canonical name lookup.

Parsing is strict: ``parse_dataset`` either returns a dataset that passes
``validate`` with zero violations or raises :class:`ManifestError` naming
the offending path.  ``validate`` itself never raises on bad content; it
reports coded violations so programmatically built datasets can be checked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import ManifestError
from .geometry import OrientedBox
from .registry import CategoryRegistry, canonical_kinds

MANIFEST_VERSION = "1.0"
SPLITS = ("train", "val", "test")

SIZE_CLASS_NAMES = ("large", "medium", "small", "tiny")

# Vertices may exceed the image extent by half its larger side in every
# direction; this tolerates truncation at tile edges.
BOUNDS_SLACK = 0.5


def size_class(area: float) -> str:
    """Size class of a box area in square pixels.

    large: >= 2048, medium: >= 144, small: >= 11, tiny: below 11.
    """
    if not area > 0:
        raise ValueError(f"area must be positive: {area!r}")
    if area >= 2048:
        return "large"
    if area >= 144:
        return "medium"
    if area >= 11:
        return "small"
    return "tiny"


@dataclass(frozen=True)
class ObjectInstance:
    """One annotated object: scene-unique id, category index, oriented box."""

    id: int
    category: int
    box: OrientedBox
    truncated: bool = False


@dataclass(frozen=True)
class RelationTriplet:
    """Directed relation (subject, predicate, object) between object ids."""

    subject: int
    predicate: int
    object: int


@dataclass(frozen=True)
class SceneAnnotation:
    """All annotations of a single image."""

    image_id: str
    width: int
    height: int
    objects: tuple[ObjectInstance, ...]
    relations: tuple[RelationTriplet, ...]

    def object_by_id(self, object_id: int) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"no object with id {object_id} in image {self.image_id!r}")


@dataclass(frozen=True)
class Dataset:
    """A split worth of scenes sharing one category registry."""

    registry: CategoryRegistry
    split: str
    scenes: tuple[SceneAnnotation, ...]


@dataclass(frozen=True)
class Violation:
    """A single validation finding; ``code`` is machine-matchable."""

    code: str
    image_id: str | None
    detail: str


@dataclass(frozen=True)
class ScoredObject:
    id: int
    category: int
    box: OrientedBox
    score: float
    truncated: bool = False


@dataclass(frozen=True)
class ScoredRelation:
    subject: int
    predicate: int
    object: int
    score: float


@dataclass(frozen=True)
class PredictionScene:
    image_id: str
    width: int
    height: int
    objects: tuple[ScoredObject, ...]
    relations: tuple[ScoredRelation, ...]


@dataclass(frozen=True)
class PredictionSet:
    """Parsed prediction file: same vocabulary lists, scored content."""

    object_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    split: str
    scenes: tuple[PredictionScene, ...]


def validate(dataset: Dataset) -> list[Violation]:
    """Check every type invariant; an empty list means the dataset is clean.

    Codes: IMAGE_EXTENT, DUPLICATE_IMAGE_ID, NEGATIVE_OBJECT_ID,
    DUPLICATE_OBJECT_ID, CATEGORY_RANGE, VERTEX_ORDER, BOX_BOUNDS,
    PREDICATE_RANGE, DANGLING_REFERENCE, SELF_RELATION, DUPLICATE_TRIPLET.
    """
    violations: list[Violation] = []
    num_objects = dataset.registry.num_objects
    num_relations = dataset.registry.num_relations
    if dataset.split not in SPLITS:
        violations.append(
            Violation("SPLIT_NAME", None, f"unknown split {dataset.split!r}")
        )
    seen_images: set[str] = set()
    for scene in dataset.scenes:
        img = scene.image_id
        if img in seen_images:
            violations.append(Violation("DUPLICATE_IMAGE_ID", img, "image id reused"))
        seen_images.add(img)
        if scene.width <= 0 or scene.height <= 0:
            violations.append(
                Violation(
                    "IMAGE_EXTENT", img, f"extent {scene.width}x{scene.height}"
                )
            )
            continue
        slack = BOUNDS_SLACK * max(scene.width, scene.height)
        lo_x, hi_x = -slack, scene.width + slack
        lo_y, hi_y = -slack, scene.height + slack
        ids: set[int] = set()
        for obj in scene.objects:
            if obj.id < 0:
                violations.append(
                    Violation("NEGATIVE_OBJECT_ID", img, f"object id {obj.id}")
                )
            if obj.id in ids:
                violations.append(
                    Violation("DUPLICATE_OBJECT_ID", img, f"object id {obj.id} reused")
                )
            ids.add(obj.id)
            if not 0 <= obj.category < num_objects:
                violations.append(
                    Violation(
                        "CATEGORY_RANGE",
                        img,
                        f"object {obj.id}: category {obj.category}",
                    )
                )
            if not obj.box.is_clockwise:
                violations.append(
                    Violation(
                        "VERTEX_ORDER",
                        img,
                        f"object {obj.id}: counter-clockwise vertex loop",
                    )
                )
            for x, y in obj.box.vertices:
                if not (lo_x <= x <= hi_x and lo_y <= y <= hi_y):
                    violations.append(
                        Violation(
                            "BOX_BOUNDS",
                            img,
                            f"object {obj.id}: vertex ({x}, {y}) outside slack bounds",
                        )
                    )
                    break
        seen_triplets: set[tuple[int, int, int]] = set()
        for rel in scene.relations:
            if not 0 <= rel.predicate < num_relations:
                violations.append(
                    Violation("PREDICATE_RANGE", img, f"predicate {rel.predicate}")
                )
            for endpoint in (rel.subject, rel.object):
                if endpoint not in ids:
                    violations.append(
                        Violation(
                            "DANGLING_REFERENCE",
                            img,
                            f"relation references missing object id {endpoint}",
                        )
                    )
            if rel.subject == rel.object:
                violations.append(
                    Violation(
                        "SELF_RELATION", img, f"object id {rel.subject} relates to itself"
                    )
                )
            key = (rel.subject, rel.predicate, rel.object)
            if key in seen_triplets:
                violations.append(
                    Violation("DUPLICATE_TRIPLET", img, f"triplet {key} repeated")
                )
            seen_triplets.add(key)
    return violations


# --- parsing -------------------------------------------------------------


def _expect(value: Any, kind: type, path: str) -> Any:
    if kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ManifestError(f"{path}: expected number, got {value!r}")
    if kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ManifestError(f"{path}: expected integer, got {value!r}")
    if not isinstance(value, kind):
        raise ManifestError(
            f"{path}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _get(mapping: Any, key: str, kind: type, path: str) -> Any:
    _expect(mapping, dict, path)
    if key not in mapping:
        raise ManifestError(f"{path}: missing required field {key!r}")
    return _expect(mapping[key], kind, f"{path}.{key}")


def _parse_names(raw: Any, key: str) -> tuple[str, ...]:
    items = _get(raw, key, list, "$")
    names = []
    for i, name in enumerate(items):
        names.append(_expect(name, str, f"$.{key}[{i}]"))
    return tuple(names)


def _parse_box(raw: Any, path: str) -> OrientedBox:
    pts = _expect(raw, list, path)
    if len(pts) != 4:
        raise ManifestError(f"{path}: expected 4 vertices, got {len(pts)}")
    coords = []
    for i, pt in enumerate(pts):
        pair = _expect(pt, list, f"{path}[{i}]")
        if len(pair) != 2:
            raise ManifestError(f"{path}[{i}]: expected [x, y]")
        x = _expect(pair[0], float, f"{path}[{i}][0]")
        y = _expect(pair[1], float, f"{path}[{i}][1]")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ManifestError(f"{path}[{i}]: non-finite coordinate")
        coords.append((x, y))
    try:
        return OrientedBox.from_vertices(coords)
    except ValueError as exc:
        raise ManifestError(f"{path}: {exc}") from None


def _parse_header(root: Any) -> tuple[str, CategoryRegistry]:
    version = _get(root, "version", str, "$")
    if version != MANIFEST_VERSION:
        raise ManifestError(f"$.version: unsupported version {version!r}")
    split = _get(root, "split", str, "$")
    if split not in SPLITS:
        raise ManifestError(f"$.split: expected one of {SPLITS}, got {split!r}")
    object_names = _parse_names(root, "object_categories")
    relation_names = _parse_names(root, "relation_categories")
    if "relation_kinds" in root:
        kinds = tuple(
            _expect(k, str, f"$.relation_kinds[{i}]")
            for i, k in enumerate(_expect(root["relation_kinds"], list, "$.relation_kinds"))
        )
    else:
        kinds = canonical_kinds(relation_names)
    try:
        registry = CategoryRegistry(object_names, relation_names, kinds)
    except ValueError as exc:
        raise ManifestError(f"$: bad category lists: {exc}") from None
    return split, registry


def _load_root(data: str | bytes) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid JSON: {exc}") from None


def parse_dataset(data: str | bytes, check: bool = True) -> Dataset:
    """Parse a manifest document.

    Args:
        data: JSON text or UTF-8 bytes.
        check: run :func:`validate` on the result and reject violations.

    Raises:
        ManifestError: malformed syntax, a structural defect (unknown
            category index, dangling object reference, non-rectangular
            box) or, with ``check``, any validation violation.
    """
    root = _load_root(data)
    split, registry = _parse_header(root)
    scenes = []
    images = _get(root, "images", list, "$")
    for i, raw_scene in enumerate(images):
        path = f"$.images[{i}]"
        image_id = _get(raw_scene, "id", str, path)
        if not image_id:
            raise ManifestError(f"{path}.id: empty image id")
        width = _get(raw_scene, "width", int, path)
        height = _get(raw_scene, "height", int, path)
        objects = []
        ids: set[int] = set()
        for j, raw_obj in enumerate(_get(raw_scene, "objects", list, path)):
            opath = f"{path}.objects[{j}]"
            obj_id = _get(raw_obj, "id", int, opath)
            category = _get(raw_obj, "category", int, opath)
            if not 0 <= category < registry.num_objects:
                raise ManifestError(
                    f"{opath}.category: index {category} outside registry"
                    f" of {registry.num_objects} (image {image_id!r})"
                )
            box = _parse_box(raw_obj.get("obb"), f"{opath}.obb")
            truncated = raw_obj.get("truncated", False)
            _expect(truncated, bool, f"{opath}.truncated")
            objects.append(ObjectInstance(obj_id, category, box, truncated))
            ids.add(obj_id)
        relations = []
        for j, raw_rel in enumerate(_get(raw_scene, "relations", list, path)):
            rpath = f"{path}.relations[{j}]"
            subject = _get(raw_rel, "subject", int, rpath)
            predicate = _get(raw_rel, "predicate", int, rpath)
            obj_ref = _get(raw_rel, "object", int, rpath)
            if not 0 <= predicate < registry.num_relations:
                raise ManifestError(
                    f"{rpath}.predicate: index {predicate} outside registry"
                    f" of {registry.num_relations} (image {image_id!r})"
                )
            for endpoint in (subject, obj_ref):
                if endpoint not in ids:
                    raise ManifestError(
                        f"{rpath}: dangling object id {endpoint} (image {image_id!r})"
                    )
            relations.append(RelationTriplet(subject, predicate, obj_ref))
        scenes.append(
            SceneAnnotation(image_id, width, height, tuple(objects), tuple(relations))
        )
    dataset = Dataset(registry, split, tuple(scenes))
    if check:
        violations = validate(dataset)
        if violations:
            head = "; ".join(
                f"{v.code}[{v.image_id}]: {v.detail}" for v in violations[:5]
            )
            raise ManifestError(
                f"manifest has {len(violations)} validation violation(s): {head}"
            )
    return dataset


# --- serialization -------------------------------------------------------


def _box_json(box: OrientedBox) -> list[list[float]]:
    return [[x, y] for x, y in box.vertices]


def _registry_json(registry: CategoryRegistry) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "object_categories": list(registry.object_names),
        "relation_categories": list(registry.relation_names),
    }
    if registry.relation_kinds != canonical_kinds(registry.relation_names):
        doc["relation_kinds"] = list(registry.relation_kinds)
    return doc


def serialize_dataset(dataset: Dataset) -> str:
    """Manifest JSON for a dataset; deterministic byte-for-byte."""
    doc: dict[str, Any] = {"version": MANIFEST_VERSION, "split": dataset.split}
    doc.update(_registry_json(dataset.registry))
    doc["images"] = [
        {
            "id": scene.image_id,
            "width": scene.width,
            "height": scene.height,
            "objects": [
                {
                    "id": obj.id,
                    "category": obj.category,
                    "obb": _box_json(obj.box),
                    "truncated": obj.truncated,
                }
                for obj in scene.objects
            ],
            "relations": [
                {"subject": r.subject, "predicate": r.predicate, "object": r.object}
                for r in scene.relations
            ],
        }
        for scene in dataset.scenes
    ]
    return json.dumps(doc, separators=(",", ":"))


def parse_predictions(data: str | bytes) -> PredictionSet:
    """Parse a prediction file (manifest skeleton plus per-item scores)."""
    root = _load_root(data)
    split, registry = _parse_header(root)
    scenes = []
    for i, raw_scene in enumerate(_get(root, "images", list, "$")):
        path = f"$.images[{i}]"
        image_id = _get(raw_scene, "id", str, path)
        width = _get(raw_scene, "width", int, path)
        height = _get(raw_scene, "height", int, path)
        objects = []
        ids: set[int] = set()
        for j, raw_obj in enumerate(_get(raw_scene, "objects", list, path)):
            opath = f"{path}.objects[{j}]"
            obj_id = _get(raw_obj, "id", int, opath)
            if obj_id in ids:
                raise ManifestError(f"{opath}.id: object id {obj_id} reused")
            category = _get(raw_obj, "category", int, opath)
            if not 0 <= category < registry.num_objects:
                raise ManifestError(f"{opath}.category: index {category} out of range")
            box = _parse_box(raw_obj.get("obb"), f"{opath}.obb")
            score = _get(raw_obj, "score", float, opath)
            if not math.isfinite(score):
                raise ManifestError(f"{opath}.score: non-finite score")
            truncated = raw_obj.get("truncated", False)
            _expect(truncated, bool, f"{opath}.truncated")
            objects.append(ScoredObject(obj_id, category, box, score, truncated))
            ids.add(obj_id)
        relations = []
        for j, raw_rel in enumerate(_get(raw_scene, "relations", list, path)):
            rpath = f"{path}.relations[{j}]"
            subject = _get(raw_rel, "subject", int, rpath)
            predicate = _get(raw_rel, "predicate", int, rpath)
            obj_ref = _get(raw_rel, "object", int, rpath)
            score = _get(raw_rel, "score", float, rpath)
            if not 0 <= predicate < registry.num_relations:
                raise ManifestError(f"{rpath}.predicate: index {predicate} out of range")
            if not math.isfinite(score):
                raise ManifestError(f"{rpath}.score: non-finite score")
            for endpoint in (subject, obj_ref):
                if endpoint not in ids:
                    raise ManifestError(f"{rpath}: dangling object id {endpoint}")
            relations.append(ScoredRelation(subject, predicate, obj_ref, score))
        scenes.append(
            PredictionScene(image_id, width, height, tuple(objects), tuple(relations))
        )
    return PredictionSet(
        registry.object_names, registry.relation_names, split, tuple(scenes)
    )


def serialize_predictions(predictions: PredictionSet) -> str:
    """Prediction-file JSON; deterministic byte-for-byte."""
    doc: dict[str, Any] = {
        "version": MANIFEST_VERSION,
        "split": predictions.split,
        "object_categories": list(predictions.object_names),
        "relation_categories": list(predictions.relation_names),
        "images": [
            {
                "id": scene.image_id,
                "width": scene.width,
                "height": scene.height,
                "objects": [
                    {
                        "id": obj.id,
                        "category": obj.category,
                        "obb": _box_json(obj.box),
                        "truncated": obj.truncated,
                        "score": obj.score,
                    }
                    for obj in scene.objects
                ],
                "relations": [
                    {
                        "subject": r.subject,
                        "predicate": r.predicate,
                        "object": r.object,
                        "score": r.score,
                    }
                    for r in scene.relations
                ],
            }
            for scene in predictions.scenes
        ],
    }
    return json.dumps(doc, separators=(",", ":"))

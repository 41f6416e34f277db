"""Tiling of large scenes, HBB conversion and detection reassembly.

Large images are processed as overlapping square tiles.  Tile origins sit at
stride multiples except the final row/column, which is shifted back so the
far edge of the last tile coincides with the image edge.  Cropping keeps an
object when at least ``keep_fraction`` of its box area lies inside the tile;
kept boxes are translated into tile-local coordinates.  Reassembly is the
inverse translation followed by per-category rotated NMS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .datamodel import Dataset, ObjectInstance, SceneAnnotation
from .geometry import OrientedBox, intersection_area, rotated_iou

TILE_SIZE = 800
TILE_STRIDE = 400
KEEP_FRACTION = 0.5
NMS_IOU_THRESHOLD = 0.5

_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class TileSpec:
    """One square tile of the sliding grid, in source-image pixels."""

    origin_x: int
    origin_y: int
    size: int
    stride: int

    def __post_init__(self) -> None:
        if self.size <= 0 or not 0 < self.stride <= self.size:
            raise ValueError(f"bad tile size/stride: {self.size}/{self.stride}")
        if self.origin_x < 0 or self.origin_y < 0:
            raise ValueError(f"negative tile origin: {self}")


@dataclass(frozen=True)
class Detection:
    """A scored box hypothesis of one category."""

    box: OrientedBox
    category: int
    score: float

    def translate(self, dx: float, dy: float) -> "Detection":
        return replace(self, box=self.box.translate(dx, dy))


def _grid_positions(extent: int, size: int, stride: int) -> list[int]:
    """Stride-multiple origins; the last one is shifted to end at ``extent``."""
    if extent <= size:
        return [0]
    count = math.ceil((extent - size) / stride) + 1
    return [min(i * stride, extent - size) for i in range(count)]


def plan_tiles(
    width: int, height: int, size: int = TILE_SIZE, stride: int = TILE_STRIDE
) -> list[TileSpec]:
    """Sliding-window tile grid covering the full image, row-major order.

    Args:
        width, height: image extent in pixels, positive.
        size: square tile side.
        stride: step between tile origins; must satisfy 0 < stride <= size.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image extent must be positive: {width}x{height}")
    if size <= 0 or not 0 < stride <= size:
        raise ValueError(f"bad tile size/stride: {size}/{stride}")
    xs = _grid_positions(width, size, stride)
    ys = _grid_positions(height, size, stride)
    return [TileSpec(x, y, size, stride) for y in ys for x in xs]


def crop_scene(
    scene: SceneAnnotation, tile: TileSpec, keep_fraction: float = KEEP_FRACTION
) -> SceneAnnotation:
    """Annotations of one tile, in tile-local coordinates.

    An object survives when ``intersection_area(box, tile) / box.area`` is at
    least ``keep_fraction``.  Survivors keep their ids and are translated by
    the negative tile origin; boxes that poke past the tile edge are flagged
    truncated.  A relation survives only if both endpoints do.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in (0, 1]: {keep_fraction}")
    x0, y0 = tile.origin_x, tile.origin_y
    x1 = min(x0 + tile.size, scene.width)
    y1 = min(y0 + tile.size, scene.height)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"tile {tile} lies outside image {scene.image_id!r}")
    tile_box = OrientedBox.axis_aligned(x0, y0, x1, y1)
    kept: list[ObjectInstance] = []
    kept_ids: set[int] = set()
    for obj in scene.objects:
        fraction = intersection_area(obj.box, tile_box) / obj.box.area
        if fraction < keep_fraction:
            continue
        inside = all(
            x0 - _EDGE_EPS <= x <= x1 + _EDGE_EPS
            and y0 - _EDGE_EPS <= y <= y1 + _EDGE_EPS
            for x, y in obj.box.vertices
        )
        kept.append(
            ObjectInstance(
                id=obj.id,
                category=obj.category,
                box=obj.box.translate(-x0, -y0),
                truncated=obj.truncated or not inside,
            )
        )
        kept_ids.add(obj.id)
    relations = tuple(
        r
        for r in scene.relations
        if r.subject in kept_ids and r.object in kept_ids
    )
    return SceneAnnotation(
        image_id=f"{scene.image_id}@{x0}_{y0}",
        width=x1 - x0,
        height=y1 - y0,
        objects=tuple(kept),
        relations=relations,
    )


def tile_dataset(
    dataset: Dataset,
    size: int = TILE_SIZE,
    stride: int = TILE_STRIDE,
    keep_fraction: float = KEEP_FRACTION,
) -> Dataset:
    """Every scene cropped to its full tile grid; empty tiles are kept."""
    scenes = []
    for scene in dataset.scenes:
        for tile in plan_tiles(scene.width, scene.height, size, stride):
            scenes.append(crop_scene(scene, tile, keep_fraction))
    return Dataset(dataset.registry, dataset.split, tuple(scenes))


def convert_to_hbb(dataset: Dataset) -> Dataset:
    """Replace every box with its axis-aligned cover; idempotent."""
    scenes = []
    for scene in dataset.scenes:
        objects = tuple(
            replace(obj, box=obj.box.to_hbb().to_oriented()) for obj in scene.objects
        )
        scenes.append(replace(scene, objects=objects))
    return Dataset(dataset.registry, dataset.split, tuple(scenes))


def rotated_nms(
    detections: Sequence[Detection], iou_threshold: float = NMS_IOU_THRESHOLD
) -> list[Detection]:
    """Greedy non-maximum suppression within each category.

    Detections are visited by descending score (ties keep input order); one
    is kept unless it overlaps an already kept detection of the same
    category with rotated IoU >= ``iou_threshold``.  Returns survivors in
    visiting order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1]: {iou_threshold}")
    for det in detections:
        if not math.isfinite(det.score):
            raise ValueError(f"non-finite detection score: {det.score!r}")
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    kept: list[Detection] = []
    for i in order:
        candidate = detections[i]
        suppressed = any(
            kept_det.category == candidate.category
            and rotated_iou(candidate.box, kept_det.box) >= iou_threshold
            for kept_det in kept
        )
        if not suppressed:
            kept.append(candidate)
    return kept


def reassemble(
    tile_detections: Sequence[tuple[TileSpec, Sequence[Detection]]],
    iou_threshold: float = NMS_IOU_THRESHOLD,
) -> list[Detection]:
    """Merge per-tile detections back into source-image coordinates.

    Each detection is translated by its tile origin; the concatenated pool
    (in the given tile order) is deduplicated with per-category rotated NMS.
    """
    pool: list[Detection] = []
    for tile, dets in tile_detections:
        pool.extend(det.translate(tile.origin_x, tile.origin_y) for det in dets)
    return rotated_nms(pool, iou_threshold)

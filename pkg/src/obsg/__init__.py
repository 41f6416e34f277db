"""Benchmark tooling for scene-graph generation over oriented bounding boxes.

The package covers the full desk-scale pipeline: oriented-box geometry with
exact rotated IoU, a JSON manifest data model with validation, tiling of
large scenes, detection and scene-graph evaluation, ordered-pair proposal
machinery, a frequency prior and a linear relation scorer, a seeded
synthetic dataset generator and exhaustive dataset statistics.
"""

__version__ = "0.1.0"

from .datamodel import (
    Dataset,
    ObjectInstance,
    PredictionScene,
    PredictionSet,
    RelationTriplet,
    SceneAnnotation,
    ScoredObject,
    ScoredRelation,
    Violation,
    parse_dataset,
    parse_predictions,
    serialize_dataset,
    serialize_predictions,
    size_class,
    validate,
)
from .errors import (
    DataError,
    ManifestError,
    RegistryMismatchError,
    TrainingDivergenceError,
)
from .geometry import (
    AxisBox,
    OrientedBox,
    PairGeometry,
    enclosing_axis_box,
    intersection_area,
    pair_geometry,
    rotated_iou,
    shoelace_area,
)
from .ingest import (
    Detection,
    TileSpec,
    convert_to_hbb,
    crop_scene,
    plan_tiles,
    reassemble,
    rotated_nms,
    tile_dataset,
)
from .metrics import (
    EvalReport,
    MatchConfig,
    PredictedTriplet,
    TripletMatchResult,
    TripletTarget,
    average_precision,
    evaluate_detections,
    evaluate_scene_graphs,
    match_detections,
    match_triplets,
    mean_ap,
    mean_recall_at_k,
    precision,
    recall,
    recall_at_k,
)
from .pairing import (
    PairLabelMatrix,
    PairScores,
    enumerate_pairs,
    label_pairs,
    relpn_loss,
    sample_pairs,
    select_top_pairs,
)
from .registry import CategoryRegistry, canonical_registry
from .scorer import (
    FrequencyPrior,
    LinearScorer,
    TrainConfig,
    ce_loss,
    fit_frequency_prior,
    load_prior,
    load_scorer,
    pair_features,
    predict_triplets,
    save_prior,
    save_scorer,
    total_loss,
    train_linear,
)
from .stats import StatsReport, compute_stats
from .synth import Rule, SynthConfig, default_rules, generate

__all__ = [name for name in dir() if not name.startswith("_")]

"""Manifest parsing, validation codes, size classes and registries."""

import json

import pytest

from obsg import (
    CategoryRegistry,
    Dataset,
    ManifestError,
    ObjectInstance,
    OrientedBox,
    PredictionScene,
    PredictionSet,
    RelationTriplet,
    SceneAnnotation,
    ScoredObject,
    ScoredRelation,
    SynthConfig,
    canonical_registry,
    generate,
    parse_dataset,
    parse_predictions,
    serialize_dataset,
    serialize_predictions,
    size_class,
    validate,
)


def unit_box(x=0.0, y=0.0, s=10.0):
    return OrientedBox.axis_aligned(x, y, x + s, y + s)


def small_registry():
    return CategoryRegistry(("cat-a", "cat-b", "cat-c"), ("rel-x", "rel-y"))


def minimal_manifest():
    return {
        "version": "1.0",
        "split": "train",
        "object_categories": ["cat-a", "cat-b", "cat-c"],
        "relation_categories": ["rel-x", "rel-y"],
        "images": [
            {
                "id": "img-1",
                "width": 100,
                "height": 100,
                "objects": [
                    {
                        "id": 0,
                        "category": 0,
                        "obb": [[0, 0], [10, 0], [10, 10], [0, 10]],
                        "truncated": False,
                    },
                    {
                        "id": 1,
                        "category": 2,
                        "obb": [[20, 20], [30, 20], [30, 30], [20, 30]],
                        "truncated": False,
                    },
                ],
                "relations": [{"subject": 0, "predicate": 1, "object": 1}],
            }
        ],
    }


def test_parse_minimal_manifest():
    dataset = parse_dataset(json.dumps(minimal_manifest()))
    assert dataset.split == "train"
    assert len(dataset.scenes) == 1
    scene = dataset.scenes[0]
    assert scene.image_id == "img-1"
    assert len(scene.objects) == 2
    assert len(scene.relations) == 1
    assert scene.relations[0] == RelationTriplet(0, 1, 1)
    assert scene.objects[0].box.vertices[0] == (0.0, 0.0)


def test_parse_rejects_dangling_reference():
    doc = minimal_manifest()
    doc["images"][0]["relations"][0]["object"] = 99
    with pytest.raises(ManifestError) as err:
        parse_dataset(json.dumps(doc))
    assert "99" in str(err.value)
    assert "img-1" in str(err.value)


def test_parse_rejects_bad_box_with_path():
    doc = minimal_manifest()
    doc["images"][0]["objects"][1]["obb"] = [[0, 0], [1, 0], [5, 9], [0, 1]]
    with pytest.raises(ManifestError) as err:
        parse_dataset(json.dumps(doc))
    assert "$.images[0].objects[1].obb" in str(err.value)


def test_parse_rejects_unknown_version_and_split():
    doc = minimal_manifest()
    doc["version"] = "2.0"
    with pytest.raises(ManifestError):
        parse_dataset(json.dumps(doc))
    doc = minimal_manifest()
    doc["split"] = "training"
    with pytest.raises(ManifestError):
        parse_dataset(json.dumps(doc))


def test_parse_rejects_category_out_of_range():
    doc = minimal_manifest()
    doc["images"][0]["objects"][0]["category"] = 3
    with pytest.raises(ManifestError) as err:
        parse_dataset(json.dumps(doc))
    assert "category" in str(err.value)


def test_parse_rejects_malformed_json():
    with pytest.raises(ManifestError):
        parse_dataset("{not json")


def test_serialize_parse_identity():
    dataset = parse_dataset(json.dumps(minimal_manifest()))
    text = serialize_dataset(dataset)
    again = parse_dataset(text)
    assert again == dataset
    assert serialize_dataset(again) == text


def test_synthetic_round_trip():
    dataset = generate(SynthConfig(n_images=100, seed=2024))
    text = serialize_dataset(dataset)
    parsed = parse_dataset(text)
    assert parsed == dataset
    assert serialize_dataset(parsed) == text


def test_parse_check_rejects_validation_violations():
    # Counter-clockwise vertices parse as boxes but fail dataset validation.
    doc = minimal_manifest()
    doc["images"][0]["objects"][0]["obb"] = [[0, 10], [10, 10], [10, 0], [0, 0]]
    with pytest.raises(ManifestError) as err:
        parse_dataset(json.dumps(doc))
    assert "VERTEX_ORDER" in str(err.value)
    dataset = parse_dataset(json.dumps(doc), check=False)
    codes = {v.code for v in validate(dataset)}
    assert codes == {"VERTEX_ORDER"}


def make_scene(objects, relations, image_id="img", width=100, height=100):
    return SceneAnnotation(image_id, width, height, tuple(objects), tuple(relations))


def test_validate_clean_scene_is_empty():
    scene = make_scene(
        [ObjectInstance(0, 0, unit_box()), ObjectInstance(1, 1, unit_box(20, 20))],
        [RelationTriplet(0, 0, 1)],
    )
    dataset = Dataset(small_registry(), "val", (scene,))
    assert validate(dataset) == []


def test_validate_self_relation():
    scene = make_scene(
        [ObjectInstance(0, 0, unit_box())],
        [RelationTriplet(0, 0, 0)],
    )
    dataset = Dataset(small_registry(), "train", (scene,))
    codes = [v.code for v in validate(dataset)]
    assert codes == ["SELF_RELATION"]


def test_validate_duplicate_triplet_and_dangling():
    scene = make_scene(
        [ObjectInstance(0, 0, unit_box()), ObjectInstance(1, 1, unit_box(20, 20))],
        [
            RelationTriplet(0, 0, 1),
            RelationTriplet(0, 0, 1),
            RelationTriplet(0, 1, 5),
        ],
    )
    dataset = Dataset(small_registry(), "train", (scene,))
    codes = sorted(v.code for v in validate(dataset))
    assert codes == ["DANGLING_REFERENCE", "DUPLICATE_TRIPLET"]


def test_validate_id_and_range_codes():
    scene = make_scene(
        [
            ObjectInstance(-1, 0, unit_box()),
            ObjectInstance(2, 7, unit_box(20, 20)),
            ObjectInstance(2, 0, unit_box(40, 40)),
        ],
        [RelationTriplet(2, 9, 2)],
    )
    dataset = Dataset(small_registry(), "train", (scene,))
    codes = sorted(v.code for v in validate(dataset))
    assert codes == [
        "CATEGORY_RANGE",
        "DUPLICATE_OBJECT_ID",
        "NEGATIVE_OBJECT_ID",
        "PREDICATE_RANGE",
        "SELF_RELATION",
    ]


def test_validate_box_bounds_slack():
    # 100x100 image: slack allows vertices down to -50 and up to 150.
    inside = ObjectInstance(0, 0, unit_box(-50, 0))
    outside = ObjectInstance(1, 0, unit_box(145, 0))
    dataset = Dataset(
        small_registry(), "train", (make_scene([inside, outside], []),)
    )
    violations = validate(dataset)
    assert [v.code for v in violations] == ["BOX_BOUNDS"]
    assert "object 1" in violations[0].detail


def test_validate_image_extent_and_duplicate_image():
    scene_a = make_scene([], [], image_id="dup")
    scene_b = make_scene([], [], image_id="dup")
    bad = make_scene([], [], image_id="bad", width=0)
    dataset = Dataset(small_registry(), "train", (scene_a, scene_b, bad))
    codes = sorted(v.code for v in validate(dataset))
    assert codes == ["DUPLICATE_IMAGE_ID", "IMAGE_EXTENT"]


def test_validate_split_name():
    dataset = Dataset(small_registry(), "holdout", ())
    assert [v.code for v in validate(dataset)] == ["SPLIT_NAME"]


def test_size_class_boundaries():
    assert size_class(2048.0) == "large"
    assert size_class(2047.0) == "medium"
    assert size_class(144.0) == "medium"
    assert size_class(143.0) == "small"
    assert size_class(11.0) == "small"
    assert size_class(10.0) == "tiny"
    assert size_class(0.25) == "tiny"
    with pytest.raises(ValueError):
        size_class(0.0)
    with pytest.raises(ValueError):
        size_class(-4.0)


def test_size_class_total_partition():
    import numpy as np

    rng = np.random.default_rng(16)
    names = {"large", "medium", "small", "tiny"}
    for area in rng.uniform(1e-6, 10000.0, size=500):
        assert size_class(float(area)) in names


def test_canonical_registry_shape():
    reg = canonical_registry()
    assert reg.num_objects == 60
    assert reg.num_relations == 64
    assert reg.relation_kinds.count("spatial") == 20
    assert reg.relation_kinds.count("semantic") == 44


def test_registry_lookups_bijective():
    reg = canonical_registry()
    for idx, name in enumerate(reg.object_names):
        assert reg.object_index(name) == idx
    for idx, name in enumerate(reg.relation_names):
        assert reg.relation_index(name) == idx
    with pytest.raises(KeyError):
        reg.object_index("no such thing")


def test_registry_rejects_bad_names():
    with pytest.raises(ValueError):
        CategoryRegistry(("a", "a"), ("r",))
    with pytest.raises(ValueError):
        CategoryRegistry(("a",), ("r", ""))
    with pytest.raises(ValueError):
        CategoryRegistry((), ("r",))
    with pytest.raises(ValueError):
        CategoryRegistry(("a",), ("r",), ("bogus-kind",))


def test_registry_content_hash_tracks_names():
    a = CategoryRegistry(("x", "y"), ("r",))
    b = CategoryRegistry(("x", "y"), ("r",))
    c = CategoryRegistry(("x", "z"), ("r",))
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != c.content_hash()


def test_relation_kinds_serialized_only_when_non_canonical():
    plain = Dataset(small_registry(), "train", ())
    assert "relation_kinds" not in json.loads(serialize_dataset(plain))
    tagged = Dataset(
        CategoryRegistry(("a",), ("rel-x", "rel-y"), ("spatial", "semantic")),
        "train",
        (),
    )
    doc = json.loads(serialize_dataset(tagged))
    assert doc["relation_kinds"] == ["spatial", "semantic"]
    parsed = parse_dataset(serialize_dataset(tagged))
    assert parsed.registry.relation_kinds == ("spatial", "semantic")


def test_prediction_round_trip():
    scene = PredictionScene(
        image_id="img-1",
        width=100,
        height=100,
        objects=(
            ScoredObject(0, 0, unit_box(), 0.9),
            ScoredObject(1, 1, unit_box(20, 20), 0.7),
        ),
        relations=(ScoredRelation(0, 1, 1, 0.5),),
    )
    preds = PredictionSet(
        ("cat-a", "cat-b", "cat-c"), ("rel-x", "rel-y"), "val", (scene,)
    )
    text = serialize_predictions(preds)
    again = parse_predictions(text)
    assert again == preds
    assert serialize_predictions(again) == text


def test_prediction_requires_scores():
    doc = json.loads(
        serialize_predictions(
            PredictionSet(
                ("cat-a",),
                ("rel-x",),
                "val",
                (
                    PredictionScene(
                        "i", 10, 10, (ScoredObject(0, 0, unit_box(0, 0, 5), 1.0),), ()
                    ),
                ),
            )
        )
    )
    del doc["images"][0]["objects"][0]["score"]
    with pytest.raises(ManifestError) as err:
        parse_predictions(json.dumps(doc))
    assert "score" in str(err.value)


def test_prediction_rejects_non_finite_score():
    text = serialize_predictions(
        PredictionSet(
            ("cat-a",),
            ("rel-x",),
            "val",
            (
                PredictionScene(
                    "i", 10, 10, (ScoredObject(0, 0, unit_box(0, 0, 5), 1.0),), ()
                ),
            ),
        )
    )
    doc = json.loads(text)
    doc["images"][0]["objects"][0]["score"] = float("nan")
    with pytest.raises(ManifestError):
        parse_predictions(json.dumps(doc).replace("NaN", "1e999"))

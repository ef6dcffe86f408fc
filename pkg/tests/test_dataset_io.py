import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import TOY
from pdk.classes import CITYSCAPES
from pdk.dataset_io import (
    DepthClampWarning,
    DepthMap,
    DisparityMap,
    PanopticMap,
    SegmentInfo,
    StereoCamera,
    decode_depth,
    decode_disparity,
    decode_panoptic,
    depth_to_png_array,
    disparity_to_depth,
    encode_depth,
    encode_disparity,
    encode_panoptic,
    id2rgb,
    load_segments_sidecar,
    rgb2id,
    write_png,
)
from pdk.errors import DecodeError, FormatError, ValidationError


def sidecar(*entries):
    return {"image_id": "x", "segments_info": [{"id": i, "category_id": c, "iscrowd": k} for i, c, k in entries]}


# ---------------------------------------------------------------- panoptic

def test_id16_single_segment():
    raster = write_png(np.full((2, 2), 7, dtype=np.uint16))
    pan = decode_panoptic(raster, sidecar((7, 10, 0)), "id16", TOY)
    assert pan.width == 2 and pan.height == 2
    assert list(pan.segments) == [7]
    assert pan.segments[7].is_thing
    assert np.count_nonzero(pan.ids == 7) == 4


def test_rgb_id_formula():
    rgb = np.zeros((1, 2, 3), dtype=np.uint8)
    rgb[0, 0] = (1, 1, 0)
    assert rgb2id(rgb)[0, 0] == 257
    pan = decode_panoptic(write_png(rgb), sidecar((257, 1, 0)), "rgb_id", TOY)
    assert pan.ids[0, 0] == 257 and pan.ids[0, 1] == 0


def test_rgb_roundtrip():
    ids = np.array([[0, 1, 300], [70000, 16777215, 5]])
    assert np.array_equal(rgb2id(id2rgb(ids)), ids)


def test_cityscape_instance_ids():
    raw = np.array([[26001, 26001, 7], [24000, 26, 0]], dtype=np.uint16)
    pan = decode_panoptic(write_png(raw), None, "cityscape_instance_ids", CITYSCAPES)
    car = pan.segments[26001]
    assert (car.category_id, car.is_thing, car.is_crowd) == (26, True, False)
    assert pan.segments[24000].category_id == 24 and pan.segments[24000].is_thing
    assert not pan.segments[7].is_thing
    # bare thing label = group region
    assert pan.segments[26].is_crowd


def test_cityscape_unevaluated_labels_become_void():
    raw = np.array([[1, 9], [7, 7]], dtype=np.uint16)  # ego vehicle, parking
    pan = decode_panoptic(raw, None, "cityscape_instance_ids", CITYSCAPES)
    assert pan.ids[0].tolist() == [0, 0]
    assert list(pan.segments) == [7]


def test_unknown_pixel_id_names_id_and_pixel():
    raw = np.array([[1, 1], [1, 42]], dtype=np.uint16)
    with pytest.raises(DecodeError, match=r"42.*row=1, col=1"):
        decode_panoptic(raw, sidecar((1, 1, 0)), "id16", TOY)


def test_duplicate_sidecar_ids():
    raw = np.ones((2, 2), dtype=np.uint16)
    with pytest.raises(ValidationError, match="duplicate"):
        decode_panoptic(raw, sidecar((1, 1, 0), (1, 2, 0)), "id16", TOY)


def test_malformed_raster():
    with pytest.raises(FormatError):
        decode_panoptic(b"not a png", sidecar(), "rgb_id", TOY)
    with pytest.raises(FormatError):
        decode_panoptic(write_png(np.zeros((2, 2), np.uint8)), sidecar(), "rgb_id", TOY)


def test_sidecar_rules():
    raw = np.ones((2, 2), dtype=np.uint16)
    with pytest.raises(ValidationError, match="requires"):
        decode_panoptic(raw, None, "id16", TOY)
    with pytest.raises(ValidationError, match="not in class set"):
        decode_panoptic(raw, sidecar((1, 99, 0)), "id16", TOY)
    with pytest.raises(ValidationError, match="cover no pixel"):
        decode_panoptic(raw, sidecar((1, 1, 0), (2, 1, 0)), "id16", TOY)
    with pytest.raises(ValidationError, match="crowd"):
        decode_panoptic(raw, sidecar((1, 1, 1)), "id16", TOY)


def test_void_label_remap():
    raw = np.array([[255, 1]], dtype=np.uint16)
    pan = decode_panoptic(raw, sidecar((1, 1, 0)), "id16", TOY, void_label=255)
    assert pan.ids.tolist() == [[0, 1]]


def test_encode_decode_panoptic_roundtrip():
    ids = np.array([[0, 3, 3], [70000, 70000, 3]])
    pan = PanopticMap(ids, {3: SegmentInfo(3, 1, False), 70000: SegmentInfo(70000, 10, True, True)})
    png, side = encode_panoptic(pan, "rgb_id", "img")
    back = decode_panoptic(png, json.loads(json.dumps(side)), "rgb_id", TOY)
    assert np.array_equal(back.ids, pan.ids)
    assert back.segments == pan.segments


def test_coco_style_sidecar(tmp_path):
    doc = {"annotations": [{"file_name": "a.png", "segments_info": []}, {"file_name": "b.png", "segments_info": [{"id": 1, "category_id": 1}]}]}
    path = tmp_path / "panoptic.json"
    path.write_text(json.dumps(doc))
    assert load_segments_sidecar(path, "b")["segments_info"][0]["id"] == 1
    with pytest.raises(FormatError):
        load_segments_sidecar(path, "c")


@given(
    raster=hnp.arrays(np.uint16, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.integers(0, 5)),
    listed=st.lists(st.integers(1, 6), max_size=6),
    cats=st.lists(st.sampled_from([1, 2, 10, 11, 12, 99]), min_size=6, max_size=6),
)
def test_decode_never_returns_corrupt_map(raster, listed, cats):
    side = {"segments_info": [{"id": i, "category_id": cats[k % 6], "iscrowd": 0} for k, i in enumerate(listed)]}
    try:
        pan = decode_panoptic(raster, side, "id16", TOY)
    except ValidationError:
        return
    present = set(np.unique(pan.ids).tolist()) - {0}
    assert present == set(pan.segments)
    assert all(k > 0 and s.category_id in TOY for k, s in pan.segments.items())
    assert pan.ids.shape == raster.shape


# ------------------------------------------------------- disparity / depth

def test_decode_disparity_rule():
    disp = decode_disparity(write_png(np.array([[0, 1, 257, 513]], dtype=np.uint16)))
    assert disp.valid.tolist() == [[False, False, True, True]]
    assert disp.values[0, 2] == 1.0 and disp.values[0, 3] == 2.0


def test_disparity_to_depth_scalar():
    disp = DisparityMap(np.array([[4.0, 0.0]]), np.array([[True, False]]))
    depth = disparity_to_depth(disp, StereoCamera(baseline_m=0.2, focal_px=1000))
    assert depth.values[0, 0] == pytest.approx(50.0)
    assert depth.valid.tolist() == [[True, False]]


def test_disparity_to_depth_matches_per_pixel_loop():
    rng = np.random.default_rng(5)
    values = rng.uniform(0.5, 120.0, size=(4, 4))
    valid = rng.random((4, 4)) > 0.25
    cam = StereoCamera(baseline_m=0.21, focal_px=2000.0)
    depth = disparity_to_depth(DisparityMap(np.where(valid, values, 0), valid), cam)
    for r in range(4):
        for c in range(4):
            assert depth.valid[r, c] == valid[r, c]
            if valid[r, c]:
                assert depth.values[r, c] == pytest.approx(2000.0 * 0.21 / float(values[r, c]), rel=1e-15)


@given(st.floats(0.01, 500), st.floats(0.01, 500), st.floats(0.1, 10), st.floats(10, 5000))
def test_depth_monotone_in_disparity(d1, d2, baseline, focal):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    disp = DisparityMap(np.array([[lo, hi]]), np.ones((1, 2), bool))
    depth = disparity_to_depth(disp, StereoCamera(baseline, focal))
    assert depth.values[0, 0] > depth.values[0, 1]


def test_camera_validation():
    with pytest.raises(ValidationError):
        StereoCamera(0.0, 1000.0)
    with pytest.raises(ValidationError):
        StereoCamera(0.2, float("inf"))


def test_depth_encoding_examples():
    depth = DepthMap(np.array([[10.0, 0.0, 300.0]]), np.array([[True, False, True]]))
    arr, clamped = depth_to_png_array(depth)
    assert arr.tolist() == [[2560, 0, 65535]]
    assert clamped == 1
    with pytest.warns(DepthClampWarning, match="1 depth pixels"):
        data = encode_depth(depth)
    back = decode_depth(data)
    assert back.values[0, 0] == 10.0
    assert back.valid.tolist() == [[True, False, True]]


def test_tiny_depth_clamps_to_one():
    depth = DepthMap(np.array([[1e-4]]), np.array([[True]]))
    assert depth_to_png_array(depth)[0][0, 0] == 1


@given(
    hnp.arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(1 / 256 + 1e-9, 255.99)),
    st.data(),
)
def test_depth_roundtrip(values, data):
    valid = data.draw(hnp.arrays(bool, values.shape))
    depth = DepthMap(np.where(valid, values, 0.0), valid)
    back = decode_depth(encode_depth(depth))
    assert np.array_equal(back.valid, depth.valid)
    assert np.all(np.abs(back.values - depth.values)[valid] <= 1 / 512)


def test_disparity_png_roundtrip():
    disp = DisparityMap(np.array([[1.0, 2.5, 0.0]]), np.array([[True, True, False]]))
    back = decode_disparity(encode_disparity(disp))
    assert np.array_equal(back.values, disp.values)
    assert np.array_equal(back.valid, disp.valid)


def test_value_map_invariants():
    with pytest.raises(ValidationError):
        DepthMap(np.array([[0.0]]), np.array([[True]]))
    with pytest.raises(ValidationError):
        DepthMap(np.array([[np.nan]]), np.array([[True]]))
    d = DepthMap.from_array([[np.inf, -1.0, 3.0]])
    assert d.valid.tolist() == [[False, False, True]]
    with pytest.raises(ValueError):
        d.values[0, 2] = 1.0  # read-only

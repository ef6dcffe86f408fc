"""Raster and sidecar formats for panoptic labels, disparity and depth.

Conventions
-----------
* Panoptic ids: 0 is void. ``rgb_id`` stores ``R + 256*G + 256**2*B`` in an
  8-bit RGB PNG, ``id16`` stores the id directly in a single-channel PNG, and
  ``cityscape_instance_ids`` stores ``category*1000 + instance`` for thing
  instances and the bare category id for everything else.
* Disparity PNG (Cityscapes): stored value ``p`` means ``(p - 1) / 256`` pixels,
  ``p <= 1`` is invalid.
* Depth PNG (KITTI style): stored value is ``round(depth_m * 256)``, 0 is invalid.
"""
from __future__ import annotations

import io
import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .classes import CITYSCAPES, ClassSet
from .errors import DecodeError, FormatError, ValidationError

logger = logging.getLogger(__name__)

VOID = 0
ENCODINGS = ("id16", "rgb_id", "cityscape_instance_ids")
DEPTH_SCALE = 256.0
MAX_ENCODED_DEPTH = 65535 / DEPTH_SCALE


class DepthClampWarning(UserWarning):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SegmentInfo:
    id: int
    category_id: int
    is_thing: bool
    is_crowd: bool = False

    def __post_init__(self):
        if self.id <= 0:
            raise ValidationError(f"segment id must be positive, got {self.id}")
        if self.is_crowd and not self.is_thing:
            raise ValidationError(f"segment {self.id}: crowd flag on a stuff segment")


@dataclass(frozen=True, eq=False)
class PanopticMap:
    ids: np.ndarray
    segments: Mapping[int, SegmentInfo]

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2 or ids.size == 0:
            raise ValidationError(f"panoptic ids must be a non-empty 2-D raster, got shape {ids.shape}")
        if not np.issubdtype(ids.dtype, np.integer):
            raise ValidationError(f"panoptic ids must be integers, got {ids.dtype}")
        if ids.min() < 0:
            raise ValidationError("negative segment id in raster")
        object.__setattr__(self, "ids", _frozen(ids.astype(np.int64, copy=False)))
        segments = dict(sorted(self.segments.items()))
        for key, seg in segments.items():
            if key != seg.id:
                raise ValidationError(f"segment table key {key} does not match id {seg.id}")
        object.__setattr__(self, "segments", segments)

        present = np.unique(self.ids)
        present = present[present != VOID]
        unknown = np.setdiff1d(present, np.fromiter(segments, dtype=np.int64, count=len(segments)))
        if unknown.size:
            bad = int(unknown[0])
            row, col = np.argwhere(self.ids == bad)[0]
            raise DecodeError(f"pixel id {bad} at (row={row}, col={col}) has no segment entry")
        empty = sorted(set(segments) - set(present.tolist()))
        if empty:
            raise ValidationError(f"segments {empty} are listed but cover no pixel")

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape

    def sidecar(self, image_id: str = "") -> dict:
        return {
            "image_id": image_id,
            "segments_info": [
                {"id": s.id, "category_id": s.category_id, "iscrowd": int(s.is_crowd)}
                for s in self.segments.values()
            ],
        }


@dataclass(frozen=True, eq=False)
class _ValueMap:
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError(f"expected a non-empty 2-D raster, got shape {values.shape}")
        if valid.shape != values.shape:
            raise ValidationError(f"validity mask shape {valid.shape} != values shape {values.shape}")
        v = values[valid]
        if not (np.all(np.isfinite(v)) and np.all(v > 0)):
            raise ValidationError("valid pixels must hold finite positive values")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def from_array(cls, values):
        """Wrap a float raster; non-finite and non-positive entries become invalid."""
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values) & (values > 0)
        return cls(np.where(valid, values, 0.0), valid)


class DisparityMap(_ValueMap):
    """Per-pixel disparity in pixels."""


class DepthMap(_ValueMap):
    """Per-pixel depth in meters."""


@dataclass(frozen=True)
class StereoCamera:
    baseline_m: float
    focal_px: float

    def __post_init__(self):
        for name in ("baseline_m", "focal_px"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {v!r}")


# --------------------------------------------------------------------- PNG

def read_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            arr = np.array(im)
    except Exception as exc:  # PIL raises a zoo of exception types on bad input
        raise FormatError(f"cannot decode image: {exc}") from exc
    if mode == "P":
        raise FormatError("palette images are not supported")
    return arr


def write_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _single_channel(arr: np.ndarray, what: str) -> np.ndarray:
    if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer):
        raise FormatError(f"{what}: expected a single-channel integer raster, got shape {arr.shape} {arr.dtype}")
    return arr.astype(np.int64)


def rgb2id(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.int64)
    return rgb[..., 0] + 256 * rgb[..., 1] + 256 * 256 * rgb[..., 2]


def id2rgb(ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.max(initial=0) >= 256**3:
        raise ValidationError("segment id does not fit in 24-bit RGB")
    return np.stack([ids % 256, ids // 256 % 256, ids // 65536], axis=-1).astype(np.uint8)


# ---------------------------------------------------------------- panoptic

def load_segments_sidecar(path, stem: str | None = None) -> dict:
    """Read a per-image sidecar, or pick one image out of a COCO-style panoptic JSON."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if isinstance(doc, dict) and "annotations" in doc:
        for ann in doc["annotations"]:
            name = ann.get("file_name") or str(ann.get("image_id", ""))
            if Path(name).stem == stem or str(ann.get("image_id")) == stem:
                return ann
        raise FormatError(f"{path}: no annotation for image {stem!r}")
    if not isinstance(doc, dict) or "segments_info" not in doc:
        raise FormatError(f"{path}: missing segments_info")
    return doc


def _segments_from_sidecar(sidecar: Mapping, classes: ClassSet) -> dict[int, SegmentInfo]:
    segments: dict[int, SegmentInfo] = {}
    for entry in sidecar.get("segments_info", []):
        try:
            seg_id = int(entry["id"])
            cat = int(entry["category_id"])
            crowd = bool(entry.get("iscrowd", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad segments_info entry {entry!r}") from exc
        if seg_id in segments:
            raise ValidationError(f"duplicate segment id {seg_id} in sidecar")
        if cat not in classes:
            raise ValidationError(f"segment {seg_id}: category {cat} not in class set")
        segments[seg_id] = SegmentInfo(seg_id, cat, classes[cat].isthing, crowd)
    return segments


def decode_panoptic(
    raster: bytes | np.ndarray,
    sidecar: Mapping | None,
    encoding: str = "rgb_id",
    classes: ClassSet = CITYSCAPES,
    void_label: int | None = None,
) -> PanopticMap:
    """Build a PanopticMap from an encoded raster.

    ``raster`` may be PNG bytes or an already decoded array. ``void_label``
    remaps an external void id to 0 before validation.
    """
    arr = read_png(raster) if isinstance(raster, (bytes, bytearray)) else np.asarray(raster)

    if encoding == "rgb_id":
        if arr.ndim != 3 or arr.shape[2] not in (3, 4) or arr.dtype != np.uint8:
            raise FormatError(f"rgb_id expects an 8-bit RGB raster, got shape {arr.shape} {arr.dtype}")
        ids = rgb2id(arr[..., :3])
    elif encoding in ("id16", "cityscape_instance_ids"):
        ids = _single_channel(arr, encoding)
    else:
        raise ValidationError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")

    if void_label is not None and void_label != VOID:
        ids = np.where(ids == void_label, VOID, ids)

    if encoding == "cityscape_instance_ids":
        if sidecar is not None:
            raise ValidationError("cityscape_instance_ids carries its own segment table; sidecar must be absent")
        return _decode_cityscape(ids, classes)

    if sidecar is None:
        raise ValidationError(f"{encoding} requires a segments sidecar")
    return PanopticMap(ids, _segments_from_sidecar(sidecar, classes))


def _decode_cityscape(ids: np.ndarray, classes: ClassSet) -> PanopticMap:
    segments = {}
    out = ids.copy()
    for v in np.unique(ids).tolist():
        if v == VOID:
            continue
        cat = v // 1000 if v >= 1000 else v
        if cat not in classes:
            # labels outside the evaluated set (ego vehicle, parking, ...) are void
            out[ids == v] = VOID
            continue
        is_thing = classes[cat].isthing
        if v >= 1000 and not is_thing:
            raise DecodeError(f"instance id {v} refers to stuff category {cat}")
        # a bare thing label marks a group region, i.e. a crowd segment
        segments[v] = SegmentInfo(v, cat, is_thing, is_crowd=is_thing and v < 1000)
    return PanopticMap(out, segments)


def encode_panoptic(pan: PanopticMap, encoding: str = "rgb_id", image_id: str = "") -> tuple[bytes, dict | None]:
    if encoding == "rgb_id":
        return write_png(id2rgb(pan.ids)), pan.sidecar(image_id)
    if encoding == "id16":
        if pan.ids.max() > 65535:
            raise ValidationError("segment id does not fit in 16 bits")
        return write_png(pan.ids.astype(np.uint16)), pan.sidecar(image_id)
    if encoding == "cityscape_instance_ids":
        for s in pan.segments.values():
            expected_cat = s.id // 1000 if s.id >= 1000 else s.id
            if expected_cat != s.category_id or (s.is_thing and s.id < 1000 and not s.is_crowd):
                raise ValidationError(f"segment {s.id} does not follow the class*1000+instance convention")
        return write_png(pan.ids.astype(np.uint16)), None
    raise ValidationError(f"unknown encoding {encoding!r}")


# ------------------------------------------------------- disparity / depth

def decode_disparity(raster: bytes | np.ndarray) -> DisparityMap:
    arr = read_png(raster) if isinstance(raster, (bytes, bytearray)) else np.asarray(raster)
    p = _single_channel(arr, "disparity")
    valid = p > 1
    return DisparityMap(np.where(valid, (p - 1) / DEPTH_SCALE, 0.0), valid)


def encode_disparity(disp: DisparityMap) -> bytes:
    stored = np.round(disp.values * DEPTH_SCALE) + 1
    if np.any(stored[disp.valid] > 65535) or np.any(stored[disp.valid] < 2):
        raise ValidationError("disparity outside the encodable range (1/256, 255.99] px")
    return write_png(np.where(disp.valid, stored, 0).astype(np.uint16))


def disparity_to_depth(disp: DisparityMap, cam: StereoCamera) -> DepthMap:
    fb = cam.focal_px * cam.baseline_m
    safe = np.where(disp.valid, disp.values, 1.0)
    return DepthMap(np.where(disp.valid, fb / safe, 0.0), disp.valid.copy())


def depth_to_png_array(depth: DepthMap) -> tuple[np.ndarray, int]:
    """Quantize to the 16-bit depth convention; returns (raster, number of clamped pixels)."""
    stored = np.round(depth.values * DEPTH_SCALE)
    clamped = int(np.count_nonzero(depth.valid & (stored > 65535)))
    stored = np.clip(stored, 1, 65535)
    return np.where(depth.valid, stored, 0).astype(np.uint16), clamped


def encode_depth(depth: DepthMap) -> bytes:
    arr, clamped = depth_to_png_array(depth)
    if clamped:
        msg = f"{clamped} depth pixels exceed {MAX_ENCODED_DEPTH:.2f} m and were clamped"
        logger.warning(msg)
        warnings.warn(msg, DepthClampWarning, stacklevel=2)
    return write_png(arr)


def decode_depth(raster: bytes | np.ndarray) -> DepthMap:
    arr = read_png(raster) if isinstance(raster, (bytes, bytearray)) else np.asarray(raster)
    p = _single_channel(arr, "depth")
    valid = p > 0
    return DepthMap(np.where(valid, p / DEPTH_SCALE, 0.0), valid)


def load_camera(path) -> StereoCamera:
    try:
        doc = json.loads(Path(path).read_text())
        return StereoCamera(float(doc["baseline_m"]), float(doc["focal_px"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from exc

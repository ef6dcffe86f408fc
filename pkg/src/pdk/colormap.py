"""Panoptic-depth color map rendering.

Things are colored by instance depth along the HSV hue ramp 0 deg (red, near)
-> 120 deg (green) -> 240 deg (blue, far); stuff keeps its semantic palette
color and void stays black. Labels are not drawn into the raster; an
annotation list is returned for whoever places them.
"""
from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classes import ClassSet
from .dataset_io import VOID, PanopticMap
from .errors import FormatError, ValidationError
from .fusion import InstanceDepthRecord

RGB = tuple[int, int, int]
MAX_HUE_DEG = 240.0


@dataclass
class ColorMapConfig:
    near_m: float = 0.0
    far_m: float = 80.0
    stuff_palette: dict[int, RGB] = field(default_factory=dict)
    undefined_depth_color: RGB = (128, 128, 128)
    draw_boundaries: bool = True

    def __post_init__(self):
        if not self.near_m < self.far_m:
            raise ValidationError(f"near_m ({self.near_m}) must be below far_m ({self.far_m})")

    @classmethod
    def from_classes(cls, classes: ClassSet, **kwargs) -> "ColorMapConfig":
        palette = {c.id: tuple(c.color) for c in classes.stuff}
        palette.update(kwargs.pop("stuff_palette", {}) or {})
        return cls(stuff_palette=palette, **kwargs)


def load_palette(path) -> dict[int, RGB]:
    try:
        doc = json.loads(Path(path).read_text())
        return {int(k): tuple(int(c) for c in v) for k, v in doc.items()}
    except (OSError, json.JSONDecodeError, AttributeError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def depth_to_unit(d: float, cfg: ColorMapConfig) -> float:
    t = (d - cfg.near_m) / (cfg.far_m - cfg.near_m)
    return min(max(t, 0.0), 1.0)


def depth_to_hue(d: float, cfg: ColorMapConfig) -> float:
    """Hue in degrees, 0 at near_m and 240 at far_m."""
    return MAX_HUE_DEG * depth_to_unit(d, cfg)


def _to_byte(x: float) -> int:
    return int(math.floor(x * 255.0 + 0.5))


def depth_to_color(d: float, cfg: ColorMapConfig) -> RGB:
    if d is None or not d >= 0:
        raise ValidationError(f"depth must be defined and >= 0, got {d!r}")
    r, g, b = colorsys.hsv_to_rgb(depth_to_hue(d, cfg) / 360.0, 1.0, 1.0)
    return _to_byte(r), _to_byte(g), _to_byte(b)


def boundary_mask(ids: np.ndarray) -> np.ndarray:
    """Pixels whose right or lower neighbour carries a different id."""
    edge = np.zeros(ids.shape, dtype=bool)
    edge[:, :-1] |= ids[:, :-1] != ids[:, 1:]
    edge[:-1, :] |= ids[:-1, :] != ids[1:, :]
    return edge


def render(
    pan: PanopticMap,
    records: Sequence[InstanceDepthRecord],
    cfg: ColorMapConfig,
    classes: ClassSet | None = None,
) -> tuple[np.ndarray, list[dict]]:
    """Return an (H, W, 3) uint8 raster and the per-thing annotation list."""
    by_id = {r.segment_id: r for r in records}
    missing = sorted(set(pan.segments) - set(by_id))
    if missing:
        raise ValidationError(f"no depth record for segments {missing}")
    extra = sorted(set(by_id) - set(pan.segments))
    if extra:
        raise ValidationError(f"depth records for unknown segments {extra}")

    seg_ids = np.array(list(pan.segments), dtype=np.int64)
    lut = np.zeros((seg_ids.size + 1, 3), dtype=np.uint8)  # row 0: void
    annotations = []
    for i, sid in enumerate(seg_ids.tolist(), start=1):
        seg = pan.segments[sid]
        rec = by_id[sid]
        if seg.is_thing:
            lut[i] = cfg.undefined_depth_color if rec.mean_depth_m is None else depth_to_color(rec.mean_depth_m, cfg)
            name = classes[seg.category_id].name if classes is not None and seg.category_id in classes else str(seg.category_id)
            annotations.append(
                {
                    "segment_id": sid,
                    "category": name,
                    "depth_m": rec.mean_depth_m,
                    "centroid": list(rec.centroid),
                }
            )
        else:
            if seg.category_id not in cfg.stuff_palette:
                raise ValidationError(f"no palette color for stuff category {seg.category_id}")
            lut[i] = cfg.stuff_palette[seg.category_id]

    index = np.zeros(pan.ids.shape, dtype=np.int64)
    labelled = pan.ids != VOID
    index[labelled] = np.searchsorted(seg_ids, pan.ids[labelled]) + 1
    if cfg.draw_boundaries:
        index[boundary_mask(pan.ids)] = 0
    return lut[index], annotations

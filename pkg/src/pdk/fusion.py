"""Instance-level depth: the mean depth over each segment's valid pixels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import VOID, DepthMap, PanopticMap
from .errors import ValidationError


@dataclass(frozen=True)
class InstanceDepthRecord:
    segment_id: int
    category_id: int
    is_thing: bool
    mean_depth_m: float | None  # None when the segment has no valid depth pixel
    pixel_count: int
    valid_pixel_count: int
    centroid: tuple[float, float]  # (row, col)

    @property
    def has_depth(self) -> bool:
        return self.mean_depth_m is not None

    def to_json(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "category_id": self.category_id,
            "is_thing": self.is_thing,
            "mean_depth_m": self.mean_depth_m,
            "pixel_count": self.pixel_count,
            "valid_pixel_count": self.valid_pixel_count,
            "centroid": list(self.centroid),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "InstanceDepthRecord":
        depth = doc["mean_depth_m"]
        return cls(
            segment_id=int(doc["segment_id"]),
            category_id=int(doc["category_id"]),
            is_thing=bool(doc["is_thing"]),
            mean_depth_m=None if depth is None else float(depth),
            pixel_count=int(doc["pixel_count"]),
            valid_pixel_count=int(doc["valid_pixel_count"]),
            centroid=(float(doc["centroid"][0]), float(doc["centroid"][1])),
        )


def instance_depths(pan: PanopticMap, depth: DepthMap) -> list[InstanceDepthRecord]:
    if pan.shape != depth.shape:
        raise ValidationError(f"dimension mismatch: panoptic {pan.shape} vs depth {depth.shape}")
    seg_ids = np.array(list(pan.segments), dtype=np.int64)  # ascending
    if seg_ids.size == 0:
        return []

    flat = pan.ids.ravel()
    labelled = flat != VOID
    # dense index 0..k-1 for every labelled pixel
    idx = np.searchsorted(seg_ids, flat[labelled])
    k = seg_ids.size

    rows, cols = np.divmod(np.flatnonzero(labelled), pan.width)
    counts = np.bincount(idx, minlength=k)
    row_sum = np.bincount(idx, weights=rows, minlength=k)
    col_sum = np.bincount(idx, weights=cols, minlength=k)

    valid = depth.valid.ravel()[labelled]
    vals = depth.values.ravel()[labelled]
    vidx = idx[valid]
    vvals = vals[valid]
    vcount = np.bincount(vidx, minlength=k)
    vsum = np.bincount(vidx, weights=vvals, minlength=k)
    vmin = np.full(k, np.inf)
    vmax = np.full(k, -np.inf)
    np.minimum.at(vmin, vidx, vvals)
    np.maximum.at(vmax, vidx, vvals)

    records = []
    for i, sid in enumerate(seg_ids.tolist()):
        seg = pan.segments[sid]
        mean = None
        if vcount[i]:
            # clip guards the last-ulp drift of sum/count outside [min, max]
            mean = float(min(max(vsum[i] / vcount[i], vmin[i]), vmax[i]))
        records.append(
            InstanceDepthRecord(
                segment_id=sid,
                category_id=seg.category_id,
                is_thing=seg.is_thing,
                mean_depth_m=mean,
                pixel_count=int(counts[i]),
                valid_pixel_count=int(vcount[i]),
                centroid=(float(row_sum[i] / counts[i]), float(col_sum[i] / counts[i])),
            )
        )
    return records

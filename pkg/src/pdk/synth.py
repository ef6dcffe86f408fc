"""Synthetic ground-truth / prediction scenes and brute-force reference oracles.

Random numbers come from SplitMix64 (Steele, Lea & Flood 2014): the state
advances by the constant 0x9E3779B97F4A7C15 and each output is the state run
through the fixed 64-bit finaliser below. Floats in [0, 1) are the top 53
bits times 2**-53. Because the state is a plain counter, a block of n draws
can be produced with numpy and is bit-identical to n scalar draws, so scenes
are reproducible on any platform and in any language.

Draw order for ``generate_scene`` (part of the reproducibility contract):
stuff category shuffle, stuff band depths, things (size, position, category,
crowd, depth, rejection-sampled), per-pixel gt invalidity, per-thing
(drop, flip, flip target), spurious rectangles, pred id relabelling,
per-pixel depth noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .classes import CITYSCAPES, ClassSet
from .dataset_io import VOID, DepthMap, PanopticMap, SegmentInfo
from .depth_metrics import IRMSE_SCALE, SILOG_SCALE, THRESHOLDS, DepthReport
from .errors import GenerationError, PDKError, ValidationError
from .panoptic_metrics import MatchResult

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
MAX_PLACEMENT_ATTEMPTS = 1000
ORACLE_IOU_THRESHOLD = 0.5


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        return _mix(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi)."""
        return lo + int(self.random() * (hi - lo))

    def random_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(GAMMA)
            out = _mix_array(states)
        self.state = (self.state + n * GAMMA) & MASK64
        return (out >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def shuffle(self, items: list) -> list:
        items = list(items)
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(0, i + 1)
            items[i], items[j] = items[j], items[i]
        return items


# ------------------------------------------------------------------ scenes

@dataclass
class Perturbation:
    boundary_erosion_px: int = 0
    class_flip_rate: float = 0.0
    drop_rate: float = 0.0
    depth_noise_rel: float = 0.0
    # extensions used to exercise the void / crowd / false-positive paths
    num_spurious: int = 0
    half_iou_pair: bool = False


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    num_things: int = 3
    num_stuff: int = 2
    depth_range: tuple[float, float] = (2.0, 80.0)
    perturbation: Perturbation = field(default_factory=Perturbation)
    seed: int = 0
    crowd_rate: float = 0.0
    void_band_px: int = 0
    depth_invalid_rate: float = 0.0

    def __post_init__(self):
        if isinstance(self.perturbation, dict):
            self.perturbation = Perturbation(**self.perturbation)
        self.depth_range = tuple(float(v) for v in self.depth_range)
        p = self.perturbation
        if self.width < 8 or self.height < 8:
            raise ValidationError("scene dimensions must be >= 8")
        lo, hi = self.depth_range
        if not 0 < lo <= hi:
            raise ValidationError(f"bad depth_range {self.depth_range}")
        for name, v in (
            ("class_flip_rate", p.class_flip_rate),
            ("drop_rate", p.drop_rate),
            ("crowd_rate", self.crowd_rate),
            ("depth_invalid_rate", self.depth_invalid_rate),
        ):
            if not 0 <= v <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if not 0 <= p.depth_noise_rel < 1:
            raise ValidationError(f"depth_noise_rel must lie in [0, 1), got {p.depth_noise_rel}")
        if min(self.num_things, self.num_stuff, self.void_band_px, p.boundary_erosion_px, p.num_spurious) < 0:
            raise ValidationError("counts must be non-negative")
        if not 0 <= self.seed <= MASK64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def to_json(self) -> dict:
        d = asdict(self)
        d["depth_range"] = list(self.depth_range)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        return cls(**doc)


@dataclass(frozen=True)
class ThingRect:
    segment_id: int
    category_id: int
    is_crowd: bool
    row: int
    col: int
    height: int
    width: int
    depth_m: float


class Scene(NamedTuple):
    gt: PanopticMap
    gt_depth: DepthMap
    pred: PanopticMap
    pred_depth: DepthMap
    things: tuple[ThingRect, ...] = ()


def _overlaps(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    r0, c0, h0, w0 = a
    r1, c1, h1, w1 = b
    return r0 < r1 + h1 and r1 < r0 + h0 and c0 < c1 + w1 and c1 < c0 + w0


def _place_things(spec: SceneSpec, rng: SplitMix64, avail_rows: int, thing_classes, first_id: int):
    if spec.num_things == 0:
        return []
    if not thing_classes:
        raise GenerationError("class set has no thing categories")
    if avail_rows < 2 or spec.num_things * 4 > avail_rows * spec.width:
        raise GenerationError(f"cannot fit {spec.num_things} things into {avail_rows}x{spec.width}")
    max_side = max(2, min(avail_rows, spec.width) // 3)
    rects: list[ThingRect] = []
    for k in range(spec.num_things):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            h = rng.integers(2, max_side + 1)
            w = rng.integers(2, max_side + 1)
            if k == 0 and spec.perturbation.half_iou_pair and w % 2:
                w = w + 1 if w < max_side else w - 1
            r = rng.integers(0, avail_rows - h + 1)
            c = rng.integers(0, spec.width - w + 1)
            if not any(_overlaps((r, c, h, w), (t.row, t.col, t.height, t.width)) for t in rects):
                break
        else:
            raise GenerationError(f"could not place thing {k + 1} of {spec.num_things} without overlap")
        cat = thing_classes[rng.integers(0, len(thing_classes))].id
        crowd = rng.random() < spec.crowd_rate and not (k == 0 and spec.perturbation.half_iou_pair)
        depth = rng.uniform(*spec.depth_range)
        rects.append(ThingRect(first_id + k, cat, crowd, r, c, h, w, depth))
    return rects


def _table(ids: np.ndarray, info: dict[int, SegmentInfo]) -> dict[int, SegmentInfo]:
    present = set(np.unique(ids).tolist()) - {VOID}
    return {k: v for k, v in info.items() if k in present}


def generate_scene(spec: SceneSpec, classes: ClassSet = CITYSCAPES) -> Scene:
    rng = SplitMix64(spec.seed)
    H, W = spec.height, spec.width
    p = spec.perturbation
    avail = H - spec.void_band_px
    if avail < 1:
        raise GenerationError("void band covers the whole image")

    # stuff: horizontal bands over the non-void rows
    stuff_classes = rng.shuffle(classes.stuff)
    if spec.num_stuff > min(len(stuff_classes), avail):
        raise GenerationError(f"cannot fit {spec.num_stuff} stuff bands")
    stuff_ids = np.zeros((H, W), dtype=np.int64)
    clean_depth = np.full((H, W), spec.depth_range[1])
    info: dict[int, SegmentInfo] = {}
    for b in range(spec.num_stuff):
        r0, r1 = b * avail // spec.num_stuff, (b + 1) * avail // spec.num_stuff
        sid = b + 1
        stuff_ids[r0:r1] = sid
        clean_depth[r0:r1] = rng.uniform(*spec.depth_range)
        info[sid] = SegmentInfo(sid, stuff_classes[b].id, False)

    thing_classes = classes.things
    things = _place_things(spec, rng, avail, thing_classes, spec.num_stuff + 1)
    gt_ids = stuff_ids.copy()
    for t in things:
        gt_ids[t.row : t.row + t.height, t.col : t.col + t.width] = t.segment_id
        clean_depth[t.row : t.row + t.height, t.col : t.col + t.width] = t.depth_m
        info[t.segment_id] = SegmentInfo(t.segment_id, t.category_id, True, t.is_crowd)

    gt_valid = rng.random_array(H * W).reshape(H, W) >= spec.depth_invalid_rate
    gt = PanopticMap(gt_ids, _table(gt_ids, info))
    gt_depth = DepthMap(np.where(gt_valid, clean_depth, 0.0), gt_valid)

    # prediction: start from stuff, the void band predicted as the lowest band
    base = stuff_ids.copy()
    if spec.void_band_px and spec.num_stuff:
        base[avail:] = spec.num_stuff
    pred_ids = base.copy()
    pred_info = {k: v for k, v in info.items() if not v.is_thing}
    e = p.boundary_erosion_px
    for k, t in enumerate(things):
        drop = rng.random() < p.drop_rate
        flip = rng.random() < p.class_flip_rate
        other = rng.integers(0, max(len(thing_classes) - 1, 1))
        if k == 0 and p.half_iou_pair:
            continue  # painted last
        cat = t.category_id
        if flip and len(thing_classes) > 1:
            choices = [c.id for c in thing_classes if c.id != t.category_id]
            cat = choices[other]
        r0, r1 = t.row + e, t.row + t.height - e
        c0, c1 = t.col + e, t.col + t.width - e
        if drop or r0 >= r1 or c0 >= c1:
            continue
        pred_ids[r0:r1, c0:c1] = t.segment_id
        pred_info[t.segment_id] = SegmentInfo(t.segment_id, cat, True)

    next_id = spec.num_stuff + spec.num_things + 1
    for _ in range(p.num_spurious):
        if not thing_classes:
            break
        h = rng.integers(2, max(2, min(H, W) // 4) + 1)
        w = rng.integers(2, max(2, min(H, W) // 4) + 1)
        r = rng.integers(0, H - h + 1)
        c = rng.integers(0, W - w + 1)
        cat = thing_classes[rng.integers(0, len(thing_classes))].id
        pred_ids[r : r + h, c : c + w] = next_id
        pred_info[next_id] = SegmentInfo(next_id, cat, True)
        next_id += 1

    if p.half_iou_pair and things:
        t = things[0]
        region = (slice(t.row, t.row + t.height), slice(t.col, t.col + t.width))
        pred_ids[region] = base[region]
        pred_ids[t.row : t.row + t.height, t.col : t.col + t.width // 2] = t.segment_id
        pred_info[t.segment_id] = SegmentInfo(t.segment_id, t.category_id, True)

    # relabel prediction ids so they never coincide with gt ids by construction
    pred_table = _table(pred_ids, pred_info)
    new_ids: dict[int, int] = {}
    used: set[int] = set()
    for old in pred_table:
        nid = rng.integers(1, 1 << 24)
        while nid in used:
            nid = rng.integers(1, 1 << 24)
        used.add(nid)
        new_ids[old] = nid
    if new_ids:
        keys = np.array(sorted(new_ids), dtype=np.int64)
        vals = np.array([new_ids[k] for k in keys.tolist()], dtype=np.int64)
        lab = pred_ids != VOID
        pred_ids[lab] = vals[np.searchsorted(keys, pred_ids[lab])]
    pred = PanopticMap(
        pred_ids,
        {new_ids[k]: SegmentInfo(new_ids[k], s.category_id, s.is_thing) for k, s in pred_table.items()},
    )

    noise = (2.0 * rng.random_array(H * W).reshape(H, W) - 1.0) * p.depth_noise_rel
    pred_depth = DepthMap(clean_depth * (1.0 + noise), np.ones((H, W), dtype=bool))
    return Scene(gt, gt_depth, pred, pred_depth, tuple(things))


def scene_bytes(scene: Scene) -> bytes:
    """Canonical byte serialisation, used for determinism checks."""
    parts = [
        scene.gt.ids.tobytes(),
        scene.pred.ids.tobytes(),
        scene.gt_depth.values.tobytes(),
        scene.gt_depth.valid.tobytes(),
        scene.pred_depth.values.tobytes(),
        scene.pred_depth.valid.tobytes(),
        json.dumps([scene.gt.sidecar(), scene.pred.sidecar()], sort_keys=True).encode(),
    ]
    return b"".join(parts)


# ----------------------------------------------------------------- oracles

class OracleError(PDKError):
    pass


def oracle_match(gt: PanopticMap, pred: PanopticMap) -> MatchResult:
    """Exhaustive reference matcher: every same-category pair, boolean masks only."""
    if gt.shape != pred.shape:
        raise ValidationError("dimension mismatch")
    ignore = gt.ids == 0
    for seg in gt.segments.values():
        if seg.is_crowd:
            ignore = ignore | (gt.ids == seg.id)
    keep = ~ignore

    result = MatchResult()
    gt_hits: dict[int, int] = {}
    pred_hits: dict[int, int] = {}
    for g in gt.segments.values():
        if g.is_crowd:
            continue
        a = gt.ids == g.id
        for q in pred.segments.values():
            if q.category_id != g.category_id:
                continue
            b = pred.ids == q.id
            inter = int(np.sum(a & b & keep))
            union = int(np.sum((a | b) & keep))
            if union and inter / union > ORACLE_IOU_THRESHOLD:
                result.for_class(g.category_id).pairs.append((g.id, q.id, inter / union))
                gt_hits[g.id] = gt_hits.get(g.id, 0) + 1
                pred_hits[q.id] = pred_hits.get(q.id, 0) + 1
    dup = [k for k, v in gt_hits.items() if v > 1] + [k for k, v in pred_hits.items() if v > 1]
    if dup:
        raise OracleError(f"matching is not unique for segments {dup}")

    for g in gt.segments.values():
        if not g.is_crowd and g.id not in gt_hits:
            result.for_class(g.category_id).fn.append(g.id)
    for q in pred.segments.values():
        if q.id in pred_hits:
            continue
        b = pred.ids == q.id
        if np.sum(b & ignore) / np.sum(b) > 0.5:
            result.for_class(q.category_id).discarded.append(q.id)
        else:
            result.for_class(q.category_id).fp.append(q.id)
    return result


def oracle_depth_report(pred: DepthMap, gt: DepthMap) -> DepthReport:
    """Literal per-pixel loop over the printed formulas."""
    if pred.shape != gt.shape:
        raise ValidationError("dimension mismatch")
    pv, gv = pred.values.tolist(), gt.values.tolist()
    pm, gm = pred.valid.tolist(), gt.valid.tolist()
    n = 0
    gt_count = 0
    s_sq = s_abs = s_inv = s_x = s_x2 = 0.0
    hits = [0, 0, 0]
    for i in range(len(gv)):
        for j in range(len(gv[i])):
            if gm[i][j]:
                gt_count += 1
            if not (gm[i][j] and pm[i][j]):
                continue
            d, ds = gv[i][j], pv[i][j]
            n += 1
            s_sq += ((ds - d) / d) ** 2
            s_abs += abs((ds - d) / d)
            s_inv += (1.0 / ds - 1.0 / d) ** 2
            x = math.log(d) - math.log(ds)
            s_x += x
            s_x2 += x * x
            ratio = max(d / ds, ds / d)
            for k, t in enumerate(THRESHOLDS):
                if ratio < t:
                    hits[k] += 1
    if n == 0:
        raise ValidationError("no jointly valid pixels")
    return DepthReport(
        sq_err=s_sq / n,
        abs_err=s_abs / n,
        irmse=IRMSE_SCALE * math.sqrt(s_inv / n),
        silog=SILOG_SCALE * (s_x2 / n - s_x * s_x / (n * n)),
        delta=(hits[0] / n, hits[1] / n, hits[2] / n),
        n=n,
        coverage=n / gt_count,
    )

"""Panoptic Quality: segment matching and PQ / SQ / RQ accumulation.

A predicted segment matches a ground-truth segment when both carry the same
category and their IoU is strictly above 0.5; the threshold makes the
matching unique, so no assignment step is needed. Void pixels and pixels of
crowd ground-truth segments form the ignore mask: they are removed from the
union, and an unmatched prediction lying more than half inside the ignore
mask is discarded instead of being counted as a false positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classes import ClassSet
from .dataset_io import VOID, PanopticMap
from .errors import ValidationError


@dataclass
class ClassMatch:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)  # (gt_id, pred_id, iou)
    fn: list[int] = field(default_factory=list)
    fp: list[int] = field(default_factory=list)
    discarded: list[int] = field(default_factory=list)

    def canonical(self) -> "ClassMatch":
        return ClassMatch(sorted(self.pairs), sorted(self.fn), sorted(self.fp), sorted(self.discarded))


@dataclass
class MatchResult:
    per_class: dict[int, ClassMatch] = field(default_factory=dict)

    def for_class(self, category_id: int) -> ClassMatch:
        return self.per_class.setdefault(category_id, ClassMatch())

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return sorted(p for cm in self.per_class.values() for p in cm.pairs)

    @property
    def discarded(self) -> list[int]:
        return sorted(d for cm in self.per_class.values() for d in cm.discarded)

    def canonical(self) -> "MatchResult":
        """Sorted, with empty classes dropped; two equivalent results compare equal."""
        return MatchResult(
            {
                c: cm.canonical()
                for c, cm in sorted(self.per_class.items())
                if cm.pairs or cm.fn or cm.fp or cm.discarded
            }
        )


def _check_pair(gt: PanopticMap, pred: PanopticMap) -> None:
    if gt.shape != pred.shape:
        raise ValidationError(f"dimension mismatch: gt {gt.shape} vs pred {pred.shape}")


def _check_classes(pan: PanopticMap, classes: ClassSet, which: str) -> None:
    for seg in pan.segments.values():
        if seg.category_id not in classes:
            raise ValidationError(f"{which} segment {seg.id}: category {seg.category_id} not in class set")


def ignore_mask(gt: PanopticMap) -> np.ndarray:
    """Void pixels plus pixels of crowd ground-truth segments."""
    crowd = [s.id for s in gt.segments.values() if s.is_crowd]
    mask = gt.ids == VOID
    if crowd:
        mask |= np.isin(gt.ids, crowd)
    return mask


def segment_iou(gt: PanopticMap, gt_id: int, pred: PanopticMap, pred_id: int, ignore=None) -> float:
    _check_pair(gt, pred)
    if gt_id not in gt.segments:
        raise ValidationError(f"unknown gt segment id {gt_id}")
    if pred_id not in pred.segments:
        raise ValidationError(f"unknown pred segment id {pred_id}")
    a = gt.ids == gt_id
    b = pred.ids == pred_id
    keep = ~np.asarray(ignore, dtype=bool) if ignore is not None else np.ones(a.shape, dtype=bool)
    union = np.count_nonzero((a | b) & keep)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b & keep) / union


def _areas(ids: np.ndarray) -> dict[int, int]:
    u, c = np.unique(ids, return_counts=True)
    return dict(zip(u.tolist(), c.tolist()))


def match_segments(gt: PanopticMap, pred: PanopticMap, classes: ClassSet) -> MatchResult:
    _check_pair(gt, pred)
    _check_classes(gt, classes, "gt")
    _check_classes(pred, classes, "pred")

    g = gt.ids.ravel()
    p = pred.ids.ravel()
    ignore = ignore_mask(gt).ravel()

    gt_area = _areas(g)
    pred_area = _areas(p)
    pred_ignored = _areas(p[ignore])

    offset = int(p.max()) + 1
    keys, inter = np.unique(g * offset + p, return_counts=True)

    result = MatchResult()
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for key, n in zip(keys.tolist(), inter.tolist()):
        gid, pid = divmod(key, offset)
        if gid == VOID or pid == VOID:
            continue
        gseg, pseg = gt.segments[gid], pred.segments[pid]
        if gseg.is_crowd or gseg.category_id != pseg.category_id:
            continue
        union = gt_area[gid] + pred_area[pid] - n - pred_ignored.get(pid, 0)
        if 2 * n > union:
            result.for_class(gseg.category_id).pairs.append((gid, pid, n / union))
            matched_gt.add(gid)
            matched_pred.add(pid)

    for gid, seg in gt.segments.items():
        if not seg.is_crowd and gid not in matched_gt:
            result.for_class(seg.category_id).fn.append(gid)
    for pid, seg in pred.segments.items():
        if pid in matched_pred:
            continue
        cm = result.for_class(seg.category_id)
        if 2 * pred_ignored.get(pid, 0) > pred_area[pid]:
            cm.discarded.append(pid)
        else:
            cm.fp.append(pid)
    return result


# ------------------------------------------------------------ accumulation

@dataclass
class ClassStat:
    ious: list[float] = field(default_factory=list)
    fp: int = 0
    fn: int = 0

    @property
    def tp(self) -> int:
        return len(self.ious)

    @property
    def iou_sum(self) -> float:
        # fsum is exactly rounded, so the total does not depend on merge order
        return math.fsum(self.ious)


class PQState:
    """Per-class sums over a dataset. States merge with ``+``/``+=`` in any order."""

    def __init__(self):
        self.stats: dict[int, ClassStat] = {}

    def _stat(self, category_id: int) -> ClassStat:
        return self.stats.setdefault(category_id, ClassStat())

    def __iadd__(self, other: "PQState") -> "PQState":
        for c, st in other.stats.items():
            mine = self._stat(c)
            mine.ious.extend(st.ious)
            mine.fp += st.fp
            mine.fn += st.fn
        return self

    def __add__(self, other: "PQState") -> "PQState":
        out = PQState()
        out += self
        out += other
        return out


def accumulate(state: PQState, match: MatchResult) -> PQState:
    for c, cm in match.per_class.items():
        st = state._stat(c)
        st.ious.extend(iou for _, _, iou in cm.pairs)
        st.fp += len(cm.fp)
        st.fn += len(cm.fn)
    return state


@dataclass
class ClassPQ:
    class_id: int
    name: str
    isthing: bool
    iou_sum: float
    tp: int
    fp: int
    fn: int
    pq: float
    sq: float
    rq: float


@dataclass
class Aggregate:
    pq: float | None
    sq: float | None
    rq: float | None
    num_classes: int

    @property
    def defined(self) -> bool:
        return self.num_classes > 0

    @classmethod
    def over(cls, rows: list[ClassPQ]) -> "Aggregate":
        if not rows:
            return cls(None, None, None, 0)
        n = len(rows)
        return cls(
            math.fsum(r.pq for r in rows) / n,
            math.fsum(r.sq for r in rows) / n,
            math.fsum(r.rq for r in rows) / n,
            n,
        )


@dataclass
class PQReport:
    per_class: list[ClassPQ]
    aggregate: Aggregate
    things: Aggregate
    stuff: Aggregate

    def to_json(self) -> dict:
        def agg(a: Aggregate) -> dict:
            return {"pq": a.pq, "sq": a.sq, "rq": a.rq, "num_classes": a.num_classes, "defined": a.defined}

        return {
            "per_class": [vars(r).copy() for r in self.per_class],
            "aggregate": agg(self.aggregate),
            "things": agg(self.things),
            "stuff": agg(self.stuff),
        }

    def format_table(self) -> str:
        """Percentages, laid out like the usual PQ / SQ / RQ results table."""

        def pct(v):
            return "   n/a" if v is None else f"{100 * v:6.1f}"

        lines = [f"{'':<16} | {'PQ':>6} {'SQ':>6} {'RQ':>6} | {'#cls':>4}", "-" * 46]
        for label, a in (("All", self.aggregate), ("Things", self.things), ("Stuff", self.stuff)):
            lines.append(f"{label:<16} | {pct(a.pq)} {pct(a.sq)} {pct(a.rq)} | {a.num_classes:>4}")
        lines.append("-" * 46)
        for r in self.per_class:
            lines.append(f"{r.name[:16]:<16} | {pct(r.pq)} {pct(r.sq)} {pct(r.rq)} | {r.tp:>4}")
        return "\n".join(lines)


def finalize(state: PQState, classes: ClassSet) -> PQReport:
    rows = []
    for cat in classes:
        st = state.stats.get(cat.id)
        if st is None or st.tp + st.fp + st.fn == 0:
            continue
        tp = st.tp
        if tp:
            sq = st.iou_sum / tp
            rq = tp / (tp + 0.5 * st.fp + 0.5 * st.fn)
            pq = sq * rq
        else:
            sq = rq = pq = 0.0
        rows.append(ClassPQ(cat.id, cat.name, cat.isthing, st.iou_sum, tp, st.fp, st.fn, pq, sq, rq))
    return PQReport(
        per_class=rows,
        aggregate=Aggregate.over(rows),
        things=Aggregate.over([r for r in rows if r.isthing]),
        stuff=Aggregate.over([r for r in rows if not r.isthing]),
    )


def evaluate_pairs(pairs, classes: ClassSet) -> PQReport:
    """Convenience: match and accumulate an iterable of (gt, pred) maps."""
    state = PQState()
    for gt, pred in pairs:
        accumulate(state, match_segments(gt, pred, classes))
    return finalize(state, classes)

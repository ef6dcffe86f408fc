"""Depth error metrics over the pixels valid in both prediction and ground truth.

Scalings: IRMSE is reported per kilometre (depths in metres, x1000) and SILog
is the variance of ``ln(gt) - ln(pred)`` times 100. Both match the magnitudes
common in driving benchmarks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset_io import DepthMap
from .errors import EvaluationError, ValidationError

THRESHOLDS = (1.25, 1.25**2, 1.25**3)
IRMSE_SCALE = 1000.0
SILOG_SCALE = 100.0

METADATA = {
    "IRMSE_units": "1/km",
    "SILog_scale": "variance of natural-log difference x 100",
    "delta_thresholds": list(THRESHOLDS),
    "pixel_set": "valid in both maps",
}


def _joint(pred: DepthMap, gt: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    if pred.shape != gt.shape:
        raise ValidationError(f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    mask = pred.valid & gt.valid
    if not mask.any():
        raise EvaluationError("no jointly valid pixels")
    return pred.values[mask], gt.values[mask]


def sq_err(pred: DepthMap, gt: DepthMap) -> float:
    d_star, d = _joint(pred, gt)
    return float(np.mean(((d_star - d) / d) ** 2))


def abs_err(pred: DepthMap, gt: DepthMap) -> float:
    d_star, d = _joint(pred, gt)
    return float(np.mean(np.abs((d_star - d) / d)))


def irmse(pred: DepthMap, gt: DepthMap) -> float:
    d_star, d = _joint(pred, gt)
    return IRMSE_SCALE * math.sqrt(float(np.mean((1.0 / d_star - 1.0 / d) ** 2)))


def silog(pred: DepthMap, gt: DepthMap) -> float:
    d_star, d = _joint(pred, gt)
    x = np.log(d) - np.log(d_star)
    # centred form of mean(x^2) - mean(x)^2, no cancellation
    return SILOG_SCALE * float(np.mean((x - x.mean()) ** 2))


def delta(pred: DepthMap, gt: DepthMap, t: float) -> float:
    if not t > 1:
        raise ValidationError(f"delta threshold must exceed 1, got {t}")
    d_star, d = _joint(pred, gt)
    ratio = np.maximum(d / d_star, d_star / d)
    return np.count_nonzero(ratio < t) / ratio.size


@dataclass
class DepthReport:
    sq_err: float
    abs_err: float
    irmse: float
    silog: float
    delta: tuple[float, float, float]
    n: int
    coverage: float

    def to_json(self) -> dict:
        return {
            "sqErr": self.sq_err,
            "absErr": self.abs_err,
            "IRMSE": self.irmse,
            "SILog": self.silog,
            "delta_1": self.delta[0],
            "delta_2": self.delta[1],
            "delta_3": self.delta[2],
            "n": self.n,
            "coverage": self.coverage,
            "metadata": METADATA,
        }

    def fields(self) -> dict[str, float]:
        return {
            "sq_err": self.sq_err,
            "abs_err": self.abs_err,
            "irmse": self.irmse,
            "silog": self.silog,
            "delta_1": self.delta[0],
            "delta_2": self.delta[1],
            "delta_3": self.delta[2],
            "n": self.n,
            "coverage": self.coverage,
        }


def format_table(rows: dict[str, DepthReport]) -> str:
    """Two blocks, errors then threshold accuracies."""
    out = [f"{'':<16} | {'sqErr':>7} {'absErr':>7} {'IRMSE':>8} {'SILog':>7}", "-" * 52]
    for name, r in rows.items():
        out.append(f"{name[:16]:<16} | {r.sq_err:7.2f} {r.abs_err:7.2f} {r.irmse:8.2f} {r.silog:7.2f}")
    out += ["", f"{'':<16} | {'d<1.25':>7} {'d<1.25^2':>8} {'d<1.25^3':>8} | {'cover':>6}", "-" * 52]
    for name, r in rows.items():
        d1, d2, d3 = r.delta
        out.append(f"{name[:16]:<16} | {d1:7.2f} {d2:8.2f} {d3:8.2f} | {100 * r.coverage:5.1f}%")
    return "\n".join(out)


@dataclass
class DepthAccumulator:
    """Mergeable partial sums for the depth metrics.

    The log-difference variance is carried as (count, mean, sum of squared
    deviations) and merged with the pairwise update, so merged tiles agree
    with a single pass to rounding.
    """

    n: int = 0
    gt_valid: int = 0
    sum_sq_rel: float = 0.0
    sum_abs_rel: float = 0.0
    sum_inv_sq: float = 0.0
    mean_x: float = 0.0
    m2_x: float = 0.0
    delta_counts: list[int] = field(default_factory=lambda: [0, 0, 0])

    @classmethod
    def from_maps(cls, pred: DepthMap, gt: DepthMap) -> "DepthAccumulator":
        if pred.shape != gt.shape:
            raise ValidationError(f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
        mask = pred.valid & gt.valid
        acc = cls(gt_valid=int(np.count_nonzero(gt.valid)))
        if not mask.any():
            return acc
        d_star, d = pred.values[mask], gt.values[mask]
        rel = (d_star - d) / d
        x = np.log(d) - np.log(d_star)
        ratio = np.maximum(d / d_star, d_star / d)
        acc.n = int(d.size)
        acc.sum_sq_rel = float(np.sum(rel**2))
        acc.sum_abs_rel = float(np.sum(np.abs(rel)))
        acc.sum_inv_sq = float(np.sum((1.0 / d_star - 1.0 / d) ** 2))
        acc.mean_x = float(x.mean())
        acc.m2_x = float(np.sum((x - acc.mean_x) ** 2))
        acc.delta_counts = [int(np.count_nonzero(ratio < t)) for t in THRESHOLDS]
        return acc

    def __iadd__(self, other: "DepthAccumulator") -> "DepthAccumulator":
        n = self.n + other.n
        if other.n:
            diff = other.mean_x - self.mean_x
            self.mean_x += diff * other.n / n
            self.m2_x += other.m2_x + diff * diff * self.n * other.n / n
        self.n = n
        self.gt_valid += other.gt_valid
        self.sum_sq_rel += other.sum_sq_rel
        self.sum_abs_rel += other.sum_abs_rel
        self.sum_inv_sq += other.sum_inv_sq
        self.delta_counts = [a + b for a, b in zip(self.delta_counts, other.delta_counts)]
        return self

    def report(self) -> DepthReport:
        if self.n == 0:
            raise EvaluationError("no jointly valid pixels")
        n = self.n
        return DepthReport(
            sq_err=self.sum_sq_rel / n,
            abs_err=self.sum_abs_rel / n,
            irmse=IRMSE_SCALE * math.sqrt(self.sum_inv_sq / n),
            silog=SILOG_SCALE * self.m2_x / n,
            delta=tuple(c / n for c in self.delta_counts),
            n=n,
            coverage=n / self.gt_valid,
        )


def evaluate_depth(pred: DepthMap, gt: DepthMap) -> DepthReport:
    return DepthAccumulator.from_maps(pred, gt).report()

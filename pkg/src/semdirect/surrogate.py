"""Distance-based matching surrogate for detection quality.

A detection counts toward a ground-truth box only within the same class
and within a cutoff radius tau on the ground plane.  The loss per box is
the distance to the nearest same-class prediction clamped at tau, summed
over annotations and left deliberately free of one-to-one consumption;
the greedy matcher provides the consumed counterpart for match counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

__all__ = [
    "GtBox",
    "PredBox",
    "MatchReport",
    "center_distances",
    "greedy_match",
    "surrogate_loss",
    "surrogate_loss_with_cls",
    "match_report",
]


@dataclass(frozen=True)
class GtBox:
    """Annotated object: class label and ground-plane centre in meters."""

    class_id: str
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError(f"non-finite centre ({self.cx}, {self.cy})")


@dataclass(frozen=True)
class PredBox:
    """Predicted object: class label, ground-plane centre, confidence."""

    class_id: str
    cx: float
    cy: float
    score: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError(f"non-finite centre ({self.cx}, {self.cy})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class MatchReport:
    """Greedy matches plus the per-annotation clamped distances."""

    match_count: int
    assignments: tuple[Optional[int], ...]
    surrogate_loss: float
    clamped_distances: tuple[float, ...]


def center_distances(predictions: Sequence[PredBox], gt: GtBox) -> list[float]:
    """Euclidean centre distances to ``gt``, in prediction order."""
    return [math.hypot(p.cx - gt.cx, p.cy - gt.cy) for p in predictions]


def _check_tau(tau: float) -> None:
    if not (math.isfinite(tau) and tau > 0.0):
        raise ValueError(f"tau must be a positive finite number, got {tau}")


def greedy_match(
    predictions: Sequence[PredBox], gts: Sequence[GtBox], tau: float
) -> tuple[int, tuple[Optional[int], ...]]:
    """One-to-one matching, annotations served in their stored order.

    Each annotation takes the nearest same-class prediction not consumed
    yet (distance ties go to the lowest prediction index); the match
    counts and consumes the prediction only when that distance is within
    tau.  Returns the match count and the per-annotation assignment.
    """
    _check_tau(tau)
    consumed: set[int] = set()
    assignments: list[Optional[int]] = []
    count = 0
    for gt in gts:
        best_idx: Optional[int] = None
        best_dist = math.inf
        for idx, pred in enumerate(predictions):
            if idx in consumed or pred.class_id != gt.class_id:
                continue
            dist = math.hypot(pred.cx - gt.cx, pred.cy - gt.cy)
            if dist < best_dist:
                best_idx, best_dist = idx, dist
        if best_idx is not None and best_dist <= tau:
            consumed.add(best_idx)
            assignments.append(best_idx)
            count += 1
        else:
            assignments.append(None)
    return count, tuple(assignments)


def _clamped_distance(predictions: Sequence[PredBox], gt: GtBox, tau: float) -> float:
    dists = [d for p, d in zip(predictions, center_distances(predictions, gt))
             if p.class_id == gt.class_id]
    return min(min(dists), tau) if dists else tau


def surrogate_loss(predictions: Sequence[PredBox], gts: Sequence[GtBox], tau: float) -> float:
    """Sum over annotations of the nearest same-class distance, clamped at tau.

    No prediction is consumed: one prediction may be the nearest for
    several annotations.  An annotation with no same-class prediction
    contributes tau.
    """
    _check_tau(tau)
    return float(sum(_clamped_distance(predictions, gt, tau) for gt in gts))


def surrogate_loss_with_cls(
    predictions: Sequence[PredBox], gts: Sequence[GtBox], tau: float
) -> float:
    """Distance surrogate minus the matched prediction's confidence.

    Per annotation the clamped-distance term is reduced by the score of
    the nearest same-class prediction when its distance is within tau
    (argmin ties to the lowest prediction index), and by nothing
    otherwise.
    """
    _check_tau(tau)
    total = 0.0
    for gt in gts:
        best_idx: Optional[int] = None
        best_dist = math.inf
        for idx, pred in enumerate(predictions):
            if pred.class_id != gt.class_id:
                continue
            dist = math.hypot(pred.cx - gt.cx, pred.cy - gt.cy)
            if dist < best_dist:
                best_idx, best_dist = idx, dist
        if best_idx is None:
            total += tau
        else:
            total += min(best_dist, tau)
            if best_dist <= tau:
                total -= predictions[best_idx].score
    return float(total)


def match_report(predictions: Sequence[PredBox], gts: Sequence[GtBox], tau: float) -> MatchReport:
    """Greedy matches and the clamp-at-tau loss in one structure."""
    count, assignments = greedy_match(predictions, gts, tau)
    clamped = tuple(_clamped_distance(predictions, gt, tau) for gt in gts)
    return MatchReport(
        match_count=count,
        assignments=assignments,
        surrogate_loss=float(sum(clamped)),
        clamped_distances=clamped,
    )

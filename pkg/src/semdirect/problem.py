"""Closed-loop evaluation of detectors under semantic perturbation.

Ties the pieces together: a frame's images plus a perturbation family
define a black-box objective over the unit cube whose value is the
matching surrogate of the detector's output, one detector query per
evaluation.  On top of that sit per-frame evaluation with baselines and
a carryover schedule that reuses optimised parameters across frames.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .detectors import Detector, DetectorError, SensitivityProfile, SyntheticDetector
from .optimizer import OptimizerConfig, natural_extremes, random_search, run
from .perturb import PerturbationSpec, decode_and_apply, load_image
from .surrogate import GtBox, MatchReport, PredBox, match_report, surrogate_loss, surrogate_loss_with_cls

__all__ = [
    "Frame",
    "Annotation",
    "FrameObjective",
    "build_objective",
    "synthetic_detector",
    "MethodResult",
    "EvalReport",
    "evaluate_frame",
    "apply_and_report",
    "carryover_schedule",
    "SceneRecord",
    "FrameRecord",
    "load_manifest",
    "load_frame",
]


@dataclass(frozen=True, eq=False)
class Frame:
    """A multi-camera sample: ordered (camera id, image) pairs."""

    frame_id: str
    images: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self) -> None:
        if not self.images:
            raise ValueError(f"frame {self.frame_id!r} has no images")
        cameras = [cam for cam, _ in self.images]
        if len(set(cameras)) != len(cameras):
            raise ValueError(f"frame {self.frame_id!r} repeats a camera id: {cameras}")

    @property
    def cameras(self) -> tuple[str, ...]:
        return tuple(cam for cam, _ in self.images)


@dataclass(frozen=True)
class Annotation:
    """Ground truth for one frame."""

    frame_id: str
    gt: tuple[GtBox, ...]


_LOSS_FNS: dict[str, Callable] = {
    "distance": surrogate_loss,
    "distance_cls": surrogate_loss_with_cls,
}


@dataclass
class _BestQuery:
    loss: float = -math.inf
    theta: Optional[tuple[float, ...]] = None
    boxes: tuple[PredBox, ...] = ()


class FrameObjective:
    """Callable unit-cube objective around one frame and one detector.

    Every call perturbs the frame, queries the detector once and returns
    the surrogate loss; the best query seen (strictly greater loss wins,
    earlier call wins ties) is retained with its predictions so reports
    need no extra detector round trip.
    """

    def __init__(
        self,
        frame: Frame,
        annotation: Annotation,
        spec: PerturbationSpec,
        detector: Detector,
        tau: float = 2.0,
        variant: str = "distance",
    ) -> None:
        if variant not in _LOSS_FNS:
            raise ValueError(f"unknown objective variant {variant!r}")
        if annotation.frame_id != frame.frame_id:
            raise ValueError(
                f"annotation is for frame {annotation.frame_id!r}, not {frame.frame_id!r}"
            )
        self.frame = frame
        self.annotation = annotation
        self.spec = spec
        self.detector = detector
        self.tau = tau
        self.variant = variant
        self.dimension = spec.dimension(len(frame.images))
        self.query_count = 0
        self.best = _BestQuery()

    def detect_at(self, theta_unit: Sequence[float]) -> tuple[float, list[PredBox]]:
        """One perturb-and-detect round trip; counts as one query."""
        images = [img for _, img in self.frame.images]
        perturbed = decode_and_apply(images, self.spec, theta_unit)
        frame = Frame(
            frame_id=self.frame.frame_id,
            images=tuple(zip(self.frame.cameras, perturbed)),
        )
        try:
            boxes = self.detector.detect(frame)
        except DetectorError as exc:
            raise DetectorError(
                f"detector failed on frame {self.frame.frame_id!r} at theta "
                f"{tuple(round(t, 6) for t in theta_unit)}: {exc}"
            ) from exc
        self.query_count += 1
        loss = _LOSS_FNS[self.variant](boxes, self.annotation.gt, self.tau)
        if loss > self.best.loss:
            self.best = _BestQuery(loss=loss, theta=tuple(theta_unit), boxes=tuple(boxes))
        return loss, boxes

    def __call__(self, theta_unit: Sequence[float]) -> float:
        loss, _ = self.detect_at(theta_unit)
        return loss


def build_objective(
    frame: Frame,
    annotation: Annotation,
    spec: PerturbationSpec,
    detector: Detector,
    tau: float = 2.0,
    variant: str = "distance",
) -> tuple[FrameObjective, int]:
    """Objective callable plus its unit-cube dimension for one frame."""
    objective = FrameObjective(frame, annotation, spec, detector, tau=tau, variant=variant)
    return objective, objective.dimension


def synthetic_detector(
    annotation: Annotation,
    profile: SensitivityProfile,
    clean_frame: Frame,
    tau: float = 2.0,
) -> SyntheticDetector:
    """Deterministic drift-with-difference detector for offline loops."""
    return SyntheticDetector(clean_frame, annotation, profile, tau)


# --- per-frame evaluation -------------------------------------------------


@dataclass
class MethodResult:
    """Outcome of one evaluation method on one frame."""

    method: str
    loss: float
    match_count: int
    queries: int
    seconds: float
    theta_unit: Optional[tuple[float, ...]] = None


@dataclass
class EvalReport:
    """Everything measured for one frame."""

    frame_id: str
    scene_id: str
    family: str
    tau: float
    clean: MethodResult
    adversarial: MethodResult
    baselines: dict[str, MethodResult] = field(default_factory=dict)
    carryover_source: Optional[str] = None

    def all_methods(self) -> list[MethodResult]:
        return [self.clean, self.adversarial, *self.baselines.values()]


def _theta_report(spec: PerturbationSpec, frame: Frame, theta: tuple[float, ...]) -> list[dict]:
    decoded = spec.decode(theta, len(frame.images))
    names = spec.param_names()
    return [
        {"camera": cam, **{n: float(v) for n, v in zip(names, decoded[i])}}
        for i, (cam, _) in enumerate(frame.images)
    ]


def _neutral_theta(spec: PerturbationSpec, dimension: int) -> tuple[float, ...]:
    return (0.5,) * dimension


def _clean_result(objective: FrameObjective) -> MethodResult:
    """Reference query: neutral decode for colour/geometric, raw frame for blur."""
    start = time.perf_counter()
    if objective.spec.family == "motion_blur":
        try:
            boxes = objective.detector.detect(objective.frame)
        except DetectorError as exc:
            raise DetectorError(
                f"detector failed on clean frame {objective.frame.frame_id!r}: {exc}"
            ) from exc
        objective.query_count += 1
        loss = _LOSS_FNS[objective.variant](boxes, objective.annotation.gt, objective.tau)
    else:
        theta = _neutral_theta(objective.spec, objective.dimension)
        loss, boxes = objective.detect_at(theta)
    report = match_report(boxes, objective.annotation.gt, objective.tau)
    return MethodResult(
        method="clean",
        loss=float(loss),
        match_count=report.match_count,
        queries=1,
        seconds=time.perf_counter() - start,
    )


def evaluate_frame(
    frame: Frame,
    annotation: Annotation,
    spec: PerturbationSpec,
    detector: Detector,
    config: OptimizerConfig,
    baselines: Sequence[str] = (),
    tau: float = 2.0,
    rng_seed: int = 0,
    variant: str = "distance",
) -> EvalReport:
    """Clean reference, optimised attack and optional baselines for a frame.

    Baselines may include "random" (same query budget as the optimiser,
    seeded) and "natural" (the two corner settings).  Query counts are
    kept per method and sum to the number of detector invocations.
    """
    for name in baselines:
        if name not in ("random", "natural"):
            raise ValueError(f"unknown baseline {name!r}")

    clean_obj = FrameObjective(frame, annotation, spec, detector, tau=tau, variant=variant)
    clean = _clean_result(clean_obj)

    opt_obj = FrameObjective(frame, annotation, spec, detector, tau=tau, variant=variant)
    start = time.perf_counter()
    result = run(opt_obj, opt_obj.dimension, config)
    opt_seconds = time.perf_counter() - start
    best_boxes = opt_obj.best.boxes
    adv_report = match_report(best_boxes, annotation.gt, tau)
    adversarial = MethodResult(
        method=config.mode,
        loss=result.best_value,
        match_count=adv_report.match_count,
        queries=result.query_count,
        seconds=opt_seconds,
        theta_unit=result.best_point,
    )

    out = EvalReport(
        frame_id=frame.frame_id,
        scene_id="",
        family=spec.family,
        tau=tau,
        clean=clean,
        adversarial=adversarial,
    )

    if "random" in baselines:
        rnd_obj = FrameObjective(frame, annotation, spec, detector, tau=tau, variant=variant)
        budget = config.max_queries if config.max_queries is not None else result.query_count
        start = time.perf_counter()
        rnd = random_search(rnd_obj, rnd_obj.dimension, max(1, budget), rng_seed)
        rnd_report = match_report(rnd_obj.best.boxes, annotation.gt, tau)
        out.baselines["random"] = MethodResult(
            method="random",
            loss=rnd.best_value,
            match_count=rnd_report.match_count,
            queries=rnd.query_count,
            seconds=time.perf_counter() - start,
            theta_unit=rnd.best_point,
        )
    if "natural" in baselines:
        for label, corner in (("natural_plus", 1.0), ("natural_minus", 0.0)):
            nat_obj = FrameObjective(frame, annotation, spec, detector, tau=tau, variant=variant)
            theta = (corner,) * nat_obj.dimension
            start = time.perf_counter()
            loss, boxes = nat_obj.detect_at(theta)
            report = match_report(boxes, annotation.gt, tau)
            out.baselines[label] = MethodResult(
                method=label,
                loss=loss,
                match_count=report.match_count,
                queries=1,
                seconds=time.perf_counter() - start,
                theta_unit=theta,
            )
    return out


def apply_and_report(
    frame: Frame,
    annotation: Annotation,
    spec: PerturbationSpec,
    detector: Detector,
    theta_unit: tuple[float, ...],
    tau: float = 2.0,
    variant: str = "distance",
) -> MethodResult:
    """Evaluate one fixed parameter vector on a frame (one query)."""
    objective = FrameObjective(frame, annotation, spec, detector, tau=tau, variant=variant)
    start = time.perf_counter()
    loss, boxes = objective.detect_at(theta_unit)
    report = match_report(boxes, annotation.gt, tau)
    return MethodResult(
        method="carryover",
        loss=loss,
        match_count=report.match_count,
        queries=1,
        seconds=time.perf_counter() - start,
        theta_unit=tuple(theta_unit),
    )


def carryover_schedule(n_frames: int, refresh_points: Sequence[int]) -> list[int]:
    """Map each 1-based frame position to the refresh position it reuses.

    Refresh positions must be sorted, start at 1 and stay within the
    scene; every other frame inherits the most recent refresh.
    """
    if n_frames < 1:
        raise ValueError("a scene needs at least one frame")
    points = list(refresh_points)
    if not points or points[0] != 1:
        raise ValueError(f"refresh points must start at 1, got {points}")
    if points != sorted(points) or len(set(points)) != len(points):
        raise ValueError(f"refresh points must be strictly increasing, got {points}")
    if points[-1] > n_frames:
        raise ValueError(f"refresh point {points[-1]} exceeds the scene length {n_frames}")
    schedule = []
    current = points[0]
    remaining = points[1:]
    for pos in range(1, n_frames + 1):
        while remaining and remaining[0] <= pos:
            current = remaining.pop(0)
        schedule.append(current)
    return schedule


# --- scene manifests --------------------------------------------------------


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    images: tuple[tuple[str, str], ...]  # (camera id, path relative to manifest)
    gt: tuple[GtBox, ...]


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    frames: tuple[FrameRecord, ...]


def load_manifest(path) -> list[SceneRecord]:
    """Parse a scene manifest; image paths stay relative until loaded."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        scenes = []
        for scene in doc["scenes"]:
            frames = []
            for frame in scene["frames"]:
                images = tuple(
                    (str(img["camera"]), str(img["path"])) for img in frame["images"]
                )
                gt = tuple(
                    GtBox(str(box["class"]), float(box["cx"]), float(box["cy"]))
                    for box in frame["gt"]
                )
                frames.append(FrameRecord(str(frame["frame_id"]), images, gt))
            scenes.append(SceneRecord(str(scene["scene_id"]), tuple(frames)))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scene manifest {path}: {exc}") from exc
    return scenes


def load_frame(record: FrameRecord, base_dir) -> tuple[Frame, Annotation]:
    """Materialise a manifest frame: read images, pair with annotations."""
    base = Path(base_dir)
    images = tuple((cam, load_image(base / rel)) for cam, rel in record.images)
    return (
        Frame(frame_id=record.frame_id, images=images),
        Annotation(frame_id=record.frame_id, gt=record.gt),
    )

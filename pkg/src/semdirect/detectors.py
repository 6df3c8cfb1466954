"""Detector backends behind one ``detect(frame) -> boxes`` interface.

Out-of-process detectors speak a line-delimited JSON protocol: a request
``{"id": I, "images": [{"camera": C, "png_base64": B}]}`` is answered by
``{"id": I, "boxes": [{"class": K, "cx": X, "cy": Y, "score": S}]}`` or
``{"id": I, "error": MSG}``; ids must echo and replies must not be
reordered.  The same bodies travel over HTTP POST /detect.  In-process
backends (replay, synthetic) are provided for offline work and tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import shlex
import subprocess
import urllib.request
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .perturb import encode_png_base64
from .surrogate import PredBox

__all__ = [
    "DetectorError",
    "ProtocolError",
    "Detector",
    "ReplayDetector",
    "SensitivityProfile",
    "SyntheticDetector",
    "CachingDetector",
    "SubprocessDetector",
    "HttpDetector",
    "boxes_to_wire",
    "boxes_from_wire",
]


class DetectorError(RuntimeError):
    """A detector backend failed to produce predictions."""


class ProtocolError(DetectorError):
    """The wire peer violated the request/response contract."""


class Detector:
    """Base interface: map a frame's images to predicted boxes."""

    def detect(self, frame) -> list[PredBox]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "Detector":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def boxes_to_wire(boxes: Sequence[PredBox]) -> list[dict]:
    return [
        {"class": b.class_id, "cx": b.cx, "cy": b.cy, "score": b.score} for b in boxes
    ]


def boxes_from_wire(raw) -> list[PredBox]:
    if not isinstance(raw, list):
        raise ProtocolError(f"'boxes' must be a list, got {type(raw).__name__}")
    boxes = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ProtocolError(f"box {i} is not an object")
        try:
            boxes.append(
                PredBox(
                    class_id=str(item["class"]),
                    cx=float(item["cx"]),
                    cy=float(item["cy"]),
                    score=float(item["score"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"box {i} is malformed: {exc}") from exc
    return boxes


class ReplayDetector(Detector):
    """Returns stored predictions keyed by frame id, ignoring pixels."""

    def __init__(
        self,
        frames: Optional[Mapping[str, Sequence[PredBox]]] = None,
        default: Optional[Sequence[PredBox]] = None,
    ) -> None:
        self._frames = {k: list(v) for k, v in (frames or {}).items()}
        self._default = list(default) if default is not None else None

    @classmethod
    def from_annotations(cls, annotations, score: float = 1.0) -> "ReplayDetector":
        """Echo ground truth back as perfectly confident predictions."""
        frames = {
            ann.frame_id: [PredBox(g.class_id, g.cx, g.cy, score) for g in ann.gt]
            for ann in annotations
        }
        return cls(frames=frames)

    @classmethod
    def from_file(cls, path) -> "ReplayDetector":
        """Load ``{"frames": {id: [boxes]}}`` and/or ``{"boxes": [...]}``."""
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        frames = {
            fid: boxes_from_wire(raw) for fid, raw in doc.get("frames", {}).items()
        }
        default = boxes_from_wire(doc["boxes"]) if "boxes" in doc else None
        return cls(frames=frames, default=default)

    def detect(self, frame) -> list[PredBox]:
        boxes = self._frames.get(frame.frame_id, self._default)
        if boxes is None:
            raise DetectorError(f"no replayed predictions for frame {frame.frame_id!r}")
        return list(boxes)


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-annotation response of the synthetic detector.

    ``gains`` set how fast each box drifts as the frame departs from its
    clean pixels, ``angles`` fix the drift direction.
    """

    gains: tuple[float, ...]
    angles: tuple[float, ...]

    @classmethod
    def from_seed(cls, seed: int, n_boxes: int) -> "SensitivityProfile":
        rng = np.random.default_rng(seed)
        gains = tuple(float(g) for g in rng.uniform(3.0, 9.0, n_boxes))
        angles = tuple(float(a) for a in rng.uniform(0.0, 2.0 * math.pi, n_boxes))
        return cls(gains=gains, angles=angles)


def _smoothstep(z: float) -> float:
    return z * z * (3.0 - 2.0 * z)


class SyntheticDetector(Detector):
    """Closed-loop stand-in: predictions drift with pixel change.

    One prediction is emitted per annotated box.  The mean absolute
    channel difference m between the incoming frame and the stored clean
    frame displaces box v by 2 * tau * smoothstep(min(1, gain_v * m))
    along its profile angle, so displacements saturate at 2 * tau; the
    confidence decays from 1 to 0 over the same ramp.  A clean frame
    reproduces the annotations exactly.
    """

    def __init__(self, clean_frame, annotation, profile: SensitivityProfile, tau: float) -> None:
        if len(profile.gains) != len(annotation.gt):
            raise ValueError(
                f"profile covers {len(profile.gains)} boxes but the annotation has "
                f"{len(annotation.gt)}"
            )
        if tau <= 0.0:
            raise ValueError(f"tau must be positive, got {tau}")
        self._clean = {cam: np.asarray(img, dtype=float) for cam, img in clean_frame.images}
        self._annotation = annotation
        self._profile = profile
        self._tau = tau

    def detect(self, frame) -> list[PredBox]:
        diffs = []
        for cam, img in frame.images:
            clean = self._clean.get(cam)
            if clean is None or clean.shape != np.asarray(img).shape:
                raise DetectorError(
                    f"frame {frame.frame_id!r} camera {cam!r} does not match the stored clean frame"
                )
            diffs.append(float(np.mean(np.abs(np.asarray(img, dtype=float) - clean))))
        m = float(np.mean(diffs))
        boxes = []
        for gt, gain, angle in zip(self._annotation.gt, self._profile.gains, self._profile.angles):
            ramp = _smoothstep(min(1.0, gain * m))
            shift = 2.0 * self._tau * ramp
            boxes.append(
                PredBox(
                    class_id=gt.class_id,
                    cx=gt.cx + shift * math.cos(angle),
                    cy=gt.cy + shift * math.sin(angle),
                    score=1.0 - ramp,
                )
            )
        return boxes


class CachingDetector(Detector):
    """Memo layer keyed by frame id and pixel digest; for replay-style tests."""

    def __init__(self, inner: Detector) -> None:
        self._inner = inner
        self._cache: dict[tuple, list[PredBox]] = {}
        self.inner_calls = 0

    def detect(self, frame) -> list[PredBox]:
        digest = hashlib.sha256()
        for cam, img in frame.images:
            digest.update(cam.encode("utf-8"))
            digest.update(np.ascontiguousarray(np.asarray(img, dtype=float)).tobytes())
        key = (frame.frame_id, digest.hexdigest())
        if key not in self._cache:
            self._cache[key] = self._inner.detect(frame)
            self.inner_calls += 1
        return list(self._cache[key])

    def close(self) -> None:
        self._inner.close()


def _frame_to_request(frame, request_id: int) -> dict:
    return {
        "id": request_id,
        "images": [
            {"camera": cam, "png_base64": encode_png_base64(img)}
            for cam, img in frame.images
        ],
    }


def _parse_response(raw: str, expected_id: int) -> list[PredBox]:
    try:
        reply = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable reply line: {raw!r}") from exc
    if not isinstance(reply, dict):
        raise ProtocolError(f"reply is not an object: {raw!r}")
    if reply.get("id") != expected_id:
        raise ProtocolError(
            f"reply id {reply.get('id')!r} does not echo request id {expected_id}"
        )
    if "error" in reply:
        raise DetectorError(f"detector reported an error: {reply['error']}")
    if "boxes" not in reply:
        raise ProtocolError("reply carries neither 'boxes' nor 'error'")
    return boxes_from_wire(reply["boxes"])


class SubprocessDetector(Detector):
    """Drives a detector child process over stdin/stdout JSON lines."""

    def __init__(self, command) -> None:
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise DetectorError(f"could not start detector process {argv!r}: {exc}") from exc
        self._next_id = 0

    def detect(self, frame) -> list[PredBox]:
        if self._proc.poll() is not None:
            raise DetectorError(
                f"detector process exited with status {self._proc.returncode}"
            )
        self._next_id += 1
        request = _frame_to_request(frame, self._next_id)
        assert self._proc.stdin is not None and self._proc.stdout is not None
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise DetectorError(f"detector process pipe broke: {exc}") from exc
        line = self._proc.stdout.readline()
        if line == "":
            raise DetectorError("detector process closed its output stream")
        return _parse_response(line, self._next_id)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()


class HttpDetector(Detector):
    """POSTs protocol bodies to ``<base_url>/detect``."""

    def __init__(self, base_url: str, timeout: float = 30.0) -> None:
        self._base_url = base_url.rstrip("/")
        self._timeout = timeout
        self._next_id = 0

    def detect(self, frame) -> list[PredBox]:
        self._next_id += 1
        body = json.dumps(_frame_to_request(frame, self._next_id)).encode("utf-8")
        req = urllib.request.Request(
            self._base_url + "/detect",
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self._timeout) as resp:
                raw = resp.read().decode("utf-8")
        except OSError as exc:
            raise DetectorError(f"HTTP detector request failed: {exc}") from exc
        return _parse_response(raw, self._next_id)

"""Model back ends: the bundled dummy and the external-module hook.

A model is any object with a ``predict(images) -> list[dict]`` method,
where ``images`` is a list of HxWx3 float arrays in camera order and
each returned dict carries at least class, cx, cy and score (extra
fields such as orientation or velocity are dropped downstream).  An
optional ``camera_count`` attribute pins the number of images the model
expects; ``None`` accepts any count.
"""

from __future__ import annotations

import importlib
import importlib.util
import json
import math
from pathlib import Path
from typing import Optional, Sequence


class ModelError(RuntimeError):
    """A model could not be loaded or configured."""


DEFAULT_DUMMY_BOXES = [{"class": "car", "cx": 1.0, "cy": 2.0, "score": 0.9}]


class DummyModel:
    """Ignores the images and answers with a fixed, configurable box list."""

    def __init__(self, boxes: Optional[Sequence[dict]] = None, camera_count: Optional[int] = None):
        if boxes is None:
            boxes = DEFAULT_DUMMY_BOXES
        self.boxes = [_checked_box(b) for b in boxes]
        self.camera_count = camera_count

    def predict(self, images) -> list[dict]:
        return [dict(b) for b in self.boxes]


class ScoreFloorModel:
    """Filters another model's output, dropping boxes scored under a floor."""

    def __init__(self, inner, floor: float):
        if not (math.isfinite(floor) and 0.0 <= floor <= 1.0):
            raise ModelError(f"score floor must lie in [0, 1], got {floor}")
        self.inner = inner
        self.floor = floor

    @property
    def camera_count(self):
        return getattr(self.inner, "camera_count", None)

    def predict(self, images) -> list[dict]:
        return [b for b in self.inner.predict(images) if float(b.get("score", 0.0)) >= self.floor]


def _checked_box(box: dict) -> dict:
    if not isinstance(box, dict):
        raise ModelError(f"box must be an object, got {type(box).__name__}")
    try:
        out = {
            "class": str(box["class"]),
            "cx": float(box["cx"]),
            "cy": float(box["cy"]),
            "score": float(box.get("score", 1.0)),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad box {box!r}: {exc}") from exc
    if not all(math.isfinite(out[k]) for k in ("cx", "cy", "score")):
        raise ModelError(f"box has non-finite fields: {box!r}")
    return out


def parse_boxes_arg(text: str) -> list[dict]:
    """Parse a --boxes value: inline JSON array or @path to a JSON file."""
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"--boxes is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise ModelError("--boxes must be a JSON array of box objects")
    return [_checked_box(b) for b in doc]


def load_external_model(spec: str, checkpoint: Optional[str]):
    """Load a model from user code.

    ``spec`` is either a path to a .py file or a dotted module name; the
    module must expose ``load_model(checkpoint) -> model``.  The returned
    object only needs a predict method, so any detection framework can be
    wrapped with a few lines of glue.
    """
    path = Path(spec)
    if spec.endswith(".py") or path.is_file():
        module_spec = importlib.util.spec_from_file_location("bev_adapter_external", path)
        if module_spec is None or module_spec.loader is None:
            raise ModelError(f"cannot load model module from {spec!r}")
        module = importlib.util.module_from_spec(module_spec)
        try:
            module_spec.loader.exec_module(module)
        except FileNotFoundError as exc:
            raise ModelError(f"model module {spec!r} not found: {exc}") from exc
    else:
        try:
            module = importlib.import_module(spec)
        except ImportError as exc:
            raise ModelError(f"cannot import model module {spec!r}: {exc}") from exc
    loader = getattr(module, "load_model", None)
    if not callable(loader):
        raise ModelError(f"model module {spec!r} does not define load_model(checkpoint)")
    model = loader(checkpoint)
    if not callable(getattr(model, "predict", None)):
        raise ModelError(f"object from {spec!r} has no predict method")
    return model


def build_model(spec: str, checkpoint: Optional[str],
                boxes: Optional[str], cameras: Optional[int],
                score_floor: Optional[float]):
    """Assemble the configured model with optional wrappers applied."""
    if spec == "dummy":
        if checkpoint is not None:
            raise ModelError("--checkpoint makes no sense with the dummy model")
        model = DummyModel(parse_boxes_arg(boxes) if boxes else None, camera_count=cameras)
    else:
        if boxes is not None:
            raise ModelError("--boxes only configures the dummy model")
        model = load_external_model(spec, checkpoint)
        if cameras is not None:
            model.camera_count = cameras
    if score_floor is not None:
        model = ScoreFloorModel(model, score_floor)
    return model

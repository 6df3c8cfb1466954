"""Reduction layer between a model's raw output and the wire format."""

from __future__ import annotations

import math


class BridgeError(RuntimeError):
    """Request/model mismatch caught before or after inference."""


def reduce_box(raw: dict) -> dict:
    """Keep the ground-plane essentials, drop everything else.

    Models typically emit richer records (orientation, velocity, size);
    the protocol only carries class, center and score.
    """
    if not isinstance(raw, dict):
        raise BridgeError(f"model emitted a non-object box: {raw!r}")
    try:
        box = {
            "class": str(raw["class"]),
            "cx": float(raw["cx"]),
            "cy": float(raw["cy"]),
            "score": float(raw.get("score", 1.0)),
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise BridgeError(f"model emitted a malformed box {raw!r}: {exc}") from exc
    if not all(math.isfinite(box[k]) for k in ("cx", "cy", "score")):
        raise BridgeError(f"model emitted non-finite box fields: {raw!r}")
    return box


def model_bridge(images, model) -> list[dict]:
    """Run one inference; camera-count mismatches are rejected up front."""
    expected = getattr(model, "camera_count", None)
    if expected is not None and len(images) != expected:
        raise BridgeError(
            f"model expects {expected} camera image(s), request carries {len(images)}"
        )
    raw = model.predict(list(images))
    if not isinstance(raw, (list, tuple)):
        raise BridgeError(f"model returned {type(raw).__name__}, expected a box list")
    return [reduce_box(b) for b in raw]

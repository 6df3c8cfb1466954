"""Serve a ground-plane detection model behind the line-JSON detector protocol.

The package speaks the same wire format the evaluation harness emits:
one request object per line carrying base64 PNG camera images, one
response per request echoing the id with either ``boxes`` or ``error``.
A bundled dummy model answers with a fixed box list so the plumbing can
be exercised without any weights.
"""

from .bridge import BridgeError, model_bridge, reduce_box
from .models import DummyModel, ModelError, ScoreFloorModel, load_external_model
from .server import handle_request, serve_http, serve_stdio

__all__ = [
    "BridgeError",
    "DummyModel",
    "ModelError",
    "ScoreFloorModel",
    "handle_request",
    "load_external_model",
    "model_bridge",
    "reduce_box",
    "serve_http",
    "serve_stdio",
]

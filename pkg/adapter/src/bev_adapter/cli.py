"""Command line front end for the adapter."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .models import ModelError, build_model
from .server import serve_http, serve_stdio


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bev-adapter",
        description=(
            "Serve a ground-plane detection model behind the line-JSON "
            "detector protocol (stdio) or HTTP POST /detect."
        ),
    )
    parser.add_argument("--transport", choices=("stdio", "http"), default="stdio")
    parser.add_argument(
        "--model",
        default="dummy",
        help="dummy (default), a path to a .py module, or a dotted module name; "
        "external modules must expose load_model(checkpoint)",
    )
    parser.add_argument("--checkpoint", default=None, help="passed through to load_model")
    parser.add_argument(
        "--boxes",
        default=None,
        help="dummy model output: inline JSON array or @FILE (class/cx/cy/score objects)",
    )
    parser.add_argument(
        "--cameras",
        default=None,
        help="comma-separated camera names in model input order; requests are "
        "reordered to match and must carry exactly these cameras",
    )
    parser.add_argument("--score-floor", type=float, default=None)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8440)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    camera_order = None
    if args.cameras:
        camera_order = [c.strip() for c in args.cameras.split(",") if c.strip()]
        if not camera_order:
            print("error: --cameras names nothing", file=sys.stderr)
            return 2
    try:
        model = build_model(
            args.model,
            args.checkpoint,
            args.boxes,
            len(camera_order) if camera_order else None,
            args.score_floor,
        )
    except (ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.transport == "stdio":
        serve_stdio(model, camera_order)
        return 0
    serve_http(model, camera_order, args.host, args.port)
    return 0


def entrypoint() -> None:
    sys.exit(main())

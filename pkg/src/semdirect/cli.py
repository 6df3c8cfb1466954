"""Command line front end: bench, evaluate and perturb subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import threading
from pathlib import Path
from typing import Optional, Sequence

from . import benchfn
from .detectors import (
    Detector,
    DetectorError,
    HttpDetector,
    ReplayDetector,
    SensitivityProfile,
    SubprocessDetector,
    SyntheticDetector,
)
from .optimizer import OptimizerConfig, run, write_optresult_json, write_trajectory_csv
from .perturb import (
    PerturbationSpec,
    colour_shift,
    convolve,
    geometric_transform,
    load_image,
    motion_blur_kernel,
    save_image,
)
from .problem import (
    Annotation,
    EvalReport,
    apply_and_report,
    carryover_schedule,
    evaluate_frame,
    load_frame,
    load_manifest,
)

__all__ = ["main", "entrypoint", "build_parser"]

DETECTOR_ENV_VAR = "SEMDIRECT_DETECTOR"
_HUGE_ITERATIONS = 10**9


class CliError(RuntimeError):
    """A configuration problem reportable without a traceback."""


# --- argument wiring -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semdirect",
        description=(
            "Deterministic rectangle-dividing search and semantic-robustness "
            "evaluation of ground-plane object detectors."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="optimise a benchmark function")
    bench.add_argument("--function", required=True, choices=sorted(benchfn.BENCH_FUNCTIONS))
    bench.add_argument("--dim", type=int, required=True)
    _add_optimizer_flags(bench)
    bench.add_argument("--out", required=True, help="output prefix for .json and .csv")
    bench.set_defaults(handler=cmd_bench)

    ev = sub.add_parser("evaluate", help="attack detector frames from a scene manifest")
    ev.add_argument("--manifest", required=True)
    ev.add_argument(
        "--detector",
        default=None,
        help=(
            "detector spec: synthetic | replay:gt | replay:FILE | subprocess:CMD | "
            f"http(s)://URL; defaults to ${DETECTOR_ENV_VAR}"
        ),
    )
    ev.add_argument(
        "--perturbation", required=True, choices=("colour", "geometric", "motion_blur")
    )
    ev.add_argument("--gamma", type=float, default=None)
    ev.add_argument("--kernel", type=int, default=None)
    ev.add_argument("--tau", type=float, default=2.0)
    _add_optimizer_flags(ev, default_queries=2500)
    ev.add_argument("--objective", choices=("distance", "distance_cls"), default="distance")
    ev.add_argument(
        "--baseline",
        action="append",
        choices=("random", "natural"),
        default=None,
        help="repeatable; adds baseline methods per frame",
    )
    ev.add_argument("--carryover", default=None, help="comma-separated refresh positions, e.g. 1,21")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--out", required=True, help="output prefix for .json and .csv")
    ev.set_defaults(handler=cmd_evaluate)

    pt = sub.add_parser("perturb", help="apply one operator with explicit parameters")
    pt.add_argument("input")
    pt.add_argument("output")
    pt.add_argument("--family", required=True, choices=("colour", "geometric", "motion_blur"))
    pt.add_argument("--hue", type=float, default=0.0)
    pt.add_argument("--sat", type=float, default=1.0)
    pt.add_argument("--brt", type=float, default=0.0)
    pt.add_argument("--scale-h", type=float, default=1.0)
    pt.add_argument("--scale-v", type=float, default=1.0)
    pt.add_argument("--trans-h", type=float, default=0.0)
    pt.add_argument("--trans-v", type=float, default=0.0)
    pt.add_argument("--kernel", type=int, default=9)
    pt.add_argument("--angle", type=float, default=0.0)
    pt.add_argument("--direction", type=float, default=0.0)
    pt.set_defaults(handler=cmd_perturb)
    return parser


def _add_optimizer_flags(parser: argparse.ArgumentParser, default_queries: Optional[int] = None) -> None:
    parser.add_argument("--mode", choices=("simple", "direct"), default="simple")
    parser.add_argument("--depth", type=int, default=6, help="maximum trisection depth")
    parser.add_argument("--epsilon", type=float, default=0.01)
    parser.add_argument("--po-limit", type=int, default=3)
    parser.add_argument("--iters", type=int, default=None)
    parser.add_argument("--queries", type=int, default=default_queries)


def _optimizer_config(args) -> OptimizerConfig:
    iters = args.iters
    queries = args.queries
    if iters is None and queries is None:
        iters = 50
    return OptimizerConfig(
        mode=args.mode,
        max_depth=args.depth,
        epsilon=args.epsilon,
        po_limit=args.po_limit,
        max_iterations=iters if iters is not None else _HUGE_ITERATIONS,
        max_queries=queries,
    )


# --- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    function = benchfn.get_function(args.function)
    if args.dim < 1:
        raise CliError(f"--dim must be at least 1, got {args.dim}")
    config = _optimizer_config(args)
    result = run(function.evaluate_unit, args.dim, config)
    write_optresult_json(result, args.out + ".json")
    write_trajectory_csv(result, args.out + ".csv")
    print(
        f"{args.function} dim={args.dim} mode={config.mode}: "
        f"best={result.best_value:.6g} queries={result.query_count} "
        f"iterations={len(result.trajectory)}"
    )
    return 0


# --- evaluate ----------------------------------------------------------------


class _LockedDetector(Detector):
    """Serialises access to a shared wire detector across worker threads."""

    def __init__(self, inner: Detector) -> None:
        self._inner = inner
        self._lock = threading.Lock()

    def detect(self, frame):
        with self._lock:
            return self._inner.detect(frame)

    def close(self) -> None:
        self._inner.close()


class _DetectorProvider:
    """Builds per-frame detectors from a spec string."""

    def __init__(self, spec: str, tau: float, seed: int, manifest_annotations) -> None:
        self.spec = spec
        self._tau = tau
        self._seed = seed
        self._shared: Optional[Detector] = None
        self._synthetic = False
        if spec == "synthetic":
            self._synthetic = True
        elif spec == "replay:gt":
            self._shared = ReplayDetector.from_annotations(manifest_annotations)
        elif spec.startswith("replay:"):
            self._shared = ReplayDetector.from_file(spec[len("replay:"):])
        elif spec.startswith("subprocess:"):
            self._shared = _LockedDetector(SubprocessDetector(spec[len("subprocess:"):]))
        elif spec.startswith(("http://", "https://")):
            self._shared = _LockedDetector(HttpDetector(spec))
        else:
            raise CliError(
                f"unrecognised detector spec {spec!r}; expected synthetic, replay:gt, "
                "replay:FILE, subprocess:CMD or an http(s) URL"
            )

    def for_frame(self, frame, annotation) -> Detector:
        if self._synthetic:
            profile = SensitivityProfile.from_seed(self._seed, len(annotation.gt))
            return SyntheticDetector(frame, annotation, profile, self._tau)
        assert self._shared is not None
        return self._shared

    def close(self) -> None:
        if self._shared is not None:
            self._shared.close()


def _perturbation_spec(args) -> PerturbationSpec:
    if args.perturbation == "motion_blur":
        if args.kernel is None:
            raise CliError("--kernel is required for the motion_blur family")
        return PerturbationSpec.motion_blur(args.kernel)
    if args.gamma is None:
        raise CliError(f"--gamma is required for the {args.perturbation} family")
    if args.perturbation == "colour":
        return PerturbationSpec.colour(args.gamma)
    return PerturbationSpec.geometric(args.gamma)


def _parse_carryover(text: str) -> list[int]:
    try:
        points = [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise CliError(f"bad --carryover value {text!r}: {exc}") from exc
    if not points:
        raise CliError("--carryover needs at least one refresh position")
    return points


def _method_json(res, spec: PerturbationSpec, frame) -> dict:
    doc = {
        "loss": res.loss,
        "match_count": res.match_count,
        "queries": res.queries,
    }
    if res.theta_unit is not None:
        doc["theta_unit"] = list(res.theta_unit)
        decoded = spec.decode(res.theta_unit, len(frame.images))
        names = spec.param_names()
        doc["theta_by_image"] = [
            {"camera": cam, **{n: float(v) for n, v in zip(names, decoded[i])}}
            for i, (cam, _) in enumerate(frame.images)
        ]
    return doc


def _report_json(report: EvalReport, spec: PerturbationSpec, frame) -> dict:
    doc = {
        "scene_id": report.scene_id,
        "frame_id": report.frame_id,
        "status": "ok",
        "clean": _method_json(report.clean, spec, frame),
        "adversarial": {"method": report.adversarial.method, **_method_json(report.adversarial, spec, frame)},
        "baselines": {
            name: _method_json(res, spec, frame) for name, res in sorted(report.baselines.items())
        },
        "carryover_source": report.carryover_source,
    }
    return doc


def cmd_evaluate(args) -> int:
    spec = _perturbation_spec(args)
    detector_spec = args.detector or os.environ.get(DETECTOR_ENV_VAR)
    if not detector_spec:
        raise CliError(
            f"no detector given: pass --detector or set ${DETECTOR_ENV_VAR}"
        )
    config = _optimizer_config(args)
    baselines = tuple(dict.fromkeys(args.baseline or ()))
    carryover = _parse_carryover(args.carryover) if args.carryover else None
    scenes = load_manifest(args.manifest)
    base_dir = Path(args.manifest).parent

    all_records = [(scene, record) for scene in scenes for record in scene.frames]
    annotations = [
        Annotation(frame_id=record.frame_id, gt=record.gt) for _, record in all_records
    ]
    provider = _DetectorProvider(detector_spec, args.tau, args.seed, annotations)

    frame_entries: list[dict] = []
    csv_rows: list[dict] = []
    failures = 0
    try:
        if carryover is None:
            results = _evaluate_independent(
                all_records, base_dir, spec, provider, config, baselines, args
            )
        else:
            results = _evaluate_carryover(
                scenes, base_dir, spec, provider, config, baselines, args, carryover
            )
        for entry, rows, failed in results:
            frame_entries.append(entry)
            csv_rows.extend(rows)
            failures += int(failed)
    finally:
        provider.close()

    doc = {
        "config": {
            "manifest": str(args.manifest),
            "detector": detector_spec,
            "perturbation": args.perturbation,
            "gamma": args.gamma,
            "kernel": args.kernel,
            "tau": args.tau,
            "mode": args.mode,
            "max_depth": args.depth,
            "epsilon": args.epsilon,
            "po_limit": args.po_limit,
            "max_iterations": args.iters,
            "max_queries": args.queries,
            "objective": args.objective,
            "baselines": list(baselines),
            "carryover": carryover,
            "seed": args.seed,
        },
        "frames": frame_entries,
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    with open(args.out + ".csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["frame_id", "method", "match_count", "loss", "queries", "seconds"]
        )
        writer.writeheader()
        writer.writerows(csv_rows)
    done = len(frame_entries) - failures
    print(f"evaluated {done}/{len(frame_entries)} frame(s); reports at {args.out}.json / {args.out}.csv")
    return 0 if failures == 0 else 1


def _csv_rows_for(report: EvalReport) -> list[dict]:
    rows = []
    for res in report.all_methods():
        rows.append(
            {
                "frame_id": report.frame_id,
                "method": res.method,
                "match_count": res.match_count,
                "loss": res.loss,
                "queries": res.queries,
                "seconds": res.seconds,
            }
        )
    return rows


def _error_entry(scene_id: str, frame_id: str, exc: Exception) -> dict:
    return {
        "scene_id": scene_id,
        "frame_id": frame_id,
        "status": "error",
        "error": f"{type(exc).__name__}: {exc}",
    }


def _evaluate_one(scene, record, base_dir, spec, provider, config, baselines, args):
    frame, annotation = load_frame(record, base_dir)
    detector = provider.for_frame(frame, annotation)
    report = evaluate_frame(
        frame,
        annotation,
        spec,
        detector,
        config,
        baselines=baselines,
        tau=args.tau,
        rng_seed=args.seed,
        variant=args.objective,
    )
    report.scene_id = scene.scene_id
    return _report_json(report, spec, frame), _csv_rows_for(report), False


def _evaluate_independent(all_records, base_dir, spec, provider, config, baselines, args):
    jobs = max(1, args.jobs)
    if jobs == 1:
        results = []
        for scene, record in all_records:
            try:
                results.append(
                    _evaluate_one(scene, record, base_dir, spec, provider, config, baselines, args)
                )
            except Exception as exc:  # keep going; one bad frame must not kill the run
                results.append((_error_entry(scene.scene_id, record.frame_id, exc), [], True))
        return results
    from concurrent.futures import ThreadPoolExecutor

    def worker(item):
        scene, record = item
        try:
            return _evaluate_one(scene, record, base_dir, spec, provider, config, baselines, args)
        except Exception as exc:
            return (_error_entry(scene.scene_id, record.frame_id, exc), [], True)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, all_records))


def _evaluate_carryover(scenes, base_dir, spec, provider, config, baselines, args, points):
    results = []
    for scene in scenes:
        schedule = carryover_schedule(len(scene.frames), points)
        best_theta: dict[int, tuple[float, ...]] = {}
        source_ids: dict[int, str] = {}
        for pos, record in enumerate(scene.frames, start=1):
            try:
                frame, annotation = load_frame(record, base_dir)
                detector = provider.for_frame(frame, annotation)
                if pos in points:
                    report = evaluate_frame(
                        frame,
                        annotation,
                        spec,
                        detector,
                        config,
                        baselines=baselines,
                        tau=args.tau,
                        rng_seed=args.seed,
                        variant=args.objective,
                    )
                    report.scene_id = scene.scene_id
                    best_theta[pos] = report.adversarial.theta_unit or ()
                    source_ids[pos] = record.frame_id
                    results.append((_report_json(report, spec, frame), _csv_rows_for(report), False))
                else:
                    source = schedule[pos - 1]
                    res = apply_and_report(
                        frame,
                        annotation,
                        spec,
                        detector,
                        best_theta[source],
                        tau=args.tau,
                        variant=args.objective,
                    )
                    entry = {
                        "scene_id": scene.scene_id,
                        "frame_id": record.frame_id,
                        "status": "ok",
                        "carryover": _method_json(res, spec, frame),
                        "carryover_source": source_ids[source],
                    }
                    row = {
                        "frame_id": record.frame_id,
                        "method": "carryover",
                        "match_count": res.match_count,
                        "loss": res.loss,
                        "queries": res.queries,
                        "seconds": res.seconds,
                    }
                    results.append((entry, [row], False))
            except Exception as exc:
                results.append((_error_entry(scene.scene_id, record.frame_id, exc), [], True))
    return results


# --- perturb -------------------------------------------------------------------


def cmd_perturb(args) -> int:
    img = load_image(args.input)
    if args.family == "colour":
        out = colour_shift(img, args.hue, args.sat, args.brt)
    elif args.family == "geometric":
        out = geometric_transform(img, args.scale_h, args.scale_v, args.trans_h, args.trans_v)
    else:
        kernel = motion_blur_kernel(args.kernel, args.angle, args.direction)
        out = convolve(img, kernel)
    save_image(args.output, out)
    print(f"wrote {args.output}")
    return 0


# --- entry ---------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except (CliError, DetectorError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())

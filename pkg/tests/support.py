"""Shared helpers for the test suite: deterministic images, synthetic
leaf ledgers and independent selection oracles."""

from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from semdirect.problem import Annotation, Frame
from semdirect.surrogate import GtBox, PredBox
from semdirect.tree import LeafLedger, PartitionNode

K_GRID_STEP = 1e-4
K_GRID_MAX = 32.0


# --- brute-force matching references (straight loops, nothing shared with
#     the package implementation) -----------------------------------------


def ref_greedy(preds, gts, tau):
    consumed = set()
    count = 0
    for gt in gts:
        best = None
        for i, p in enumerate(preds):
            if i in consumed or p.class_id != gt.class_id:
                continue
            d = math.dist((p.cx, p.cy), (gt.cx, gt.cy))
            if best is None or d < best[0]:
                best = (d, i)
        if best is not None and best[0] <= tau:
            consumed.add(best[1])
            count += 1
    return count


def ref_loss(preds, gts, tau):
    total = 0.0
    for gt in gts:
        dists = [
            math.dist((p.cx, p.cy), (gt.cx, gt.cy))
            for p in preds
            if p.class_id == gt.class_id
        ]
        total += min(dists + [tau]) if dists else tau
    return total


def ref_loss_cls(preds, gts, tau):
    total = 0.0
    for gt in gts:
        cands = [
            (math.dist((p.cx, p.cy), (gt.cx, gt.cy)), i)
            for i, p in enumerate(preds)
            if p.class_id == gt.class_id
        ]
        if not cands:
            total += tau
            continue
        d, i = min(cands)
        total += min(d, tau)
        if d <= tau:
            total -= preds[i].score
    return total


def random_box_config(rng, classes=("car", "truck", "ped")):
    n_gt = int(rng.integers(0, 9))
    n_pred = int(rng.integers(0, 9))
    gts = [
        GtBox(classes[int(rng.integers(len(classes)))], float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)))
        for _ in range(n_gt)
    ]
    preds = [
        PredBox(
            classes[int(rng.integers(len(classes)))],
            float(rng.uniform(-5, 5)),
            float(rng.uniform(-5, 5)),
            float(rng.uniform(0, 1)),
        )
        for _ in range(n_pred)
    ]
    return preds, gts


def structured_image(height: int = 48, width: int = 72, seed: int = 7) -> np.ndarray:
    """Deterministic image with gradients and blobs so warps and blurs bite."""
    ys, xs = np.mgrid[0:height, 0:width]
    r = 0.5 + 0.35 * np.sin(2 * math.pi * xs / width * 3) * np.cos(math.pi * ys / height)
    g = 0.5 + 0.3 * np.cos(2 * math.pi * (xs + ys) / (width + height) * 4)
    b = 0.4 + 0.25 * np.sin(2 * math.pi * ys / height * 2)
    img = np.stack([r, g, b], axis=-1)
    rng = np.random.default_rng(seed)
    for _ in range(4):
        cx, cy, rad = rng.uniform(0, width), rng.uniform(0, height), rng.uniform(4, 10)
        mask = (xs - cx) ** 2 + (ys - cy) ** 2 < rad**2
        img[mask] = rng.uniform(0.1, 0.9, 3)
    return np.clip(img, 0.0, 1.0)


def simple_frame(frame_id: str = "f0", n_cameras: int = 1, seed: int = 7) -> Frame:
    images = tuple(
        (f"cam{i}", structured_image(seed=seed + i)) for i in range(n_cameras)
    )
    return Frame(frame_id=frame_id, images=images)


def simple_annotation(frame_id: str = "f0") -> Annotation:
    return Annotation(
        frame_id=frame_id,
        gt=(
            GtBox("car", 1.0, 2.0),
            GtBox("car", -3.0, 0.5),
            GtBox("pedestrian", 4.0, -1.0),
        ),
    )


def write_manifest(root: Path, scenes: dict[str, list[tuple[Frame, Annotation]]]) -> Path:
    """Write frames as PNGs plus a manifest JSON; returns the manifest path."""
    from semdirect.perturb import save_image

    root.mkdir(parents=True, exist_ok=True)
    doc = {"scenes": []}
    for scene_id, pairs in scenes.items():
        frames = []
        for frame, ann in pairs:
            images = []
            for cam, img in frame.images:
                rel = f"{scene_id}_{frame.frame_id}_{cam}.png"
                save_image(root / rel, img)
                images.append({"camera": cam, "path": rel})
            frames.append(
                {
                    "frame_id": frame.frame_id,
                    "images": images,
                    "gt": [{"class": g.class_id, "cx": g.cx, "cy": g.cy} for g in ann.gt],
                }
            )
        doc["scenes"].append({"scene_id": scene_id, "frames": frames})
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=2))
    return manifest


# --- synthetic ledgers and selection oracles --------------------------------


def make_leaf(depth: int, value: float, index: int, slope: float = 0.0) -> PartitionNode:
    """A 1-D leaf with the requested diameter class; centre is immaterial."""
    return PartitionNode(nums=(1,), exps=(depth,), value=value, slope=slope, creation_index=index)


def ledger_from_leaves(leaves) -> LeafLedger:
    ledger = LeafLedger()
    for leaf in leaves:
        ledger.add(leaf)
    return ledger


def random_ledger(rng: np.random.Generator, max_leaves: int = 12, max_classes: int = 4):
    """Random leaves over depths 0..3 with globally distinct values."""
    n_classes = int(rng.integers(1, max_classes + 1))
    depths = sorted(rng.choice(4, size=n_classes, replace=False).tolist())
    n_leaves = int(rng.integers(n_classes, max_leaves + 1))
    values = rng.choice(np.arange(0.0, 1.0, 0.01), size=n_leaves, replace=False)
    leaves = []
    for i in range(n_leaves):
        depth = depths[i % n_classes]
        leaves.append(make_leaf(depth, float(values[i]), i, slope=float(rng.uniform(0, 10))))
    return leaves


def _k_window(leaf, leaves) -> tuple[float, float]:
    """Feasible rate interval against every other leaf, from first principles."""
    k_low, k_up = 0.0, math.inf
    for other in leaves:
        if other is leaf or other.depth == leaf.depth:
            continue
        gap = leaf.diameter - other.diameter
        slope = (other.value - leaf.value) / gap
        if gap > 0:
            k_low = max(k_low, slope)
        else:
            k_up = min(k_up, (leaf.value - other.value) / -gap)
    return k_low, k_up


def decision_margins(leaves, epsilon: float) -> float:
    """Smallest distance of any selection decision from its boundary."""
    best = max(leaf.value for leaf in leaves)
    threshold = best + epsilon * abs(best)
    margin = math.inf
    for leaf in leaves:
        k_low, k_up = _k_window(leaf, leaves)
        if math.isfinite(k_up):
            margin = min(margin, abs(k_up - k_low))
            margin = min(margin, abs(leaf.value + leaf.diameter * k_up - threshold))
    return margin


def well_separated_ledger(rng: np.random.Generator, min_margin: float = 1e-3):
    """Random ledger whose decisions stay clear of the oracle's grid step."""
    while True:
        leaves = random_ledger(rng)
        if decision_margins(leaves, epsilon=0.01) > min_margin:
            return leaves


def po_oracle(leaves, epsilon: float) -> set[int]:
    """Existence check over a dense rate grid: a leaf is kept iff some
    K > 0 makes it dominate every leaf and clear the improvement bar."""
    best = max(leaf.value for leaf in leaves)
    threshold = best + epsilon * abs(best)
    grid = np.arange(1, int(K_GRID_MAX / K_GRID_STEP) + 1) * K_GRID_STEP
    selected = set()
    for leaf in leaves:
        same = [o for o in leaves if o.depth == leaf.depth and o is not leaf]
        if any(o.value > leaf.value for o in same):
            continue
        feasible = np.ones(grid.shape, dtype=bool)
        for other in leaves:
            if other is leaf:
                continue
            feasible &= (leaf.value - other.value) + grid * (leaf.diameter - other.diameter) >= 0
            if not feasible.any():
                break
        if feasible.any():
            feasible &= leaf.value + grid * leaf.diameter >= threshold
        if feasible.any():
            selected.add(leaf.creation_index)
    return selected


def simple_selection_oracle(leaves, epsilon: float, po_limit: int) -> set[int]:
    """Straight re-statement of the capped selection rule."""
    best = max(leaf.value for leaf in leaves)
    threshold = best + epsilon * abs(best)
    by_depth: dict[int, list] = {}
    for leaf in leaves:
        by_depth.setdefault(leaf.depth, []).append(leaf)
    candidates = []
    for depth, group in sorted(by_depth.items()):
        rep = max(group, key=lambda n: (n.value, -n.creation_index))
        _, k_up = _k_window(rep, leaves)
        if rep.value + rep.diameter * k_up >= threshold:
            candidates.append(rep)
    if len(candidates) <= po_limit:
        return {c.creation_index for c in candidates}
    ranked = sorted(
        candidates,
        key=lambda n: (-(n.value + 0.5 * n.diameter * n.slope), n.depth, n.creation_index),
    )
    keep = set(c.creation_index for c in ranked[: po_limit - 1])
    keep.add(min(candidates, key=lambda n: n.depth).creation_index)
    return keep

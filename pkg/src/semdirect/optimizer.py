"""Deterministic global maximisation by dividing rectangles.

Two selection rules share one partition machinery: the classic rule keeps
a leaf only if some rate K > 0 makes it dominate every other leaf and
promise an improvement over the incumbent, while the simplified rule
drops the rate-compatibility window and instead caps the number of
divided leaves per sweep, always carrying the largest-diameter candidate
to preserve global convergence.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .tree import LeafLedger, PartitionNode, init_root, sample_points, trisect

__all__ = [
    "ObjectiveError",
    "OptimizerConfig",
    "IterationStats",
    "OptResult",
    "rate_bounds",
    "select_po_direct",
    "select_po_simple",
    "condition_counts",
    "run",
    "random_search",
    "natural_extremes",
    "convergence_bound",
    "optresult_to_dict",
    "write_optresult_json",
    "write_trajectory_csv",
]

Objective = Callable[[tuple[float, ...]], float]


class ObjectiveError(RuntimeError):
    """Raised when the objective returns a non-finite value."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Search settings; defaults follow the evaluation harness.

    mode: "simple" caps each sweep at po_limit divisions, "direct" keeps
    every leaf passing the full three-condition test.
    max_depth: leaves with diameter <= 3**-max_depth are never divided.
    epsilon: relative improvement slack on the incumbent best value.
    po_limit: division cap per sweep in simple mode (unused by direct).
    max_iterations: division sweeps to run.
    max_queries: optional cap on objective evaluations.
    """

    mode: str = "simple"
    max_depth: int = 6
    epsilon: float = 0.01
    po_limit: int = 3
    max_iterations: int = 50
    max_queries: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode not in ("simple", "direct"):
            raise ValueError(f"mode must be 'simple' or 'direct', got {self.mode!r}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if self.po_limit < 1:
            raise ValueError("po_limit must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.max_queries is not None and self.max_queries < 1:
            raise ValueError("max_queries must be at least 1 when set")


@dataclass(frozen=True)
class IterationStats:
    """Per-sweep trajectory row plus selection diagnostics."""

    iteration: int
    queries: int
    best_value: float
    n_class_best: int
    n_rate_ok: int
    n_improve_ok: int
    n_candidates: int = 0
    n_selected: int = 0
    trimmed: bool = False
    largest_selected: bool = False


@dataclass(frozen=True)
class OptResult:
    best_point: tuple[float, ...]
    best_value: float
    query_count: int
    trajectory: tuple[IterationStats, ...]


# --- potentially-optimal selection -------------------------------------


def _class_maxima(ledger: LeafLedger) -> dict[int, float]:
    return {h: max(n.value for n in ledger.group(h)) for h in ledger.depths()}


def _bounds_against(node: PartitionNode, maxima: dict[int, float]) -> tuple[float, float]:
    d_p = node.diameter
    k_low = 0.0
    k_up = math.inf
    for h, v_max in maxima.items():
        if h == node.depth:
            continue
        d_q = 3.0 ** -h
        if h > node.depth:  # smaller boxes: they force a minimum rate
            k_low = max(k_low, (v_max - node.value) / (d_p - d_q))
        else:  # larger boxes: they cap the usable rate
            k_up = min(k_up, (node.value - v_max) / (d_q - d_p))
    return k_low, k_up


def rate_bounds(node: PartitionNode, ledger: LeafLedger) -> tuple[float, float]:
    """Smallest and largest rate K compatible with the other leaves.

    K_low is forced by leaves with a smaller diameter (clamped at 0) and
    K_up by leaves with a larger diameter (+inf when none exist); only
    the best value of each diameter class can bind either side.
    """
    return _bounds_against(node, _class_maxima(ledger))


def _class_representatives(ledger: LeafLedger, max_depth: int) -> list[PartitionNode]:
    """Best divisible leaf of each diameter class, value ties to the oldest."""
    reps = []
    for h in ledger.depths():
        if h >= max_depth:
            continue
        reps.append(max(ledger.group(h), key=lambda n: (n.value, -n.creation_index)))
    return reps


def _improvement_threshold(ledger: LeafLedger, epsilon: float) -> float:
    return ledger.best_value + epsilon * abs(ledger.best_value)


def _po_direct(ledger: LeafLedger, epsilon: float, max_depth: int) -> list[PartitionNode]:
    maxima = _class_maxima(ledger)
    threshold = _improvement_threshold(ledger, epsilon)
    selected = []
    for node in _class_representatives(ledger, max_depth):
        k_low, k_up = _bounds_against(node, maxima)
        if k_up < k_low:
            continue
        if node.value + node.diameter * k_up < threshold:
            continue
        selected.append(node)
    return selected


def _simple_candidates(ledger: LeafLedger, epsilon: float, max_depth: int) -> list[PartitionNode]:
    maxima = _class_maxima(ledger)
    threshold = _improvement_threshold(ledger, epsilon)
    candidates = []
    for node in _class_representatives(ledger, max_depth):
        _, k_up = _bounds_against(node, maxima)
        if node.value + node.diameter * k_up >= threshold:
            candidates.append(node)
    return candidates


def _score(node: PartitionNode) -> float:
    return node.value + 0.5 * node.diameter * node.slope


def _trim_candidates(candidates: list[PartitionNode], po_limit: int) -> list[PartitionNode]:
    if len(candidates) <= po_limit:
        return sorted(candidates, key=lambda n: n.depth)
    ranked = sorted(candidates, key=lambda n: (-_score(n), n.depth, n.creation_index))
    keep = ranked[: po_limit - 1]
    largest = min(candidates, key=lambda n: n.depth)
    if largest not in keep:
        keep.append(largest)
    return sorted(keep, key=lambda n: n.depth)


def select_po_direct(
    ledger: LeafLedger, epsilon: float, max_depth: int = 6
) -> list[PartitionNode]:
    """Leaves passing the full potential-optimality test.

    A divisible leaf is kept iff it is the best of its diameter class
    (value ties resolved to the lowest creation index), its rate window
    [K_low, K_up] is non-empty, and the top of that window still clears
    best + epsilon * |best|.  The result is ordered largest box first.
    """
    return _po_direct(ledger, epsilon, max_depth)


def select_po_simple(
    ledger: LeafLedger, epsilon: float, po_limit: int, max_depth: int = 6
) -> list[PartitionNode]:
    """Simplified selection: class bests that clear the improvement bar.

    When more than ``po_limit`` candidates survive, the ``po_limit - 1``
    highest scored by value + diameter * slope / 2 are kept (score ties
    to the larger box, then the lower creation index) and the largest
    candidate is always included.  The result is ordered largest first.
    """
    return _trim_candidates(_simple_candidates(ledger, epsilon, max_depth), po_limit)


def condition_counts(
    ledger: LeafLedger, epsilon: float, max_depth: int = 6
) -> tuple[int, int, int]:
    """How many divisible leaves pass each selection condition on its own.

    Returns (class-best count, rate-window count, improvement count);
    reference leaves for the rate window include undividable ones.
    """
    maxima = _class_maxima(ledger)
    threshold = _improvement_threshold(ledger, epsilon)
    n_class_best = n_rate_ok = n_improve_ok = 0
    for node in ledger.leaves():
        if not node.is_divisible(max_depth):
            continue
        if node.value == maxima[node.depth]:
            n_class_best += 1
        k_low, k_up = _bounds_against(node, maxima)
        if k_up >= k_low:
            n_rate_ok += 1
        if node.value + node.diameter * k_up >= threshold:
            n_improve_ok += 1
    return n_class_best, n_rate_ok, n_improve_ok


# --- search loops --------------------------------------------------------


def _checked(objective: Objective, point: tuple[float, ...]) -> float:
    value = float(objective(point))
    if not math.isfinite(value):
        raise ObjectiveError(f"objective returned non-finite value {value!r} at point {point}")
    return value


def run(objective: Objective, dimension: int, config: OptimizerConfig) -> OptResult:
    """Maximise ``objective`` over [0, 1]^dimension by dividing rectangles.

    Each sweep selects leaves by ``config.mode``, probes every selected
    leaf beside its centre along all longest sides, then trisects it.
    Stops when the sweep budget or query budget runs out or nothing is
    selectable; a budget that truncates a probe batch evaluates a
    deterministic prefix and stops after recording the sweep.
    """
    if dimension < 1:
        raise ValueError(f"dimension must be at least 1, got {dimension}")
    counter = itertools.count()
    ledger = LeafLedger()
    queries = 0

    def evaluate(point: tuple[float, ...]) -> float:
        nonlocal queries
        value = _checked(objective, point)
        queries += 1
        ledger.observe(point, value)
        return value

    root = replace(init_root(dimension), creation_index=next(counter))
    root = replace(root, value=evaluate(root.center))
    ledger.add(root)

    trajectory: list[IterationStats] = []
    iteration = 0
    while iteration < config.max_iterations:
        remaining = math.inf if config.max_queries is None else config.max_queries - queries
        if remaining <= 0:
            break
        iteration += 1
        counts = condition_counts(ledger, config.epsilon, config.max_depth)
        if config.mode == "direct":
            selected = _po_direct(ledger, config.epsilon, config.max_depth)
            pool = selected
            trimmed = False
        else:
            pool = _simple_candidates(ledger, config.epsilon, config.max_depth)
            trimmed = len(pool) > config.po_limit
            selected = _trim_candidates(pool, config.po_limit)
        n_candidates = len(pool)
        if not selected:
            break
        largest_selected = min(n.depth for n in selected) == min(n.depth for n in pool)

        batch: list[tuple[int, object]] = []
        for pos, node in enumerate(selected):
            for point in sample_points(node):
                batch.append((pos, point))

        def stats_row(n_sel: int) -> IterationStats:
            return IterationStats(
                iteration=iteration,
                queries=queries,
                best_value=ledger.best_value,
                n_class_best=counts[0],
                n_rate_ok=counts[1],
                n_improve_ok=counts[2],
                n_candidates=n_candidates,
                n_selected=n_sel,
                trimmed=trimmed,
                largest_selected=largest_selected,
            )

        if len(batch) > remaining:
            for _, point in batch[: int(remaining)]:
                evaluate(point.center)
            trajectory.append(stats_row(len(selected)))
            break

        results: list[dict[int, list[float]]] = [dict() for _ in selected]
        for pos, point in batch:
            value = evaluate(point.center)
            results[pos].setdefault(point.dim, [math.nan, math.nan])[0 if point.sign < 0 else 1] = value
        for pos, node in enumerate(selected):
            pairs = {dim: (lo, hi) for dim, (lo, hi) in results[pos].items()}
            children, center = trisect(node, pairs, counter)
            ledger.remove(node)
            ledger.add(center)
            for child in children:
                ledger.add(child)
        trajectory.append(stats_row(len(selected)))

    assert ledger.best_point is not None
    return OptResult(
        best_point=ledger.best_point,
        best_value=ledger.best_value,
        query_count=queries,
        trajectory=tuple(trajectory),
    )


def random_search(
    objective: Objective, dimension: int, max_queries: int, rng_seed: int = 0
) -> OptResult:
    """Baseline: i.i.d. uniform samples from a seeded generator."""
    if dimension < 1:
        raise ValueError(f"dimension must be at least 1, got {dimension}")
    if max_queries < 1:
        raise ValueError("max_queries must be at least 1")
    rng = np.random.default_rng(rng_seed)
    points = rng.random((max_queries, dimension))
    best_value = -math.inf
    best_point: tuple[float, ...] = ()
    trajectory = []
    for i in range(max_queries):
        point = tuple(float(x) for x in points[i])
        value = _checked(objective, point)
        if value > best_value:
            best_value = value
            best_point = point
        trajectory.append(
            IterationStats(
                iteration=i + 1,
                queries=i + 1,
                best_value=best_value,
                n_class_best=0,
                n_rate_ok=0,
                n_improve_ok=0,
            )
        )
    return OptResult(
        best_point=best_point,
        best_value=best_value,
        query_count=max_queries,
        trajectory=tuple(trajectory),
    )


def natural_extremes(objective: Objective, dimension: int) -> tuple[float, float]:
    """Objective values at the all-ones and all-zeros corners, in that order."""
    if dimension < 1:
        raise ValueError(f"dimension must be at least 1, got {dimension}")
    v_plus = _checked(objective, (1.0,) * dimension)
    v_minus = _checked(objective, (0.0,) * dimension)
    return v_plus, v_minus


def convergence_bound(lipschitz: float, iterations: int, dimension: int) -> float:
    """Worst-case optimality gap K * (T + 1)^(-1/n) after T sweeps."""
    if lipschitz < 0.0:
        raise ValueError("lipschitz must be non-negative")
    if iterations < 0 or dimension < 1:
        raise ValueError("iterations must be >= 0 and dimension >= 1")
    return lipschitz * (iterations + 1) ** (-1.0 / dimension)


# --- serialisation -------------------------------------------------------

_CSV_HEADER = ["iteration", "queries", "best_value", "n_eq4", "n_eq5", "n_eq6"]


def _row_dict(row: IterationStats) -> dict:
    return {
        "iteration": row.iteration,
        "queries": row.queries,
        "best_value": row.best_value,
        "n_eq4": row.n_class_best,
        "n_eq5": row.n_rate_ok,
        "n_eq6": row.n_improve_ok,
    }


def optresult_to_dict(result: OptResult) -> dict:
    return {
        "best_point": list(result.best_point),
        "best_value": result.best_value,
        "query_count": result.query_count,
        "trajectory": [_row_dict(row) for row in result.trajectory],
    }


def write_optresult_json(result: OptResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(optresult_to_dict(result), fh, indent=2)
        fh.write("\n")


def write_trajectory_csv(result: OptResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_HEADER)
        writer.writeheader()
        for row in result.trajectory:
            writer.writerow(_row_dict(row))

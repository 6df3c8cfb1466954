"""Exact base-3 partition tree over the unit hypercube.

The search cube [0, 1]^n is carved into axis-aligned boxes by repeated
trisection.  Every box centre is stored exactly as an odd numerator over
2 * 3^e per dimension, so tilings can be verified in integer arithmetic
at any depth; floats are produced only where an objective has to be
evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Mapping, NamedTuple, Optional, Sequence

__all__ = [
    "PartitionNode",
    "SamplePoint",
    "LeafLedger",
    "init_root",
    "sample_points",
    "trisect",
]


@dataclass(frozen=True)
class PartitionNode:
    """One box of the partition: exact centre plus search bookkeeping.

    Coordinate i equals ``nums[i] / (2 * 3**exps[i])`` and the box side
    along dimension i is ``3**-exps[i]``.  Numerators are kept odd, which
    pins each centre to the exact middle of its box.

    Attributes
    ----------
    nums:
        Odd integer numerators, one per dimension.
    exps:
        Base-3 scale exponents, one per dimension.  All exponents of a
        node differ by at most one from the smallest.
    value:
        Objective value at the centre (NaN until evaluated).
    slope:
        Largest local finite-difference rate observed in the most recent
        trisection touching this node; 0 before any trisection.
    creation_index:
        Monotone integer used for deterministic tie-breaking.
    """

    nums: tuple[int, ...]
    exps: tuple[int, ...]
    value: float = math.nan
    slope: float = 0.0
    creation_index: int = 0

    @property
    def dimension(self) -> int:
        return len(self.nums)

    @property
    def depth(self) -> int:
        """Trisection depth h: the smallest per-dimension exponent."""
        return min(self.exps)

    @property
    def diameter(self) -> float:
        """Size measure 3^-h of the box (its longest side)."""
        return 3.0 ** -self.depth

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(n / (2 * 3**e) for n, e in zip(self.nums, self.exps))

    @property
    def center_fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(n, 2 * 3**e) for n, e in zip(self.nums, self.exps))

    @property
    def side_fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(1, 3**e) for e in self.exps)

    @property
    def volume_fraction(self) -> Fraction:
        return Fraction(1, 3 ** sum(self.exps))

    def long_dimensions(self) -> tuple[int, ...]:
        """Dimensions still at the node's depth, i.e. with the longest side."""
        h = self.depth
        return tuple(i for i, e in enumerate(self.exps) if e == h)

    def is_divisible(self, max_depth: int) -> bool:
        return self.depth < max_depth

    def __post_init__(self) -> None:
        if len(self.nums) != len(self.exps) or not self.nums:
            raise ValueError("nums and exps must be non-empty and equally long")
        h = min(self.exps)
        for i, (n, e) in enumerate(zip(self.nums, self.exps)):
            if e < 0 or e > h + 1:
                raise ValueError(f"exponent {e} at dimension {i} breaks the depth invariant")
            if n % 2 == 0 or not 0 < n < 2 * 3**e:
                raise ValueError(f"numerator {n} at dimension {i} is not an interior odd value")


class SamplePoint(NamedTuple):
    """A point probed next to a node centre along one long dimension."""

    dim: int
    sign: int
    nums: tuple[int, ...]
    exps: tuple[int, ...]

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(n / (2 * 3**e) for n, e in zip(self.nums, self.exps))

    @property
    def center_fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(n, 2 * 3**e) for n, e in zip(self.nums, self.exps))


def init_root(dimension: int) -> PartitionNode:
    """Root box covering [0, 1]^dimension with centre (1/2, ..., 1/2)."""
    if dimension < 1:
        raise ValueError(f"dimension must be at least 1, got {dimension}")
    return PartitionNode(nums=(1,) * dimension, exps=(0,) * dimension)


def sample_points(node: PartitionNode) -> list[SamplePoint]:
    """Probe points at centre +- 3^-(h+1) along every long dimension.

    Points are ordered by ascending dimension with the minus point ahead
    of the plus point, and stay strictly inside the unit cube.
    """
    h = node.depth
    points: list[SamplePoint] = []
    for i in node.long_dimensions():
        exps = tuple(e + 1 if j == i else e for j, e in enumerate(node.exps))
        for sign in (-1, 1):
            nums = tuple(
                3 * n + 2 * sign if j == i else n for j, n in enumerate(node.nums)
            )
            points.append(SamplePoint(dim=i, sign=sign, nums=nums, exps=exps))
    return points


def trisect(
    node: PartitionNode,
    pair_values: Mapping[int, tuple[float, float]],
    counter: Iterator[int],
) -> tuple[list[PartitionNode], PartitionNode]:
    """Split ``node`` into thirds along every long dimension.

    ``pair_values`` maps each long dimension to the objective values at
    the (minus, plus) sample points of :func:`sample_points`.  Dimensions
    are divided in descending order of the larger of the two values (ties
    by ascending dimension index), so better pairs end up in larger child
    boxes.  Returns the newly created children in creation order together
    with the shrunk centre node; children take fresh indices from
    ``counter`` while the centre keeps its own.
    """
    h = node.depth
    long_dims = node.long_dimensions()
    if set(pair_values) != set(long_dims):
        raise ValueError(
            f"pair values cover dimensions {sorted(pair_values)} "
            f"but the node's long dimensions are {list(long_dims)}"
        )
    half_step = 3.0 ** -(h + 1)
    event_slope = 0.0
    for lo, hi in pair_values.values():
        event_slope = max(
            event_slope,
            abs(node.value - lo) / half_step,
            abs(node.value - hi) / half_step,
        )

    order = sorted(long_dims, key=lambda i: (-max(pair_values[i]), i))
    cur_nums = list(node.nums)
    cur_exps = list(node.exps)
    children: list[PartitionNode] = []
    for i in order:
        step_exps = list(cur_exps)
        step_exps[i] += 1
        for sign, val in zip((-1, 1), pair_values[i]):
            child_nums = list(cur_nums)
            child_nums[i] = 3 * cur_nums[i] + 2 * sign
            children.append(
                PartitionNode(
                    nums=tuple(child_nums),
                    exps=tuple(step_exps),
                    value=float(val),
                    slope=event_slope,
                    creation_index=next(counter),
                )
            )
        cur_nums[i] *= 3
        cur_exps[i] += 1

    center = replace(
        node,
        nums=tuple(cur_nums),
        exps=tuple(cur_exps),
        slope=event_slope,
    )
    return children, center


@dataclass
class LeafLedger:
    """Current leaves grouped by depth, plus the running best sample.

    ``best_value``/``best_point`` track the maximum over every point ever
    reported via :meth:`observe` (adding a node observes its centre), so
    they cover all queried points, not only surviving leaf centres.
    """

    _groups: dict[int, dict[int, PartitionNode]] = field(default_factory=dict)
    best_value: float = -math.inf
    best_point: Optional[tuple[float, ...]] = None

    def observe(self, point: Sequence[float], value: float) -> None:
        if value > self.best_value:
            self.best_value = value
            self.best_point = tuple(point)

    def add(self, node: PartitionNode) -> None:
        group = self._groups.setdefault(node.depth, {})
        if node.creation_index in group:
            raise ValueError(f"duplicate leaf index {node.creation_index} at depth {node.depth}")
        group[node.creation_index] = node
        self.observe(node.center, node.value)

    def remove(self, node: PartitionNode) -> None:
        group = self._groups.get(node.depth, {})
        if group.pop(node.creation_index, None) is None:
            raise KeyError(f"leaf {node.creation_index} not present at depth {node.depth}")
        if not group:
            del self._groups[node.depth]

    def depths(self) -> list[int]:
        return sorted(self._groups)

    def group(self, depth: int) -> list[PartitionNode]:
        return [self._groups[depth][k] for k in sorted(self._groups.get(depth, {}))]

    def leaves(self) -> list[PartitionNode]:
        out: list[PartitionNode] = []
        for depth in self.depths():
            out.extend(self.group(depth))
        return out

    def __len__(self) -> int:
        return sum(len(g) for g in self._groups.values())

"""Benchmark objectives exposed on the unit cube, oriented for maximisation.

Each function carries its native box domain; a unit-cube point is mapped
affinely into that box before evaluation and the classical minimisation
value is negated, so every optimum below is a maximum of value 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["BenchFunction", "BENCH_FUNCTIONS", "get_function", "eval_function"]

# High-precision offset making the Schwefel optimum sit at 0 to well below 1e-6.
_SCHWEFEL_OFFSET = 418.9828872724339
_SCHWEFEL_OPTIMUM_X = 420.968746


@dataclass(frozen=True)
class BenchFunction:
    """A named objective with its native domain and known optimum."""

    name: str
    lower: float
    upper: float
    optimum_native: float
    optimum_value: float
    _fn: Callable[[np.ndarray], float]

    def decode(self, theta_unit: Sequence[float]) -> np.ndarray:
        theta = np.asarray(theta_unit, dtype=float)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta_unit must be a non-empty 1-D sequence")
        if np.any(theta < 0.0) or np.any(theta > 1.0):
            raise ValueError(f"theta_unit outside [0, 1]: {theta.tolist()}")
        return self.lower + theta * (self.upper - self.lower)

    def evaluate_unit(self, theta_unit: Sequence[float]) -> float:
        return float(self._fn(self.decode(theta_unit)))

    def optimum_unit(self, dimension: int) -> tuple[float, ...]:
        u = (self.optimum_native - self.lower) / (self.upper - self.lower)
        return (u,) * dimension


def _ackley(x: np.ndarray) -> float:
    n = x.size
    value = (
        -20.0 * math.exp(-0.2 * math.sqrt(float(np.sum(x * x)) / n))
        - math.exp(float(np.sum(np.cos(2.0 * math.pi * x))) / n)
        + 20.0
        + math.e
    )
    return -value


def _schwefel(x: np.ndarray) -> float:
    value = _SCHWEFEL_OFFSET * x.size - float(np.sum(x * np.sin(np.sqrt(np.abs(x)))))
    return -value


def _sphere(x: np.ndarray) -> float:
    return -float(np.sum(x * x))


def _l1cone(x: np.ndarray) -> float:
    return -float(np.sum(np.abs(x - 1.0 / 6.0)))


BENCH_FUNCTIONS: dict[str, BenchFunction] = {
    "ackley": BenchFunction("ackley", -32.768, 32.768, 0.0, 0.0, _ackley),
    "schwefel": BenchFunction("schwefel", -500.0, 500.0, _SCHWEFEL_OPTIMUM_X, 0.0, _schwefel),
    "sphere": BenchFunction("sphere", -5.12, 5.12, 0.0, 0.0, _sphere),
    "l1cone": BenchFunction("l1cone", 0.0, 1.0, 1.0 / 6.0, 0.0, _l1cone),
}


def get_function(name: str) -> BenchFunction:
    try:
        return BENCH_FUNCTIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown benchmark function {name!r}; choose from {sorted(BENCH_FUNCTIONS)}"
        ) from None


def eval_function(name: str, theta_unit: Sequence[float]) -> float:
    return get_function(name).evaluate_unit(theta_unit)

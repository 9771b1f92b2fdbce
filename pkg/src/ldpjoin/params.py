"""Sketch configuration shared by clients, server and hash families."""

from __future__ import annotations

import math
from dataclasses import dataclass

MASK64 = (1 << 64) - 1


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def flip_probability(epsilon: float) -> float:
    """Probability that randomized response negates the reported sign."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if math.isinf(epsilon):
        return 0.0
    return 1.0 / (math.exp(epsilon) + 1.0)


def debias_constant(epsilon: float) -> float:
    """(e^eps + 1) / (e^eps - 1); inverts the shrinkage E[b] of randomized response."""
    if epsilon <= 0:
        raise ValueError(f"debiasing needs epsilon > 0, got {epsilon}")
    if math.isinf(epsilon):
        return 1.0
    # 1 / tanh(eps / 2) is the same quantity without overflow for large eps
    return 1.0 / math.tanh(epsilon / 2.0)


@dataclass(frozen=True)
class SketchParams:
    """Shape, privacy budget and hash seed of a k x m sketch.

    ``epsilon`` may be ``math.inf`` (no perturbation) which is handy for
    tests. ``epsilon == 0`` is accepted so clients can be exercised at the
    fully random limit, but no sketch can be debiased at that budget.
    """

    k: int
    m: int
    epsilon: float
    master_seed: int = 0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if int(self.m) != self.m or self.m < 2 or not is_power_of_two(int(self.m)):
            raise ValueError(f"m must be a power of two >= 2, got {self.m}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "master_seed", int(self.master_seed) & MASK64)

    @property
    def flip_probability(self) -> float:
        return flip_probability(self.epsilon)

    @property
    def c_eps(self) -> float:
        return debias_constant(self.epsilon)

    @property
    def scale(self) -> float:
        """Per-report server increment k * c_eps."""
        return self.k * self.c_eps

    def with_seed(self, master_seed: int) -> "SketchParams":
        return SketchParams(self.k, self.m, self.epsilon, master_seed)

"""k-ary randomized response (k-RR) join-size baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ldpjoin.client import as_generator


@dataclass(frozen=True)
class KrrParams:
    """Keep probability p = e^eps / (e^eps + |D| - 1); switch probability q = p / e^eps."""

    epsilon: float
    domain_size: int

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if int(self.domain_size) != self.domain_size or self.domain_size < 2:
            raise ValueError(f"domain_size must be an integer >= 2, got {self.domain_size}")
        object.__setattr__(self, "domain_size", int(self.domain_size))

    @property
    def p(self) -> float:
        # written with e^-eps so eps = inf gives p = 1 exactly
        return 1.0 / (1.0 + (self.domain_size - 1) * math.exp(-self.epsilon))

    @property
    def q(self) -> float:
        return math.exp(-self.epsilon) * self.p

    @property
    def report_bits(self) -> int:
        """Bits needed to send one value of the domain."""
        return max(1, math.ceil(math.log2(self.domain_size)))


def _check_domain(values, params: KrrParams) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < 0 or values.max() >= params.domain_size):
        raise ValueError(f"values must lie in [0, {params.domain_size})")
    return values


def krr_perturb(d: int, params: KrrParams, rng) -> int:
    """Keep d with probability p, else report one of the other |D| - 1 values uniformly."""
    d = int(_check_domain([d], params)[0])
    rng = as_generator(rng)
    if rng.random() < params.p:
        return d
    other = int(rng.integers(params.domain_size - 1))
    return other + (other >= d)


def krr_perturb_batch(values, params: KrrParams, rng) -> np.ndarray:
    values = _check_domain(values, params)
    rng = as_generator(rng)
    keep = rng.random(values.size) < params.p
    other = rng.integers(0, params.domain_size - 1, values.size)
    other += other >= values
    return np.where(keep, values, other)


def krr_calibrate(reports, params: KrrParams) -> np.ndarray:
    """Unbiased frequency vector (count(d) - n q) / (p - q) over the whole domain."""
    p, q = params.p, params.q
    if p - q <= 0:
        raise ValueError("p == q: k-RR calibration is undefined at epsilon = 0")
    reports = _check_domain(reports, params)
    counts = np.bincount(reports, minlength=params.domain_size).astype(np.float64)
    return (counts - reports.size * q) / (p - q)


def krr_join_estimate(a_reports, b_reports, params: KrrParams) -> float:
    return float(np.dot(krr_calibrate(a_reports, params), krr_calibrate(b_reports, params)))

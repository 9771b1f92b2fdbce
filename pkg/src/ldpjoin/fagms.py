"""Non-private fast-AGMS sketch and the exact join-size oracle."""

from __future__ import annotations

from collections import Counter
from typing import Iterable

import numpy as np

from ldpjoin.hashing import HashFamily, eval_h, eval_xi


class FagmsSketch:
    """k x m signed counter array; row j adds xi_j(d) at column h_j(d)."""

    def __init__(self, family: HashFamily):
        self.family = family
        self.counters = np.zeros((family.k, family.m), dtype=np.int64)

    @property
    def k(self):
        return self.family.k

    @property
    def m(self):
        return self.family.m

    def insert(self, d: int) -> "FagmsSketch":
        for j, pair in enumerate(self.family.rows):
            self.counters[j, eval_h(pair, d)] += eval_xi(pair, d)
        return self

    def insert_many(self, values) -> "FagmsSketch":
        values = np.asarray(values)
        if values.size == 0:
            return self
        k, m = self.k, self.m
        # hash each distinct value once and weight by its multiplicity
        values, counts = np.unique(values, return_counts=True)
        cells = self.family.buckets(values) + (np.arange(k) * m)[:, None]
        weights = self.family.signs(values) * counts
        # integer weights summed in float64 stay exact far beyond any desk-scale n
        acc = np.bincount(cells.ravel(), weights=weights.ravel(), minlength=k * m)
        self.counters += np.rint(acc).astype(np.int64).reshape(k, m)
        return self

    def merge(self, other: "FagmsSketch") -> "FagmsSketch":
        _check_family(self, other)
        out = FagmsSketch(self.family)
        out.counters = self.counters + other.counters
        return out

    def row_estimates(self, other: "FagmsSketch") -> np.ndarray:
        _check_family(self, other)
        return np.einsum("jx,jx->j", self.counters, other.counters)


def _check_family(a, b):
    if a.family != b.family:
        raise ValueError(f"sketches use different hash families: {a.family} vs {b.family}")


def fagms_sketch(values, family: HashFamily) -> FagmsSketch:
    return FagmsSketch(family).insert_many(values)


def fagms_insert(sk: FagmsSketch, d: int) -> FagmsSketch:
    return sk.insert(d)


def fagms_join(sk_a: FagmsSketch, sk_b: FagmsSketch) -> float:
    """Median over rows of the row inner products (even k: mean of the middle two)."""
    return float(np.median(sk_a.row_estimates(sk_b)))


def frequencies(values) -> Counter:
    if isinstance(values, Counter):
        return values
    arr = np.asarray(values)
    if arr.size == 0:
        return Counter()
    uniq, counts = np.unique(arr, return_counts=True)
    return Counter(dict(zip(uniq.tolist(), counts.tolist())))


def true_join_size(a: Iterable, b: Iterable) -> int:
    """Exact sum over d of f_a(d) * f_b(d)."""
    fa, fb = frequencies(a), frequencies(b)
    if len(fa) > len(fb):
        fa, fb = fb, fa
    return sum(c * fb[d] for d, c in fa.items() if d in fb)

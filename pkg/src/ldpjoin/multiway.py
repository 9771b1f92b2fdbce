"""Chain joins T1(A) |x| T2(A, B) |x| T3(B) with two-dimensional private sketches.

A middle-table tuple (a, b) is encoded as the outer product of its A and B
fast-AGMS encodings; one Hadamard coefficient per dimension is sampled and
the product sign is perturbed once with the full budget.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from ldpjoin.client import REPORT2_DTYPE, _rr_weights, as_generator
from ldpjoin.hashing import HashFamily, eval_h, eval_xi, hadamard_entries, hadamard_entry
from ldpjoin.params import SketchParams
from ldpjoin.server import PrivateSketch


def _check_families(params: SketchParams, fam_a: HashFamily, fam_b: HashFamily):
    if not (fam_a.k == fam_b.k == params.k):
        raise ValueError("both attribute families need params.k rows")


def client_perturb_2d(a: int, b: int, params: SketchParams, families, rng) -> tuple[int, int, int, int]:
    """Returns (y, j, l1, l2); draws j, l1, l2 and the flip coin in that order."""
    fam_a, fam_b = families
    _check_families(params, fam_a, fam_b)
    rng = as_generator(rng)
    j = int(rng.integers(params.k))
    l1 = int(rng.integers(fam_a.m))
    l2 = int(rng.integers(fam_b.m))
    flip = rng.random() < params.flip_probability
    pa, pb = fam_a.rows[j], fam_b.rows[j]
    w = (hadamard_entry(eval_h(pa, a), l1, fam_a.m) * eval_xi(pa, a) * eval_xi(pb, b)
         * hadamard_entry(l2, eval_h(pb, b), fam_b.m))
    return (-w if flip else w), j, l1, l2


def perturb_batch_2d(tuples, params: SketchParams, families, rng) -> np.ndarray:
    fam_a, fam_b = families
    _check_families(params, fam_a, fam_b)
    rng = as_generator(rng)
    tuples = np.asarray(tuples, dtype=np.uint64).reshape(-1, 2)
    a, b = tuples[:, 0], tuples[:, 1]
    n = a.size
    j = rng.integers(0, params.k, n)
    l1 = rng.integers(0, fam_a.m, n)
    l2 = rng.integers(0, fam_b.m, n)
    flip = rng.random(n) < params.flip_probability
    w = (hadamard_entries(fam_a.buckets(a, j), l1) * fam_a.signs(a, j) * fam_b.signs(b, j)
         * hadamard_entries(l2, fam_b.buckets(b, j)))
    out = np.empty(n, dtype=REPORT2_DTYPE)
    out["y"], out["j"], out["l"], out["l2"] = np.where(flip, -w, w), j, l1, l2
    return out


def output_law_2d(a: int, b: int, params: SketchParams, families, normalize: bool = True) -> np.ndarray:
    """Pr[(y, j, l1, l2) | (a, b)] indexed [y == +1, j, l1, l2]."""
    fam_a, fam_b = families
    k, m1, m2 = params.k, fam_a.m, fam_b.m
    keep, flip = _rr_weights(params)
    law = np.empty((2, k, m1, m2))
    for j in range(k):
        pa, pb = fam_a.rows[j], fam_b.rows[j]
        ha, hb = eval_h(pa, a), eval_h(pb, b)
        s = eval_xi(pa, a) * eval_xi(pb, b)
        w = s * np.outer([hadamard_entry(ha, l, m1) for l in range(m1)],
                         [hadamard_entry(l, hb, m2) for l in range(m2)])
        law[1, j] = np.where(w == 1, keep, flip)
        law[0, j] = np.where(w == -1, keep, flip)
    return law / ((keep + flip) * k * m1 * m2) if normalize else law


class PrivateSketch2D:
    """k tensors of shape m1 x m2; restore multiplies H_m1^T on the left and H_m2^T on the right."""

    def __init__(self, params: SketchParams, families):
        fam_a, fam_b = families
        _check_families(params, fam_a, fam_b)
        self.params = params
        self.families = (fam_a, fam_b)
        self.tallies = np.zeros((params.k, fam_a.m, fam_b.m), dtype=np.int64)
        self.n_reports = 0
        self.debiased = False
        self._restored = None

    @property
    def shape(self):
        return self.tallies.shape

    @property
    def scale(self) -> float:
        # one row out of k is sampled per report, so k c_eps as in one dimension
        return self.params.k * self.params.c_eps

    @property
    def counters(self) -> np.ndarray:
        return self._restored if self.debiased else self.tallies * self.scale

    def add_reports(self, reports) -> "PrivateSketch2D":
        if self.debiased:
            raise ValueError("sketch already restored")
        reports = np.asarray(reports)
        if reports.size == 0:
            return self
        k, m1, m2 = self.shape
        y = reports["y"].astype(np.int64)
        j, l1, l2 = (reports[f].astype(np.int64) for f in ("j", "l", "l2"))
        if j.max() >= k or l1.max() >= m1 or l2.max() >= m2:
            raise IndexError(f"report index outside a {self.shape} sketch")
        acc = np.bincount((j * m1 + l1) * m2 + l2, weights=y, minlength=k * m1 * m2)
        self.tallies += np.rint(acc).astype(np.int64).reshape(k, m1, m2)
        self.n_reports += int(reports.size)
        return self

    def restore(self) -> "PrivateSketch2D":
        if self.debiased:
            raise ValueError("restore must be applied exactly once")
        from ldpjoin.hashing import hadamard_transform

        t = hadamard_transform(hadamard_transform(self.tallies, axis=1), axis=2)
        self._restored = t * self.scale
        self.debiased = True
        return self

    def merge(self, other: "PrivateSketch2D") -> "PrivateSketch2D":
        if self.params != other.params or self.families != other.families:
            raise ValueError("cannot merge sketches with different params or hash families")
        if self.debiased or other.debiased:
            raise ValueError("only unrestored sketches can be merged")
        out = PrivateSketch2D(self.params, self.families)
        out.tallies = self.tallies + other.tallies
        out.n_reports = self.n_reports + other.n_reports
        return out


def prisk_build_2d(reports, params: SketchParams, families, *, restore: bool = True) -> PrivateSketch2D:
    sk = PrivateSketch2D(params, families).add_reports(reports)
    return sk.restore() if restore else sk


def chain_row_estimates(*sketches) -> np.ndarray:
    """Per-row products M1[j] . M2[j] . ... . Mn[j] for a chain of sketches.

    The ends are one-dimensional :class:`PrivateSketch` objects, everything in
    between is a :class:`PrivateSketch2D` whose families link its neighbours.
    """
    if len(sketches) < 2:
        raise ValueError("a chain needs at least two sketches")
    first, *middle, last = sketches
    if not isinstance(first, PrivateSketch) or not isinstance(last, PrivateSketch):
        raise TypeError("chain ends must be one-dimensional private sketches")
    family = first.family
    for mid in middle:
        if not isinstance(mid, PrivateSketch2D):
            raise TypeError("inner chain elements must be two-dimensional sketches")
        if mid.families[0] != family:
            raise ValueError("adjacent sketches do not share a hash family")
        family = mid.families[1]
    if last.family != family:
        raise ValueError("adjacent sketches do not share a hash family")
    for sk in sketches:
        if not sk.debiased:
            raise ValueError("chain estimation needs restored sketches")
    v = first.counters
    for mid in middle:
        v = np.einsum("jx,jxy->jy", v, mid.counters)
    return np.einsum("jx,jx->j", v, last.counters)


def chain_join_est(*sketches) -> float:
    """Median over rows of the chain product, e.g. ``chain_join_est(M1, M2, M3)``."""
    return float(np.median(chain_row_estimates(*sketches)))


def true_chain_join(first, *rest) -> int:
    """Exact chain-join count for T1(A), T2(A, B), ..., Tn(Z) by frequency maps."""
    *middle, last = rest
    weights = Counter(np.asarray(first).tolist())
    for table in middle:
        nxt = Counter()
        for (a, b), c in Counter(map(tuple, np.asarray(table).reshape(-1, 2).tolist())).items():
            w = weights.get(a)
            if w:
                nxt[b] += w * c
        weights = nxt
    tail = Counter(np.asarray(last).tolist())
    return sum(w * tail[v] for v, w in weights.items() if v in tail)


def nested_loop_chain_join(t1, t2, t3) -> int:
    """Quadratic-per-pair brute force for three tables; small inputs only."""
    count = 0
    for a in t1:
        for a2, b in t2:
            if a2 != a:
                continue
            for b3 in t3:
                count += b3 == b
    return count

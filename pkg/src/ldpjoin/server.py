"""Aggregator side: private sketch construction, frequency and join estimation.

The server only ever sees perturbed reports. It accumulates them into a k x m
sketch, inverts the Hadamard sampling once all reports are in, and answers
frequency and join-size queries from the restored counters.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ldpjoin.client import (
    REPORT_DTYPE,
    FapMode,
    PerturbedReport,
    as_generator,
    fap_perturb_batch,
    perturb_batch,
)
from ldpjoin.hashing import HashFamily, derive_family, hadamard_transform
from ldpjoin.params import SketchParams

SNAPSHOT_MAGIC = b"LDPS"
_HEADER = struct.Struct("<4sIIdQBQ")


def _as_report_array(reports) -> np.ndarray:
    if isinstance(reports, np.ndarray) and reports.dtype.names and {"y", "j", "l"} <= set(reports.dtype.names):
        return reports
    reports = list(reports)
    out = np.empty(len(reports), dtype=REPORT_DTYPE)
    for i, rep in enumerate(reports):
        if isinstance(rep, PerturbedReport):
            out[i] = (rep.y, rep.j, rep.l)
        else:
            out[i] = tuple(rep)
    return out


class PrivateSketch:
    """k x m sketch built from perturbed reports.

    Before :meth:`restore` the state is an exact integer tally of reported
    signs per cell; ``counters`` exposes it scaled by ``k * c_eps``. Keeping
    the tally in integers makes :meth:`merge` exact in any order. After
    ``restore`` the counters are ``scaled_tally @ H_m^T`` and the sketch is
    read-only.
    """

    def __init__(self, params: SketchParams, family: HashFamily | None = None, mode: FapMode | None = None):
        self.params = params
        self.family = family if family is not None else derive_family(params)
        if self.family.k != params.k or self.family.m != params.m:
            raise ValueError("family shape does not match params")
        self.mode = None if mode is None else FapMode.parse(mode)
        self.tallies = np.zeros((params.k, params.m), dtype=np.int64)
        self.n_reports = 0
        self.debiased = False
        self._restored: np.ndarray | None = None

    @property
    def k(self):
        return self.params.k

    @property
    def m(self):
        return self.params.m

    @property
    def counters(self) -> np.ndarray:
        if self.debiased:
            return self._restored
        return self.tallies * self.params.scale

    def add_reports(self, reports) -> "PrivateSketch":
        if self.debiased:
            raise ValueError("sketch already restored; build a new one or merge before restoring")
        rep = _as_report_array(reports)
        if rep.size == 0:
            return self
        y = rep["y"].astype(np.int64)
        j = rep["j"].astype(np.int64)
        l = rep["l"].astype(np.int64)
        if np.any((y != 1) & (y != -1)):
            raise ValueError("report signs must be -1 or +1")
        if j.max() >= self.k or l.max() >= self.m or j.min() < 0 or l.min() < 0:
            raise IndexError(f"report index outside a ({self.k}, {self.m}) sketch")
        acc = np.bincount(j * self.m + l, weights=y, minlength=self.k * self.m)
        self.tallies += np.rint(acc).astype(np.int64).reshape(self.k, self.m)
        self.n_reports += int(rep.size)
        return self

    def restore(self) -> "PrivateSketch":
        if self.debiased:
            raise ValueError("restore must be applied exactly once")
        self._restored = hadamard_transform(self.tallies, axis=1) * self.params.scale
        self.debiased = True
        return self

    def merge(self, other: "PrivateSketch") -> "PrivateSketch":
        if self.params != other.params or self.family != other.family:
            raise ValueError("cannot merge sketches with different params or hash families")
        if self.debiased or other.debiased:
            raise ValueError("only unrestored sketches can be merged")
        if self.mode != other.mode:
            raise ValueError(f"cannot merge sketches built in modes {self.mode} and {other.mode}")
        out = PrivateSketch(self.params, self.family, self.mode)
        out.tallies = self.tallies + other.tallies
        out.n_reports = self.n_reports + other.n_reports
        return out

    def row_estimates(self, other: "PrivateSketch") -> np.ndarray:
        _check_pair(self, other)
        return np.einsum("jx,jx->j", self.counters, other.counters)

    def __repr__(self):
        state = "restored" if self.debiased else "raw"
        return f"PrivateSketch(k={self.k}, m={self.m}, eps={self.params.epsilon}, n={self.n_reports}, {state})"


def _check_pair(a: PrivateSketch, b: PrivateSketch):
    if a.family != b.family:
        raise ValueError(f"sketches use different hash families: {a.family} vs {b.family}")
    if not (a.debiased and b.debiased):
        raise ValueError("join estimation needs restored sketches")


def prisk_build(reports, params: SketchParams, family: HashFamily | None = None, *, restore: bool = True,
                mode: FapMode | None = None) -> PrivateSketch:
    sk = PrivateSketch(params, family, mode).add_reports(reports)
    return sk.restore() if restore else sk


def merge(a: PrivateSketch, b: PrivateSketch) -> PrivateSketch:
    return a.merge(b)


def median_join(a: PrivateSketch, b: PrivateSketch) -> float:
    return float(np.median(a.row_estimates(b)))


def estimate_frequencies(sk: PrivateSketch, ids, chunk: int = 1 << 16) -> np.ndarray:
    """Vectorized mean_j M[j, h_j(d)] * xi_j(d)."""
    if not sk.debiased:
        raise ValueError("frequency estimation needs a restored sketch")
    ids = np.asarray(ids, dtype=np.uint64)
    out = np.empty(ids.size)
    rows = np.arange(sk.k)[:, None]
    counters = sk.counters
    for start in range(0, ids.size, chunk):
        part = ids[start:start + chunk]
        cols = sk.family.buckets(part)
        out[start:start + chunk] = (counters[rows, cols] * sk.family.signs(part)).mean(axis=0)
    return out


def estimate_frequency(sk: PrivateSketch, d: int) -> float:
    return float(estimate_frequencies(sk, [d])[0])


@dataclass
class FrequentItemSet:
    """Phase-1 result shipped back to clients as a sorted id array."""

    items: np.ndarray
    theta: float
    freq_estimates_a: dict = field(default_factory=dict)
    freq_estimates_b: dict = field(default_factory=dict)
    sample_sizes: tuple[int, int] = (0, 0)
    population_sizes: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.items = np.unique(np.asarray(self.items, dtype=np.uint64))

    @classmethod
    def empty(cls, population_sizes, sample_sizes=(1, 1), theta: float = 1.0) -> "FrequentItemSet":
        return cls(np.empty(0, dtype=np.uint64), theta, {}, {}, tuple(sample_sizes), tuple(population_sizes))

    def __len__(self):
        return self.items.size

    def __contains__(self, d):
        i = np.searchsorted(self.items, np.uint64(d))
        return bool(i < self.items.size and self.items[i] == np.uint64(d))

    @property
    def high_freq(self) -> tuple[float, float]:
        """Population-scaled total frequency of FI items in A and in B."""
        return (
            float(sum(self.freq_estimates_a.get(int(d), 0.0) for d in self.items)),
            float(sum(self.freq_estimates_b.get(int(d), 0.0) for d in self.items)),
        )


def find_frequent_items(sk_a: PrivateSketch, sk_b: PrivateSketch, domain, theta: float,
                        sample_sizes, population_sizes) -> FrequentItemSet:
    """FI = FI_A | FI_B with FI_X = {d : max(f_X(d), 0) * |X|/|S_X| > theta * |X|}."""
    domain = np.unique(np.asarray(domain, dtype=np.uint64))
    if domain.size == 0:
        raise ValueError("candidate domain is empty")
    (s_a, s_b), (n_a, n_b) = sample_sizes, population_sizes
    if min(s_a, s_b) <= 0:
        raise ValueError("sample sizes must be positive")
    est_a = estimate_frequencies(sk_a, domain) * (n_a / s_a)
    est_b = estimate_frequencies(sk_b, domain) * (n_b / s_b)
    hot = (np.maximum(est_a, 0) > theta * n_a) | (np.maximum(est_b, 0) > theta * n_b)
    items = domain[hot]
    keys = items.tolist()
    return FrequentItemSet(
        items,
        theta,
        dict(zip(keys, est_a[hot].tolist())),
        dict(zip(keys, est_b[hot].tolist())),
        (int(s_a), int(s_b)),
        (int(n_a), int(n_b)),
    )


def estimate_non_target_mass(sk: PrivateSketch) -> float:
    """Unbiased estimate of the number of randomly encoded reports in a sketch.

    A non-target report with l = 0 always carries H[r, 0] = +1 before the
    flip, so its whole expected contribution sits in column 0 of the tally:
    E[sum_j tally[j, 0]] = |NT| / (m c_eps) plus a target term that is
    zero-mean over hash families.
    """
    return float(sk.m * sk.params.c_eps * sk.tallies[:, 0].sum())


NT_SOURCES = ("sketch", "group", "population")


def non_target_counts(mode, fi: FrequentItemSet, group_sizes, nt_source: str = "sketch",
                      sketches=None) -> tuple[float, float]:
    """Number of non-target reports to remove from each group's sketch.

    ``"group"`` converts the phase-1 high-frequency mass into the expected
    count inside the group, ``"population"`` uses the population-level mass
    unchanged, and ``"sketch"`` measures it from the group's own reports
    (needs ``sketches``). Phase-1 masses are summed over items selected by
    the same noisy estimates, so they are biased upward whenever FI admits
    noise; the sketch measurement does not share that selection.
    """
    mode = FapMode.parse(mode)
    if nt_source not in NT_SOURCES:
        raise ValueError(f"unknown nt_source {nt_source!r}; expected one of {NT_SOURCES}")
    if mode is FapMode.L and len(fi) == 0:
        return 0.0, 0.0
    if nt_source == "sketch":
        if sketches is None:
            raise ValueError("nt_source='sketch' needs the two group sketches")
        return estimate_non_target_mass(sketches[0]), estimate_non_target_mass(sketches[1])
    out = []
    for high, total, group in zip(fi.high_freq, fi.population_sizes, group_sizes):
        nt = high if mode is FapMode.L else total - high
        if nt_source == "group":
            nt = nt / total * group
        out.append(nt)
    return out[0], out[1]


def join_est(ma: PrivateSketch, mb: PrivateSketch, mode, fi: FrequentItemSet, group_sizes,
             nt_source: str = "sketch") -> float:
    """Median-of-rows product after removing the uniform non-target mass NT/m per cell."""
    mode = FapMode.parse(mode)
    for sk in (ma, mb):
        if sk.mode is not None and sk.mode is not mode:
            raise ValueError(f"sketch built in mode {sk.mode.value}, estimate requested for {mode.value}")
    if min(group_sizes) <= 0:
        raise ValueError("group sizes must be positive")
    _check_pair(ma, mb)
    nt_a, nt_b = non_target_counts(mode, fi, group_sizes, nt_source, (ma, mb))
    a = ma.counters - nt_a / ma.m
    b = mb.counters - nt_b / mb.m
    return float(np.median(np.einsum("jx,jx->j", a, b)))


@dataclass
class JoinEstimate:
    value: float
    components: tuple[float, float] | None = None
    scale_factors: tuple[float, float] | None = None
    frequent_items: FrequentItemSet | None = None

    def __float__(self):
        return float(self.value)


def ldp_join_sketch(a, b, params: SketchParams, rng=None, family: HashFamily | None = None) -> JoinEstimate:
    """One-phase pipeline: perturb every value, build both sketches, multiply."""
    rng = as_generator(rng)
    family = family if family is not None else derive_family(params)
    ma = prisk_build(perturb_batch(a, params, family, rng), params, family)
    mb = prisk_build(perturb_batch(b, params, family, rng), params, family)
    return JoinEstimate(median_join(ma, mb))


def split_users(n: int, rate: float, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded uniform split into a phase-1 sample and two phase-2 groups."""
    perm = as_generator(rng).permutation(n)
    n_s = int(round(rate * n))
    n_1 = (n - n_s) // 2
    sample, g1, g2 = perm[:n_s], perm[n_s:n_s + n_1], perm[n_s + n_1:]
    if min(sample.size, g1.size, g2.size) == 0:
        raise ValueError(f"population of {n} with rate {rate} leaves an empty sample or group")
    return sample, g1, g2


def ldp_join_sketch_plus(a, b, params: SketchParams, r: float = 0.1, theta: float = 0.001, *, domain,
                         rng=None, family: HashFamily | None = None, nt_source: str = "sketch") -> JoinEstimate:
    """Two-phase LDPJoinSketch+.

    Phase 1 sketches an ``r`` fraction of each population and finds the
    frequent items among ``domain``. Phase 2 splits the remaining users of
    each attribute into a low-frequency group and a high-frequency group,
    perturbs them with FAP, and adds the two rescaled partial estimates.
    """
    if not 0 < r < 1:
        raise ValueError(f"sample rate must be in (0, 1), got {r}")
    if not 0 < theta < 1:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    rng = as_generator(rng)
    family = family if family is not None else derive_family(params)
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    sa, a1, a2 = split_users(a.size, r, rng)
    sb, b1, b2 = split_users(b.size, r, rng)

    ma = prisk_build(perturb_batch(a[sa], params, family, rng), params, family)
    mb = prisk_build(perturb_batch(b[sb], params, family, rng), params, family)
    fi = find_frequent_items(ma, mb, domain, theta, (sa.size, sb.size), (a.size, b.size))

    def sk(values, mode):
        return prisk_build(fap_perturb_batch(values, mode, fi, params, family, rng), params, family, mode=mode)

    ml_a, ml_b = sk(a[a1], FapMode.L), sk(b[b1], FapMode.L)
    mh_a, mh_b = sk(a[a2], FapMode.H), sk(b[b2], FapMode.H)
    l_est = join_est(ml_a, ml_b, FapMode.L, fi, (a1.size, b1.size), nt_source)
    h_est = join_est(mh_a, mh_b, FapMode.H, fi, (a2.size, b2.size), nt_source)
    scale_l = a.size * b.size / (a1.size * b1.size)
    scale_h = a.size * b.size / (a2.size * b2.size)
    return JoinEstimate(scale_l * l_est + scale_h * h_est, (l_est, h_est), (scale_l, scale_h), fi)


# -- snapshot files ---------------------------------------------------------

def save_snapshot(sk: PrivateSketch, path) -> None:
    """Header ``<4sIIdQBQ`` (magic, k, m, eps, seed, debiased, n_reports) + float64 counters."""
    p = sk.params
    header = _HEADER.pack(SNAPSHOT_MAGIC, p.k, p.m, p.epsilon, p.master_seed, int(sk.debiased), sk.n_reports)
    Path(path).write_bytes(header + np.ascontiguousarray(sk.counters, dtype="<f8").tobytes())


def load_snapshot(path) -> PrivateSketch:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, k, m, eps, seed, debiased, n_reports = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a sketch snapshot")
    body = raw[_HEADER.size:]
    if len(body) != 8 * k * m:
        raise ValueError(f"{path}: expected {k}x{m} counters, found {len(body) // 8} values")
    params = SketchParams(k, m, eps, seed)
    counters = np.frombuffer(body, dtype="<f8").reshape(k, m).astype(np.float64)
    sk = PrivateSketch(params)
    sk.n_reports = n_reports
    if debiased:
        # H_m @ H_m = m * I recovers the integer tally
        sk.tallies = np.rint(hadamard_transform(counters, axis=1) / (m * params.scale)).astype(np.int64)
        sk._restored = counters
        sk.debiased = True
    else:
        sk.tallies = np.rint(counters / params.scale).astype(np.int64)
    return sk


def theorem_bound(f1_a: float, f1_b: float, params: SketchParams) -> float:
    """Error radius (4/sqrt(m)) (F1(A) + (k c^2 - 1)/2) (F1(B) + (k c^2 - 1)/2)."""
    pad = (params.k * params.c_eps ** 2 - 1) / 2
    return 4 / math.sqrt(params.m) * (f1_a + pad) * (f1_b + pad)


def row_variance_bound(f1_a: float, f1_b: float, params: SketchParams) -> float:
    """Upper bound on the variance of one row estimator M_A[j] . M_B[j]."""
    pad = (params.k * params.c_eps ** 2 - 1) / 2
    return 2 / params.m * (f1_a + pad) ** 2 * (f1_b + pad) ** 2

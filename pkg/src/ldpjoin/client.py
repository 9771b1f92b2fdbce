"""Client-side encoding and randomized response.

Everything here runs on a data owner's device: the plain LDPJoinSketch
perturbation and the frequency-aware variant used in the second phase of
LDPJoinSketch+. Batch functions return structured arrays whose dtype is also
the little-endian wire record (``y: i1, j: u2, l: u4``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ldpjoin.hashing import HashFamily, eval_h, eval_xi, hadamard_entries, hadamard_entry
from ldpjoin.params import SketchParams

__all__ = [
    "SketchParams",
    "FapMode",
    "PerturbedReport",
    "REPORT_DTYPE",
    "REPORT2_DTYPE",
    "client_perturb",
    "fap_perturb",
    "perturb_batch",
    "fap_perturb_batch",
    "output_law",
    "fap_output_law",
    "max_privacy_ratio",
    "encode_reports",
    "decode_reports",
    "report_bits",
]

REPORT_DTYPE = np.dtype([("y", "<i1"), ("j", "<u2"), ("l", "<u4")])
REPORT2_DTYPE = np.dtype([("y", "<i1"), ("j", "<u2"), ("l", "<u4"), ("l2", "<u4")])


class FapMode(enum.Enum):
    """Which values a phase-2 sketch targets: high (H) or low (L) frequency."""

    H = "H"
    L = "L"

    @classmethod
    def parse(cls, mode) -> "FapMode":
        return mode if isinstance(mode, cls) else cls(str(mode).upper())


@dataclass(frozen=True)
class PerturbedReport:
    y: int
    j: int
    l: int

    def __post_init__(self):
        if self.y not in (-1, 1):
            raise ValueError(f"y must be -1 or +1, got {self.y}")


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_family(params: SketchParams, family: HashFamily):
    if family.k != params.k or family.m != params.m:
        raise ValueError(f"family shape ({family.k}, {family.m}) does not match params ({params.k}, {params.m})")


def _frequent_ids(fi) -> np.ndarray:
    items = getattr(fi, "items", fi)
    if items is None:
        return np.empty(0, dtype=np.uint64)
    return np.unique(np.asarray(list(items) if isinstance(items, (set, frozenset)) else items, dtype=np.uint64))


def _is_non_target(in_fi, mode: FapMode):
    # non-target when (mode == H) == (d not in FI)
    return (mode is FapMode.H) == np.logical_not(in_fi)


# -- single client --------------------------------------------------------------

def client_perturb(d: int, params: SketchParams, family: HashFamily, rng) -> PerturbedReport:
    """Encode d at h_j(d) with sign xi_j(d), sample one Hadamard coefficient, flip it.

    Draws exactly three values from ``rng``: j, l, then the flip coin.
    """
    _check_family(params, family)
    rng = as_generator(rng)
    j = int(rng.integers(params.k))
    l = int(rng.integers(params.m))
    flip = rng.random() < params.flip_probability
    pair = family.rows[j]
    w = hadamard_entry(eval_h(pair, d), l, params.m) * eval_xi(pair, d)
    return PerturbedReport(-w if flip else w, j, l)


def fap_perturb(d: int, mode, fi, params: SketchParams, family: HashFamily, rng) -> PerturbedReport:
    """Frequency-aware perturbation.

    Targets go through :func:`client_perturb`. Non-targets encode a one-hot
    vector at a uniformly random column r, independent of d, and draw four
    values: j, l, r, then the flip coin.
    """
    mode = FapMode.parse(mode)
    rng = as_generator(rng)
    in_fi = bool(np.isin(np.uint64(d), _frequent_ids(fi)))
    if not _is_non_target(in_fi, mode):
        return client_perturb(d, params, family, rng)
    _check_family(params, family)
    j = int(rng.integers(params.k))
    l = int(rng.integers(params.m))
    r = int(rng.integers(params.m))
    flip = rng.random() < params.flip_probability
    w = hadamard_entry(r, l, params.m)
    return PerturbedReport(-w if flip else w, j, l)


# -- vectorized population simulation ----------------------------------------

def _pack(y, j, l) -> np.ndarray:
    out = np.empty(len(y), dtype=REPORT_DTYPE)
    out["y"], out["j"], out["l"] = y, j, l
    return out


def perturb_batch(values, params: SketchParams, family: HashFamily, rng) -> np.ndarray:
    """Vectorized :func:`client_perturb` for a whole population.

    Draws the arrays j, l and the flip coins in that order; the law of each
    record equals the single-client law.
    """
    _check_family(params, family)
    rng = as_generator(rng)
    values = np.asarray(values, dtype=np.uint64)
    n = values.size
    j = rng.integers(0, params.k, n)
    l = rng.integers(0, params.m, n)
    flip = rng.random(n) < params.flip_probability
    w = hadamard_entries(family.buckets(values, j), l) * family.signs(values, j)
    return _pack(np.where(flip, -w, w), j, l)


def fap_perturb_batch(values, mode, fi, params: SketchParams, family: HashFamily, rng) -> np.ndarray:
    """Vectorized :func:`fap_perturb`; draws j, l, r and flip arrays for everyone."""
    _check_family(params, family)
    mode = FapMode.parse(mode)
    rng = as_generator(rng)
    values = np.asarray(values, dtype=np.uint64)
    n = values.size
    j = rng.integers(0, params.k, n)
    l = rng.integers(0, params.m, n)
    r = rng.integers(0, params.m, n)
    flip = rng.random(n) < params.flip_probability
    non_target = _is_non_target(np.isin(values, _frequent_ids(fi)), mode)
    w = hadamard_entries(family.buckets(values, j), l) * family.signs(values, j)
    w = np.where(non_target, hadamard_entries(r, l), w)
    return _pack(np.where(flip, -w, w), j, l)


def encode_reports(reports) -> bytes:
    """Little-endian wire encoding of a report array (7 or 11 bytes per record)."""
    reports = np.asarray(reports)
    if reports.dtype not in (REPORT_DTYPE, REPORT2_DTYPE):
        raise TypeError(f"unexpected report dtype {reports.dtype}")
    return reports.tobytes()


def decode_reports(payload: bytes, two_dim: bool = False) -> np.ndarray:
    dtype = REPORT2_DTYPE if two_dim else REPORT_DTYPE
    if len(payload) % dtype.itemsize:
        raise ValueError(f"payload length {len(payload)} is not a multiple of {dtype.itemsize}")
    return np.frombuffer(payload, dtype=dtype).copy()


def report_bits(two_dim: bool = False) -> int:
    """Bits sent by one client; independent of the value domain."""
    return 8 * (REPORT2_DTYPE if two_dim else REPORT_DTYPE).itemsize


# -- exact output laws -------------------------------------------------------
#
# With ``normalize=False`` the laws are returned as weights e^eps (keep) and 1
# (flip) over a normalizer that does not depend on the input, so privacy
# ratios come out exactly as e^eps instead of within a few ulps.

def _rr_weights(params: SketchParams) -> tuple[float, float]:
    if params.flip_probability == 0:
        return 1.0, 0.0
    return math.exp(params.epsilon), 1.0


def _normalizer(params: SketchParams, extra: int = 1) -> float:
    keep, flip = _rr_weights(params)
    return (keep + flip) * params.k * params.m * extra


def output_law(d: int, params: SketchParams, family: HashFamily, normalize: bool = True) -> np.ndarray:
    """Pr[(y, j, l) | d] as an array indexed [y == +1, j, l]."""
    k, m = params.k, params.m
    keep, flip = _rr_weights(params)
    law = np.empty((2, k, m))
    for j, pair in enumerate(family.rows):
        hd, xd = eval_h(pair, d), eval_xi(pair, d)
        w = np.array([hadamard_entry(hd, l, m) * xd for l in range(m)])
        law[1, j] = np.where(w == 1, keep, flip)
        law[0, j] = np.where(w == -1, keep, flip)
    return law / _normalizer(params) if normalize else law


def fap_output_law(d: int, mode, fi, params: SketchParams, family: HashFamily,
                   normalize: bool = True) -> np.ndarray:
    """Law of :func:`fap_perturb`; unnormalized weights share the normalizer of both branches."""
    mode = FapMode.parse(mode)
    m = params.m
    in_fi = bool(np.isin(np.uint64(d), _frequent_ids(fi)))
    if not _is_non_target(in_fi, mode):
        law = output_law(d, params, family, normalize=False) * m
    else:
        keep, flip = _rr_weights(params)
        law = np.zeros((2, params.k, m))
        for r in range(m):
            w = np.array([hadamard_entry(r, l, m) for l in range(m)])
            law[1] += np.where(w == 1, keep, flip)
            law[0] += np.where(w == -1, keep, flip)
    return law / _normalizer(params, m) if normalize else law


def max_privacy_ratio(laws) -> float:
    """Largest Pr[out | x] / Pr[out | x'] over all input pairs and outputs."""
    stack = np.stack([np.asarray(law, dtype=np.float64).ravel() for law in laws])
    hi, lo = stack.max(axis=0), stack.min(axis=0)
    if np.any((lo == 0) & (hi > 0)):
        return float("inf")
    # per output, the worst pair is (largest, smallest); division is monotone so this is exact
    live = hi > 0
    return float((hi[live] / lo[live]).max()) if live.any() else 0.0

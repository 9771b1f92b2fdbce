"""Hash families over the Mersenne prime field and implicit Hadamard entries.

Row ``j`` of a family holds a pairwise independent bucket hash
``h_j(d) = ((a*d + b) mod P) mod m`` and a 4-wise independent sign hash
``xi_j(d)`` given by a degree-3 polynomial mod ``P = 2**61 - 1``; bit 0 of
the polynomial value selects the sign (0 -> +1, 1 -> -1).

Seed derivation (stable; changing it changes every sketch):

    key     = splitmix64(splitmix64(master_seed) ^ j)
    seed_h  = splitmix64(key ^ 0x68)        # ord('h')
    seed_xi = splitmix64(key ^ 0x78)        # ord('x')

Coefficient ``i`` of a row is ``(splitmix64(seed + i) >> 3) mod P``; the
leading bucket coefficient is forced into ``[1, P)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ldpjoin.params import MASK64, SketchParams, is_power_of_two

MERSENNE_61 = (1 << 61) - 1

TAG_H = 0x68
TAG_XI = 0x78

_P = np.uint64(MERSENNE_61)
_M31 = np.uint64((1 << 31) - 1)
_M30 = np.uint64((1 << 30) - 1)
_S61 = np.uint64(61)
_S31 = np.uint64(31)
_S30 = np.uint64(30)
_ONE = np.uint64(1)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def row_seeds(master_seed: int, j: int) -> tuple[int, int]:
    key = splitmix64(splitmix64(master_seed & MASK64) ^ j)
    return splitmix64(key ^ TAG_H), splitmix64(key ^ TAG_XI)


def _coefficients(seed: int, count: int) -> list[int]:
    return [(splitmix64((seed + i) & MASK64) >> 3) % MERSENNE_61 for i in range(count)]


# -- numpy arithmetic mod 2**61 - 1 on uint64 arrays ------------------------

def _fold(x):
    x = (x & _P) + (x >> _S61)
    return np.where(x >= _P, x - _P, x)


def _mulmod(a, b):
    # a, b < P < 2**61. Split into 30/31-bit halves so every partial
    # product fits in 64 bits, then fold with 2**61 == 1 (mod P).
    a_hi, a_lo = a >> _S31, a & _M31
    b_hi, b_lo = b >> _S31, b & _M31
    hh = a_hi * b_hi
    mid = a_hi * b_lo + a_lo * b_hi
    ll = a_lo * b_lo
    # a*b = hh*2**62 + mid*2**31 + ll, and 2**62 == 2 (mod P)
    s = (hh << _ONE) + (mid >> _S30) + ((mid & _M30) << _S31) + ll
    return _fold(s)


def _as_field(values) -> np.ndarray:
    x = np.asarray(values)
    if x.dtype.kind == "i":
        if x.size and x.min() < 0:
            raise ValueError("value ids must be non-negative")
        x = x.astype(np.uint64)
    elif x.dtype.kind != "u":
        x = x.astype(np.uint64)
    else:
        x = x.astype(np.uint64, copy=False)
    return _fold(x)


def _poly(coef, x):
    """Horner evaluation; ``coef[..., 0]`` is the leading coefficient."""
    acc = np.broadcast_to(coef[..., 0], x.shape).copy()
    for i in range(1, coef.shape[-1]):
        acc = _fold(_mulmod(acc, x) + coef[..., i])
    return acc


@dataclass(frozen=True)
class HashPair:
    """The (h_j, xi_j) pair of one sketch row."""

    row_index: int
    seed_h: int
    seed_xi: int
    m: int
    xi_disabled: bool = False
    h_coef: tuple = field(init=False, repr=False)
    xi_coef: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 2 or not is_power_of_two(self.m):
            raise ValueError(f"m must be a power of two >= 2, got {self.m}")
        a, b = _coefficients(self.seed_h, 2)
        a = 1 + a % (MERSENNE_61 - 1)
        object.__setattr__(self, "h_coef", (a, b))
        object.__setattr__(self, "xi_coef", tuple(_coefficients(self.seed_xi, 4)))


def _check_id(d: int) -> int:
    d = int(d)
    if d < 0 or d > MASK64:
        raise ValueError(f"value id must fit in 64 unsigned bits, got {d}")
    return d % MERSENNE_61


def eval_h(pair: HashPair, d: int) -> int:
    a, b = pair.h_coef
    return ((a * _check_id(d) + b) % MERSENNE_61) % pair.m


def eval_xi(pair: HashPair, d: int) -> int:
    x = _check_id(d)
    if pair.xi_disabled:
        return 1
    acc = 0
    for c in pair.xi_coef:
        acc = (acc * x + c) % MERSENNE_61
    return -1 if acc & 1 else 1


class HashFamily:
    """k hash pairs derived from ``params.master_seed``.

    Two families built from equal ``(k, m, master_seed)`` are equal, which is
    what lets independently built sketches be multiplied together.

    ``xi_disabled=True`` pins every sign to +1, which turns the private
    pipeline into a Hadamard count-mean sketch for comparison runs.
    """

    def __init__(self, params: SketchParams, xi_disabled: bool = False):
        self.params = params
        self.xi_disabled = bool(xi_disabled)
        self.k = params.k
        self.m = params.m
        self.rows = tuple(
            HashPair(j, *row_seeds(params.master_seed, j), params.m, self.xi_disabled) for j in range(params.k)
        )
        self._h = np.array([p.h_coef for p in self.rows], dtype=np.uint64)
        self._xi = np.array([p.xi_coef for p in self.rows], dtype=np.uint64)
        self._m = np.uint64(self.m)

    @property
    def key(self) -> tuple:
        return (self.k, self.m, self.params.master_seed, self.xi_disabled)

    def __eq__(self, other):
        return isinstance(other, HashFamily) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        extra = ", xi_disabled=True" if self.xi_disabled else ""
        return f"HashFamily(k={self.k}, m={self.m}, master_seed={self.params.master_seed}{extra})"

    def _coef(self, table, rows, x):
        if rows is None:
            return table[:, None, :], np.broadcast_to(x, (self.k,) + x.shape)
        rows = np.asarray(rows, dtype=np.intp)
        return table[rows], x

    def buckets(self, values, rows=None) -> np.ndarray:
        """h_j(d). With ``rows=None`` returns a (k, n) table for every row,
        otherwise ``rows[i]`` selects the row applied to ``values[i]``."""
        x = _as_field(values)
        coef, x = self._coef(self._h, rows, x)
        return (_poly(coef, x) % self._m).astype(np.int64)

    def signs(self, values, rows=None) -> np.ndarray:
        """xi_j(d) in {-1, +1}, same broadcasting as :meth:`buckets`."""
        x = _as_field(values)
        if self.xi_disabled:
            shape = x.shape if rows is not None else (self.k,) + x.shape
            return np.ones(shape, dtype=np.int64)
        coef, x = self._coef(self._xi, rows, x)
        bit = (_poly(coef, x) & _ONE).astype(np.int64)
        return 1 - 2 * bit


def derive_family(params: SketchParams, xi_disabled: bool = False) -> HashFamily:
    return HashFamily(params, xi_disabled)


# -- Hadamard -----------------------------------------------------------------

def hadamard_entry(a: int, b: int, m: int) -> int:
    """H_m[a, b] = (-1)**popcount(a & b) for the Sylvester ordering."""
    if m < 1 or not is_power_of_two(m):
        raise ValueError(f"Hadamard order must be a power of two, got {m}")
    if not (0 <= a < m and 0 <= b < m):
        raise IndexError(f"index ({a}, {b}) outside H_{m}")
    return -1 if bin(a & b).count("1") & 1 else 1


def hadamard_entries(a, b) -> np.ndarray:
    """Elementwise H[a, b] for integer arrays (order implied by the caller)."""
    parity = np.bitwise_count(np.bitwise_and(a, b)) & 1
    return 1 - 2 * parity.astype(np.int64)


def hadamard_transform(x, axis: int = -1) -> np.ndarray:
    """Multiply by H_m along ``axis`` (H_m is symmetric, so also by H_m^T).

    Butterfly form, O(m log m) per vector; integer input stays exact.
    """
    x = np.moveaxis(np.array(x), axis, -1)
    m = x.shape[-1]
    if m < 1 or not is_power_of_two(m):
        raise ValueError(f"transform length must be a power of two, got {m}")
    lead = x.shape[:-1]
    h = 1
    while h < m:
        y = x.reshape(lead + (m // (2 * h), 2, h))
        lo, hi = y[..., 0, :], y[..., 1, :]
        x = np.stack((lo + hi, lo - hi), axis=-2).reshape(lead + (m,))
        h *= 2
    return np.moveaxis(x, -1, axis)

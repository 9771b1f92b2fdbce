"""Synthetic join-attribute generators and plain-text loaders."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def zipf_pmf(domain: int, alpha: float) -> np.ndarray:
    """Pr[rank x] proportional to x**-alpha for x = 1..domain."""
    if domain < 1:
        raise ValueError(f"domain must be >= 1, got {domain}")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    # log-space keeps large alpha from underflowing to an all-zero pmf
    logw = -alpha * np.log(np.arange(1, domain + 1, dtype=np.float64))
    w = np.exp(logw - logw.max())
    return w / w.sum()


def gen_zipf(n: int, domain: int, alpha: float, seed: int = 0, id_seed: int | None = None) -> np.ndarray:
    """n i.i.d. Zipf draws mapped to ids in [0, domain).

    Ranks are sampled by inverse CDF over the normalized pmf. Rank r is
    reported as ``perm[r]`` for a permutation seeded by ``id_seed``
    (default: ``seed``); two attributes meant to join share ``id_seed``.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    cdf = np.cumsum(zipf_pmf(domain, alpha))
    u = np.random.default_rng(seed).random(n)
    ranks = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), domain - 1)
    perm = np.random.default_rng(seed if id_seed is None else id_seed).permutation(domain)
    return perm[ranks].astype(np.uint64)


def gen_gaussian(n: int, domain: int, mu: float, sigma: float, seed: int = 0) -> np.ndarray:
    """round(N(mu, sigma)) clamped to [0, domain)."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if domain < 1:
        raise ValueError(f"domain must be >= 1, got {domain}")
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x = np.rint(np.random.default_rng(seed).normal(mu, sigma, n))
    return np.clip(x, 0, domain - 1).astype(np.uint64)


class DatasetError(ValueError):
    pass


def load_dataset(path, pairs: bool = False):
    """Newline-delimited unsigned integers, or ``a,b`` tuples when ``pairs``.

    Blank lines are skipped. Malformed lines raise :class:`DatasetError`
    naming every offending line number.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    rows, bad = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tokens = [t.strip() for t in line.split(",")]
        try:
            if len(tokens) != (2 if pairs else 1):
                raise ValueError
            vals = [int(t) for t in tokens]
            if min(vals) < 0:
                raise ValueError
        except ValueError:
            bad.append(lineno)
            continue
        rows.append(tuple(vals) if pairs else vals[0])
    if bad:
        shown = ", ".join(map(str, bad[:20]))
        raise DatasetError(f"{path}: malformed line(s) {shown}{' ...' if len(bad) > 20 else ''}")
    if pairs:
        return np.array(rows, dtype=np.uint64).reshape(-1, 2)
    return np.array(rows, dtype=np.uint64)

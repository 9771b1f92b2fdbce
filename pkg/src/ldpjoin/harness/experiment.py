"""Experiment configuration, execution and CSV persistence.

Seeding: the datasets depend on ``seed`` only; repetition ``r`` draws its
client randomness from ``SeedSequence([seed, r])`` and its hash family from
``SeedSequence([seed, r, 1])``, so every rep sees a fresh family as the
unbiasedness results assume.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ldpjoin.baselines import KrrParams, krr_calibrate, krr_join_estimate, krr_perturb_batch
from ldpjoin.client import perturb_batch, report_bits
from ldpjoin.fagms import fagms_join, fagms_sketch, true_join_size
from ldpjoin.hashing import derive_family
from ldpjoin.multiway import chain_join_est, perturb_batch_2d, prisk_build_2d, true_chain_join
from ldpjoin.params import SketchParams
from ldpjoin.server import NT_SOURCES, estimate_frequencies, ldp_join_sketch_plus, median_join, prisk_build

from ldpjoin.harness.datasets import gen_gaussian, gen_zipf, load_dataset
from ldpjoin.harness.metrics import absolute_error, mean_squared_error, relative_error

METHODS = ("fagms", "ldpjs", "ldpjs_plus", "krr", "multiway")
DATASETS = ("zipf", "gaussian", "file")

CSV_COLUMNS = (
    "method", "dataset", "alpha", "mu", "sigma", "n", "domain", "k", "m", "epsilon", "rate", "theta",
    "reps", "seed", "nt_source", "xi_disabled", "status", "true_join", "estimates", "ae", "re", "mse",
    "bits_per_client",
)
TIMING_COLUMNS = ("build_seconds", "query_seconds")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "ldpjs"
    dataset: str = "zipf"
    alpha: float = 1.1
    mu: float | None = None
    sigma: float | None = None
    n: int = 100_000
    domain: int = 10_000
    k: int = 18
    m: int = 1024
    epsilon: float = 4.0
    rate: float = 0.1
    theta: float = 0.001
    reps: int = 10
    seed: int = 0
    out: str | None = None
    paths: tuple = ()
    nt_source: str = "sketch"
    xi_disabled: bool = False
    timings: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.dataset not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if self.n < 1 or self.reps < 1 or self.domain < 2:
            raise ValueError("n and reps must be >= 1 and domain >= 2")
        if self.nt_source not in NT_SOURCES:
            raise ValueError(f"nt_source must be one of {NT_SOURCES}")
        if self.dataset == "file":
            need = 3 if self.method == "multiway" else 2
            if len(self.paths) != need:
                raise ValueError(f"file dataset for {self.method} needs {need} paths, got {len(self.paths)}")
        if self.method != "fagms" and not self.epsilon > 0:
            raise ValueError("private methods need epsilon > 0")
        if not 0 < self.rate < 1 or not 0 < self.theta < 1:
            raise ValueError("rate and theta must lie in (0, 1)")
        # validates k, m, epsilon ranges
        SketchParams(self.k, self.m, self.epsilon)
        object.__setattr__(self, "paths", tuple(str(p) for p in self.paths))

    @property
    def gaussian_mu(self) -> float:
        return self.domain / 2 if self.mu is None else self.mu

    @property
    def gaussian_sigma(self) -> float:
        return self.domain / 20 if self.sigma is None else self.sigma

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **changes})


@dataclass
class MetricsRecord:
    config: ExperimentConfig
    true_join: int
    estimates: list = field(default_factory=list)
    ae: float = math.nan
    re: float = math.nan
    mse: float | None = None
    bits_per_client: int = 0
    build_seconds: float = 0.0
    query_seconds: float = 0.0
    status: str = "ok"

    def csv_row(self, timings: bool = False) -> dict:
        c = self.config
        row = {
            "method": c.method, "dataset": c.dataset if c.dataset != "file" else "file:" + "|".join(c.paths),
            "alpha": c.alpha, "mu": c.gaussian_mu, "sigma": c.gaussian_sigma, "n": c.n, "domain": c.domain,
            "k": c.k, "m": c.m, "epsilon": c.epsilon, "rate": c.rate, "theta": c.theta, "reps": c.reps,
            "seed": c.seed, "nt_source": c.nt_source, "xi_disabled": int(c.xi_disabled), "status": self.status,
            "true_join": self.true_join, "estimates": ";".join(repr(float(e)) for e in self.estimates),
            "ae": repr(self.ae), "re": repr(self.re), "mse": "" if self.mse is None else repr(self.mse),
            "bits_per_client": self.bits_per_client,
        }
        if timings:
            row["build_seconds"] = f"{self.build_seconds:.6f}"
            row["query_seconds"] = f"{self.query_seconds:.6f}"
        return row


def derive_seed(*path: int) -> int:
    return int(np.random.SeedSequence(list(path)).generate_state(1, np.uint64)[0])


def load_tables(cfg: ExperimentConfig) -> tuple:
    """(A, B) for two-way methods, (T1, T2, T3) for the chain join."""
    if cfg.dataset == "file":
        if cfg.method == "multiway":
            return load_dataset(cfg.paths[0]), load_dataset(cfg.paths[1], pairs=True), load_dataset(cfg.paths[2])
        return tuple(load_dataset(p) for p in cfg.paths)
    s = [derive_seed(cfg.seed, 0, i) for i in range(6)]
    if cfg.dataset == "zipf":
        def draw(i, ids):
            return gen_zipf(cfg.n, cfg.domain, cfg.alpha, seed=s[i], id_seed=ids)
    else:
        def draw(i, ids):
            return gen_gaussian(cfg.n, cfg.domain, cfg.gaussian_mu, cfg.gaussian_sigma, seed=s[i])
    if cfg.method == "multiway":
        middle = np.stack([draw(2, s[4]), draw(3, s[5])], axis=1)
        return draw(0, s[4]), middle, draw(1, s[5])
    return draw(0, s[4]), draw(1, s[4])


def bits_per_client(cfg: ExperimentConfig) -> int:
    if cfg.method in ("ldpjs", "ldpjs_plus"):
        return report_bits()
    if cfg.method == "multiway":
        return report_bits(two_dim=True)
    # k-RR and the non-private sketch both ship a raw value id
    return KrrParams(max(cfg.epsilon, 0.0), cfg.domain).report_bits


def _check_domain(cfg: ExperimentConfig, tables):
    for t in tables:
        if t.size and int(t.max()) >= cfg.domain:
            raise ValueError(f"value id {int(t.max())} outside the declared domain [0, {cfg.domain})")


def _run_once(cfg: ExperimentConfig, tables, rep: int, domain_ids: np.ndarray, true_freq):
    """Returns (estimate, frequency MSE or None, build seconds, query seconds)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep]))
    params = SketchParams(cfg.k, cfg.m, cfg.epsilon, derive_seed(cfg.seed, rep, 1))
    family = derive_family(params, cfg.xi_disabled)
    t0 = time.perf_counter()
    mse = None
    if cfg.method == "fagms":
        a, b = tables
        sa, sb = fagms_sketch(a, family), fagms_sketch(b, family)
        t1 = time.perf_counter()
        est = fagms_join(sa, sb)
        rows = np.arange(family.k)[:, None]
        freq = np.median(sa.counters[rows, family.buckets(domain_ids)] * family.signs(domain_ids), axis=0)
        mse = mean_squared_error(true_freq, freq)
    elif cfg.method == "ldpjs":
        a, b = tables
        ma = prisk_build(perturb_batch(a, params, family, rng), params, family)
        mb = prisk_build(perturb_batch(b, params, family, rng), params, family)
        t1 = time.perf_counter()
        est = median_join(ma, mb)
        mse = mean_squared_error(true_freq, estimate_frequencies(ma, domain_ids))
    elif cfg.method == "ldpjs_plus":
        a, b = tables
        res = ldp_join_sketch_plus(a, b, params, cfg.rate, cfg.theta, domain=domain_ids, rng=rng,
                                   family=family, nt_source=cfg.nt_source)
        t1 = time.perf_counter()
        est = res.value
    elif cfg.method == "krr":
        a, b = tables
        kp = KrrParams(cfg.epsilon, cfg.domain)
        ra, rb = krr_perturb_batch(a, kp, rng), krr_perturb_batch(b, kp, rng)
        t1 = time.perf_counter()
        est = krr_join_estimate(ra, rb, kp)
        mse = mean_squared_error(true_freq, krr_calibrate(ra, kp))
    else:
        t1_, t2_, t3_ = tables
        params_b = params.with_seed(derive_seed(cfg.seed, rep, 2))
        fam_b = derive_family(params_b, cfg.xi_disabled)
        m1 = prisk_build(perturb_batch(t1_, params, family, rng), params, family)
        m2 = prisk_build_2d(perturb_batch_2d(t2_, params, (family, fam_b), rng), params, (family, fam_b))
        m3 = prisk_build(perturb_batch(t3_, params_b, fam_b, rng), params_b, fam_b)
        t1 = time.perf_counter()
        est = chain_join_est(m1, m2, m3)
    t2 = time.perf_counter()
    return float(est), mse, t1 - t0, t2 - t1


def true_join(cfg: ExperimentConfig, tables) -> int:
    if cfg.method == "multiway":
        return true_chain_join(*tables)
    return true_join_size(*tables)


def run_experiment(cfg: ExperimentConfig, tables=None) -> MetricsRecord:
    """Runs ``cfg.reps`` repetitions and appends one CSV row to ``cfg.out`` if set.

    If a repetition raises, the completed repetitions are still written with
    status ``partial`` before the error propagates.
    """
    tables = load_tables(cfg) if tables is None else tables
    if cfg.method in ("krr", "ldpjs_plus", "fagms", "ldpjs"):
        _check_domain(cfg, tables)
    truth = true_join(cfg, tables)
    domain_ids = np.arange(cfg.domain, dtype=np.uint64)
    true_freq = None
    if cfg.method != "multiway":
        true_freq = np.bincount(np.asarray(tables[0], dtype=np.int64), minlength=cfg.domain)[:cfg.domain]
    rec = MetricsRecord(cfg, truth, bits_per_client=bits_per_client(cfg))
    mses = []
    try:
        for rep in range(cfg.reps):
            est, mse, tb, tq = _run_once(cfg, tables, rep, domain_ids, true_freq)
            rec.estimates.append(est)
            rec.build_seconds += tb
            rec.query_seconds += tq
            if mse is not None:
                mses.append(mse)
    except BaseException:
        rec.status = "partial"
        raise
    finally:
        _finalize(rec, mses)
        if cfg.out is not None and rec.estimates:
            append_csv(rec, cfg.out)
    return rec


def _finalize(rec: MetricsRecord, mses):
    if rec.estimates:
        rec.ae = absolute_error(rec.true_join, rec.estimates)
        rec.re = relative_error(rec.true_join, rec.estimates) if rec.true_join else math.nan
    rec.mse = float(np.mean(mses)) if mses else None


def append_csv(rec: MetricsRecord, path) -> None:
    timings = rec.config.timings
    columns = CSV_COLUMNS + (TIMING_COLUMNS if timings else ())
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    if not new:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh), None)
        if header is not None and tuple(header) != columns:
            raise ValueError(f"{path} has a different column layout; write to a fresh file")
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerow(rec.csv_row(timings))


def config_fields() -> tuple:
    return tuple(f.name for f in fields(ExperimentConfig))

"""Command line: ``ldpjoin {generate,run,sweep,verify-ldp,bench}``."""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ldpjoin.client import fap_output_law, max_privacy_ratio, output_law, perturb_batch
from ldpjoin.hashing import derive_family
from ldpjoin.multiway import output_law_2d
from ldpjoin.params import SketchParams
from ldpjoin.server import NT_SOURCES, median_join, prisk_build

from ldpjoin.harness.experiment import DATASETS, METHODS, ExperimentConfig, load_tables, run_experiment


def _add_config_flags(p: argparse.ArgumentParser):
    d = ExperimentConfig()
    p.add_argument("--method", choices=METHODS, default=d.method)
    p.add_argument("--dataset", choices=DATASETS, default=d.dataset)
    p.add_argument("--paths", nargs="+", default=[], help="input files for --dataset file (A B, or T1 T2 T3)")
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--mu", type=float, default=None, help="Gaussian mean (default domain/2)")
    p.add_argument("--sigma", type=float, default=None, help="Gaussian std (default domain/20)")
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--domain", type=int, default=d.domain)
    p.add_argument("--k", type=int, default=d.k)
    p.add_argument("--m", type=int, default=d.m)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--rate", type=float, default=d.rate)
    p.add_argument("--theta", type=float, default=d.theta)
    p.add_argument("--reps", type=int, default=d.reps)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", default=None, help="CSV file to append to")
    p.add_argument("--nt-source", choices=NT_SOURCES, default=d.nt_source)
    p.add_argument("--xi-disabled", action="store_true")
    p.add_argument("--timings", action="store_true", help="add wall-clock columns (breaks byte determinism)")


def _config(args) -> ExperimentConfig:
    return ExperimentConfig(
        method=args.method, dataset=args.dataset, alpha=args.alpha, mu=args.mu, sigma=args.sigma, n=args.n,
        domain=args.domain, k=args.k, m=args.m, epsilon=args.epsilon, rate=args.rate, theta=args.theta,
        reps=args.reps, seed=args.seed, out=args.out, paths=tuple(args.paths), nt_source=args.nt_source,
        xi_disabled=args.xi_disabled, timings=args.timings,
    )


def _report(rec) -> str:
    mse = "" if rec.mse is None else f" mse={rec.mse:.6g}"
    return (f"{rec.config.method} eps={rec.config.epsilon} k={rec.config.k} m={rec.config.m}: "
            f"true={rec.true_join} AE={rec.ae:.6g} RE={rec.re:.6g}{mse} bits={rec.bits_per_client}")


def cmd_generate(args) -> int:
    cfg = _config(args)
    if cfg.dataset == "file":
        raise SystemExit("generate needs a synthetic --dataset")
    prefix = Path(args.out or "data")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    names = ("t1", "t2", "t3") if cfg.method == "multiway" else ("a", "b")
    for name, table in zip(names, load_tables(cfg)):
        path = prefix.with_name(f"{prefix.name}_{name}.txt")
        if table.ndim == 2:
            lines = (f"{x},{y}" for x, y in table.tolist())
        else:
            lines = map(str, table.tolist())
        path.write_text("\n".join(lines) + "\n")
        print(path)
    return 0


def cmd_run(args) -> int:
    print(_report(run_experiment(_config(args))))
    return 0


def _parse_value(param: str, text: str):
    kind = type(getattr(ExperimentConfig(), param))
    if param in ("mu", "sigma"):
        kind = float
    return kind(text)


def cmd_sweep(args) -> int:
    base = _config(args)
    if args.param not in asdict(base) or args.param in ("out", "paths", "method", "dataset"):
        raise SystemExit(f"cannot sweep over {args.param!r}")
    for text in args.values.split(","):
        cfg = base.replace(**{args.param: _parse_value(args.param, text.strip())})
        print(_report(run_experiment(cfg)))
    return 0


def cmd_verify_ldp(args) -> int:
    """Exact enumeration of output laws over value ids ``range(--domain)``."""
    params = SketchParams(args.k, args.m, args.epsilon, args.seed)
    family = derive_family(params)
    bound = math.exp(params.epsilon)
    ids = range(args.domain)
    fi = list(range(0, args.domain, 2))
    checks = {
        "client": [output_law(d, params, family, normalize=False) for d in ids],
        "fap": [fap_output_law(d, mode, fi, params, family, normalize=False) for d in ids for mode in "HL"],
    }
    if args.two_dim:
        fam_b = derive_family(params.with_seed(params.master_seed + 1))
        checks["client_2d"] = [output_law_2d(a, b, params, (family, fam_b), normalize=False)
                               for a in ids for b in ids]
    ok = True
    for name, laws in checks.items():
        ratio = max_privacy_ratio(laws)
        good = ratio <= bound
        ok &= good
        print(f"{name}: max ratio {ratio!r} vs e^eps {bound!r} -> {'ok' if good else 'VIOLATION'}")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    params = SketchParams(args.k, args.m, args.epsilon, args.seed)
    family = derive_family(params)
    rng = np.random.default_rng(args.seed)
    values = rng.integers(0, args.domain, args.n).astype(np.uint64)
    t0 = time.perf_counter()
    reports = perturb_batch(values, params, family, rng)
    t1 = time.perf_counter()
    ma = prisk_build(reports, params, family)
    mb = prisk_build(reports, params, family)
    t2 = time.perf_counter()
    median_join(ma, mb)
    t3 = time.perf_counter()
    print(f"perturb {args.n / (t1 - t0):,.0f} reports/s; build {2 * args.n / (t2 - t1):,.0f} reports/s; "
          f"join {1e3 * (t3 - t2):.2f} ms")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpjoin", description="Join-size estimation under LDP")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic tables as text files (--out is a path prefix)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run one configuration and append a CSV row")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one configuration per value of --param")
    _add_config_flags(p)
    p.add_argument("--param", required=True, help="config field to vary, e.g. epsilon")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-ldp", help="exact privacy-ratio check for small k, m")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--domain", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--two-dim", action="store_true")
    p.set_defaults(func=cmd_verify_ldp)

    p = sub.add_parser("bench", help="throughput of perturbation, sketch build and join")
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--domain", type=int, default=10_000)
    p.add_argument("--k", type=int, default=18)
    p.add_argument("--m", type=int, default=1024)
    p.add_argument("--epsilon", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

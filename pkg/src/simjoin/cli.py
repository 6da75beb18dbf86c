"""Command-line driver: ``simjoin gen|join|oracle|report``.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from simjoin import __version__
from simjoin.adaptive import JoinConfig, similarity_join, static_baseline_join
from simjoin.datagen import DatasetFormatError, DatasetSpec, generate, read_dataset, write_dataset
from simjoin.lsh import bit_sampling_family, kappa
from simjoin.oracle import OracleSizeError, brute_force_join, density_profile, pair_set, theoretical_load_bound

log = logging.getLogger("simjoin")

ESTIMATOR_FLAGS = {"exact": "exact", "sampled": "sampled", "bucket": "bucket-tree"}


class UsageError(Exception):
    pass


def _seed(args) -> int:
    env = os.environ.get("SIMJOIN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SIMJOIN_SEED must be an integer, got {env!r}") from None
    return args.seed


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_pairs(path: Path, pairs: np.ndarray) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r_id", "s_id", "distance"])
    w.writerows(pairs.tolist())
    path.write_text(buf.getvalue(), encoding="utf-8")


def cmd_gen(args) -> int:
    mode = "planted-clusters" if args.mode == "clusters" else "uniform"
    try:
        spec = DatasetSpec(
            n=args.n,
            d=args.dim,
            mode=mode,
            clusters=args.clusters if mode != "uniform" else 0,
            cluster_size=args.cluster_size if mode != "uniform" else 0,
            radius=args.radius,
            seed=_seed(args),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    R, S = generate(spec)
    write_dataset(args.out, R, S)
    log.info("wrote %d points to %s", len(R) + len(S), args.out)
    return 0


def cmd_join(args) -> int:
    path = Path(args.dataset)
    R, S = read_dataset(path)
    config = JoinConfig(
        r=args.r,
        c=args.c,
        p=args.p,
        reps=args.reps,
        estimator=ESTIMATOR_FLAGS[args.estimator],
        c_rep=args.c_rep,
        seed=_seed(args),
        eps=args.eps,
        M=args.M,
        tree_rule=args.tree_rule,
        tree_plus_term=not args.no_plus_term,
        schedule=args.schedule,
    )
    try:
        params = config.validate(R.dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    exact = None
    bound = None
    n = len(R) + len(S)
    kap = kappa(params, config.p)
    try:
        truth = brute_force_join(R, S, params.r)
        if args.recall:
            exact = pair_set(truth)
        if n:
            profile = density_profile(R, S, params, kap)
            bound = theoretical_load_bound(profile, params, n, config.p, kap)
    except OracleSizeError:
        log.warning("dataset too large for the oracle; no bound or recall reported")

    run = static_baseline_join if args.baseline else similarity_join
    try:
        result = run(R, S, config, exact=exact)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    metrics = result.metrics()
    metrics["theoretical_bound"] = bound
    metrics["L_over_bound"] = (result.load.L / bound) if bound else None
    metrics["manifest"] = {
        "config": asdict(config),
        "baseline": bool(args.baseline),
        "dataset": {"path": str(path), "sha256": _sha256(path)},
        "version": f"simjoin {__version__}",
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    Path(args.metrics).write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.pairs:
        _write_pairs(Path(args.pairs), result.pairs)
    log.info("L=%d rounds=%d pairs=%d", result.load.L, result.load.rounds, len(result.pairs))
    return 0


def cmd_oracle(args) -> int:
    R, S = read_dataset(Path(args.dataset))
    try:
        params = bit_sampling_family(R.dim, args.r, args.c)
        pairs = brute_force_join(R, S, params.r)
    except OracleSizeError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.pairs:
        _write_pairs(Path(args.pairs), pairs)
    if args.profile:
        kap = kappa(params, args.p)
        profile = density_profile(R, S, params, kap, attribution=args.attribution)
        doc = profile.to_dict()
        doc["theoretical_bound"] = (
            theoretical_load_bound(profile, params, len(R) + len(S), args.p, kap) if len(R) + len(S) else 0.0
        )
        Path(args.profile).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    return 0


REPORT_FIELDS = ["file", "algorithm", "L", "rounds", "bound", "ratio", "recall"]


def cmd_report(args) -> int:
    rows = []
    for name in args.metrics:
        try:
            doc = json.loads(Path(name).read_text(encoding="utf-8"))
            L, rounds = doc["L"], doc["rounds"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            print(f"warning: skipping {name}: {exc}", file=sys.stderr)
            continue
        bound = doc.get("theoretical_bound")
        rows.append({
            "file": name,
            "algorithm": doc.get("algorithm", ""),
            "L": L,
            "rounds": rounds,
            "bound": "" if bound is None else f"{bound:.6g}",
            "ratio": "" if not bound else f"{L / bound:.6g}",
            "recall": "" if doc.get("recall") is None else f"{doc['recall']:.6g}",
        })
    if not rows:
        print("error: no valid metrics files", file=sys.stderr)
        return 1
    w = csv.DictWriter(sys.stdout, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simjoin", description="Adaptive LSH similarity join on a simulated MPC cluster.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--mode", choices=["uniform", "clusters"], default="uniform")
    g.add_argument("--n", type=int, required=True, help="points per relation")
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--clusters", type=int, default=1)
    g.add_argument("--cluster-size", type=int, default=0)
    g.add_argument("--radius", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    j = sub.add_parser("join", help="run the adaptive join (or the static baseline)")
    j.add_argument("dataset")
    j.add_argument("--r", type=int, required=True)
    j.add_argument("--c", type=float, required=True)
    j.add_argument("--p", type=int, required=True)
    j.add_argument("--reps", type=int, default=None, help="repetitions (default ceil(2 ln n))")
    j.add_argument("--estimator", choices=sorted(ESTIMATOR_FLAGS), default="sampled")
    j.add_argument("--c-rep", type=float, default=1.0)
    j.add_argument("--eps", type=float, default=0.25)
    j.add_argument("--M", type=int, default=8)
    j.add_argument("--tree-rule", choices=["max", "one-plus-min"], default="max")
    j.add_argument("--no-plus-term", action="store_true")
    j.add_argument("--schedule", choices=["concurrent", "sequential"], default="concurrent")
    j.add_argument("--seed", type=int, default=0)
    j.add_argument("--metrics", required=True)
    j.add_argument("--pairs")
    j.add_argument("--baseline", action="store_true")
    j.add_argument("--recall", action="store_true", help="measure recall against the brute-force join")
    j.set_defaults(func=cmd_join)

    o = sub.add_parser("oracle", help="exact join and density profile")
    o.add_argument("dataset")
    o.add_argument("--r", type=int, required=True)
    o.add_argument("--c", type=float, required=True)
    o.add_argument("--p", type=int, default=16)
    o.add_argument("--attribution", choices=["min", "both"], default="min")
    o.add_argument("--pairs")
    o.add_argument("--profile")
    o.set_defaults(func=cmd_oracle)

    rep = sub.add_parser("report", help="compare metrics files (CSV on stdout)")
    rep.add_argument("metrics", nargs="+")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"simjoin: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, OSError) as exc:
        print(f"simjoin: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

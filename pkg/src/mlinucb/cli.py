"""Command line entry point: ``mlinucb {run,sweep,pca,fetch-instructions}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import harness
from .harness import ExperimentConfig
from .ingest import fetch_instructions


def _common(p: argparse.ArgumentParser, multi: bool) -> None:
    many = "+" if multi else None
    p.add_argument("--config", help="flat key: value YAML file; flags override it")
    p.add_argument("--dataset")
    p.add_argument("--data-path")
    p.add_argument("--label-column")
    p.add_argument("--algo", nargs=many, choices=harness.ALGORITHMS)
    p.add_argument("--alpha", type=float, nargs=many)
    p.add_argument("--clusters", type=int, nargs=many)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--missing-rate", type=float, nargs=many)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to aggregate")
    p.add_argument("--subsample", type=int)
    p.add_argument("--passes", type=int)
    p.add_argument("--out-dir", default="results")
    p.add_argument("--format", choices=("csv", "ndjson"), default="ndjson")
    p.add_argument("--full-recluster", action="store_true", default=None)
    p.add_argument("--scale-features", action="store_true", default=None)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def _label(v):
    if v is None:
        return None
    return int(v) if v.lstrip("-").isdigit() else v


def _base_config(args) -> ExperimentConfig:
    overrides = dict(
        dataset=args.dataset,
        data_path=args.data_path,
        label_column=_label(args.label_column),
        m=args.neighbors,
        seed=args.seed,
        subsample=args.subsample,
        passes=args.passes,
        full_recluster=args.full_recluster,
        scale_features=args.scale_features,
    )
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_run(args) -> int:
    base = _base_config(args)
    changes = {}
    if args.algo:
        changes["algorithm"] = args.algo
    if args.alpha is not None:
        changes["alpha"] = args.alpha
    if args.clusters is not None:
        changes["n_clusters"] = args.clusters
    if args.missing_rate is not None:
        changes["missing_rate"] = args.missing_rate
    base = dataclasses.replace(base, **changes)
    out = harness.check_writable(args.out_dir)
    configs = [dataclasses.replace(base, seed=base.seed + i) for i in range(args.seeds)]
    cells, logs = harness.sweep(configs, parallelism=args.jobs, keep_logs=True)
    harness.emit(cells, out, logs, args.format)
    for cell in cells:
        for s in cell.summaries:
            name = s.config.cell_name()
            trace = harness.bound_trace(logs[name], s.config, dim=s.n_arms * s.dim)
            harness.write_bound_trace(trace, out / f"bound-{name}.csv")
            print(f"{name}\taccuracy={s.total_average_accuracy:.4f}\tregret={s.cumulative_regret}"
                  f"\tmissing={s.missing_fraction_realized:.3f}\ttime={s.wall_time:.1f}s")
        for err in cell.errors:
            print(f"error: {err}", file=sys.stderr)
    return 1 if any(c.errors for c in cells) else 0


def cmd_sweep(args) -> int:
    base = _base_config(args)
    common = {f.name: getattr(base, f.name) for f in dataclasses.fields(base)}
    for k in ("dataset", "algorithm", "alpha", "missing_rate", "seed", "n_clusters", "m"):
        common.pop(k)
    grid = harness.make_grid(
        base.dataset,
        algorithms=args.algo or ("linucb", "mlinucb"),
        clusters=args.clusters or (2, 5, 10, 15, 20),
        missing_rates=args.missing_rate or (0.1, 0.5, 0.75),
        alphas=args.alpha or (base.alpha,),
        seeds=[base.seed + i for i in range(args.seeds)],
        m=base.m,
        **common,
    )
    out = harness.check_writable(args.out_dir)
    cells, logs = harness.sweep(grid, parallelism=args.jobs, keep_logs=True)
    harness.emit(cells, out, logs, args.format)
    for cell in cells:
        r = cell.row()
        print(f"{r['algo']:8s} N={r['N']:<3d} alpha={r['alpha']:<5g} p={r['missing_rate']:<5g} "
              f"acc={r['acc_mean']:.4f}+-{r['acc_std']:.4f} (seeds={r['seeds']})")
        for err in cell.errors:
            print(f"  error: {err}", file=sys.stderr)
    return 1 if any(c.errors for c in cells) else 0


def cmd_pca(args) -> int:
    base = _base_config(args)
    ds = harness.load_for_config(base)
    n_clusters = args.clusters if args.clusters is not None else base.n_clusters
    fraction, rows = harness.pca_export(ds, n_clusters=n_clusters, seed=base.seed)
    out = harness.check_writable(args.out_dir)
    path = out / f"pca-{base.dataset}.csv"
    harness.write_pca_csv(rows, path)
    print(f"{base.dataset}: top-2 PCA variance fraction = {fraction:.4f} ({path})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlinucb", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one configuration (optionally over several seeds)")
    _common(p, multi=False)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="run the LinUCB / MLinUCB grid and write summary.csv")
    _common(p, multi=True)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("pca", help="top-2 PCA variance fraction and projection export")
    _common(p, multi=False)
    p.set_defaults(func=cmd_pca)
    p = sub.add_parser("fetch-instructions", help="where to download each dataset")
    p.set_defaults(func=lambda a: print(fetch_instructions()) or 0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Experiment runner: replays, metrics, regret-bound trace, sweeps and outputs."""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import logging
import math
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .cluster_impute import ClusterModel
from .environment import BanditDataset, ReplayEnvironment, make_mask, shuffle, subsample
from .ingest import load_dataset, pca2_variance, synth_linear
from .linalg import SpdState
from .policy import LinUCB, MLinUCB, PolicyConfig, RandomPolicy

logger = logging.getLogger(__name__)

ALGORITHMS = ("linucb", "mlinucb", "random")
SUMMARY_COLUMNS = (
    "dataset", "algo", "N", "m", "alpha", "missing_rate", "seeds",
    "acc_mean", "acc_std", "regret_mean",
)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    data_path: str | None = None
    label_column: int | str | None = None
    algorithm: str = "mlinucb"
    alpha: float = 0.25
    n_clusters: int = 5
    m: int = 1
    missing_rate: float = 0.5
    seed: int = 0
    subsample: int | None = None
    passes: int = 1
    delta: float = 0.05
    sigma: float = 1.0
    full_recluster: bool = False
    scale_features: bool = False
    fixed_count_mask: bool = False
    # synthetic dataset shape
    synth_rounds: int = 2000
    synth_dim: int = 10
    synth_arms: int = 3
    synth_noise: float = 0.0
    synth_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if self.n_clusters < 1 or self.m < 1:
            raise ValueError("N and m must be >= 1")
        if self.algorithm == "mlinucb" and self.m > self.n_clusters:
            raise ValueError(f"m={self.m} exceeds N={self.n_clusters}")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ValueError("missing_rate must lie in [0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if self.subsample is not None and self.subsample < 1:
            raise ValueError("subsample must be positive")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Read flat ``key: value`` YAML; non-None ``overrides`` win."""
        with open(path) as fh:
            values = yaml.safe_load(fh) or {}
        if not isinstance(values, dict):
            raise ValueError(f"{path}: expected a flat mapping of config keys")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def cell_name(self) -> str:
        parts = [self.dataset, self.algorithm]
        if self.algorithm == "mlinucb":
            parts += [f"N{self.n_clusters}", f"m{self.m}"]
        parts += [f"a{self.alpha:g}", f"p{self.missing_rate:g}", f"s{self.seed}"]
        return "-".join(parts)

    def cell_key(self) -> tuple:
        """Identity of a sweep cell: everything except the seed."""
        N, m = (self.n_clusters, self.m) if self.algorithm == "mlinucb" else (0, 0)
        return (self.dataset, self.algorithm, N, m, self.alpha, self.missing_rate)


@dataclass
class RoundLog:
    t: int
    context_id: int
    chosen_arm: int
    best_arm: int
    revealed: bool
    effective_reward: float | None
    fallback_level: str | None
    cluster: int
    cumulative_accuracy: float
    logdet_A: float
    logdet_S: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Summary:
    config: ExperimentConfig
    n_rounds: int
    dim: int
    n_arms: int
    total_average_accuracy: float
    cumulative_regret: int
    missing_fraction_realized: float
    fallback_counts: dict = field(default_factory=dict)
    wall_time: float = 0.0


@functools.lru_cache(maxsize=8)
def _cached_dataset(dataset, data_path, label_column, scale_features, synth) -> BanditDataset:
    if dataset == "synthetic":
        T, d, K, noise, seed = synth
        return synth_linear(T, d, K, noise, seed)[0]
    overrides = {"scale_features": scale_features}
    if label_column is not None:
        overrides["label_column"] = label_column
    return load_dataset(dataset, data_path, **overrides)


def load_for_config(cfg: ExperimentConfig) -> BanditDataset:
    # The synthetic dataset has its own seed so every run seed replays the same data.
    synth = (cfg.synth_rounds, cfg.synth_dim, cfg.synth_arms, cfg.synth_noise, cfg.synth_seed)
    return _cached_dataset(cfg.dataset, cfg.data_path, cfg.label_column, cfg.scale_features, synth)


def _seeds(seed: int) -> dict:
    names = ("subsample", "shuffle", "mask", "cluster", "random")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return dict(zip(names, children))


def prepare_replay(cfg: ExperimentConfig, ds: BanditDataset):
    """Subsample, shuffle (once per pass) and mask the dataset for one run."""
    seeds = _seeds(cfg.seed)
    if cfg.subsample is not None:
        ds = subsample(ds, cfg.subsample, seeds["subsample"])
    pass_seeds = seeds["shuffle"].spawn(cfg.passes)
    parts = [shuffle(ds, s) for s in pass_seeds]
    if len(parts) > 1:
        ds = BanditDataset(
            np.vstack([p.contexts for p in parts]),
            np.concatenate([p.labels for p in parts]),
            ds.n_classes, ds.name,
            np.concatenate([p.row_ids for p in parts]),
        )
    else:
        ds = parts[0]
    mask = make_mask(cfg.missing_rate, seeds["mask"], ds.n_rounds, fixed_count=cfg.fixed_count_mask)
    return ds, mask, seeds


def make_policy(cfg: ExperimentConfig, n_arms: int, dim: int, seeds: dict):
    if cfg.algorithm == "random":
        return RandomPolicy(n_arms, seeds["random"])
    pcfg = PolicyConfig(n_arms, dim, cfg.alpha)
    if cfg.algorithm == "linucb":
        return LinUCB(pcfg)
    cluster_seed = int(seeds["cluster"].generate_state(1)[0])
    return MLinUCB(pcfg, cfg.n_clusters, cfg.m, cluster_seed, full_recluster=cfg.full_recluster)


def run_experiment(cfg: ExperimentConfig, dataset: BanditDataset | None = None, keep_logs: bool = True):
    """Replay one configuration end to end.

    Returns ``(Summary, list[RoundLog])`` (the list is empty when
    ``keep_logs`` is false). ``S_k`` starts at the identity and gains
    ``x x^T`` on rounds where arm ``k`` was chosen, its reward was missing,
    and the policy still updated ``A_k`` (MLinUCB only).
    """
    start = time.perf_counter()
    ds = dataset if dataset is not None else load_for_config(cfg)
    ds, mask, seeds = prepare_replay(cfg, ds)
    env = ReplayEnvironment(ds, mask)
    K, d = ds.n_classes, ds.dim
    policy = make_policy(cfg, K, d, seeds)
    arms = getattr(policy, "arms", None)
    S = [SpdState(d) for _ in range(K)] if cfg.algorithm == "mlinucb" else None
    logdet_A = np.zeros(K)
    logdet_S = np.zeros(K)

    logs: list[RoundLog] = []
    correct = 0
    fallbacks: Counter = Counter()
    for t in range(env.n_rounds):
        x = env.context(t)
        step = policy.play(x, functools.partial(env.feedback, t))
        k = step.chosen_arm
        best = env.best_arm(t)
        correct += k == best
        if arms is not None and step.updated:
            logdet_A[k] = arms[k].A.logdet
            if S is not None and not step.revealed:
                S[k].update(x)
                logdet_S[k] = S[k].logdet
        if step.fallback_level is not None:
            fallbacks[step.fallback_level.value] += 1
        if keep_logs:
            logs.append(
                RoundLog(
                    t=t + 1,
                    context_id=env.row_id(t),
                    chosen_arm=k,
                    best_arm=best,
                    revealed=step.revealed,
                    effective_reward=step.effective_reward if step.updated else None,
                    fallback_level=None if step.fallback_level is None else step.fallback_level.value,
                    cluster=step.cluster,
                    cumulative_accuracy=correct / (t + 1),
                    logdet_A=float(logdet_A.sum()),
                    logdet_S=float(logdet_S.sum()),
                )
            )
    T = env.n_rounds
    summary = Summary(
        config=cfg,
        n_rounds=T,
        dim=d,
        n_arms=K,
        total_average_accuracy=correct / T if T else 0.0,
        cumulative_regret=T - correct,
        missing_fraction_realized=mask.missing_fraction,
        fallback_counts=dict(sorted(fallbacks.items())),
        wall_time=time.perf_counter() - start,
    )
    return summary, logs


@dataclass
class BoundPoint:
    t: int
    delta_logdet: float
    width_term: float
    theta_term: float
    bound: float
    regret: int
    phi_unnormalized: bool = True


def bound_trace(
    logs: Iterable[RoundLog],
    cfg: ExperimentConfig,
    dim: int,
    theta_norm: float = 1.0,
    phi: float = 1.0,
) -> list[BoundPoint]:
    """Data-dependent terms of the high-probability regret bound, per round.

    With ``D = log det A - log det S`` (summed over arms) the bound at
    round ``t`` is::

        sigma * (sqrt(dim * (D/2 - log delta)) + |theta| / sqrt(phi)) * sqrt(18 t D)

    ``dim`` is the dimension of the stacked parameter (``K * d``). ``phi``
    has no prescribed value; the ``theta_term`` is reported with ``phi=1``
    and flagged as unnormalized. A ``t=0`` entry (no updates) leads the list.
    """
    out = [BoundPoint(0, 0.0, math.sqrt(dim * -math.log(cfg.delta)), theta_norm / math.sqrt(phi), 0.0, 0)]
    regret = 0
    for log in logs:
        regret += log.chosen_arm != log.best_arm
        delta = max(log.logdet_A - log.logdet_S, 0.0)
        width = math.sqrt(dim * (0.5 * delta - math.log(cfg.delta)))
        theta_term = theta_norm / math.sqrt(phi)
        bound = cfg.sigma * (width + theta_term) * math.sqrt(18.0 * log.t * delta)
        out.append(BoundPoint(log.t, delta, width, theta_term, bound, regret))
    return out


# -- sweeps -----------------------------------------------------------------


def make_grid(
    dataset: str,
    algorithms: Sequence[str] = ("linucb", "mlinucb"),
    clusters: Sequence[int] = (2, 5, 10, 15, 20),
    missing_rates: Sequence[float] = (0.1, 0.5, 0.75),
    alphas: Sequence[float] = (0.25,),
    seeds: Sequence[int] = (0,),
    m: int = 1,
    **common,
) -> list[ExperimentConfig]:
    """Cross product of settings: LinUCB once per (rate, alpha), MLinUCB once per N."""
    grid = []
    for p in missing_rates:
        for alpha in alphas:
            for algo in algorithms:
                Ns = clusters if algo == "mlinucb" else (common.get("n_clusters", 5),)
                for N in Ns:
                    for seed in seeds:
                        kw = dict(common, dataset=dataset, algorithm=algo, alpha=alpha,
                                  missing_rate=p, seed=seed, n_clusters=N, m=m)
                        grid.append(ExperimentConfig(**kw))
    return grid


@dataclass
class CellResult:
    key: tuple
    configs: list = field(default_factory=list)
    summaries: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([s.total_average_accuracy for s in self.summaries])

    @property
    def acc_mean(self) -> float:
        return float(self.accuracies.mean()) if self.summaries else float("nan")

    @property
    def acc_std(self) -> float:
        a = self.accuracies
        return float(a.std(ddof=1)) if a.size > 1 else 0.0

    @property
    def regret_mean(self) -> float:
        return float(np.mean([s.cumulative_regret for s in self.summaries])) if self.summaries else float("nan")

    def row(self) -> dict:
        dataset, algo, N, m, alpha, p = self.key
        return {
            "dataset": dataset, "algo": algo, "N": N, "m": m, "alpha": alpha,
            "missing_rate": p, "seeds": len(self.summaries),
            "acc_mean": self.acc_mean, "acc_std": self.acc_std, "regret_mean": self.regret_mean,
        }


def _run_one(cfg: ExperimentConfig, keep_logs: bool):
    try:
        return run_experiment(cfg, keep_logs=keep_logs), None
    except Exception as exc:  # recorded per cell, the sweep carries on
        logger.exception("cell %s failed", cfg.cell_name())
        return None, f"{type(exc).__name__}: {exc}"


def sweep(configs: Sequence[ExperimentConfig], parallelism: int = 1, keep_logs: bool = False):
    """Run every config and group the summaries into cells (one per non-seed key).

    Returns ``(cells, logs)`` where ``logs`` maps ``cell_name`` to its round
    logs when ``keep_logs`` is set. Results do not depend on ``parallelism``.
    """
    configs = list(configs)
    if parallelism > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_one, configs, [keep_logs] * len(configs)))
    else:
        results = [_run_one(c, keep_logs) for c in configs]

    cells: dict[tuple, CellResult] = {}
    logs = {}
    for cfg, (res, err) in zip(configs, results):
        cell = cells.setdefault(cfg.cell_key(), CellResult(cfg.cell_key()))
        cell.configs.append(cfg)
        if err is not None:
            cell.errors.append(err)
            continue
        summary, cell_logs = res
        cell.summaries.append(summary)
        if keep_logs:
            logs[cfg.cell_name()] = cell_logs
    return list(cells.values()), logs


def alpha_series(cells: Sequence[CellResult]) -> list[dict]:
    """Mean accuracy as a function of alpha, per (algorithm, N, missing rate)."""
    rows = [c.row() for c in cells]
    return sorted(rows, key=lambda r: (r["dataset"], r["algo"], r["N"], r["missing_rate"], r["alpha"]))


# -- output -----------------------------------------------------------------


def check_writable(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def write_summary_csv(cells: Sequence[CellResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for cell in cells:
            row = cell.row()
            for k in ("acc_mean", "acc_std", "regret_mean"):
                row[k] = f"{row[k]:.6f}"
            w.writerow(row)


def write_rounds(logs: Sequence[RoundLog], path, fmt: str = "ndjson") -> None:
    if fmt == "ndjson":
        with open(path, "w") as fh:
            for log in logs:
                fh.write(json.dumps(log.as_dict()) + "\n")
    elif fmt == "csv":
        names = [f.name for f in dataclasses.fields(RoundLog)]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
            w.writeheader()
            for log in logs:
                w.writerow(log.as_dict())
    else:
        raise ValueError(f"unknown format {fmt!r}")


def write_bound_trace(points: Sequence[BoundPoint], path) -> None:
    names = [f.name for f in dataclasses.fields(BoundPoint)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for p in points:
            w.writerow(dataclasses.asdict(p))


def pca_export(ds: BanditDataset, n_clusters: int = 5, seed: int = 0):
    """PCA projection joined with final mini-batch cluster assignments.

    Returns ``(fraction, rows)`` where each row is ``(pc1, pc2, label, cluster_id)``.
    """
    fraction, coords = pca2_variance(ds)
    model = ClusterModel(n_clusters=n_clusters, n_arms=ds.n_classes, seed=seed,
                         warmup=min(max(n_clusters, 25), ds.n_rounds))
    for x in ds.contexts:
        model.observe(x)
    clusters = [model.assign(x)[0] for x in ds.contexts] if model.initialized else [-1] * ds.n_rounds
    rows = [(float(c[0]), float(c[1]), int(lab), int(j)) for c, lab, j in zip(coords, ds.labels, clusters)]
    return fraction, rows


def write_pca_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pc1", "pc2", "label", "cluster_id"])
        for pc1, pc2, lab, j in rows:
            w.writerow([repr(pc1), repr(pc2), lab, j])


def emit(cells: Sequence[CellResult], out_dir, logs: dict | None = None, fmt: str = "ndjson") -> list[Path]:
    """Write ``summary.csv`` and one ``rounds-<cell>.<fmt>`` per logged run."""
    out = check_writable(out_dir)
    written = [out / "summary.csv"]
    write_summary_csv(cells, written[0])
    for name, cell_logs in sorted((logs or {}).items()):
        path = out / f"rounds-{name}.{fmt}"
        write_rounds(cell_logs, path, fmt)
        written.append(path)
    return written

"""Online clustering of contexts and cluster-based reward imputation.

Contexts are clustered with per-sample mini-batch k-means (learning rate
``1/n_j``). Each cluster keeps per-arm reward sums and counts of *observed*
rewards; a missing reward for arm ``k`` is imputed as the inverse-distance
weighted average of the per-arm averages of the ``m`` nearest clusters that
have at least one observation for ``k``.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

ZERO_DIST_EPSILON = 1e-9
MIN_WARMUP = 25


class FallbackLevel(str, enum.Enum):
    WEIGHTED = "weighted"
    GLOBAL_ARM = "global_arm"
    CONSTANT = "constant"


class NotInitializedError(RuntimeError):
    pass


def kmeans_plusplus(points: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding. Returns ``n_clusters`` rows drawn from ``points``.

    When the buffer holds fewer distinct rows than ``n_clusters`` the
    remaining seeds are perturbed copies of existing ones.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    centers = np.empty((n_clusters, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, n_clusters):
        total = closest.sum()
        if total <= 0.0:
            scale = max(float(np.abs(points).max()), 1.0) * 1e-6
            logger.warning(
                "only %d distinct seeds available for %d clusters; padding with perturbed copies",
                c, n_clusters,
            )
            for cc in range(c, n_clusters):
                base = centers[rng.integers(c)]
                centers[cc] = base + scale * rng.standard_normal(points.shape[1])
            break
        idx = int(rng.choice(n, p=closest / total))
        centers[c] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


@dataclass
class ClusterModel:
    """Centroids, assignment counts and per-(cluster, arm) reward statistics.

    Until ``warmup`` contexts have been seen the model only buffers them
    (together with any rewards observed in the meantime); it then seeds the
    centroids with k-means++, streams the buffer through the mini-batch rule
    and replays the buffered rewards.
    """

    n_clusters: int
    n_arms: int
    m: int = 1
    seed: int = 0
    zero_dist_epsilon: float = ZERO_DIST_EPSILON
    warmup: int | None = None
    full_recluster: bool = False
    recluster_iters: int = 10

    centroids: np.ndarray | None = field(default=None, init=False)
    counts: np.ndarray | None = field(default=None, init=False)
    reward_sum: np.ndarray | None = field(default=None, init=False)
    reward_count: np.ndarray | None = field(default=None, init=False)

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError(f"number of clusters must be >= 1, got {self.n_clusters}")
        if not 1 <= self.m <= self.n_clusters:
            raise ValueError(f"neighbors m={self.m} must lie in [1, N={self.n_clusters}]")
        if self.n_arms < 1:
            raise ValueError("n_arms must be >= 1")
        if self.warmup is None:
            self.warmup = max(self.n_clusters, MIN_WARMUP)
        if self.warmup < self.n_clusters:
            raise ValueError("warmup buffer must hold at least N contexts")
        self._buffer: list[np.ndarray] = []
        self._pending_rewards: list[tuple[np.ndarray, int, float]] = []
        # Full history, kept only in full-recluster mode.
        self._history: list[np.ndarray] = []
        self._observed: list[tuple[int, int, float]] = []
        self.arm_reward_sum = np.zeros(self.n_arms)
        self.arm_reward_count = np.zeros(self.n_arms, dtype=np.int64)

    @property
    def initialized(self) -> bool:
        return self.centroids is not None

    # -- clustering -------------------------------------------------------

    def _initialize(self, buffer: np.ndarray) -> None:
        rng = np.random.default_rng(self.seed)
        self.centroids = kmeans_plusplus(buffer, self.n_clusters, rng)
        d = buffer.shape[1]
        assert self.centroids.shape == (self.n_clusters, d)
        self.counts = np.zeros(self.n_clusters, dtype=np.int64)
        self.reward_sum = np.zeros((self.n_clusters, self.n_arms))
        self.reward_count = np.zeros((self.n_clusters, self.n_arms), dtype=np.int64)
        for x in buffer:
            self.minibatch_update(x)

    def assign(self, x) -> tuple[int, float]:
        """Nearest centroid (Euclidean, ties to the lowest index) and its distance."""
        dist = self.distances(x)
        j = int(np.argmin(dist))
        return j, float(dist[j])

    def distances(self, x) -> np.ndarray:
        if not self.initialized:
            raise NotInitializedError("cluster model has not been initialized")
        x = np.asarray(x, dtype=np.float64)
        return np.sqrt(np.sum((self.centroids - x) ** 2, axis=1))

    def minibatch_update(self, x) -> int:
        """Move the nearest centroid toward ``x`` with step ``1/n_j``."""
        x = np.asarray(x, dtype=np.float64)
        j, _ = self.assign(x)
        self.counts[j] += 1
        self.centroids[j] += (x - self.centroids[j]) / self.counts[j]
        return j

    def _recluster(self) -> None:
        X = np.asarray(self._history)
        labels = None
        for _ in range(self.recluster_iters):
            d2 = ((X[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
            new = np.argmin(d2, axis=1)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            for j in range(self.n_clusters):
                members = X[labels == j]
                if len(members):
                    self.centroids[j] = members.mean(axis=0)
        self.counts = np.bincount(labels, minlength=self.n_clusters).astype(np.int64)
        self.reward_sum[:] = 0.0
        self.reward_count[:] = 0
        for idx, k, r in self._observed:
            self.reward_sum[labels[idx], k] += r
            self.reward_count[labels[idx], k] += 1

    def observe(self, x) -> int:
        """Feed one context into the clustering; returns its cluster or -1 during warmup."""
        x = np.array(x, dtype=np.float64).reshape(-1)
        if self.full_recluster:
            self._history.append(x)
        if not self.initialized:
            self._buffer.append(x)
            if len(self._buffer) < self.warmup:
                return -1
            self._initialize(np.asarray(self._buffer))
            self._buffer = []
            pending, self._pending_rewards = self._pending_rewards, []
            for px, k, r in pending:
                j, _ = self.assign(px)
                self._add_reward(j, k, r)
            if self.full_recluster:
                self._recluster()
            return self.assign(x)[0]
        if self.full_recluster:
            self._recluster()
            return self.assign(x)[0]
        return self.minibatch_update(x)

    # -- reward statistics -----------------------------------------------

    def _add_reward(self, j: int, k: int, r: float) -> None:
        self.reward_sum[j, k] += r
        self.reward_count[j, k] += 1

    def record_reward(self, j: int, k: int, r: float) -> None:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward must lie in [0, 1], got {r}")
        if not self.initialized:
            raise NotInitializedError("cluster model has not been initialized")
        if not 0 <= j < self.n_clusters:
            raise IndexError(f"cluster index {j} out of range")
        self._add_reward(j, k, r)
        self.arm_reward_sum[k] += r
        self.arm_reward_count[k] += 1

    def observe_reward(self, x, k: int, r: float) -> int:
        """Record an observed reward for context ``x`` under its current cluster.

        During warmup the reward is held back and attributed once the
        centroids exist. Returns the cluster index, or -1 if deferred.
        """
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward must lie in [0, 1], got {r}")
        x = np.array(x, dtype=np.float64).reshape(-1)
        if self.full_recluster:
            self._observed.append((len(self._history) - 1, k, float(r)))
        if not self.initialized:
            self._pending_rewards.append((x, k, float(r)))
            self.arm_reward_sum[k] += r
            self.arm_reward_count[k] += 1
            return -1
        j, _ = self.assign(x)
        self.record_reward(j, k, r)
        return j

    def cluster_average(self, j: int, k: int) -> float | None:
        n = self.reward_count[j, k]
        return None if n == 0 else float(self.reward_sum[j, k] / n)

    # -- imputation ----------------------------------------------------

    def impute(self, x, k: int) -> tuple[float, FallbackLevel]:
        """Imputed reward for arm ``k`` at context ``x``.

        ``g(x) = sum_j rbar_j / d_j / sum_j 1 / d_j`` over the ``m`` nearest
        clusters with observations for ``k``. A cluster closer than
        ``zero_dist_epsilon`` returns its own average. With no qualifying
        cluster, the global average of arm ``k`` is used, then 0.0.
        """
        if self.initialized:
            dist = self.distances(x)
            qualifying = np.flatnonzero(self.reward_count[:, k] > 0)
            if qualifying.size:
                order = qualifying[np.argsort(dist[qualifying], kind="stable")][: self.m]
                averages = self.reward_sum[order, k] / self.reward_count[order, k]
                return weighted_average(averages, dist[order], self.zero_dist_epsilon), FallbackLevel.WEIGHTED
            if self.arm_reward_count[k] > 0:
                return float(self.arm_reward_sum[k] / self.arm_reward_count[k]), FallbackLevel.GLOBAL_ARM
        return 0.0, FallbackLevel.CONSTANT

    # -- export --------------------------------------------------------

    def dump_centroids(self, path) -> None:
        """Write one JSON record per centroid: mean, count and per-arm averages."""
        if not self.initialized:
            raise NotInitializedError("cluster model has not been initialized")
        with open(Path(path), "w") as fh:
            for j in range(self.n_clusters):
                rec = {
                    "cluster": j,
                    "count": int(self.counts[j]),
                    "mean": self.centroids[j].tolist(),
                    "arm_average": [self.cluster_average(j, k) for k in range(self.n_arms)],
                    "arm_count": self.reward_count[j].tolist(),
                }
                fh.write(json.dumps(rec) + "\n")


def weighted_average(averages, distances, zero_dist_epsilon: float = ZERO_DIST_EPSILON) -> float:
    """Inverse-distance weighted mean of cluster averages.

    The first (nearest) distance under ``zero_dist_epsilon`` short-circuits
    to that cluster's own average.
    """
    averages = np.asarray(averages, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    hits = np.flatnonzero(distances < zero_dist_epsilon)
    if hits.size:
        return float(averages[hits[0]])
    if averages.size == 1:
        return float(averages[0])
    w = 1.0 / distances
    g = np.sum(w * averages) / np.sum(w)
    return float(np.clip(g, averages.min(), averages.max()))


def init_centroids(buffer, n_clusters: int, rng_seed: int, n_arms: int = 2, m: int = 1) -> ClusterModel:
    """Build an initialized :class:`ClusterModel` from a buffer of contexts."""
    buffer = np.asarray(buffer, dtype=np.float64)
    if buffer.ndim != 2 or buffer.shape[0] < n_clusters:
        raise ValueError(f"need at least {n_clusters} buffered contexts, got {buffer.shape[0]}")
    model = ClusterModel(n_clusters=n_clusters, n_arms=n_arms, m=m, seed=rng_seed, warmup=buffer.shape[0])
    model._initialize(buffer)
    return model

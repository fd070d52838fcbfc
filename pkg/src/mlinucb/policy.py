"""LinUCB with disjoint per-arm ridge models, and its missing-reward variant.

Every arm ``k`` keeps ``A_k = I + sum x x^T`` and ``b_k = sum r x`` and is
scored with ``theta_k^T x + alpha * sqrt(x^T A_k^{-1} x)``. LinUCB skips the
update when a reward is missing; MLinUCB substitutes the cluster-imputed
reward and updates anyway.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cluster_impute import ClusterModel, FallbackLevel
from .linalg import DimensionError, SpdState

DEFAULT_ALPHA = 0.25

# feedback(arm) -> (reward or None, revealed)
Feedback = Callable[[int], "tuple[float | None, bool]"]


@dataclass(frozen=True)
class PolicyConfig:
    num_arms: int
    dim: int
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.num_arms < 2:
            raise ValueError(f"need at least 2 arms, got {self.num_arms}")
        if self.dim < 1:
            raise DimensionError(f"dimension must be >= 1, got {self.dim}")
        if not self.alpha >= 0.0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")


@dataclass
class ArmModel:
    arm_id: int
    A: SpdState
    b: np.ndarray
    _theta: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def fresh(cls, arm_id: int, dim: int) -> "ArmModel":
        return cls(arm_id, SpdState(dim), np.zeros(dim))

    @property
    def theta(self) -> np.ndarray:
        """Ridge estimate ``A^{-1} b``, cached between updates."""
        if self._theta is None:
            self._theta = self.A.solve(self.b)
        return self._theta

    def score(self, x: np.ndarray, alpha: float) -> float:
        return float(self.theta @ x) + alpha * np.sqrt(self.A.quad_form(x))


def score_arms(arms: list[ArmModel], x, cfg: PolicyConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != cfg.dim:
        raise DimensionError(f"context has length {x.shape[0]}, expected {cfg.dim}")
    return np.array([arm.score(x, cfg.alpha) for arm in arms])


def select_arm(scores) -> int:
    """Index of the maximum score; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot select from an empty score vector")
    if np.isnan(scores).any():
        raise ValueError("score vector contains NaN")
    return int(np.argmax(scores))


def update_arm(arm: ArmModel, x, r: float) -> ArmModel:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"reward must lie in [0, 1], got {r}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    arm.A.update(x)
    if r != 0.0:
        arm.b = arm.b + r * x
    arm._theta = None
    return arm


@dataclass
class RoundStep:
    """What one policy round did, before the harness adds evaluation fields."""

    chosen_arm: int
    revealed: bool
    effective_reward: float | None
    fallback_level: FallbackLevel | None = None
    cluster: int = -1
    updated: bool = True


def mlinucb_round(
    arms: list[ArmModel],
    cluster_model: ClusterModel,
    x,
    env_feedback: Feedback,
    cfg: PolicyConfig,
) -> RoundStep:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    cluster = cluster_model.observe(x)
    k = select_arm(score_arms(arms, x, cfg))
    reward, revealed = env_feedback(k)
    level = None
    if revealed:
        r = float(reward)
        cluster_model.observe_reward(x, k, r)
    else:
        # Imputed values never enter the cluster statistics.
        r, level = cluster_model.impute(x, k)
    update_arm(arms[k], x, r)
    return RoundStep(k, revealed, r, level, cluster)


class LinUCB:
    """Disjoint LinUCB; rounds with a missing reward leave the model untouched."""

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.arms = [ArmModel.fresh(k, cfg.dim) for k in range(cfg.num_arms)]

    def scores(self, x) -> np.ndarray:
        return score_arms(self.arms, x, self.cfg)

    def select(self, x) -> int:
        return select_arm(self.scores(x))

    def update(self, k: int, x, r: float) -> None:
        update_arm(self.arms[k], x, r)

    def play(self, x, env_feedback: Feedback) -> RoundStep:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        k = self.select(x)
        reward, revealed = env_feedback(k)
        if not revealed:
            return RoundStep(k, False, None, updated=False)
        self.update(k, x, float(reward))
        return RoundStep(k, True, float(reward))


class MLinUCB(LinUCB):
    """LinUCB that imputes missing rewards from online cluster statistics."""

    def __init__(self, cfg: PolicyConfig, n_clusters: int, m: int = 1, seed: int = 0, **cluster_kwargs):
        super().__init__(cfg)
        self.clusters = ClusterModel(
            n_clusters=n_clusters, n_arms=cfg.num_arms, m=m, seed=seed, **cluster_kwargs
        )

    def play(self, x, env_feedback: Feedback) -> RoundStep:
        return mlinucb_round(self.arms, self.clusters, x, env_feedback, self.cfg)


class RandomPolicy:
    """Uniform random arm choice; never learns."""

    def __init__(self, num_arms: int, seed=0):
        self.num_arms = num_arms
        self._rng = np.random.default_rng(seed)

    def play(self, x, env_feedback: Feedback) -> RoundStep:
        k = int(self._rng.integers(self.num_arms))
        reward, revealed = env_feedback(k)
        return RoundStep(k, revealed, reward, updated=False)

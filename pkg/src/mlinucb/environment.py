"""Replay of a labeled dataset as a contextual bandit with masked rewards.

Arm ``k`` pays 1 when it equals the row's label and 0 otherwise. A
:class:`MaskSchedule` decides, round by round, whether the reward of the
chosen arm is revealed to the learner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class BanditDataset:
    contexts: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str = "custom"
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        contexts = np.ascontiguousarray(self.contexts, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if contexts.ndim != 2:
            raise ValueError("contexts must be a 2-D array")
        if labels.shape != (contexts.shape[0],):
            raise ValueError("labels must have one entry per context row")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")
        if not np.all(np.isfinite(contexts)):
            raise ValueError("contexts contain non-finite entries")
        row_ids = np.arange(len(labels)) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        contexts.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n_rounds(self) -> int:
        return self.contexts.shape[0]

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    def reward(self, t: int, k: int) -> int:
        return int(self.labels[t] == k)

    def take(self, idx) -> "BanditDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return BanditDataset(self.contexts[idx], self.labels[idx], self.n_classes, self.name, self.row_ids[idx])


def shuffle(ds: BanditDataset, seed) -> BanditDataset:
    """Seeded row permutation; context/label pairs stay together."""
    perm = np.random.default_rng(seed).permutation(ds.n_rounds)
    return ds.take(perm)


def subsample(ds: BanditDataset, n_rows: int, seed) -> BanditDataset:
    if n_rows >= ds.n_rounds:
        return ds
    idx = np.sort(np.random.default_rng(seed).choice(ds.n_rounds, size=n_rows, replace=False))
    return ds.take(idx)


@dataclass(frozen=True)
class MaskSchedule:
    missing_rate: float
    seed: int
    reveal: np.ndarray

    @property
    def missing_fraction(self) -> float:
        return float(1.0 - self.reveal.mean()) if self.reveal.size else 0.0


def make_mask(missing_rate: float, seed, n_rounds: int, fixed_count: bool = False) -> MaskSchedule:
    """Draw which rounds reveal their reward.

    By default each round is revealed independently with probability
    ``1 - missing_rate``. With ``fixed_count`` exactly ``floor(p T)``
    rounds are masked, at seeded random positions.
    """
    if not 0.0 <= missing_rate <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {missing_rate}")
    rng = np.random.default_rng(seed)
    if fixed_count:
        reveal = np.ones(n_rounds, dtype=bool)
        n_masked = int(np.floor(missing_rate * n_rounds))
        reveal[rng.permutation(n_rounds)[:n_masked]] = False
    else:
        reveal = rng.random(n_rounds) >= missing_rate
    reveal.flags.writeable = False
    return MaskSchedule(float(missing_rate), seed if isinstance(seed, int) else -1, reveal)


class StepResult(NamedTuple):
    reward: int
    revealed: bool
    best_arm: int


def step(ds: BanditDataset, mask: MaskSchedule, t: int, chosen_arm: int) -> StepResult:
    if not 0 <= t < ds.n_rounds:
        raise IndexError(f"round {t} out of range [0, {ds.n_rounds})")
    best = int(ds.labels[t])
    return StepResult(int(chosen_arm == best), bool(mask.reveal[t]), best)


class ReplayEnvironment:
    """Splits a replay into the learner-facing and evaluator-facing channels.

    ``context`` and ``feedback`` are all a policy may see; ``best_arm`` is
    the evaluation channel and is only read by the harness.
    """

    def __init__(self, ds: BanditDataset, mask: MaskSchedule):
        if mask.reveal.shape[0] != ds.n_rounds:
            raise ValueError("mask length does not match the dataset")
        self._ds = ds
        self._mask = mask

    @property
    def n_rounds(self) -> int:
        return self._ds.n_rounds

    @property
    def n_arms(self) -> int:
        return self._ds.n_classes

    @property
    def dim(self) -> int:
        return self._ds.dim

    def context(self, t: int) -> np.ndarray:
        return self._ds.contexts[t]

    def row_id(self, t: int) -> int:
        return int(self._ds.row_ids[t])

    def feedback(self, t: int, arm: int) -> tuple[float | None, bool]:
        """Reward of ``arm`` at round ``t`` if revealed, else ``(None, False)``."""
        res = step(self._ds, self._mask, t, arm)
        return (float(res.reward), True) if res.revealed else (None, False)

    def best_arm(self, t: int) -> int:
        return int(self._ds.labels[t])

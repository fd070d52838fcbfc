"""Incrementally updatable symmetric positive-definite matrices.

An :class:`SpdState` holds ``A = L L^T`` through its Cholesky factor and
supports O(d^2) rank-1 updates, solves, quadratic forms ``x^T A^{-1} x`` and
log-determinants. Every design matrix in the package (per-arm ``A_k`` and
the missing-reward matrices ``S_k``) is one of these.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.linalg import cholesky, solve_triangular

REFACTOR_EVERY = 1000


class DimensionError(ValueError):
    """Raised on a zero dimension or a vector of the wrong length."""


@njit(cache=True)
def _chol_update_upper(U, x):
    # U is the upper factor (A = U^T U), rows contiguous; x is overwritten.
    d = x.shape[0]
    for k in range(d):
        ukk = U[k, k]
        r = np.sqrt(ukk * ukk + x[k] * x[k])
        c = r / ukk
        s = x[k] / ukk
        U[k, k] = r
        for i in range(k + 1, d):
            U[k, i] = (U[k, i] + s * x[i]) / c
            x[i] = c * x[i] - s * U[k, i]


def _as_vector(x, dim: int, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != dim:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {dim}")
    return v


class SpdState:
    """SPD matrix ``A`` kept as its Cholesky factor.

    The factor is stored in upper form ``U = L^T`` so that the rank-1 update
    walks contiguous rows; :attr:`chol` returns the lower factor ``L``.

    ``update`` mutates in place (the policy owns its matrices); use
    :func:`spd_rank1_update` for a copy-on-write update.
    """

    __slots__ = ("dim", "_U", "_base", "_pending", "_n_pending", "logdet_cache", "n_updates")

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise DimensionError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)
        self._U = np.eye(self.dim)
        # Exact A is _base + sum of the pending outer products; the pending
        # rows are folded in (and U refactorized) every REFACTOR_EVERY updates.
        self._base = np.eye(self.dim)
        self._pending = np.empty((min(REFACTOR_EVERY, 64), self.dim))
        self._n_pending = 0
        self.logdet_cache = 0.0
        self.n_updates = 0

    @property
    def chol(self) -> np.ndarray:
        return self._U.T.copy()

    @property
    def matrix(self) -> np.ndarray:
        """The accumulated matrix ``A`` (exact sum, not ``L L^T``)."""
        P = self._pending[: self._n_pending]
        return self._base + P.T @ P

    def copy(self) -> "SpdState":
        new = SpdState.__new__(SpdState)
        new.dim = self.dim
        new._U = self._U.copy()
        new._base = self._base.copy()
        new._pending = self._pending.copy()
        new._n_pending = self._n_pending
        new.logdet_cache = self.logdet_cache
        new.n_updates = self.n_updates
        return new

    def update(self, x) -> "SpdState":
        """In-place ``A <- A + x x^T``."""
        v = _as_vector(x, self.dim)
        if not np.all(np.isfinite(v)):
            raise ValueError("rank-1 update vector has non-finite entries")
        if self._n_pending == self._pending.shape[0]:
            grown = np.empty((min(2 * self._pending.shape[0], REFACTOR_EVERY), self.dim))
            grown[: self._n_pending] = self._pending
            self._pending = grown
        self._pending[self._n_pending] = v
        self._n_pending += 1
        self.n_updates += 1
        if self._n_pending >= REFACTOR_EVERY:
            self.refactor()
        else:
            _chol_update_upper(self._U, v.copy())
        self.logdet_cache = 2.0 * float(np.sum(np.log(np.diag(self._U))))
        return self

    def refactor(self) -> None:
        """Fold pending updates into ``A`` and recompute the factor from scratch."""
        P = self._pending[: self._n_pending]
        self._base = self._base + P.T @ P
        self._n_pending = 0
        self._U = np.ascontiguousarray(cholesky(self._base, lower=False))
        self.logdet_cache = 2.0 * float(np.sum(np.log(np.diag(self._U))))

    def solve(self, v) -> np.ndarray:
        """Return ``A^{-1} v`` by two triangular solves."""
        v = _as_vector(v, self.dim, "v")
        y = solve_triangular(self._U, v, trans="T", check_finite=False)
        return solve_triangular(self._U, y, check_finite=False)

    def quad_form(self, x) -> float:
        """Return ``x^T A^{-1} x`` as the squared norm of ``L^{-1} x``."""
        x = _as_vector(x, self.dim)
        z = solve_triangular(self._U, x, trans="T", check_finite=False)
        return float(z @ z)

    @property
    def logdet(self) -> float:
        return self.logdet_cache

    def __repr__(self) -> str:
        return f"SpdState(dim={self.dim}, n_updates={self.n_updates}, logdet={self.logdet_cache:.6g})"


def spd_identity(d: int) -> SpdState:
    return SpdState(d)


def spd_rank1_update(s: SpdState, x) -> SpdState:
    """Return a new state representing ``A + x x^T``; ``s`` is left untouched."""
    return s.copy().update(x)


def spd_solve(s: SpdState, v) -> np.ndarray:
    return s.solve(v)


def spd_quad_form(s: SpdState, x) -> float:
    return s.quad_form(x)


def spd_logdet(s: SpdState) -> float:
    return s.logdet

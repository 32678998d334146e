"""Combination of local log p-values into global evidence, all in log space.

The master loop owns a pair of matrices: one holds local log p-values (rows
= processed sample subsets, columns = currently alive features), the other
the matching local log-likelihoods. Columns are pruned as features leave the
alive set; rows accumulate group by group. Fisher's method turns each column
into a single combined statistic and log p-value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .citest import chisq_log_sf

__all__ = ["EvidenceMatrices", "FisherResult", "ColumnCombination", "fisher_combine", "combine_columns"]


@dataclass(frozen=True)
class FisherResult:
    statistic: float
    log_p: float


@dataclass(frozen=True)
class ColumnCombination:
    """Per-column combined evidence; statistic order is inverse to log_p order."""

    column_ids: np.ndarray
    statistic: np.ndarray
    log_p: np.ndarray


class EvidenceMatrices:
    """Mutable evidence store, single-writer (the master loop).

    Both matrices always share shape (rows_filled, len(column_ids)); column
    pruning and row appends keep them in lockstep.
    """

    def __init__(self, column_ids):
        ids = np.asarray(list(column_ids), dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise ValueError("column ids must be unique")
        self.column_ids = ids
        self._logp_rows: list[np.ndarray] = []
        self._loglik_rows: list[np.ndarray] = []

    @property
    def rows_filled(self) -> int:
        return len(self._logp_rows)

    @property
    def log_p(self) -> np.ndarray:
        if not self._logp_rows:
            return np.empty((0, len(self.column_ids)))
        return np.vstack(self._logp_rows)

    @property
    def log_lik(self) -> np.ndarray:
        if not self._loglik_rows:
            return np.empty((0, len(self.column_ids)))
        return np.vstack(self._loglik_rows)

    def append_group(self, logp_rows, loglik_rows, column_ids=None):
        """Append one group's rows (sample-subset order) to both matrices."""
        logp_rows = np.atleast_2d(np.asarray(logp_rows, dtype=np.float64))
        loglik_rows = np.atleast_2d(np.asarray(loglik_rows, dtype=np.float64))
        if logp_rows.shape != loglik_rows.shape:
            raise ValueError("log-p and log-likelihood blocks differ in shape")
        if logp_rows.shape[1] != len(self.column_ids):
            raise ValueError(
                f"expected {len(self.column_ids)} columns, got {logp_rows.shape[1]}"
            )
        if column_ids is not None and not np.array_equal(
            np.asarray(column_ids), self.column_ids
        ):
            raise ValueError("appended rows carry different column ids")
        if np.any(logp_rows > 0.0):
            raise ValueError("log p-values must be <= 0")
        for k in range(logp_rows.shape[0]):
            self._logp_rows.append(logp_rows[k].copy())
            self._loglik_rows.append(loglik_rows[k].copy())

    def drop_columns(self, removed_ids):
        """Remove columns by feature id, preserving the survivors' order."""
        removed = set(int(r) for r in removed_ids)
        if not removed:
            return
        have = set(self.column_ids.tolist())
        missing = removed - have
        if missing:
            raise KeyError(f"unknown column ids: {sorted(missing)}")
        keep = np.array([c not in removed for c in self.column_ids.tolist()])
        self.column_ids = self.column_ids[keep]
        self._logp_rows = [row[keep] for row in self._logp_rows]
        self._loglik_rows = [row[keep] for row in self._loglik_rows]

    def column_sums(self):
        """(sum of log p, sum of log-likelihood) per column over filled rows."""
        return self.log_p.sum(axis=0), self.log_lik.sum(axis=0)


def fisher_combine(log_ps) -> FisherResult:
    """Fisher's combined probability test on natural-log p-values.

    statistic = -2 * sum(log p_i), referred to chi-square with 2K degrees
    of freedom. K = 1 returns the input p-value unchanged (the chi-square(2)
    tail inverts -2 log p exactly).
    """
    arr = np.asarray(log_ps, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("cannot combine an empty set of p-values")
    if np.any(arr > 0.0):
        raise ValueError("log p-values must be <= 0")
    statistic = -2.0 * float(arr.sum())
    return FisherResult(statistic=statistic, log_p=chisq_log_sf(statistic, 2 * arr.size))


def combine_columns(ev: EvidenceMatrices) -> ColumnCombination:
    """Column-wise Fisher combination over all filled rows."""
    k = ev.rows_filled
    if k == 0:
        raise ValueError("no rows have been appended yet")
    colsum = ev.log_p.sum(axis=0)
    statistic = -2.0 * colsum
    log_p = np.array([chisq_log_sf(s, 2 * k) for s in statistic])
    return ColumnCombination(
        column_ids=ev.column_ids.copy(), statistic=statistic, log_p=log_p
    )

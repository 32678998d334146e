"""Bootstrap tests for early dropping, stopping, and returning of features.

Each heuristic resamples the rows of the evidence matrices with replacement
and counts how often a per-feature condition holds; the estimate includes
the original sample, so counts are divided by B + 1. One shared index matrix
drives all heuristics in a round, which keeps results independent of worker
count and invocation order.

Decisions compare Fisher statistics rather than p-values wherever the rows
are shared across columns (they always are), avoiding any tail evaluation
inside the bootstrap loop. Counting stops early once every feature's
decision is already determined (the bound check: a count can neither reach
the threshold nor be overtaken by the remaining iterations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .meta import EvidenceMatrices

__all__ = [
    "BootstrapConfig",
    "bootstrap_indices",
    "early_dropping",
    "early_stopping",
    "early_return",
    "early_stopping_backward",
]


@dataclass(frozen=True)
class BootstrapConfig:
    """Thresholds and sizing for the bootstrap tests.

    Thresholds above 1 can never be met (counts top out at B + 1), so they
    act as clean "never fire" switches. ``er_tol`` is the tolerance t of the
    early-return gap test; the comparison uses lt = log(t) <= 0.
    """

    b: int = 1000
    p_drop: float = 0.99
    p_stop: float = 0.99
    p_return: float = 0.95
    er_tol: float = 0.9
    alpha: float = 0.01
    seed: int = 0
    chunk_size: int = 128

    def __post_init__(self):
        if self.b < 1:
            raise ValueError("bootstrap iterations must be >= 1")
        for name in ("p_drop", "p_stop", "p_return"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.er_tol <= 1.0:
            raise ValueError("er_tol must lie in (0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")

    @property
    def lt(self) -> float:
        return math.log(self.er_tol)


def bootstrap_indices(n_rows: int, n_boot: int, rng) -> np.ndarray:
    """(B, K) matrix of row indices resampled with replacement."""
    if n_rows < 1:
        raise ValueError("need at least one row to resample")
    return rng.integers(0, n_rows, size=(n_boot, n_rows))


def _min_count(threshold: float, n_boot: int) -> int:
    """Smallest count c with c / (B + 1) >= threshold."""
    return int(math.ceil(threshold * (n_boot + 1) - 1e-9))


def _default_indices(ev, cfg):
    rng = np.random.default_rng(cfg.seed)
    return bootstrap_indices(ev.rows_filled, cfg.b, rng)


def _check_alignment(ev: EvidenceMatrices, alive):
    if not np.array_equal(ev.column_ids, np.asarray(list(alive), dtype=np.int64)):
        raise ValueError("alive set does not match evidence columns")


def _resampled_colsums(rows: np.ndarray, idx_chunk: np.ndarray) -> np.ndarray:
    """Column sums of each resample in the chunk; (chunk, columns)."""
    c, k = idx_chunk.shape
    occ = np.zeros((c, k))
    np.add.at(occ, (np.repeat(np.arange(c), k), idx_chunk.ravel()), 1.0)
    return occ @ rows


def _count_rest(matrix, indices, chunk, indicator, need, n_boot, initial):
    """Bootstrap indicator counts, seeded with the original-sample counts.

    ``indicator`` maps a (chunk, columns) matrix of resampled column sums to
    booleans. Stops as soon as every column's decision is settled: the count
    already reached ``need``, or the remaining iterations cannot lift it
    there. Counts never shrink, so decisions equal a full pass. Returns the
    bootstrap contribution only.
    """
    counts = initial.copy()
    done = 0
    for start in range(0, n_boot, chunk):
        idx = indices[start:start + chunk]
        sums = _resampled_colsums(matrix, idx)
        counts += indicator(sums).sum(axis=0)
        done += idx.shape[0]
        remaining = n_boot - done
        if np.all((counts >= need) | (counts + remaining < need)):
            break
    return counts - initial


def early_dropping(ev: EvidenceMatrices, remaining, alive, cfg: BootstrapConfig,
                   indices=None):
    """Drop features confidently independent of the target given the selected set.

    A feature leaves both the remaining and alive sets when the estimated
    probability that its combined p-value is at least alpha reaches p_drop.
    The p >= alpha comparison is done on Fisher statistics against the
    chi-square quantile at alpha with 2K degrees of freedom.
    """
    remaining = list(remaining)
    alive = list(alive)
    if not alive or ev.rows_filled == 0:
        return remaining, alive
    _check_alignment(ev, alive)
    if indices is None:
        indices = _default_indices(ev, cfg)
    n_boot = indices.shape[0]
    logp = ev.log_p
    k = ev.rows_filled
    # combined p >= alpha  <=>  -2 * colsum <= isf(alpha)  <=>  colsum >= bound
    bound = -0.5 * float(chi2.isf(cfg.alpha, 2 * k))
    need = _min_count(cfg.p_drop, n_boot)
    initial = (logp.sum(axis=0) >= bound).astype(np.int64)
    boot = _count_rest(
        logp, indices, cfg.chunk_size, lambda s: s >= bound, need, n_boot, initial
    )
    counts = initial + boot
    drop = counts >= need
    dropped = {alive[i] for i in np.nonzero(drop)[0]}
    return (
        [f for f in remaining if f not in dropped],
        [f for f in alive if f not in dropped],
    )


def early_stopping(ev: EvidenceMatrices, alive, cfg: BootstrapConfig, indices=None):
    """Retire from the current iteration features that confidently cannot win.

    The incumbent is the feature with the lowest combined p-value on the
    original sample (ties break to the lowest feature id); a feature leaves
    the alive set when the estimated probability that it ranks behind the
    incumbent reaches p_stop. The incumbent itself never leaves.
    """
    alive = list(alive)
    if len(alive) <= 1 or ev.rows_filled == 0:
        return alive
    _check_alignment(ev, alive)
    if indices is None:
        indices = _default_indices(ev, cfg)
    n_boot = indices.shape[0]
    logp = ev.log_p
    colsum = logp.sum(axis=0)
    best = int(np.argmin(colsum))  # lowest combined p; first index wins ties
    need = _min_count(cfg.p_stop, n_boot)
    initial = (colsum > colsum[best]).astype(np.int64)
    boot = _count_rest(
        logp, indices, cfg.chunk_size,
        lambda s: s > s[:, best][:, None], need, n_boot, initial,
    )
    counts = initial + boot
    stop = counts >= need
    return [f for i, f in enumerate(alive) if not stop[i]]


def early_return(ev: EvidenceMatrices, alive, cfg: BootstrapConfig, indices=None):
    """Collapse the iteration to the incumbent when no rival can beat it enough.

    Uses the log-likelihood matrix: if for every alive feature the summed
    log-likelihood gap to the incumbent is at least lt = log(er_tol) with
    probability at least p_return, the alive set becomes just the incumbent.
    Equally predictive features (gap 0 >= lt) therefore trigger the return.
    """
    alive = list(alive)
    if ev.rows_filled == 0 or not alive:
        return alive
    _check_alignment(ev, alive)
    if len(alive) == 1:
        return alive
    if indices is None:
        indices = _default_indices(ev, cfg)
    n_boot = indices.shape[0]
    loglik = ev.log_lik
    best = int(np.argmin(ev.log_p.sum(axis=0)))
    lt = cfg.lt
    need = _min_count(cfg.p_return, n_boot)
    lam = loglik.sum(axis=0)
    counts = ((lam[best] - lam) >= lt).astype(np.int64)
    counts += _count_rest(
        loglik, indices, cfg.chunk_size,
        lambda s: (s[:, best][:, None] - s) >= lt, need, n_boot, counts,
    )
    if np.all(counts >= need):
        return [alive[best]]
    return alive


def early_stopping_backward(ev: EvidenceMatrices, alive, cfg: BootstrapConfig,
                            indices=None):
    """Backward mirror of early stopping.

    The incumbent for removal is the feature with the highest combined
    p-value; a feature leaves the alive set when it confidently is not that
    removal candidate, i.e. ranks below the incumbent with probability at
    least p_stop. The incumbent itself never leaves.
    """
    alive = list(alive)
    if len(alive) <= 1 or ev.rows_filled == 0:
        return alive
    _check_alignment(ev, alive)
    if indices is None:
        indices = _default_indices(ev, cfg)
    n_boot = indices.shape[0]
    logp = ev.log_p
    colsum = logp.sum(axis=0)
    worst = int(np.argmax(colsum))  # highest combined p; first index wins ties
    need = _min_count(cfg.p_stop, n_boot)
    initial = (colsum < colsum[worst]).astype(np.int64)
    boot = _count_rest(
        logp, indices, cfg.chunk_size,
        lambda s: s < s[:, worst][:, None], need, n_boot, initial,
    )
    counts = initial + boot
    stop = counts >= need
    return [f for i, f in enumerate(alive) if not stop[i]]

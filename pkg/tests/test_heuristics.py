"""Tests for the bootstrap early-decision heuristics."""

import math

import numpy as np
import pytest
from scipy.stats import chi2

from pfbp.heuristics import (
    BootstrapConfig,
    _min_count,
    bootstrap_indices,
    early_dropping,
    early_return,
    early_stopping,
    early_stopping_backward,
)
from pfbp.meta import EvidenceMatrices, fisher_combine

CFG = BootstrapConfig(b=999, seed=0)
DISABLED = BootstrapConfig(b=199, p_drop=1.5, p_stop=1.5, p_return=1.5, seed=0)


def _evidence(logp, loglik=None, ids=None):
    logp = np.atleast_2d(np.asarray(logp, dtype=float))
    if loglik is None:
        loglik = np.zeros_like(logp)
    ids = list(range(logp.shape[1])) if ids is None else ids
    ev = EvidenceMatrices(ids)
    ev.append_group(logp, loglik)
    return ev


class TestConfig:
    def test_defaults(self):
        cfg = BootstrapConfig()
        assert cfg.b == 1000
        assert cfg.p_drop == cfg.p_stop == 0.99
        assert cfg.p_return == 0.95
        assert cfg.lt == pytest.approx(math.log(0.9))
        assert cfg.alpha == 0.01

    def test_validation(self):
        with pytest.raises(ValueError):
            BootstrapConfig(b=0)
        with pytest.raises(ValueError):
            BootstrapConfig(p_drop=0.0)
        with pytest.raises(ValueError):
            BootstrapConfig(er_tol=1.5)
        with pytest.raises(ValueError):
            BootstrapConfig(alpha=1.0)

    def test_count_threshold_from_documented_example(self):
        # with B = 999 and a 0.99 threshold, 990 of 1000 counts are needed
        assert _min_count(0.99, 999) == 990
        assert _min_count(0.95, 999) == 950
        assert _min_count(1.5, 999) == 1500  # disabled: unreachable


class TestEarlyDropping:
    def test_drop_needs_exactly_min_count(self):
        # column 0 is uninformative (p = 1) only in resamples that pick row 0
        # twice; build index sets holding the count exactly at/below the bar
        ev = _evidence(np.array([[0.0], [-100.0]]), ids=[7])
        cfg = BootstrapConfig(b=999, p_drop=0.99, alpha=0.01, seed=0)
        # a resample of [row0, row0] has combined p = 1 (success); anything
        # touching row 1 fails. The original sample fails too, so all 990
        # successes must come from resamples.
        idx = np.zeros((999, 2), dtype=np.int64)
        idx[:10] = 1
        r, a = early_dropping(ev, [7], [7], cfg, indices=idx)  # 989 successes
        assert r == [7] and a == [7]
        idx = np.zeros((999, 2), dtype=np.int64)
        idx[:9] = 1
        r, a = early_dropping(ev, [7], [7], cfg, indices=idx)  # 990 successes
        assert r == [] and a == []

    def test_all_p_one_always_dropped(self):
        ev = _evidence(np.zeros((15, 2)), ids=[3, 5])
        r, a = early_dropping(ev, [3, 5, 9], [3, 5], CFG)
        assert r == [9] and a == []

    def test_strong_column_never_dropped(self):
        logp = np.column_stack([np.full(15, -100.0), np.zeros(15)])
        ev = _evidence(logp, ids=[3, 5])
        r, a = early_dropping(ev, [3, 5], [3, 5], CFG)
        assert r == [3] and a == [3]

    def test_empty_alive_is_noop(self):
        ev = EvidenceMatrices([])
        r, a = early_dropping(ev, [1, 2], [], CFG)
        assert r == [1, 2] and a == []

    def test_dropped_leave_remaining_and_alive_together(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = int(rng.integers(1, 6))
            logp = -rng.exponential(2.0, size=(int(rng.integers(1, 20)), m))
            ids = sorted(rng.choice(50, size=m, replace=False).tolist())
            extra = [99]
            ev = _evidence(logp, ids=ids)
            r, a = early_dropping(ev, ids + extra, ids, CFG)
            dropped = set(ids) - set(a)
            assert set(r) == (set(ids + extra) - dropped)
            assert set(a) <= set(ids)


class TestEarlyStopping:
    def test_single_alive_unchanged(self):
        ev = _evidence(np.full((5, 1), -2.0), ids=[4])
        assert early_stopping(ev, [4], CFG) == [4]

    def test_identical_columns_both_survive(self):
        ev = _evidence(np.tile(np.full((15, 1), -3.0), (1, 2)))
        assert early_stopping(ev, [0, 1], CFG) == [0, 1]

    def test_weak_column_stopped_two_seeds_agree(self):
        logp = np.column_stack([
            np.full(15, math.log(1e-6)), np.full(15, math.log(0.5))
        ])
        for seed in (0, 12345):
            ev = _evidence(logp)
            out = early_stopping(ev, [0, 1], BootstrapConfig(b=999, seed=seed))
            assert out == [0]

    def test_incumbent_never_leaves(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            logp = -rng.exponential(1.0, size=(10, 4))
            ev = _evidence(logp)
            best = int(np.argmin(logp.sum(axis=0)))
            assert best in early_stopping(ev, [0, 1, 2, 3], CFG)


class TestEarlyReturn:
    def test_single_alive_returns_itself(self):
        ev = _evidence(np.full((3, 1), -1.0), np.full((3, 1), -5.0), ids=[2])
        assert early_return(ev, [2], CFG) == [2]

    def test_dominating_incumbent_fires(self):
        logp = np.column_stack([np.full(15, -5.0), np.full(15, -1.0)])
        loglik = np.column_stack([np.full(15, -10.0), np.full(15, -60.0)])
        ev = _evidence(logp, loglik)
        assert early_return(ev, [0, 1], CFG) == [0]

    def test_equally_predictive_columns_fire(self):
        # the designed case: the gap is 0 >= lt on every resample both ways
        logp = np.tile(np.full((15, 1), -2.0), (1, 2))
        loglik = np.tile(np.full((15, 1), -30.0), (1, 2))
        ev = _evidence(logp, loglik)
        assert early_return(ev, [0, 1], CFG) == [0]

    def test_interleaved_likelihoods_do_not_fire(self):
        rng = np.random.default_rng(2)
        loglik = np.column_stack([
            -30.0 + rng.normal(0, 5.0, 15), -30.0 + rng.normal(0, 5.0, 15)
        ])
        logp = np.column_stack([np.full(15, -3.0), np.full(15, -2.9)])
        ev = _evidence(logp, loglik)
        assert early_return(ev, [0, 1], CFG) == [0, 1]


class TestEarlyStoppingBackward:
    def test_single_alive_unchanged(self):
        ev = _evidence(np.full((4, 1), -0.5), ids=[3])
        assert early_stopping_backward(ev, [3], CFG) == [3]

    def test_identical_columns_both_survive(self):
        ev = _evidence(np.tile(np.full((15, 1), -1.0), (1, 2)))
        assert early_stopping_backward(ev, [0, 1], CFG) == [0, 1]

    def test_clearly_dependent_column_leaves_candidacy(self):
        # column 0 is strongly dependent, column 1 flat: the removal
        # candidate is column 1, and column 0 is confidently not it
        logp = np.column_stack([
            np.full(15, math.log(1e-6)), np.full(15, math.log(0.5))
        ])
        for seed in (0, 999):
            ev = _evidence(logp)
            out = early_stopping_backward(
                ev, [0, 1], BootstrapConfig(b=999, seed=seed)
            )
            assert out == [1]

    def test_removal_candidate_never_leaves(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            logp = -rng.exponential(1.0, size=(8, 3))
            ev = _evidence(logp)
            worst = int(np.argmax(logp.sum(axis=0)))
            assert worst in early_stopping_backward(ev, [0, 1, 2], CFG)


class TestSharedMachinery:
    def test_disabled_thresholds_change_nothing(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            m = int(rng.integers(1, 5))
            rows = int(rng.integers(1, 12))
            logp = -rng.exponential(1.0, size=(rows, m))
            loglik = -rng.exponential(5.0, size=(rows, m))
            ids = list(range(m))
            ev = _evidence(logp, loglik)
            r, a = early_dropping(ev, ids + [77], ids, DISABLED)
            assert r == ids + [77] and a == ids
            assert early_stopping(ev, ids, DISABLED) == ids
            assert early_return(ev, ids, DISABLED) == (ids if m > 1 else ids)
            assert early_stopping_backward(ev, ids, DISABLED) == ids

    def test_same_indices_drive_all_heuristics(self):
        # one index matrix can serve every heuristic in a round and none of
        # them mutates it
        rng = np.random.default_rng(5)
        logp = -rng.exponential(1.0, size=(12, 3))
        loglik = -rng.exponential(5.0, size=(12, 3))
        idx = bootstrap_indices(12, 999, np.random.default_rng(8))
        frozen = idx.copy()
        ev = _evidence(logp, loglik)
        early_dropping(ev, [0, 1, 2], [0, 1, 2], CFG, indices=idx)
        early_stopping(ev, [0, 1, 2], CFG, indices=idx)
        early_return(ev, [0, 1, 2], CFG, indices=idx)
        early_stopping_backward(ev, [0, 1, 2], CFG, indices=idx)
        np.testing.assert_array_equal(idx, frozen)

    def test_seeded_default_indices_deterministic(self):
        rng = np.random.default_rng(6)
        logp = -rng.exponential(1.0, size=(10, 4))
        ev1 = _evidence(logp)
        ev2 = _evidence(logp)
        assert early_stopping(ev1, [0, 1, 2, 3], CFG) == early_stopping(
            ev2, [0, 1, 2, 3], CFG
        )

    def test_chunk_size_never_changes_decisions(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            rows, m = int(rng.integers(2, 10)), int(rng.integers(2, 5))
            logp = -rng.exponential(1.5, size=(rows, m))
            loglik = -rng.exponential(5.0, size=(rows, m))
            idx = bootstrap_indices(rows, 200, np.random.default_rng(trial))
            outputs = []
            for chunk in (1, 7, 200):
                cfg = BootstrapConfig(b=200, seed=0, chunk_size=chunk)
                ev = _evidence(logp, loglik)
                outputs.append((
                    early_dropping(ev, list(range(m)), list(range(m)), cfg,
                                   indices=idx),
                    early_stopping(ev, list(range(m)), cfg, indices=idx),
                    early_return(ev, list(range(m)), cfg, indices=idx),
                ))
            assert outputs[0] == outputs[1] == outputs[2]

    def test_statistic_shortcut_equals_tail_comparison(self):
        # deciding p >= alpha on Fisher statistics must match deciding on
        # actual combined log p-values, across many random instances
        rng = np.random.default_rng(8)
        alpha = 0.01
        mismatches = 0
        for _ in range(1000):
            k = int(rng.integers(1, 12))
            logp = -rng.exponential(2.5, size=k)
            bound = -0.5 * float(chi2.isf(alpha, 2 * k))
            by_stat = logp.sum() >= bound
            by_tail = fisher_combine(logp).log_p >= math.log(alpha)
            mismatches += int(by_stat != by_tail)
        assert mismatches == 0

    def test_alignment_enforced(self):
        ev = _evidence(np.zeros((2, 2)), ids=[5, 6])
        with pytest.raises(ValueError):
            early_stopping(ev, [6, 5], CFG)

"""Tests for log-space evidence combination."""

import math

import numpy as np
import pytest

from pfbp.citest import chisq_log_sf
from pfbp.meta import EvidenceMatrices, combine_columns, fisher_combine


class TestFisherCombine:
    def test_single_value_identity(self):
        # combining one p-value must return it: chi2(2) inverts -2 log p
        for p in (0.9, 0.3, 0.05, 1e-8, 1e-200):
            log_p = math.log(p)
            out = fisher_combine([log_p])
            assert out.log_p == pytest.approx(log_p, rel=1e-12)

    def test_all_ones_combine_to_one(self):
        out = fisher_combine([0.0, 0.0])
        assert out.statistic == 0.0 and out.log_p == 0.0

    def test_two_p05_values(self):
        out = fisher_combine([math.log(0.05)] * 2)
        assert out.statistic == pytest.approx(11.982929094215963, rel=1e-12)
        # chi2(4) tail from the 50-digit quadrature oracle
        assert out.log_p == pytest.approx(-4.0467744924783984236, rel=1e-10)

    def test_rejects_empty_and_positive(self):
        with pytest.raises(ValueError):
            fisher_combine([])
        with pytest.raises(ValueError):
            fisher_combine([0.1])

    def test_more_agreeing_evidence_strengthens_rejection(self):
        log_p = math.log(0.05)
        combined = [fisher_combine([log_p] * k).log_p for k in range(1, 11)]
        assert all(a > b for a, b in zip(combined, combined[1:]))

    def test_no_underflow_with_deep_tails(self):
        out = fisher_combine([-1e4] * 100)
        assert math.isfinite(out.statistic) and math.isfinite(out.log_p)
        assert out.log_p < -1e5


def _random_evidence(rng, rows, ids):
    ev = EvidenceMatrices(ids)
    logp = -rng.exponential(1.0, size=(rows, len(ids)))
    loglik = -rng.exponential(10.0, size=(rows, len(ids)))
    ev.append_group(logp, loglik)
    return ev, logp, loglik


class TestEvidenceMatrices:
    def test_append_counts_rows(self):
        ev = EvidenceMatrices([1, 2, 3])
        assert ev.rows_filled == 0
        ev.append_group(np.zeros((15, 3)), np.zeros((15, 3)))
        assert ev.rows_filled == 15
        ev.append_group(np.zeros((15, 3)), np.zeros((15, 3)))
        assert ev.rows_filled == 30

    def test_append_validates_shape_and_ids(self):
        ev = EvidenceMatrices([1, 2])
        with pytest.raises(ValueError):
            ev.append_group(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            ev.append_group(np.zeros((2, 2)), np.zeros((3, 2)))
        with pytest.raises(ValueError):
            ev.append_group(np.zeros((2, 2)), np.zeros((2, 2)), column_ids=[2, 1])
        with pytest.raises(ValueError):
            ev.append_group(np.full((1, 2), 0.5), np.zeros((1, 2)))

    def test_drop_to_single_column(self):
        rng = np.random.default_rng(0)
        ev, logp, _ = _random_evidence(rng, 4, [5, 7, 9])
        ev.drop_columns([5, 9])
        assert ev.column_ids.tolist() == [7]
        np.testing.assert_array_equal(ev.log_p, logp[:, [1]])

    def test_drop_nothing_is_identity(self):
        rng = np.random.default_rng(1)
        ev, logp, loglik = _random_evidence(rng, 3, [1, 2])
        ev.drop_columns([])
        np.testing.assert_array_equal(ev.log_p, logp)
        np.testing.assert_array_equal(ev.log_lik, loglik)

    def test_drop_unknown_id_rejected(self):
        ev = EvidenceMatrices([1, 2])
        ev.append_group(np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(KeyError):
            ev.drop_columns([99])

    def test_random_sequences_match_rebuild(self):
        # state-machine test: interleaved appends and drops must equal a
        # shadow rebuilt from plain arrays
        rng = np.random.default_rng(42)
        for _ in range(25):
            ids = list(range(int(rng.integers(2, 9))))
            ev = EvidenceMatrices(ids)
            shadow_logp = np.empty((0, len(ids)))
            shadow_loglik = np.empty((0, len(ids)))
            alive = list(ids)
            for _ in range(int(rng.integers(1, 6))):
                rows = int(rng.integers(1, 5))
                lp = -rng.exponential(size=(rows, len(alive)))
                ll = -rng.exponential(size=(rows, len(alive)))
                ev.append_group(lp, ll, column_ids=alive)
                shadow_logp = np.vstack([shadow_logp, lp])
                shadow_loglik = np.vstack([shadow_loglik, ll])
                if len(alive) > 1 and rng.random() < 0.5:
                    kill = sorted(
                        rng.choice(alive, size=int(rng.integers(1, len(alive))),
                                   replace=False).tolist()
                    )
                    keep = [c not in kill for c in alive]
                    ev.drop_columns(kill)
                    shadow_logp = shadow_logp[:, keep]
                    shadow_loglik = shadow_loglik[:, keep]
                    alive = [c for c in alive if c not in kill]
            assert ev.column_ids.tolist() == alive
            np.testing.assert_array_equal(ev.log_p, shadow_logp)
            np.testing.assert_array_equal(ev.log_lik, shadow_loglik)


class TestCombineColumns:
    def test_single_row_is_identity(self):
        rng = np.random.default_rng(2)
        ev, logp, _ = _random_evidence(rng, 1, [0, 1, 2])
        out = combine_columns(ev)
        np.testing.assert_allclose(out.log_p, logp[0], rtol=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(3)
        ev, logp, _ = _random_evidence(rng, 15, list(range(3)))
        out = combine_columns(ev)
        for j in range(3):
            scalar = fisher_combine(logp[:, j])
            assert out.statistic[j] == pytest.approx(scalar.statistic, rel=1e-12)
            assert out.log_p[j] == pytest.approx(scalar.log_p, rel=1e-12)

    def test_column_permutation_equivariance(self):
        rng = np.random.default_rng(4)
        logp = -rng.exponential(size=(6, 4))
        loglik = -rng.exponential(size=(6, 4))
        ev = EvidenceMatrices([0, 1, 2, 3])
        ev.append_group(logp, loglik)
        perm = [2, 0, 3, 1]
        ev_p = EvidenceMatrices(perm)
        ev_p.append_group(logp[:, perm], loglik[:, perm])
        np.testing.assert_allclose(
            combine_columns(ev).log_p[perm], combine_columns(ev_p).log_p
        )

    def test_requires_rows(self):
        with pytest.raises(ValueError):
            combine_columns(EvidenceMatrices([1]))

    def test_statistic_consistent_with_tail(self):
        rng = np.random.default_rng(5)
        ev, _, _ = _random_evidence(rng, 7, [0, 1])
        out = combine_columns(ev)
        for stat, lp in zip(out.statistic, out.log_p):
            assert lp == pytest.approx(chisq_log_sf(stat, 14), rel=1e-12)

"""Selection engine: runs, forward/backward phases, group-sequential evidence.

The master loop owns all mutable state (selected / remaining / alive sets
and the evidence matrices). Workers only ever see immutable data plus small
task tuples, compute local tests for one block, and hand back rows of log
p-values and log-likelihoods; rows are reduced in sample-subset order at the
group barrier, which makes every run reproducible for a fixed seed no
matter how many workers execute the blocks.

A plain forward-backward pass over the unpartitioned data is included as
``fbs_baseline``; with a single sample subset and all shortcuts off, the
partitioned engine reproduces its selections exactly, which the test suite
uses as an oracle.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .citest import chisq_log_sf, fit_logistic, lrt, lrt_sweep, score_test_univariate
from .data import Dataset, PartitionPlan
from .heuristics import (
    BootstrapConfig,
    bootstrap_indices,
    early_dropping,
    early_return,
    early_stopping,
    early_stopping_backward,
)
from .meta import EvidenceMatrices, combine_columns
from .model import CombinedModel, combine_models

__all__ = [
    "PfbpConfig",
    "SelectionState",
    "IterationRecord",
    "SelectionResult",
    "pfbp",
    "fbs_baseline",
    "adapt_group_stride",
]


@dataclass(frozen=True)
class PfbpConfig:
    """All knobs of one selection run.

    ``heuristics=False`` skips the bootstrap tests entirely;
    ``univariate_score_test=False`` forces likelihood-ratio tests even in
    the first iteration (needed when exact agreement with the unpartitioned
    baseline is required).
    """

    max_vars: int = 50
    max_runs: int = 2
    alpha: float = 0.01
    workers: int = 1
    seed: int = 0
    bootstrap_b: int = 1000
    p_drop: float = 0.99
    p_stop: float = 0.99
    p_return: float = 0.95
    er_tol: float = 0.9
    heuristics: bool = True
    univariate_score_test: bool = True
    evidence_dump_dir: str | None = None

    def __post_init__(self):
        if self.max_vars < 1:
            raise ValueError("max_vars must be >= 1")
        if self.max_runs < 1:
            raise ValueError("max_runs must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def bootstrap_config(self) -> BootstrapConfig:
        return BootstrapConfig(
            b=self.bootstrap_b,
            p_drop=self.p_drop,
            p_stop=self.p_stop,
            p_return=self.p_return,
            er_tol=self.er_tol,
            alpha=self.alpha,
            seed=self.seed,
        )


@dataclass
class SelectionState:
    """Mutable view of one iteration's sets and stride bookkeeping."""

    selected: list
    remaining: list
    alive: list
    run_index: int
    phase: str
    groups_processed_this_iteration: int = 0
    current_group_stride: int = 1
    unchanged_batches: int = 0


def adapt_group_stride(state: SelectionState, alive_before, alive_after,
                       remaining_before, remaining_after) -> int:
    """Double the per-batch group stride after two unchanged batch checks.

    Any change to the alive or remaining sets resets the unchanged streak
    but keeps the current stride. The stride itself resets to one group at
    the start of every forward iteration (handled by the iteration setup).
    """
    unchanged = (
        list(alive_before) == list(alive_after)
        and list(remaining_before) == list(remaining_after)
    )
    if unchanged:
        state.unchanged_batches += 1
        if state.unchanged_batches >= 2:
            state.current_group_stride *= 2
            state.unchanged_batches = 0
    else:
        state.unchanged_batches = 0
    return state.current_group_stride


@dataclass
class IterationRecord:
    """Trace entry for one forward or backward iteration."""

    run_index: int
    phase: str
    chosen: int | None
    removed: int | None
    combined_log_p: float | None
    groups_processed: int
    n_remaining_before: int
    n_remaining_after: int
    alive_trajectory: list
    n_dropped: int
    n_stopped: int
    early_return_fired: bool
    n_warnings: int
    model: CombinedModel | None
    seconds: float

    def to_dict(self):
        return {
            "run_index": self.run_index,
            "phase": self.phase,
            "chosen": self.chosen,
            "removed": self.removed,
            "combined_log_p": self.combined_log_p,
            "groups_processed": self.groups_processed,
            "n_remaining_before": self.n_remaining_before,
            "n_remaining_after": self.n_remaining_after,
            "alive_trajectory": list(self.alive_trajectory),
            "n_dropped": self.n_dropped,
            "n_stopped": self.n_stopped,
            "early_return_fired": self.early_return_fired,
            "n_warnings": self.n_warnings,
            "model": self.model.to_dict() if self.model else None,
            "seconds": self.seconds,
        }


@dataclass
class SelectionResult:
    selected: list
    trace: list = field(default_factory=list)
    runs_executed: int = 0
    final_model: CombinedModel | None = None

    def to_dict(self):
        return {
            "selected": list(self.selected),
            "runs_executed": self.runs_executed,
            "final_model": self.final_model.to_dict() if self.final_model else None,
            "trace": [rec.to_dict() for rec in self.trace],
        }

    def iteration_models(self):
        """Models of forward iterations that selected a feature, in order."""
        return [
            rec.model
            for rec in self.trace
            if rec.phase == "forward" and rec.chosen is not None and rec.model
        ]


def _block_task(args):
    """Local tests for one (sample subset, feature subset, alive cols) task.

    Pure function of the forked payload and the argument tuple. Returns
    per-column log p-values and full-model log-likelihoods, plus the fitted
    full-model coefficients when a model was fit. Failures of individual
    tests degrade to uninformative entries and a warning count.
    """
    mode, subset_id, fs_id, selected, cols = args
    ds, plan = parallel.get_payload()
    rows = plan.sample_subset_rows(subset_id)
    y = ds.target[rows].astype(np.float64)
    m = len(cols)
    logp = np.zeros(m)
    loglik = np.zeros(m)
    betas = [None] * m
    warnings = 0

    if y.min() == y.max():  # single-class slice: no discriminative evidence
        return (subset_id, fs_id, cols, logp, loglik, betas, warnings)

    if mode == "score":
        for k, c in enumerate(cols):
            try:
                res = score_test_univariate(ds.values[rows, c], y)
                logp[k] = res.log_p
            except Exception:
                warnings += 1
        return (subset_id, fs_id, cols, logp, loglik, betas, warnings)

    x_sel = ds.values[np.ix_(rows, list(selected))] if selected else None

    if mode == "forward":
        null_fit = fit_logistic(x_sel if x_sel is not None else np.empty((len(y), 0)), y)
        try:
            results = lrt_sweep(
                y, ds.values[np.ix_(rows, list(cols))], x_sel, null_fit=null_fit
            )
        except Exception:
            results = None
        if results is None:  # degraded path: test columns one by one
            for k, c in enumerate(cols):
                try:
                    res = lrt(y, ds.values[rows, c], x_sel, null_fit=null_fit)
                    logp[k] = res.log_p
                    loglik[k] = 0.0 if res.uninformative else res.log_likelihood_full
                    betas[k] = res.beta_full
                except Exception:
                    warnings += 1
        else:
            for k, res in enumerate(results):
                logp[k] = res.log_p
                loglik[k] = 0.0 if res.uninformative else res.log_likelihood_full
                betas[k] = res.beta_full
        return (subset_id, fs_id, cols, logp, loglik, betas, warnings)

    if mode == "backward":
        full = fit_logistic(x_sel, y)
        sel = list(selected)
        for k, c in enumerate(cols):
            try:
                keep = [idx for idx, f in enumerate(sel) if f != c]
                init = full.beta[[0] + [idx + 1 for idx in keep]]
                null = fit_logistic(x_sel[:, keep], y, beta_init=init)
                stat = max(0.0, 2.0 * (full.log_likelihood - null.log_likelihood))
                logp[k] = chisq_log_sf(stat, 1)
            except Exception:
                warnings += 1
        return (subset_id, fs_id, cols, logp, loglik, betas, warnings)

    raise ValueError(f"unknown task mode {mode!r}")


def _fit_task(args):
    """Local logistic fit over the given feature ids for one sample subset."""
    subset_id, feature_ids = args
    ds, plan = parallel.get_payload()
    rows = plan.sample_subset_rows(subset_id)
    y = ds.target[rows].astype(np.float64)
    if y.min() == y.max():
        return (subset_id, None)
    fit = fit_logistic(ds.values[np.ix_(rows, list(feature_ids))], y)
    return (subset_id, fit.beta)


class _Driver:
    def __init__(self, ds: Dataset, plan: PartitionPlan, cfg: PfbpConfig):
        if plan.n_samples != ds.n_samples or plan.n_features != ds.n_features:
            raise ValueError("plan does not match dataset shape")
        p0, p1 = ds.class_frequencies()
        if p0 == 0.0 or p1 == 0.0:
            raise ValueError("target has a single class; selection needs both")
        self.ds = ds
        self.plan = plan
        self.cfg = cfg
        self.bcfg = cfg.bootstrap_config()
        self.ln_alpha = math.log(cfg.alpha)
        self.pool = None
        self.round_counter = 0
        self.trace = []

    # -- bootstrap index stream, one matrix per heuristic round ------------
    def _round_indices(self, k_rows):
        rng = np.random.default_rng([self.cfg.seed, self.round_counter])
        self.round_counter += 1
        return bootstrap_indices(k_rows, self.bcfg.b, rng)

    def run(self) -> SelectionResult:
        selected = []
        runs = 0
        with parallel.BlockPool(self.cfg.workers, payload=(self.ds, self.plan)) as pool:
            self.pool = pool
            for run_index in range(1, self.cfg.max_runs + 1):
                before = list(selected)
                selected = self._one_run(selected, run_index)
                runs += 1
                if selected == before:
                    break
            final_model = None
            if selected:
                betas = self._subset_betas(range(self.plan.ns), selected)
                if betas:
                    final_model = combine_models(betas, selected)
        return SelectionResult(
            selected=selected,
            trace=self.trace,
            runs_executed=runs,
            final_model=final_model,
        )

    def _one_run(self, selected, run_index):
        selected = list(selected)
        remaining = [f for f in range(self.plan.n_features) if f not in selected]
        while len(selected) < self.cfg.max_vars and remaining:
            new_selected, remaining = self._forward_iteration(
                selected, remaining, run_index
            )
            if new_selected == selected:
                break
            selected = new_selected
        while selected:
            new_selected = self._backward_iteration(selected, run_index)
            if new_selected == selected:
                break
            selected = new_selected
        return selected

    def _forward_iteration(self, selected, remaining, run_index):
        t0 = time.perf_counter()
        n_remaining_before = len(remaining)
        alive = sorted(remaining)
        use_score = (not selected) and self.cfg.univariate_score_test
        mode = "score" if use_score else "forward"
        ev = EvidenceMatrices(alive)
        state = SelectionState(
            selected=selected,
            remaining=list(remaining),
            alive=alive,
            run_index=run_index,
            phase="forward",
        )
        beta_rows = []
        processed_subsets = []
        alive_traj = [len(alive)]
        n_dropped = n_stopped = warnings = 0
        er_fired = False
        remaining = list(remaining)

        q = 0
        while q < self.plan.Q:
            batch = list(range(q, min(q + state.current_group_stride, self.plan.Q)))
            logp_rows, ll_rows, betas, subs, nwarn = self._process_groups(
                batch, selected, alive, mode
            )
            ev.append_group(logp_rows, ll_rows)
            beta_rows.extend(betas)
            processed_subsets.extend(subs)
            warnings += nwarn
            state.groups_processed_this_iteration += len(batch)
            q = batch[-1] + 1

            if self.cfg.heuristics:
                remaining_before, alive_before = list(remaining), list(alive)
                idx = self._round_indices(ev.rows_filled)
                remaining, alive = early_dropping(ev, remaining, alive, self.bcfg, idx)
                dropped = set(alive_before) - set(alive)
                if dropped:
                    ev.drop_columns(dropped)
                n_dropped += len(dropped)

                kept = early_stopping(ev, alive, self.bcfg, idx)
                stopped = set(alive) - set(kept)
                if stopped:
                    ev.drop_columns(stopped)
                n_stopped += len(stopped)
                alive = kept

                if not use_score and len(alive) >= 2:
                    returned = early_return(ev, alive, self.bcfg, idx)
                    if len(returned) < len(alive):
                        er_fired = True
                        ev.drop_columns(set(alive) - set(returned))
                        alive = returned

                adapt_group_stride(
                    state, alive_before, alive, remaining_before, remaining
                )
                state.alive, state.remaining = alive, remaining
                assert set(alive) <= set(remaining)
                assert not set(selected) & set(remaining)

            alive_traj.append(len(alive))
            if len(alive) <= 1:
                break

        chosen = None
        combined_lp = None
        model = None
        if alive:
            comb = combine_columns(ev)
            pos = int(np.argmin(comb.log_p))  # ties: lowest feature id
            combined_lp = float(comb.log_p[pos])
            if combined_lp <= self.ln_alpha:
                chosen = alive[pos]
                selected = selected + [chosen]
                remaining = [f for f in remaining if f != chosen]
                model = self._iteration_model(
                    chosen, selected, beta_rows, processed_subsets, use_score
                )

        self._dump_evidence(ev, run_index, "forward")
        self.trace.append(IterationRecord(
            run_index=run_index,
            phase="forward",
            chosen=chosen,
            removed=None,
            combined_log_p=combined_lp,
            groups_processed=state.groups_processed_this_iteration,
            n_remaining_before=n_remaining_before,
            n_remaining_after=len(remaining),
            alive_trajectory=alive_traj,
            n_dropped=n_dropped,
            n_stopped=n_stopped,
            early_return_fired=er_fired,
            n_warnings=warnings,
            model=model,
            seconds=time.perf_counter() - t0,
        ))
        return selected, remaining

    def _iteration_model(self, chosen, selected, beta_rows, subsets, use_score):
        if use_score:
            betas = self._subset_betas(subsets, selected)
        else:
            betas = [row[chosen] for row in beta_rows if row.get(chosen) is not None]
            if not betas:
                betas = self._subset_betas(subsets, selected)
        if not betas:
            return None
        return combine_models(betas, selected)

    def _subset_betas(self, subset_ids, feature_ids):
        """Per-subset logistic fits over the given features (both classes only)."""
        feats = tuple(feature_ids)
        results = self.pool.run(_fit_task, [(i, feats) for i in subset_ids])
        return [beta for _, beta in results if beta is not None]

    def _backward_iteration(self, selected, run_index):
        t0 = time.perf_counter()
        n_selected_before = len(selected)
        alive = sorted(selected)
        ev = EvidenceMatrices(alive)
        groups_processed = 0
        n_stopped = warnings = 0
        alive_traj = [len(alive)]
        processed_subsets = []

        q = 0
        while q < self.plan.Q:
            logp_rows, ll_rows, _, subs, nwarn = self._process_groups(
                [q], selected, alive, "backward"
            )
            ev.append_group(logp_rows, ll_rows)
            processed_subsets.extend(subs)
            warnings += nwarn
            groups_processed += 1
            q += 1

            if self.cfg.heuristics:
                idx = self._round_indices(ev.rows_filled)
                kept = early_stopping_backward(ev, alive, self.bcfg, idx)
                stopped = set(alive) - set(kept)
                if stopped:
                    ev.drop_columns(stopped)
                n_stopped += len(stopped)
                alive = kept

            alive_traj.append(len(alive))
            if len(alive) <= 1:
                break

        comb = combine_columns(ev)
        pos = int(np.argmax(comb.log_p))  # ties: lowest feature id
        combined_lp = float(comb.log_p[pos])
        removed = None
        if combined_lp > self.ln_alpha:
            removed = alive[pos]
            selected = [f for f in selected if f != removed]

        model = None
        if selected:
            betas = self._subset_betas(processed_subsets, selected)
            if betas:
                model = combine_models(betas, selected)

        self._dump_evidence(ev, run_index, "backward")
        self.trace.append(IterationRecord(
            run_index=run_index,
            phase="backward",
            chosen=None,
            removed=removed,
            combined_log_p=combined_lp,
            groups_processed=groups_processed,
            n_remaining_before=n_selected_before,
            n_remaining_after=len(selected),
            alive_trajectory=alive_traj,
            n_dropped=0,
            n_stopped=n_stopped,
            early_return_fired=False,
            n_warnings=warnings,
            model=model,
            seconds=time.perf_counter() - t0,
        ))
        return selected

    def _process_groups(self, group_ids, selected, alive, mode):
        """Run block tasks for the given groups; rows in sample-subset order."""
        plan = self.plan
        subset_ids = [i for g in group_ids for i in plan.group_members(g)]
        alive_arr = np.asarray(alive, dtype=np.int64)
        fs_of_alive = plan.feature_assignment[alive_arr]
        fs_groups = []
        for j in sorted(set(fs_of_alive.tolist())):
            cols = tuple(int(c) for c in alive_arr[fs_of_alive == j])
            fs_groups.append((j, cols))
        tasks = [
            (mode, i, j, tuple(selected), cols)
            for i in subset_ids
            for (j, cols) in fs_groups
        ]
        results = self.pool.run(_block_task, tasks)

        row_of = {i: k for k, i in enumerate(subset_ids)}
        pos_of = {c: k for k, c in enumerate(alive)}
        logp = np.zeros((len(subset_ids), len(alive)))
        loglik = np.zeros_like(logp)
        betas = [dict() for _ in subset_ids]
        warnings = 0
        for subset_id, _fs, cols, lp, ll, bs, nwarn in results:
            r = row_of[subset_id]
            warnings += nwarn
            for k, c in enumerate(cols):
                pos = pos_of[c]
                logp[r, pos] = lp[k]
                loglik[r, pos] = ll[k]
                if bs[k] is not None:
                    betas[r][c] = bs[k]
        return logp, loglik, betas, subset_ids, warnings

    def _dump_evidence(self, ev, run_index, phase):
        out_dir = self.cfg.evidence_dump_dir
        if not out_dir:
            return
        os.makedirs(out_dir, exist_ok=True)
        tag = f"run{run_index}_iter{len(self.trace):03d}_{phase}"
        header = ",".join(str(c) for c in ev.column_ids.tolist())
        for name, mat in (("logp", ev.log_p), ("loglik", ev.log_lik)):
            path = os.path.join(out_dir, f"{tag}_{name}.csv")
            np.savetxt(path, mat, delimiter=",", header=header, comments="")


def pfbp(ds: Dataset, plan: PartitionPlan, cfg: PfbpConfig) -> SelectionResult:
    """Partitioned forward-backward selection; see module docstring."""
    return _Driver(ds, plan, cfg).run()


def fbs_baseline(ds: Dataset, alpha: float = 0.01, max_vars: int = 50, opts=None):
    """Plain forward-backward selection on the whole dataset (oracle path).

    Forward: add the feature with the smallest likelihood-ratio p-value
    conditioned on the current selection while it stays at or below alpha.
    Backward: remove the feature with the largest p-value conditioned on
    the rest while it exceeds alpha. Ties break to the lowest feature id.
    """
    if max_vars < 1:
        raise ValueError("max_vars must be >= 1")
    y = ds.target.astype(np.float64)
    if y.min() == y.max():
        raise ValueError("target has a single class; selection needs both")
    values = ds.values
    ln_alpha = math.log(alpha)
    selected = []

    while len(selected) < max_vars:
        cond = values[:, selected] if selected else None
        null_fit = fit_logistic(
            cond if cond is not None else np.empty((len(y), 0)), y, opts
        )
        best, best_lp = None, math.inf
        for c in range(ds.n_features):
            if c in selected:
                continue
            res = lrt(y, values[:, c], cond, opts, null_fit=null_fit)
            if res.log_p < best_lp:
                best, best_lp = c, res.log_p
        if best is None or best_lp > ln_alpha:
            break
        selected.append(best)

    while selected:
        worst, worst_lp = None, -math.inf
        for c in sorted(selected):
            cond_feats = [f for f in selected if f != c]
            cond = values[:, cond_feats] if cond_feats else None
            res = lrt(y, values[:, c], cond, opts)
            if res.log_p > worst_lp:
                worst, worst_lp = c, res.log_p
        if worst_lp > ln_alpha:
            selected.remove(worst)
        else:
            break

    return selected

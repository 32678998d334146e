"""Validation experiments: agreement, sizing-rule back-solve, scaling bench.

The agreement experiment asks how often a selection decision made from
Fisher-combined per-subset p-values matches the decision made from a single
test over all rows. The sizing-rule experiment back-solves the constant of
the STD and EPV rules from agreement curves. The bench harness times whole
selection runs over scaling grids.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from concurrent.futures import ProcessPoolExecutor

from .citest import fit_logistic, lrt_sweep
from .data import make_partition_plan
from .engine import PfbpConfig, pfbp
from .synth import generate_bn, markov_blanket_features, sample_bn

__all__ = [
    "agreement_fraction",
    "agreement_matrix",
    "agreement_experiment",
    "back_solved_constants",
    "constant_spread",
    "bench_point",
    "bench_grids",
]


def _pick_winner(y, values, candidates, conditioning, n_subsets):
    """Candidate with the strongest evidence, combined over row chunks.

    Rows are cut into ``n_subsets`` contiguous chunks (they are iid by
    construction); the per-chunk log p-values are summed per candidate,
    which orders candidates exactly like the Fisher-combined p-value. With
    one chunk this is the plain full-data test.
    """
    n = len(y)
    bounds = np.linspace(0, n, n_subsets + 1).astype(int)
    cand_values = values[:, candidates]
    colsums = np.zeros(len(candidates))
    for b in range(n_subsets):
        rows = slice(bounds[b], bounds[b + 1])
        y_s = y[rows]
        if y_s.min() == y_s.max():
            continue
        cond = values[rows][:, conditioning] if conditioning else None
        null_fit = fit_logistic(
            cond if cond is not None else np.empty((len(y_s), 0)), y_s
        )
        results = lrt_sweep(y_s, cand_values[rows], cond, null_fit=null_fit)
        colsums += np.array([r.log_p for r in results])
    return candidates[int(np.argmin(colsums))]


def _agreement_rep(args):
    """One repetition: dict cond_size -> 1/0 agreement of split vs full winner."""
    (n_vars, class_freq, error_sd, connectivity, cond_sizes, n_subsets,
     samples_per_subset, seed, rep) = args
    rng = np.random.default_rng([seed, rep])
    need = max(max(cond_sizes), 1)
    net = None
    for attempt in range(50):
        net = generate_bn(
            n_vars + 1, connectivity, error_sd, class_freq,
            seed=[seed, rep, attempt],
        )
        if len(markov_blanket_features(net)) >= need:
            break
    ds, mb = sample_bn(net, n_subsets * samples_per_subset, seed=[seed, rep, 99])
    y = ds.target.astype(np.float64)
    out = {}
    for k in cond_sizes:
        conditioning = sorted(
            rng.choice(mb, size=k, replace=False).tolist()
        ) if k else []
        candidates = [f for f in range(ds.n_features) if f not in conditioning]
        global_best = _pick_winner(y, ds.values, candidates, conditioning, 1)
        local_best = _pick_winner(y, ds.values, candidates, conditioning, n_subsets)
        out[k] = int(global_best == local_best)
    return out


def agreement_matrix(
    cond_sizes,
    n_vars=100,
    class_freq=0.5,
    error_sd=1.0,
    connectivity=10,
    n_subsets=10,
    samples_per_subset=5000,
    reps=50,
    seed=0,
    workers=1,
):
    """Agreement fraction per conditioning size, sharing datasets across sizes.

    Each repetition draws one network and dataset, then for every requested
    conditioning size picks that many random Markov-blanket members as the
    already-selected set and compares the winning candidate of the
    full-data likelihood-ratio tests against the winner of the combined
    per-subset tests. Repetitions run in parallel when ``workers`` > 1.
    """
    cond_sizes = tuple(cond_sizes)
    tasks = [
        (n_vars, class_freq, error_sd, connectivity, cond_sizes, n_subsets,
         samples_per_subset, seed, rep)
        for rep in range(reps)
    ]
    if workers > 1:
        import multiprocessing
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            rows = list(pool.map(_agreement_rep, tasks))
    else:
        rows = [_agreement_rep(t) for t in tasks]
    return {k: sum(r[k] for r in rows) / reps for k in cond_sizes}


def agreement_fraction(
    n_vars=100,
    class_freq=0.5,
    error_sd=1.0,
    connectivity=10,
    cond_size=0,
    n_subsets=10,
    samples_per_subset=5000,
    reps=50,
    seed=0,
    workers=1,
):
    """Single-cell convenience wrapper around ``agreement_matrix``."""
    return agreement_matrix(
        (cond_size,),
        n_vars=n_vars,
        class_freq=class_freq,
        error_sd=error_sd,
        connectivity=connectivity,
        n_subsets=n_subsets,
        samples_per_subset=samples_per_subset,
        reps=reps,
        seed=seed,
        workers=workers,
    )[cond_size]


def agreement_experiment(
    samples_per_subset_grid,
    cond_sizes=(0, 1, 2, 3),
    n_subsets=10,
    class_freqs=(0.5,),
    n_vars=100,
    error_sd=1.0,
    connectivity=10,
    reps=50,
    seed=0,
    workers=1,
):
    """Agreement fractions over a grid; returns one record dict per cell."""
    records = []
    for freq in class_freqs:
        for spp in samples_per_subset_grid:
            by_k = agreement_matrix(
                cond_sizes,
                n_vars=n_vars,
                class_freq=freq,
                error_sd=error_sd,
                connectivity=connectivity,
                n_subsets=n_subsets,
                samples_per_subset=spp,
                reps=reps,
                seed=seed,
                workers=workers,
            )
            for k in cond_sizes:
                records.append({
                    "class_freq": freq,
                    "cond_size": k,
                    "n_subsets": n_subsets,
                    "samples_per_subset": spp,
                    "reps": reps,
                    "agreement": by_k[k],
                })
    return records


def back_solved_constants(
    class_freqs=(0.5, 0.6, 0.7, 0.8, 0.9),
    cond_sizes=(0, 1),
    samples_per_subset_grid=(25, 45, 80, 140, 250, 440),
    n_subsets=10,
    n_vars=100,
    error_sd=1.0,
    connectivity=10,
    reps=20,
    band=(0.85, 0.95),
    seed=0,
    workers=1,
):
    """Back-solve the sizing constant c of the STD and EPV rules per grid row.

    For each (class frequency, degrees of freedom) row, the per-subset
    sample sizes whose agreement lands inside ``band`` are converted to c
    via the respective rule (c = s * min(p0,p1) / df for EPV, c = s *
    sqrt(p0*p1) / df for STD) and the median is kept. A row with no in-band
    cell falls back to the cell closest to the band midpoint. Returns
    {"std": {(p_max, df): median_c}, "epv": {...}}.
    """
    out = {"std": {}, "epv": {}}
    mid = 0.5 * (band[0] + band[1])
    for freq in class_freqs:
        p1 = freq
        p0 = 1.0 - freq
        p_max = max(p0, p1)
        for k in cond_sizes:
            df = k + 2  # intercept + conditioning + candidate
            cells = []
            for spp in samples_per_subset_grid:
                frac = agreement_fraction(
                    n_vars=n_vars,
                    class_freq=freq,
                    error_sd=error_sd,
                    connectivity=connectivity,
                    cond_size=k,
                    n_subsets=n_subsets,
                    samples_per_subset=spp,
                    reps=reps,
                    seed=seed,
                    workers=workers,
                )
                cells.append((spp, frac))
            in_band = [s for s, a in cells if band[0] <= a <= band[1]]
            if not in_band:
                in_band = [min(cells, key=lambda c: abs(c[1] - mid))[0]]
            s_med = float(np.median(in_band))
            out["epv"][(p_max, df)] = s_med * min(p0, p1) / df
            out["std"][(p_max, df)] = s_med * math.sqrt(p0 * p1) / df
    return out


def constant_spread(medians: dict) -> float:
    """max/min ratio of the back-solved constants across grid rows."""
    vals = list(medians.values())
    return max(vals) / min(vals)


def _bench_dataset(n_samples, n_features, seed, connectivity=3.0, error_sd=1.0):
    net = generate_bn(n_features + 1, connectivity, error_sd, 0.5, seed)
    ds, _ = sample_bn(net, n_samples, seed)
    return ds


def bench_point(
    n_samples,
    n_features,
    workers=1,
    max_vars=8,
    runs=1,
    seed=0,
    heuristics=True,
    c_rule=10.0,
    connectivity=3.0,
):
    """Wall-clock seconds of one selection run on a fresh synthetic dataset."""
    ds = _bench_dataset(n_samples, n_features, seed, connectivity=connectivity)
    plan = make_partition_plan(
        ds, max_vars=max_vars, c_rule=c_rule, workers=workers, seed=seed
    )
    cfg = PfbpConfig(
        max_vars=max_vars,
        max_runs=runs,
        workers=workers,
        seed=seed,
        heuristics=heuristics,
    )
    t0 = time.perf_counter()
    pfbp(ds, plan, cfg)
    return time.perf_counter() - t0


def bench_grids(
    feature_grid=(),
    sample_grid=(),
    worker_grid=(),
    base_samples=40000,
    base_features=100,
    max_vars=8,
    runs=1,
    seed=0,
):
    """Time selection runs over scaling grids; one warm-up run is discarded.

    Returns records {"dimension", "value", "seconds", "relative"}, relative
    to the first grid point of each dimension.
    """
    records = []
    if feature_grid or sample_grid or worker_grid:
        bench_point(  # warm-up: imports, allocator, BLAS threads
            min(base_samples, 10000), min(base_features, 50),
            max_vars=3, runs=1, seed=seed,
        )
    for dimension, grid in (
        ("features", feature_grid),
        ("samples", sample_grid),
        ("workers", worker_grid),
    ):
        first = None
        for value in grid:
            kwargs = {
                "n_samples": base_samples,
                "n_features": base_features,
                "max_vars": max_vars,
                "runs": runs,
                "seed": seed,
            }
            if dimension == "features":
                kwargs["n_features"] = value
            elif dimension == "samples":
                kwargs["n_samples"] = value
            else:
                kwargs["workers"] = value
            seconds = bench_point(**kwargs)
            if first is None:
                first = seconds
            records.append({
                "dimension": dimension,
                "value": value,
                "seconds": seconds,
                "relative": seconds / first,
            })
    return records

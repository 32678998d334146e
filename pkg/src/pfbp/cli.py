"""Command-line surface: selection runs, data generation, experiments.

Every command resolves a RunConfig (defaults < --config JSON < explicit
flags), writes its primary output plus a ``<output>.run.json`` sidecar with
the resolved configuration and artifact version, and honors --seed
end-to-end. Exit codes: 0 success, 2 configuration error, 3 load error,
1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .data import load_dataset, make_partition_plan, save_dataset, split_holdout
from .engine import PfbpConfig, pfbp
from .errors import ConfigError, LoadError, PfbpError
from .experiments import agreement_experiment, bench_grids
from .model import accuracy_curve
from .parallel import default_workers
from .synth import generate_bn, generate_snp, markov_blanket, markov_blanket_features, sample_bn

__all__ = ["RunConfig", "main"]


@dataclass
class RunConfig:
    """Every knob of every subcommand; JSON round-trips losslessly."""

    # data / selection
    data: str | None = None
    target: str = "T"
    fmt: str | None = None
    out: str | None = None
    max_vars: int = 50
    runs: int = 2
    alpha: float = 0.01
    workers: int = 0  # 0 = PFBP_WORKERS env or 1
    seed: int = 0
    rule: str = "std"
    c_rule: float = 10.0
    oversubscription: float = 1.0
    group_size: int = 15
    holdout: float = 0.0
    curve_out: str | None = None
    dump_evidence: str | None = None
    truth: str | None = None
    # heuristics
    bootstrap_b: int = 1000
    p_drop: float = 0.99
    p_stop: float = 0.99
    p_return: float = 0.95
    er_tol: float = 0.9
    heuristics: bool = True
    univariate_score_test: bool = True
    # generators
    nodes: int = 101
    connectivity: float = 10.0
    class_freq: float = 0.5
    error_sd: float = 1.0
    samples: int = 10000
    individuals: int = 1000
    snps: int = 200
    causal: int = 10
    heritability: float = 0.7
    # experiments
    repetitions: int = 50
    cond_sizes: list = dataclasses.field(default_factory=lambda: [0, 1, 2, 3])
    subset_sizes: list = dataclasses.field(default_factory=lambda: [1000, 5000])
    n_subsets: int = 10
    n_vars: int = 100
    feature_grid: list = dataclasses.field(default_factory=list)
    sample_grid: list = dataclasses.field(default_factory=list)
    worker_grid: list = dataclasses.field(default_factory=list)
    base_samples: int = 40000
    base_features: int = 100

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    def resolved_workers(self) -> int:
        return self.workers if self.workers >= 1 else default_workers()

    def engine_config(self) -> PfbpConfig:
        return PfbpConfig(
            max_vars=self.max_vars,
            max_runs=self.runs,
            alpha=self.alpha,
            workers=self.resolved_workers(),
            seed=self.seed,
            bootstrap_b=self.bootstrap_b,
            p_drop=self.p_drop,
            p_stop=self.p_stop,
            p_return=self.p_return,
            er_tol=self.er_tol,
            heuristics=self.heuristics,
            univariate_score_test=self.univariate_score_test,
            evidence_dump_dir=self.dump_evidence,
        )


def _write_sidecar(output_path, cfg: RunConfig, command: str):
    sidecar = Path(str(output_path) + ".run.json")
    sidecar.write_text(json.dumps({
        "version": __version__,
        "command": command,
        "config": dataclasses.asdict(cfg),
    }, indent=2))


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            payload = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config file must hold a JSON object")
        base = payload
    cfg = RunConfig.from_dict(base)
    overrides = {
        k: v for k, v in vars(args).items()
        if k not in ("config", "command", "func") and v is not None
    }
    try:
        return dataclasses.replace(cfg, **overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _truth_set(path):
    payload = json.loads(Path(path).read_text())
    for key in ("markov_blanket_features", "causal_ids", "features"):
        if key in payload:
            return set(int(v) for v in payload[key])
    raise ConfigError(f"{path}: no recognized truth key")


def cmd_select(cfg: RunConfig) -> int:
    if not cfg.data or not cfg.out:
        raise ConfigError("select needs --data and --out")
    ds = load_dataset(cfg.data, fmt=cfg.fmt, target=cfg.target)
    holdout = None
    if cfg.holdout > 0.0:
        ds, holdout = split_holdout(ds, cfg.holdout, seed=cfg.seed)
    plan = make_partition_plan(
        ds,
        max_vars=cfg.max_vars,
        c_rule=cfg.c_rule,
        rule=cfg.rule,
        workers=cfg.resolved_workers(),
        oversubscription=cfg.oversubscription,
        group_size=cfg.group_size,
        seed=cfg.seed,
    )
    result = pfbp(ds, plan, cfg.engine_config())
    payload = result.to_dict()
    payload["plan"] = {
        "s": plan.s, "ns": plan.ns, "f": plan.f, "nf": plan.nf,
        "C": plan.C, "Q": plan.Q, "undersized": plan.undersized,
        "required_s": plan.required_s, "rng_seed": plan.rng_seed,
    }
    if cfg.truth:
        truth = _truth_set(cfg.truth)
        hits = truth & set(result.selected)
        payload["truth_eval"] = {
            "truth_size": len(truth),
            "selected_size": len(result.selected),
            "precision": len(hits) / len(result.selected) if result.selected else 0.0,
            "recall": len(hits) / len(truth) if truth else 1.0,
        }
    if holdout is not None:
        models = result.iteration_models()
        if models:
            accs = accuracy_curve(holdout.values, holdout.target, models)
            payload["holdout_accuracy"] = [float(a) for a in accs]
            if cfg.curve_out:
                with open(cfg.curve_out, "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["iteration", "n_features", "accuracy"])
                    for i, (mdl, acc) in enumerate(zip(models, accs), start=1):
                        writer.writerow([i, len(mdl.feature_ids), float(acc)])
                _write_sidecar(cfg.curve_out, cfg, "select")
    Path(cfg.out).write_text(json.dumps(payload, indent=2))
    _write_sidecar(cfg.out, cfg, "select")
    return 0


def cmd_gen_bn(cfg: RunConfig) -> int:
    if not cfg.out:
        raise ConfigError("gen-bn needs --out")
    net = generate_bn(cfg.nodes, cfg.connectivity, cfg.error_sd, cfg.class_freq, cfg.seed)
    ds, mb_features = sample_bn(net, cfg.samples, cfg.seed)
    save_dataset(ds, cfg.out, fmt=cfg.fmt)
    if cfg.truth:
        Path(cfg.truth).write_text(json.dumps({
            "markov_blanket_features": mb_features,
            "markov_blanket_nodes": markov_blanket(net),
            "target_node": net.target_index,
        }, indent=2))
        _write_sidecar(cfg.truth, cfg, "gen-bn")
    _write_sidecar(cfg.out, cfg, "gen-bn")
    return 0


def cmd_gen_snp(cfg: RunConfig) -> int:
    if not cfg.out:
        raise ConfigError("gen-snp needs --out")
    ds, causal = generate_snp(
        cfg.individuals, cfg.snps, cfg.causal, cfg.heritability, cfg.seed
    )
    save_dataset(ds, cfg.out, fmt=cfg.fmt)
    if cfg.truth:
        Path(cfg.truth).write_text(json.dumps({"causal_ids": causal}, indent=2))
        _write_sidecar(cfg.truth, cfg, "gen-snp")
    _write_sidecar(cfg.out, cfg, "gen-snp")
    return 0


def cmd_agreement(cfg: RunConfig) -> int:
    if not cfg.out:
        raise ConfigError("agreement needs --out")
    records = agreement_experiment(
        samples_per_subset_grid=cfg.subset_sizes,
        cond_sizes=cfg.cond_sizes,
        n_subsets=cfg.n_subsets,
        class_freqs=[cfg.class_freq],
        n_vars=cfg.n_vars,
        error_sd=cfg.error_sd,
        connectivity=cfg.connectivity,
        reps=cfg.repetitions,
        seed=cfg.seed,
    )
    with open(cfg.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0].keys()))
        writer.writeheader()
        writer.writerows(records)
    _write_sidecar(cfg.out, cfg, "agreement")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    if not cfg.out:
        raise ConfigError("bench needs --out")
    records = bench_grids(
        feature_grid=cfg.feature_grid,
        sample_grid=cfg.sample_grid,
        worker_grid=cfg.worker_grid,
        base_samples=cfg.base_samples,
        base_features=cfg.base_features,
        max_vars=cfg.max_vars if cfg.max_vars != 50 else 8,
        runs=cfg.runs,
        seed=cfg.seed,
    )
    if not records:
        raise ConfigError("bench needs at least one non-empty grid")
    with open(cfg.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0].keys()))
        writer.writeheader()
        writer.writerows(records)
    _write_sidecar(cfg.out, cfg, "bench")
    return 0


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _add_common(sub):
    sub.add_argument("--config", help="JSON file with RunConfig keys")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfbp")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sel = subs.add_parser("select", help="run feature selection on a dataset")
    _add_common(sel)
    sel.add_argument("--data")
    sel.add_argument("--target")
    sel.add_argument("--format", dest="fmt", choices=["csv", "binary"])
    sel.add_argument("--max-vars", dest="max_vars", type=int)
    sel.add_argument("--runs", type=int)
    sel.add_argument("--alpha", type=float)
    sel.add_argument("--workers", type=int)
    sel.add_argument("--rule", choices=["std", "epv"])
    sel.add_argument("--c-rule", dest="c_rule", type=float)
    sel.add_argument("--oversubscription", type=float)
    sel.add_argument("--group-size", dest="group_size", type=int)
    sel.add_argument("--holdout", type=float)
    sel.add_argument("--curve-out", dest="curve_out")
    sel.add_argument("--dump-evidence", dest="dump_evidence")
    sel.add_argument("--truth")
    sel.add_argument("--bootstrap-b", dest="bootstrap_b", type=int)
    sel.add_argument("--p-drop", dest="p_drop", type=float)
    sel.add_argument("--p-stop", dest="p_stop", type=float)
    sel.add_argument("--p-return", dest="p_return", type=float)
    sel.add_argument("--er-tol", dest="er_tol", type=float)
    sel.add_argument("--no-heuristics", dest="heuristics", action="store_false",
                     default=None)
    sel.add_argument("--no-score-univariate", dest="univariate_score_test",
                     action="store_false", default=None)
    sel.set_defaults(func=cmd_select)

    gbn = subs.add_parser("gen-bn", help="generate network-structured data")
    _add_common(gbn)
    gbn.add_argument("--nodes", type=int)
    gbn.add_argument("--connectivity", type=float)
    gbn.add_argument("--class-freq", dest="class_freq", type=float)
    gbn.add_argument("--error-sd", dest="error_sd", type=float)
    gbn.add_argument("--samples", type=int)
    gbn.add_argument("--truth")
    gbn.add_argument("--format", dest="fmt", choices=["csv", "binary"])
    gbn.set_defaults(func=cmd_gen_bn)

    gsnp = subs.add_parser("gen-snp", help="generate genotype/phenotype data")
    _add_common(gsnp)
    gsnp.add_argument("--individuals", type=int)
    gsnp.add_argument("--snps", type=int)
    gsnp.add_argument("--causal", type=int)
    gsnp.add_argument("--heritability", type=float)
    gsnp.add_argument("--truth")
    gsnp.add_argument("--format", dest="fmt", choices=["csv", "binary"])
    gsnp.set_defaults(func=cmd_gen_snp)

    agr = subs.add_parser("agreement", help="split-vs-full decision agreement grid")
    _add_common(agr)
    agr.add_argument("--n-vars", dest="n_vars", type=int)
    agr.add_argument("--class-freq", dest="class_freq", type=float)
    agr.add_argument("--error-sd", dest="error_sd", type=float)
    agr.add_argument("--connectivity", type=float)
    agr.add_argument("--cond-sizes", dest="cond_sizes", type=_int_list)
    agr.add_argument("--subset-sizes", dest="subset_sizes", type=_int_list)
    agr.add_argument("--n-subsets", dest="n_subsets", type=int)
    agr.add_argument("--repetitions", type=int)
    agr.set_defaults(func=cmd_agreement)

    ben = subs.add_parser("bench", help="time selection runs over scaling grids")
    _add_common(ben)
    ben.add_argument("--feature-grid", dest="feature_grid", type=_int_list)
    ben.add_argument("--sample-grid", dest="sample_grid", type=_int_list)
    ben.add_argument("--worker-grid", dest="worker_grid", type=_int_list)
    ben.add_argument("--base-samples", dest="base_samples", type=int)
    ben.add_argument("--base-features", dest="base_features", type=int)
    ben.add_argument("--max-vars", dest="max_vars", type=int)
    ben.add_argument("--runs", type=int)
    ben.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LoadError as exc:
        print(f"load error: {exc}", file=sys.stderr)
        return 3
    except PfbpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

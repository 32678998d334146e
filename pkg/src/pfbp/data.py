"""Datasets, partition plans, and data blocks.

A dataset is a dense numeric matrix with a binary target. A partition plan
splits its rows into about equal-sized sample subsets (via a seeded random
permutation), its columns into contiguous feature subsets, and batches the
sample subsets into groups; the (sample subset, feature subset) cells are
the data blocks handed to workers. Both structures are immutable once built
and safe for concurrent readers.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, LoadError, MissingValueError, NonBinaryTargetError

__all__ = [
    "Dataset",
    "PartitionPlan",
    "DataBlock",
    "load_dataset",
    "save_dataset",
    "required_samples",
    "make_partition_plan",
    "manual_partition_plan",
    "block",
    "split_holdout",
]

_MAGIC = b"PFBP"
_BINARY_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """Dense row-major matrix (rows = samples) with a 0/1 target vector."""

    values: np.ndarray
    target: np.ndarray
    feature_names: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        target = np.asarray(self.target)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        n, p = values.shape
        if n < 2:
            raise ValueError("need at least 2 samples")
        if p < 1:
            raise ValueError("need at least 1 feature")
        if target.shape != (n,):
            raise ValueError("target length does not match sample count")
        if not np.all(np.isfinite(values)):
            raise MissingValueError("values contain NaN or infinite cells")
        if not np.isin(target, (0, 1)).all():
            raise NonBinaryTargetError("target must contain only 0 and 1")
        names = self.feature_names
        if names is not None:
            names = tuple(str(c) for c in names)
            if len(names) != p:
                raise ValueError("feature_names length does not match feature count")
        target = target.astype(np.uint8)
        values.setflags(write=False)
        target.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def class_frequencies(self):
        """(p0, p1): empirical frequencies of target 0 and 1."""
        p1 = float(self.target.mean())
        return 1.0 - p1, p1


@dataclass(frozen=True)
class PartitionPlan:
    """Two-axis partition of a dataset into blocks batched in groups.

    ``s`` is the realized samples-per-subset (ceil(n/ns)); subsets differ in
    size by at most one row. ``required_s`` is the minimum dictated by the
    sizing rule; ``undersized`` flags plans where the rule asked for more
    rows than the dataset has (forcing a single subset).
    """

    n_samples: int
    n_features: int
    s: int
    ns: int
    f: int
    nf: int
    C: int
    Q: int
    row_permutation: np.ndarray
    feature_assignment: np.ndarray
    rng_seed: int
    required_s: int
    undersized: bool = False
    _subset_bounds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        perm = np.asarray(self.row_permutation, dtype=np.int64)
        assign = np.asarray(self.feature_assignment, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n_samples)):
            raise ValueError("row_permutation is not a permutation of the samples")
        if assign.shape != (self.n_features,):
            raise ValueError("feature_assignment length does not match features")
        if self.ns < 1 or self.nf < 1 or self.C < 1:
            raise ValueError("subset counts must be positive")
        if self.Q != math.ceil(self.ns / self.C):
            raise ValueError("Q inconsistent with ns and C")
        perm.setflags(write=False)
        assign.setflags(write=False)
        object.__setattr__(self, "row_permutation", perm)
        object.__setattr__(self, "feature_assignment", assign)
        # subset i holds permuted rows [bounds[i], bounds[i+1])
        base = self.n_samples // self.ns
        extra = self.n_samples % self.ns
        sizes = np.full(self.ns, base, dtype=np.int64)
        sizes[:extra] += 1
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        bounds.setflags(write=False)
        object.__setattr__(self, "_subset_bounds", bounds)

    def sample_subset_rows(self, i: int) -> np.ndarray:
        if not 0 <= i < self.ns:
            raise IndexError(f"sample subset id {i} out of range")
        lo, hi = self._subset_bounds[i], self._subset_bounds[i + 1]
        return self.row_permutation[lo:hi]

    def feature_subset_cols(self, j: int) -> np.ndarray:
        if not 0 <= j < self.nf:
            raise IndexError(f"feature subset id {j} out of range")
        return np.nonzero(self.feature_assignment == j)[0]

    def group_members(self, q: int) -> range:
        """Sample-subset ids in group q."""
        if not 0 <= q < self.Q:
            raise IndexError(f"group id {q} out of range")
        return range(q * self.C, min((q + 1) * self.C, self.ns))

    def to_json(self) -> str:
        payload = {
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "s": self.s,
            "ns": self.ns,
            "f": self.f,
            "nf": self.nf,
            "C": self.C,
            "Q": self.Q,
            "row_permutation": self.row_permutation.tolist(),
            "feature_assignment": self.feature_assignment.tolist(),
            "rng_seed": self.rng_seed,
            "required_s": self.required_s,
            "undersized": self.undersized,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        payload = json.loads(text)
        payload["row_permutation"] = np.asarray(payload["row_permutation"])
        payload["feature_assignment"] = np.asarray(payload["feature_assignment"])
        return cls(**payload)


@dataclass(frozen=True)
class DataBlock:
    """One (sample subset, feature subset) cell of the partition."""

    sample_subset_id: int
    feature_subset_id: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    target_slice: np.ndarray


def load_dataset(path, fmt=None, target="T"):
    """Read a dataset from CSV (header row required) or the binary format.

    ``target`` names or indexes the CSV target column; the binary format
    stores the target itself. ``fmt`` defaults by file extension
    (".csv" vs anything else = binary).
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"no such file: {path}")
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "binary"
    if fmt == "csv":
        return _load_csv(path, target)
    if fmt == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown format {fmt!r}")


def _load_csv(path, target):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if not header:
        raise FormatError(f"{path}: empty file")
    names = [c.strip() for c in header.split(",")]
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: could not parse numeric data ({exc})") from exc
    if raw.shape[1] != len(names):
        raise FormatError(f"{path}: header has {len(names)} columns, data has {raw.shape[1]}")
    if isinstance(target, int):
        t_idx = target if target >= 0 else len(names) + target
        if not 0 <= t_idx < len(names):
            raise FormatError(f"{path}: target index {target} out of range")
    else:
        if target not in names:
            raise FormatError(f"{path}: no column named {target!r}")
        t_idx = names.index(target)
    t_col = raw[:, t_idx]
    values = np.delete(raw, t_idx, axis=1)
    feat_names = [c for i, c in enumerate(names) if i != t_idx]
    if np.isnan(t_col).any() or np.isnan(values).any():
        raise MissingValueError(f"{path}: NaN cell present")
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(t_col)):
        raise MissingValueError(f"{path}: infinite cell present")
    if not np.isin(t_col, (0.0, 1.0)).all():
        raise NonBinaryTargetError(f"{path}: target column is not 0/1")
    return Dataset(values=values, target=t_col.astype(np.uint8), feature_names=feat_names)


def _load_binary(path):
    blob = path.read_bytes()
    head = struct.calcsize("<4sIQQ")
    if len(blob) < head:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, p = struct.unpack_from("<4sIQQ", blob, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _BINARY_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    need = head + 8 * n * p + n
    if len(blob) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f8", count=n * p, offset=head)
    values = flat.reshape((p, n)).T.copy()  # stored column-major
    target = np.frombuffer(blob, dtype=np.uint8, count=n, offset=head + 8 * n * p)
    if np.isnan(values).any():
        raise MissingValueError(f"{path}: NaN cell present")
    if not np.isin(target, (0, 1)).all():
        raise NonBinaryTargetError(f"{path}: target bytes are not 0/1")
    return Dataset(values=values, target=target.copy())


def save_dataset(ds: Dataset, path, fmt=None):
    """Write a dataset as CSV or binary; binary round-trips bit-exactly."""
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "binary"
    if fmt == "csv":
        names = ds.feature_names or tuple(f"x{i}" for i in range(ds.n_features))
        header = ",".join(list(names) + ["T"])
        body = np.hstack([ds.values, ds.target[:, None].astype(np.float64)])
        np.savetxt(path, body, delimiter=",", header=header, comments="", fmt="%.17g")
    elif fmt == "binary":
        n, p = ds.n_samples, ds.n_features
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIQQ", _MAGIC, _BINARY_VERSION, n, p))
            fh.write(np.ascontiguousarray(ds.values.T, dtype="<f8").tobytes())
            fh.write(ds.target.astype(np.uint8).tobytes())
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def required_samples(max_vars, c_rule, p0, p1, rule="std"):
    """Minimum rows per sample subset under the STD or EPV sizing rule.

    Worst-case degrees of freedom are max_vars + 1 (all-continuous model
    with intercept). STD divides by sqrt(p0*p1), EPV by min(p0, p1); the
    two agree for balanced classes and STD asks for less under skew.
    """
    if max_vars < 1:
        raise ValueError("max_vars must be >= 1")
    if not (0.0 < p0 < 1.0 and 0.0 < p1 < 1.0):
        raise ValueError("class frequencies must lie strictly in (0, 1)")
    df = max_vars + 1
    rule = rule.lower()
    if rule == "std":
        denom = math.sqrt(p0 * p1)
    elif rule == "epv":
        denom = min(p0, p1)
    else:
        raise ValueError(f"unknown sizing rule {rule!r}")
    return int(math.ceil(df * c_rule / denom))


def make_partition_plan(
    ds: Dataset,
    max_vars: int,
    c_rule: float = 10.0,
    rule: str = "std",
    workers: int = 1,
    oversubscription: float = 1.0,
    group_size: int = 15,
    seed: int = 0,
) -> PartitionPlan:
    """Build a partition plan for ``ds`` sized by the STD or EPV rule.

    Rows are permuted by a seeded RNG, then cut into ns = floor(n / s_rule)
    about equal subsets; features are cut, in order of occurrence, into
    nf = max(1, floor(oversubscription * workers / group_size)) contiguous
    subsets. A rule size exceeding the dataset forces a single subset and
    flags the plan as undersized.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    p0, p1 = ds.class_frequencies()
    if p0 == 0.0 or p1 == 0.0:
        raise ValueError("target has a single class; selection needs both")
    s_rule = required_samples(max_vars, c_rule, p0, p1, rule)
    n = ds.n_samples
    undersized = s_rule > n
    ns = 1 if undersized else max(1, n // s_rule)
    s = math.ceil(n / ns)
    nf = max(1, int(oversubscription * workers) // group_size)
    nf = min(nf, ds.n_features)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    p = ds.n_features
    base, extra = p // nf, p % nf
    assign = np.repeat(
        np.arange(nf), np.where(np.arange(nf) < extra, base + 1, base)
    )
    return PartitionPlan(
        n_samples=n,
        n_features=p,
        s=s,
        ns=ns,
        f=math.ceil(p / nf),
        nf=nf,
        C=group_size,
        Q=math.ceil(ns / group_size),
        row_permutation=perm,
        feature_assignment=assign,
        rng_seed=seed,
        required_s=s_rule,
        undersized=undersized,
    )


def manual_partition_plan(ds: Dataset, ns: int, nf: int = 1, group_size: int = 15,
                          seed: int = 0) -> PartitionPlan:
    """Plan with explicit subset counts, for experiments and baselines."""
    if not 1 <= ns <= ds.n_samples:
        raise ValueError("ns must be between 1 and n_samples")
    nf = min(max(1, nf), ds.n_features)
    n, p = ds.n_samples, ds.n_features
    rng = np.random.default_rng(seed)
    base, extra = p // nf, p % nf
    assign = np.repeat(
        np.arange(nf), np.where(np.arange(nf) < extra, base + 1, base)
    )
    s = math.ceil(n / ns)
    return PartitionPlan(
        n_samples=n,
        n_features=p,
        s=s,
        ns=ns,
        f=math.ceil(p / nf),
        nf=nf,
        C=group_size,
        Q=math.ceil(ns / group_size),
        row_permutation=rng.permutation(n),
        feature_assignment=assign,
        rng_seed=seed,
        required_s=s,
    )


def block(ds: Dataset, plan: PartitionPlan, i: int, j: int) -> DataBlock:
    """Extract the (i, j) data block under the plan's permutation."""
    if plan.n_samples != ds.n_samples or plan.n_features != ds.n_features:
        raise ValueError("plan was built for a different dataset shape")
    rows = plan.sample_subset_rows(i)
    cols = plan.feature_subset_cols(j)
    return DataBlock(
        sample_subset_id=i,
        feature_subset_id=j,
        rows=rows,
        cols=cols,
        values=ds.values[np.ix_(rows, cols)],
        target_slice=ds.target[rows],
    )


def split_holdout(ds: Dataset, fraction: float, seed: int = 0):
    """Split off a seeded holdout slice; returns (train, holdout)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("holdout fraction must be in (0, 1)")
    n = ds.n_samples
    n_hold = max(1, int(round(fraction * n)))
    if n - n_hold < 2:
        raise ValueError("holdout leaves too few training rows")
    perm = np.random.default_rng(seed).permutation(n)
    hold, train = perm[:n_hold], perm[n_hold:]
    names = ds.feature_names
    return (
        Dataset(values=ds.values[train], target=ds.target[train], feature_names=names),
        Dataset(values=ds.values[hold], target=ds.target[hold], feature_names=names),
    )

"""Ground-truthed synthetic data generators.

Two families: linear-Gaussian Bayesian networks with a thresholded binary
target (the network's Markov blanket is the known-correct selection), and
SNP-style genotype matrices with an additive phenotype binarized by sign
(the causal SNP set is the truth). Generation is deterministic per seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data import Dataset

__all__ = [
    "BayesNet",
    "generate_bn",
    "sample_bn",
    "markov_blanket",
    "markov_blanket_features",
    "generate_snp",
]

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class BayesNet:
    """Linear-Gaussian DAG with one binary node acting as the target.

    Edges only run from lower to higher node index, so the index order is a
    topological order. ``parents[j]`` and ``coefficients[j]`` describe node
    j's structural equation; every continuous node gets divided by its
    nominal standard deviation sqrt(sigma^2 + sum(beta^2)).
    """

    n_nodes: int
    parents: tuple
    coefficients: tuple
    error_sd: float
    target_index: int
    threshold: float

    def __post_init__(self):
        if len(self.parents) != self.n_nodes or len(self.coefficients) != self.n_nodes:
            raise ValueError("parents/coefficients must cover every node")
        for j, (pa, co) in enumerate(zip(self.parents, self.coefficients)):
            if any(p >= j for p in pa):
                raise ValueError("edges must point from lower to higher index")
            if len(pa) != len(co):
                raise ValueError("coefficient count must match parent count")


def generate_bn(n_nodes, connectivity, error_sd, class_freq, seed) -> BayesNet:
    """Random DAG with pairwise edge probability connectivity / (n_nodes - 1).

    Coefficients are drawn uniformly from [-1, -0.1] union [0.1, 1] (never
    near zero). The target sits at position ceil(n_nodes / 2) in topological
    order and fires when its standardized log-odds exceed the standard
    normal quantile at 1 - class_freq, so ``class_freq`` is the approximate
    frequency of class 1 (0.5 maps to threshold 0).
    """
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    if not 0 < connectivity < n_nodes:
        raise ValueError("connectivity must lie in (0, n_nodes)")
    if not 0.0 < class_freq < 1.0:
        raise ValueError("class_freq must lie in (0, 1)")
    if error_sd <= 0.0:
        raise ValueError("error_sd must be positive")
    rng = np.random.default_rng(seed)
    edge_p = connectivity / (n_nodes - 1)
    parents = []
    coefficients = []
    for j in range(n_nodes):
        mask = rng.random(j) < edge_p
        pa = tuple(int(i) for i in np.nonzero(mask)[0])
        mags = rng.uniform(0.1, 1.0, size=len(pa))
        signs = rng.integers(0, 2, size=len(pa)) * 2 - 1
        parents.append(pa)
        coefficients.append(tuple(float(c) for c in mags * signs))
    target_index = math.ceil(n_nodes / 2) - 1
    threshold = _STD_NORMAL.inv_cdf(1.0 - class_freq)
    return BayesNet(
        n_nodes=n_nodes,
        parents=tuple(parents),
        coefficients=tuple(coefficients),
        error_sd=float(error_sd),
        target_index=target_index,
        threshold=threshold,
    )


def markov_blanket(net: BayesNet):
    """Node ids of the target's parents, children, and spouses."""
    t = net.target_index
    parents = set(net.parents[t])
    children = {j for j in range(net.n_nodes) if t in net.parents[j]}
    spouses = set()
    for child in children:
        spouses.update(net.parents[child])
    spouses.discard(t)
    return sorted(parents | children | spouses)


def markov_blanket_features(net: BayesNet):
    """Markov blanket as feature-column indices of a sampled dataset."""
    t = net.target_index
    return [v if v < t else v - 1 for v in markov_blanket(net)]


def sample_bn(net: BayesNet, n_samples, seed):
    """Draw samples in topological order; returns (Dataset, blanket columns).

    Continuous nodes are divided by their nominal standard deviation; the
    target thresholds its standardized log-odds (noise included). Nodes
    downstream of the target consume its 0/1 value directly, so they are
    only approximately normal, which is fine for test data.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    cols = np.empty((n_samples, net.n_nodes))
    sd = net.error_sd
    target = None
    for j in range(net.n_nodes):
        acc = rng.normal(0.0, sd, size=n_samples)
        for p, c in zip(net.parents[j], net.coefficients[j]):
            acc += c * cols[:, p]
        scale = math.sqrt(sd * sd + sum(c * c for c in net.coefficients[j]))
        acc /= scale
        if j == net.target_index:
            target = (acc > net.threshold).astype(np.uint8)
            cols[:, j] = target
        else:
            cols[:, j] = acc
    values = np.delete(cols, net.target_index, axis=1)
    names = tuple(
        f"V{j}" for j in range(net.n_nodes) if j != net.target_index
    )
    ds = Dataset(values=values, target=target, feature_names=names)
    return ds, markov_blanket_features(net)


def generate_snp(n_individuals, n_snps, m_causal, heritability, seed):
    """Genotype matrix in {0,1,2} with an additive binary phenotype.

    Allele frequencies are uniform on (0.05, 0.95) and genotypes binomial
    with two draws (monomorphic columns are redrawn). The phenotype sums
    standardized causal columns weighted by standard-normal effects, adds
    noise with variance var(g) * (1 - h2) / h2, and binarizes by sign, so
    the classes come out roughly balanced. Returns (Dataset, causal ids).
    """
    if not 1 <= m_causal <= n_snps:
        raise ValueError("m_causal must lie in [1, n_snps]")
    if not 0.0 < heritability < 1.0:
        raise ValueError("heritability must lie in (0, 1)")
    if n_individuals < 2:
        raise ValueError("need at least 2 individuals")
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.05, 0.95, size=n_snps)
    snps = rng.binomial(2, freqs, size=(n_individuals, n_snps)).astype(np.float64)
    for _ in range(100):
        mono = np.nonzero(snps.min(axis=0) == snps.max(axis=0))[0]
        if mono.size == 0:
            break
        freqs[mono] = rng.uniform(0.05, 0.95, size=mono.size)
        snps[:, mono] = rng.binomial(
            2, freqs[mono], size=(n_individuals, mono.size)
        )
    else:
        raise RuntimeError("could not draw polymorphic SNP columns")

    causal = np.sort(rng.choice(n_snps, size=m_causal, replace=False))
    allele = snps[:, causal].mean(axis=0) / 2.0
    mu = 2.0 * allele
    sigma = np.sqrt(2.0 * allele * (1.0 - allele))
    z = (snps[:, causal] - mu) / sigma
    effects = rng.normal(0.0, 1.0, size=m_causal)
    genetic = z @ effects
    noise_sd = math.sqrt(genetic.var() * (1.0 - heritability) / heritability)
    phenotype = genetic + rng.normal(0.0, noise_sd, size=n_individuals)
    target = (phenotype > 0).astype(np.uint8)
    names = tuple(f"snp{j}" for j in range(n_snps))
    ds = Dataset(values=snps, target=target, feature_names=names)
    return ds, [int(c) for c in causal]

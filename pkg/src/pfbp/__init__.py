"""Greedy feature selection over block-partitioned data.

Local conditional-independence tests run per data block, Fisher's method
combines their log p-values into global evidence, and bootstrap tests prune
work early; the selected set targets the Markov blanket of the outcome.
"""

__version__ = "0.1.0"

from .citest import chisq_log_sf, fit_logistic, lrt, score_test_univariate
from .data import (
    Dataset,
    DataBlock,
    PartitionPlan,
    block,
    load_dataset,
    make_partition_plan,
    manual_partition_plan,
    required_samples,
    save_dataset,
    split_holdout,
)
from .engine import PfbpConfig, SelectionResult, fbs_baseline, pfbp
from .heuristics import (
    BootstrapConfig,
    early_dropping,
    early_return,
    early_stopping,
    early_stopping_backward,
)
from .meta import EvidenceMatrices, combine_columns, fisher_combine
from .model import CombinedModel, accuracy_curve, combine_models, predict
from .synth import generate_bn, generate_snp, markov_blanket, sample_bn

__all__ = [
    "__version__",
    "Dataset", "DataBlock", "PartitionPlan",
    "load_dataset", "save_dataset", "block", "make_partition_plan",
    "manual_partition_plan", "required_samples", "split_holdout",
    "fit_logistic", "lrt", "score_test_univariate", "chisq_log_sf",
    "EvidenceMatrices", "fisher_combine", "combine_columns",
    "BootstrapConfig", "early_dropping", "early_stopping", "early_return",
    "early_stopping_backward",
    "PfbpConfig", "SelectionResult", "pfbp", "fbs_baseline",
    "CombinedModel", "combine_models", "predict", "accuracy_curve",
    "generate_bn", "sample_bn", "markov_blanket", "generate_snp",
]

"""Combined predictive model from per-block logistic fits.

Local coefficient vectors are averaged with equal weights into one global
logistic model; predictions clamp probabilities strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CombinedModel", "combine_models", "predict", "accuracy_curve"]

_PROB_EPS = 1e-15


@dataclass(frozen=True)
class CombinedModel:
    """Equal-weight average of local logistic fits over the selected features."""

    feature_ids: tuple
    beta_hat: np.ndarray
    n_local_models: int

    def __post_init__(self):
        beta = np.asarray(self.beta_hat, dtype=np.float64)
        if beta.shape != (len(self.feature_ids) + 1,):
            raise ValueError("coefficient vector must be len(feature_ids) + 1")
        if not np.all(np.isfinite(beta)):
            raise ValueError("coefficients must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "feature_ids", tuple(int(i) for i in self.feature_ids))
        object.__setattr__(self, "beta_hat", beta)

    def to_dict(self):
        return {
            "feature_ids": list(self.feature_ids),
            "beta_hat": self.beta_hat.tolist(),
            "n_local_models": self.n_local_models,
        }


def combine_models(local_betas, feature_ids) -> CombinedModel:
    """Element-wise mean of the local coefficient vectors (intercept first)."""
    betas = [np.asarray(b, dtype=np.float64).ravel() for b in local_betas]
    if not betas:
        raise ValueError("no local models to combine")
    width = betas[0].shape[0]
    if any(b.shape[0] != width for b in betas):
        raise ValueError("local coefficient vectors differ in length")
    if width != len(tuple(feature_ids)) + 1:
        raise ValueError("coefficient length does not match feature count")
    return CombinedModel(
        feature_ids=tuple(feature_ids),
        beta_hat=np.mean(np.vstack(betas), axis=0),
        n_local_models=len(betas),
    )


def predict(model: CombinedModel, rows) -> np.ndarray:
    """Predicted probabilities of class 1, strictly inside (0, 1)."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if model.feature_ids and rows.shape[1] <= max(model.feature_ids):
        raise ValueError("rows are missing some model feature columns")
    eta = model.beta_hat[0] + rows[:, list(model.feature_ids)] @ model.beta_hat[1:]
    # stable sigmoid: exp only of non-positive arguments
    probs = np.empty_like(eta)
    pos = eta >= 0
    probs[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    ex = np.exp(eta[~pos])
    probs[~pos] = ex / (1.0 + ex)
    return np.clip(probs, _PROB_EPS, 1.0 - _PROB_EPS)


def accuracy_curve(holdout_values, holdout_target, models) -> np.ndarray:
    """Classification accuracy (0.5 threshold) of each model on the holdout."""
    target = np.asarray(holdout_target)
    if target.size == 0:
        raise ValueError("holdout is empty")
    if target.min() == target.max():
        raise ValueError("holdout must contain both classes")
    out = np.empty(len(models))
    for i, model in enumerate(models):
        labels = predict(model, holdout_values) > 0.5
        out[i] = float(np.mean(labels == (target == 1)))
    return out

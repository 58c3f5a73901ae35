"""Isotropic Gaussian-mixture benchmark with an exactly known conditional probability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConditionalModel, LabeledDataset, ParameterError, top_two_rows
from .rng import RandomSource

GENERATOR_VERSION = "gmm-v1"


@dataclass(frozen=True, eq=False)
class GaussianMixtureSpec:
    """K unit-covariance Gaussian components, one per class."""

    means: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        weights = np.array(self.weights, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] < 2:
            raise ParameterError("means must be a (K, d) array with K >= 2")
        if weights.shape != (means.shape[0],):
            raise ParameterError("need one weight per component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be non-negative and sum to 1")
        means.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @classmethod
    def paper_mixture(cls, dim: int = 10) -> "GaussianMixtureSpec":
        """Equal mixture of N(0, I) (label 0) and N(1, I) (label 1)."""
        return cls(np.stack([np.zeros(dim), np.ones(dim)]), np.array([0.5, 0.5]))

    @classmethod
    def one_hot(cls, n_classes: int, scale: float = 2.0, dim: int | None = None) -> "GaussianMixtureSpec":
        """Multiclass extension: equally weighted components centred at ``scale * e_i``."""
        dim = n_classes if dim is None else dim
        if dim < n_classes:
            raise ParameterError("dim must be >= n_classes for one-hot means")
        means = np.zeros((n_classes, dim))
        means[np.arange(n_classes), np.arange(n_classes)] = scale
        return cls(means, np.full(n_classes, 1.0 / n_classes))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "means": self.means.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianMixtureSpec":
        spec = cls(np.asarray(doc["means"], dtype=np.float64), np.asarray(doc["weights"], dtype=np.float64))
        if "dim" in doc and int(doc["dim"]) != spec.dim:
            raise ParameterError("field 'dim' disagrees with the means")
        return spec


def sample_dataset(spec: GaussianMixtureSpec, n: int, rng: RandomSource, first_id: int = 0) -> LabeledDataset:
    """Draw ``n`` samples; ids ``first_id .. first_id + n - 1``.

    The component is drawn first, then a standard normal shifted by its mean.  Noisy
    labels start equal to the clean ones.
    """
    if int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    ids = np.arange(first_id, first_id + n, dtype=np.int64)
    cum = np.cumsum(spec.weights)
    cum[-1] = np.inf
    u = rng.uniform("synth/component", ids)
    comp = np.searchsorted(cum, u, side="right")
    X = rng.normal("synth/features", ids, spec.dim) + spec.means[comp]
    return LabeledDataset(X, comp, spec.n_classes, clean_labels=comp, sample_ids=ids)


class MixtureEta(ConditionalModel):
    """Exact posterior class probabilities of a ``GaussianMixtureSpec``."""

    def __init__(self, spec: GaussianMixtureSpec):
        self.spec = spec
        self.n_classes = spec.n_classes
        with np.errstate(divide="ignore"):
            self._log_w = np.log(spec.weights)

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        sq = ((X[:, None, :] - self.spec.means[None, :, :]) ** 2).sum(axis=2)
        logits = self._log_w[None, :] - 0.5 * sq
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)


def exact_eta(spec: GaussianMixtureSpec) -> MixtureEta:
    return MixtureEta(spec)


def bayes_labels(eta: ConditionalModel, data: LabeledDataset) -> LabeledDataset:
    """Attach ``argmax eta(x)`` (lowest index on ties) as the Bayes labels."""
    if eta.n_classes != data.n_classes:
        raise ParameterError("model and dataset disagree on the number of classes")
    best, _ = top_two_rows(eta.predict_proba(data.features))
    return data.replace(bayes_labels=best)

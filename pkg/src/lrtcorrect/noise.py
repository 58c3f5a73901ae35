"""Class-conditional label corruption."""

from __future__ import annotations

import numpy as np

from .core import LabeledDataset, ParameterError, StateError, TransitionMatrix
from .rng import RandomSource


def inject_noise(data: LabeledDataset, tau: TransitionMatrix, rng: RandomSource) -> LabeledDataset:
    """Redraw every noisy label from ``tau[clean_label]``.

    Each sample's uniform draw is keyed on its sample id, so a sample receives the same
    noisy label whatever the dataset size or row order.
    """
    if data.clean_labels is None:
        raise StateError("inject_noise needs clean labels")
    if tau.n_classes != data.n_classes:
        raise ParameterError(f"tau is {tau.n_classes}x{tau.n_classes} but the dataset has {data.n_classes} classes")
    cum = np.cumsum(tau.rows, axis=1)
    cum[:, -1] = np.inf
    u = rng.uniform("noise/flip", data.sample_ids)
    noisy = (cum[data.clean_labels] <= u[:, None]).sum(axis=1)
    return data.replace(noisy_labels=noisy)


def noise_summary(data: LabeledDataset) -> np.ndarray:
    """Counts ``[i, j]`` of samples with clean label i and noisy label j."""
    if data.clean_labels is None:
        raise StateError("noise_summary needs clean labels")
    counts = np.zeros((data.n_classes, data.n_classes), dtype=np.int64)
    np.add.at(counts, (data.clean_labels, data.noisy_labels), 1)
    return counts


def empirical_transition(data: LabeledDataset) -> np.ndarray:
    """Row-normalized ``noise_summary``; rows with no samples are NaN."""
    counts = noise_summary(data).astype(np.float64)
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return counts / totals

"""Likelihood-ratio label correction and the closed-form critical values.

The critical-value calculators take a dataset and reduce over its samples: the minimum
or maximum over the whole feature space is replaced by the one over observed points.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    ConditionalModel,
    DegenerateClassifierError,
    LabeledDataset,
    ParameterError,
    TransitionMatrix,
    as_prob_vector,
    top_two_rows,
)


@dataclass(frozen=True)
class CorrectionDecision:
    sample_index: int
    lr: float
    rejected: bool
    new_label: int
    argmax_label: int


@dataclass(frozen=True, eq=False)
class CorrectionReport:
    """Per-sample decisions of one correction pass, stored column-wise."""

    sample_ids: np.ndarray
    lr: np.ndarray
    rejected: np.ndarray
    new_labels: np.ndarray
    argmax_labels: np.ndarray
    delta_used: float
    agreement_with_bayes: Optional[float] = None

    @property
    def n_flipped(self) -> int:
        return int(self.rejected.sum())

    @property
    def decisions(self) -> list[CorrectionDecision]:
        return [
            CorrectionDecision(int(i), float(r), bool(rej), int(new), int(m))
            for i, r, rej, new, m in zip(self.sample_ids, self.lr, self.rejected, self.new_labels, self.argmax_labels)
        ]

    def summary(self) -> dict:
        return {
            "n": int(self.lr.size),
            "n_flipped": self.n_flipped,
            "agreement_with_bayes": self.agreement_with_bayes,
            "delta_used": self.delta_used,
        }


def likelihood_ratio(f, noisy: int) -> float:
    """``f[noisy] / max(f)``; 1 when ``noisy`` is the argmax."""
    p = as_prob_vector(f)
    if not 0 <= noisy < p.size:
        raise ParameterError(f"label {noisy} out of range for {p.size} classes")
    return float(likelihood_ratio_rows(p[None, :], np.array([noisy]))[0])


def likelihood_ratio_rows(F: np.ndarray, noisy: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.int64)
    rows = np.arange(F.shape[0])
    m = np.argmax(F, axis=1)
    top = F[rows, m]
    lr = np.ones(F.shape[0])
    ok = top > 0
    lr[ok] = F[rows[ok], noisy[ok]] / top[ok]
    lr[m == noisy] = 1.0
    return lr


def _check_delta(delta: float) -> float:
    if not np.isfinite(delta) or delta < 0:
        raise ParameterError(f"delta must be a non-negative finite number, got {delta}")
    # delta > 1 and delta = 1 flip the same labels: every non-argmax label.
    return min(float(delta), 1.0)


def correct_rows(F: np.ndarray, noisy: np.ndarray, delta: float):
    """Vectorized correction on precomputed predictions.

    Returns ``(lr, rejected, new_labels, argmax_labels)``.
    """
    delta = _check_delta(delta)
    lr = likelihood_ratio_rows(F, noisy)
    m = np.argmax(F, axis=1)
    rejected = lr < delta
    new = np.where(rejected, m, noisy)
    return lr, rejected, new, m


def lrt_correct(x, noisy: int, f: ConditionalModel, delta: float) -> CorrectionDecision:
    """Correct a single sample: flip to the argmax of ``f`` when LR < delta."""
    p = as_prob_vector(f.predict(x))
    if not 0 <= noisy < p.size:
        raise ParameterError(f"label {noisy} out of range for {p.size} classes")
    lr, rej, new, m = correct_rows(p[None, :], np.array([noisy]), delta)
    return CorrectionDecision(0, float(lr[0]), bool(rej[0]), int(new[0]), int(m[0]))


def lrt_correct_dataset(data: LabeledDataset, f: ConditionalModel, delta: float, probs: Optional[np.ndarray] = None):
    """Run the correction over every sample.

    ``probs`` may carry precomputed ``f`` predictions for ``data.features``.
    Returns ``(corrected_dataset, report)``; the input dataset is untouched.
    """
    if f is not None and f.n_classes != data.n_classes:
        raise ParameterError("model and dataset disagree on the number of classes")
    F = f.predict_proba(data.features) if probs is None else np.asarray(probs, dtype=np.float64)
    lr, rejected, new, m = correct_rows(F, data.noisy_labels, delta)
    agreement = None
    if data.bayes_labels is not None:
        agreement = float(np.mean(new == data.bayes_labels))
    report = CorrectionReport(data.sample_ids, lr, rejected, new, m, _check_delta(delta), agreement)
    return data.replace(noisy_labels=new), report


# -- critical values --------------------------------------------------------------


def delta_theorem1(tau: TransitionMatrix) -> float:
    """Binary confidence threshold ``(1 - |tau_10 - tau_01|) / 2``."""
    t01, t10 = tau.binary_rates()
    return (1.0 - abs(t10 - t01)) / 2.0


def delta_binary_corollary(tau: TransitionMatrix) -> float:
    """Binary LR threshold ``(1 - |tau_10 - tau_01|) / (1 + |tau_10 - tau_01|)``."""
    t01, t10 = tau.binary_rates()
    gap = abs(t10 - t01)
    return (1.0 - gap) / (1.0 + gap)


def boundary_level(eta_probs: np.ndarray, tau: TransitionMatrix, labels: np.ndarray) -> np.ndarray:
    """Per-sample ``tau[l,l] * eta_s + sum_{j != l} tau[j,l] * eta_j`` for label ``l``.

    This is the noisy probability of class ``l`` when class ``l`` is pushed down to the
    runner-up level ``eta_s`` of the true conditional.
    """
    P = np.asarray(eta_probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(P.shape[0])
    _, s = top_two_rows(P)
    off_diag = tau.rows * (1.0 - np.eye(tau.n_classes))
    # summing only j != l avoids cancelling the diagonal term back out
    return tau.rows[labels, labels] * P[rows, s] + (P @ off_diag)[rows, labels]


def _check_models(data: LabeledDataset, tau: TransitionMatrix, *models):
    if tau.n_classes != data.n_classes:
        raise ParameterError("tau and dataset disagree on the number of classes")
    for m in models:
        if m.n_classes != data.n_classes:
            raise ParameterError("model and dataset disagree on the number of classes")


def delta_theorem2(eta: ConditionalModel, tau: TransitionMatrix, data: LabeledDataset) -> float:
    """Multiclass confidence threshold: ``min(1, min over samples of boundary_level(noisy))``."""
    _check_models(data, tau, eta)
    level = boundary_level(eta.predict_proba(data.features), tau, data.noisy_labels)
    return float(min(1.0, level.min()))


def delta_sensitivity(eta: ConditionalModel, tau: TransitionMatrix, f: ConditionalModel, data: LabeledDataset) -> float:
    """Flip-side critical value: ``min boundary_level(noisy) / f_max``."""
    _check_models(data, tau, eta, f)
    F = f.predict_proba(data.features)
    top = F.max(axis=1)
    if np.any(top <= 0):
        raise DegenerateClassifierError("classifier assigns zero probability to every class at some sample")
    level = boundary_level(eta.predict_proba(data.features), tau, data.noisy_labels)
    return float(np.min(level / top))


def delta_specificity(eta: ConditionalModel, tau: TransitionMatrix, f: ConditionalModel, data: LabeledDataset) -> float:
    """Keep-side critical value: ``max f_noisy / boundary_level(argmax f)``.

    Values above 1 are returned unchanged, with a warning.
    """
    _check_models(data, tau, eta, f)
    F = f.predict_proba(data.features)
    m = np.argmax(F, axis=1)
    denom = boundary_level(eta.predict_proba(data.features), tau, m)
    if np.any(denom <= 0):
        raise DegenerateClassifierError("zero denominator in the keep-side critical value")
    value = float(np.max(F[np.arange(F.shape[0]), data.noisy_labels] / denom))
    if value > 1.0:
        warnings.warn(f"keep-side critical value {value:.6g} exceeds 1; every non-argmax label will be flipped", stacklevel=2)
    return value

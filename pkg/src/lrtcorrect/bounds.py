"""Tsybakov-constant estimation, closed-form error bounds and their empirical counterparts.

Wherever a bound involves the diagonal entry of the transition matrix at a
sample-dependent class, the smallest diagonal entry is used (the uniform, worst-case
form).  Pass ``label=`` to use one class's diagonal instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .core import (
    ConditionalModel,
    InsufficientDataError,
    LabeledDataset,
    ParameterError,
    StateError,
    TransitionMatrix,
    top_two_rows,
)
from .lrt import CorrectionReport
from .rng import RandomSource

BOUND_KINDS = ("thm1", "thm2", "corollary_binary", "lemma1_reject", "lemma1_accept", "thm3_reject", "thm3_accept")


@dataclass(frozen=True, eq=False)
class TsybakovFit:
    """OLS fit of ``log p_t = log C + lam * log t``.

    ``n_zero_dropped`` counts grid points whose band is empty and ``n_saturated_dropped``
    those whose band already contains every sample; neither carries tail information.
    """

    C: float
    lam: float
    r_squared: float = float("nan")
    p_value: float = float("nan")
    t_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    p_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    used: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    n_zero_dropped: int = 0
    n_saturated_dropped: int = 0
    n_beyond_t0: int = 0
    mode: str = "direct"

    @property
    def n_used(self) -> int:
        return int(self.used.sum())

    @classmethod
    def from_constants(cls, C: float, lam: float) -> "TsybakovFit":
        if C <= 0 or lam <= 0:
            raise ParameterError("Tsybakov constants must be positive")
        return cls(float(C), float(lam))

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "lambda": self.lam,
            "r_squared": self.r_squared,
            "p_value": self.p_value,
            "n_used": self.n_used,
            "n_zero_dropped": self.n_zero_dropped,
            "n_saturated_dropped": self.n_saturated_dropped,
            "n_beyond_t0": self.n_beyond_t0,
            "mode": self.mode,
            "t_grid": self.t_grid.tolist(),
            "p_t": self.p_t.tolist(),
        }


def fit_power_law(t, p, keep=None, **extra) -> TsybakovFit:
    """OLS of ``log p`` on ``log t`` over the points with ``p > 0`` (and ``keep``)."""
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise ParameterError("t and p must be 1-d arrays of equal length")
    if np.any(t <= 0):
        raise ParameterError("t values must be positive")
    used = p > 0
    if keep is not None:
        used &= np.asarray(keep, dtype=bool)
    if used.sum() < 3:
        raise InsufficientDataError(f"only {int(used.sum())} usable grid points; need at least 3")
    x, y = np.log(t[used]), np.log(p[used])
    if np.ptp(y) == 0:
        raise InsufficientDataError("all usable grid points have the same p_t")
    res = stats.linregress(x, y)
    return TsybakovFit(
        C=float(np.exp(res.intercept)),
        lam=float(res.slope),
        r_squared=float(res.rvalue**2),
        p_value=float(res.pvalue),
        t_grid=t,
        p_t=p,
        used=used,
        n_zero_dropped=int(np.sum(p <= 0)),
        **extra,
    )


def _resolve_mode(mode: str, n_classes: int) -> str:
    if mode == "auto":
        return "binary" if n_classes == 2 else "multiclass"
    if mode not in ("binary", "multiclass"):
        raise ParameterError(f"unknown margin mode {mode!r}")
    if mode == "binary" and n_classes != 2:
        raise ParameterError("binary margin needs exactly two classes")
    return mode


def margins(eta_probs: np.ndarray, mode: str = "auto") -> np.ndarray:
    """Per-sample margin: ``|eta_1 - 1/2|`` (binary) or ``eta_u - eta_s`` (multiclass)."""
    P = np.asarray(eta_probs, dtype=np.float64)
    mode = _resolve_mode(mode, P.shape[1])
    if mode == "binary":
        return np.abs(P[:, 1] - 0.5)
    u, s = top_two_rows(P)
    rows = np.arange(P.shape[0])
    return P[rows, u] - P[rows, s]


def margin_probability(eta: ConditionalModel, data: LabeledDataset, t: float, mode: str = "auto") -> float:
    """Fraction of samples whose margin is at most ``t``."""
    if not 0 <= t <= 1:
        raise ParameterError("t must lie in [0, 1]")
    return float(np.mean(margins(eta.predict_proba(data.features), mode) <= t))


def fit_tsybakov(
    eta: ConditionalModel,
    data: LabeledDataset,
    t_min: float = 0.01,
    t_max: float = 0.9,
    n_grid: int = 30,
    mode: str = "auto",
    t0: Optional[float] = None,
    drop_saturated: bool = True,
) -> TsybakovFit:
    """Estimate ``(C, lam)`` from the margin frequencies on an even grid of ``t``.

    Grid points with ``p_t = 0`` are always dropped.  With ``drop_saturated`` the points
    with ``p_t = 1`` are dropped too: past the largest margin every band holds all
    samples and ``log p_t`` is flat.  ``n_beyond_t0`` counts used points with ``t > t0``.
    """
    if not (0 < t_min < t_max <= 1):
        raise ParameterError("need 0 < t_min < t_max <= 1")
    if n_grid < 3:
        raise ParameterError("n_grid must be >= 3")
    mode = _resolve_mode(mode, data.n_classes)
    if t0 is None:
        t0 = 0.5 if mode == "binary" else 1.0
    grid = np.linspace(t_min, t_max, int(n_grid))
    marg = np.sort(margins(eta.predict_proba(data.features), mode))
    p_t = np.searchsorted(marg, grid, side="right") / marg.size
    keep = p_t < 1.0 if drop_saturated else np.ones_like(grid, dtype=bool)
    return fit_power_law(
        grid,
        p_t,
        keep=keep,
        n_saturated_dropped=int(np.sum(~keep & (p_t > 0))),
        n_beyond_t0=int(np.sum(keep & (p_t > 0) & (grid > t0))),
        mode=mode,
    )


def epsilon_sup(f: ConditionalModel, eta_tilde: ConditionalModel, data: LabeledDataset) -> float:
    """Largest absolute disagreement between two models over samples and classes."""
    if f.n_classes != eta_tilde.n_classes:
        raise ParameterError("models disagree on the number of classes")
    return float(np.max(np.abs(f.predict_proba(data.features) - eta_tilde.predict_proba(data.features))))


# -- closed-form bounds -----------------------------------------------------------


@dataclass(frozen=True)
class BoundResult:
    kind: str
    value: float
    valid: bool
    per_case: Optional[float] = None

    def __float__(self):
        return self.value


def _check_eps(epsilon: float):
    if not np.isfinite(epsilon) or epsilon < 0:
        raise ParameterError(f"epsilon must be a non-negative finite number, got {epsilon}")


def _binary_gap(tau: TransitionMatrix) -> tuple[float, float]:
    """``(1 - tau_01 - tau_10, |tau_10 - tau_01|)``."""
    t01, t10 = tau.binary_rates()
    scale = 1.0 - t01 - t10
    if scale <= 0:
        raise ParameterError("binary bounds need tau_01 + tau_10 < 1")
    return scale, abs(t10 - t01)


def _diag(tau: TransitionMatrix, label: Optional[int]) -> float:
    d = tau.min_diagonal if label is None else float(tau.rows[label, label])
    if d <= 0:
        raise ParameterError("diagonal entry of tau is zero")
    return d


def _power(fit: TsybakovFit, x: float) -> float:
    return float(fit.C * x**fit.lam)


def bound_thm1(epsilon: float, fit: TsybakovFit, tau: TransitionMatrix, t0: float = 0.5) -> BoundResult:
    """Sum of the two label cases, each ``C (eps / (1 - tau_01 - tau_10))^lam``."""
    _check_eps(epsilon)
    scale, _ = _binary_gap(tau)
    case = _power(fit, epsilon / scale)
    return BoundResult("thm1", 2.0 * case, bool(epsilon <= t0 * scale), per_case=case)


def bound_thm2(epsilon: float, fit: TsybakovFit, tau: TransitionMatrix, t0: float = 1.0, label: Optional[int] = None) -> BoundResult:
    _check_eps(epsilon)
    d = _diag(tau, label)
    return BoundResult("thm2", _power(fit, epsilon / d), bool(epsilon <= t0 * tau.min_diagonal))


def bound_corollary_binary(epsilon: float, fit: TsybakovFit, tau: TransitionMatrix, t0: float = 0.5) -> BoundResult:
    """Binary correction-error bound; the asymmetry term survives at ``eps = 0``."""
    _check_eps(epsilon)
    scale, gap = _binary_gap(tau)
    value = _power(fit, gap / (2.0 * scale) + epsilon / scale)
    return BoundResult("corollary_binary", value, bool(epsilon <= t0 * scale - gap / 2.0))


def _check_side(side: str):
    if side not in ("reject", "accept"):
        raise ParameterError(f"side must be 'reject' or 'accept', got {side!r}")


def _symmetric_psi(tau: TransitionMatrix, psi: float, tol: float) -> float:
    if not 0 <= psi <= 1:
        raise ParameterError("psi must lie in [0, 1]")
    if tau.is_symmetric_uniform():
        if psi >= tol:
            warnings.warn(f"measured psi {psi:.3g} under symmetric noise should vanish with an exact classifier", stacklevel=3)
        return 0.0
    return psi


def bound_lemma1(
    epsilon: float,
    fit: TsybakovFit,
    tau: TransitionMatrix,
    psi: float,
    side: str,
    t0: float = 1.0,
    label: Optional[int] = None,
    psi_tol: float = 1e-3,
) -> BoundResult:
    """``C (eps / tau_diag)^lam + psi`` for the flip (reject) or keep (accept) side.

    Under symmetric uniform noise the residual term is zero and ``psi`` is ignored.
    """
    _check_eps(epsilon)
    _check_side(side)
    psi = _symmetric_psi(tau, psi, psi_tol)
    d = _diag(tau, label)
    return BoundResult(f"lemma1_{side}", _power(fit, epsilon / d) + psi, bool(epsilon <= t0 * tau.min_diagonal))


def thm3_valid(epsilon: float, xi: float, delta: float, tau: TransitionMatrix, t0: float = 1.0) -> bool:
    dmin = tau.min_diagonal
    limit = min((t0 * delta**2 * dmin - xi**2 - xi) / delta**2, (t0 - xi) * dmin)
    return bool(epsilon <= limit)


def bound_thm3(
    epsilon: float,
    xi: float,
    delta: float,
    fit: TsybakovFit,
    tau: TransitionMatrix,
    psi: float,
    side: str,
    t0: float = 1.0,
    label: Optional[int] = None,
    psi_tol: float = 1e-3,
) -> BoundResult:
    """Bound for a threshold that misses the ideal critical value ``delta`` by ``xi``."""
    _check_eps(epsilon)
    _check_side(side)
    if xi < 0:
        raise ParameterError("xi must be non-negative")
    if xi >= delta:
        raise ParameterError(f"xi ({xi}) must be smaller than delta ({delta})")
    psi = _symmetric_psi(tau, psi, psi_tol)
    d = _diag(tau, label)
    if side == "reject":
        arg = (epsilon + xi) / d
    else:
        arg = epsilon / d + xi / (delta**2 * d) + xi**2 / (delta**2 * d)
    return BoundResult(f"thm3_{side}", _power(fit, arg) + psi, thm3_valid(epsilon, xi, delta, tau, t0))


@dataclass(frozen=True, eq=False)
class BoundCurve:
    kind: str
    epsilons: np.ndarray
    bound_values: np.ndarray
    valid: np.ndarray
    empirical_values: Optional[np.ndarray] = None


# -- empirical counterparts -------------------------------------------------------


def empirical_joint(f: ConditionalModel, data: LabeledDataset, Delta: float, probs: Optional[np.ndarray] = None) -> float:
    """Fraction of samples whose noisy label is the Bayes label yet ``f_noisy < Delta``."""
    if data.bayes_labels is None:
        raise StateError("empirical_joint needs Bayes labels")
    F = f.predict_proba(data.features) if probs is None else np.asarray(probs)
    f_noisy = F[np.arange(data.n), data.noisy_labels]
    return float(np.mean((data.noisy_labels == data.bayes_labels) & (f_noisy < Delta)))


def empirical_correction_error(corrected: LabeledDataset) -> float:
    """Fraction of samples whose (corrected) label differs from the Bayes label."""
    if corrected.bayes_labels is None:
        raise StateError("empirical_correction_error needs Bayes labels")
    return float(np.mean(corrected.noisy_labels != corrected.bayes_labels))


def empirical_side_errors(corrected: LabeledDataset, report: CorrectionReport) -> tuple[float, float]:
    """Joint error frequencies ``(wrong and flipped, wrong and kept)``."""
    if corrected.bayes_labels is None:
        raise StateError("side errors need Bayes labels")
    wrong = corrected.noisy_labels != corrected.bayes_labels
    return float(np.mean(wrong & report.rejected)), float(np.mean(wrong & ~report.rejected))


def empirical_psi(eta: ConditionalModel, f: ConditionalModel, data: LabeledDataset) -> float:
    """Fraction of samples whose Bayes class is neither the noisy label nor ``argmax f``."""
    u = np.argmax(eta.predict_proba(data.features), axis=1)
    m = np.argmax(f.predict_proba(data.features), axis=1)
    return float(np.mean((u != m) & (u != data.noisy_labels)))


class PerturbedModel(ConditionalModel):
    """A base model plus a smooth, seeded perturbation of sup-norm at most ``epsilon``.

    The direction at ``x`` is ``sin(W x + b)`` centred across classes and scaled into
    [-1, 1]; the result is clipped to [0, 1] and renormalized.
    """

    def __init__(self, base: ConditionalModel, epsilon: float, rng: RandomSource, dim: int, stream: str = "perturb"):
        _check_eps(epsilon)
        self.base = base
        self.epsilon = float(epsilon)
        self.n_classes = base.n_classes
        g = rng.generator(stream)
        self._W = g.standard_normal((dim, base.n_classes))
        self._b = g.uniform(0.0, 2.0 * np.pi, base.n_classes)

    def direction(self, X):
        raw = np.sin(np.asarray(X, dtype=np.float64) @ self._W + self._b)
        raw -= raw.mean(axis=1, keepdims=True)
        return raw / np.maximum(1.0, np.abs(raw).max(axis=1, keepdims=True))

    def predict_proba(self, X):
        P = np.clip(self.base.predict_proba(X) + self.epsilon * self.direction(X), 0.0, 1.0)
        return P / P.sum(axis=1, keepdims=True)

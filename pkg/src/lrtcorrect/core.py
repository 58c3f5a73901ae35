"""Shared domain types: transition matrices, labeled datasets, conditional models."""

from __future__ import annotations

import abc
import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

PROB_TOL = 1e-9
CONSTRUCT_TOL = 1e-12


class LrtError(Exception):
    """Base class for toolkit errors."""


class ParameterError(LrtError, ValueError):
    pass


class StateError(LrtError, RuntimeError):
    pass


class InsufficientDataError(LrtError):
    pass


class DegenerateClassifierError(LrtError, ValueError):
    pass


class NumericalError(LrtError, FloatingPointError):
    pass


class SchemaError(LrtError, ValueError):
    pass


def as_prob_vector(p, tol: float = PROB_TOL) -> np.ndarray:
    """Validate ``p`` as a probability vector and return it as float64."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ParameterError(f"probability vector must be 1-d with >= 2 entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("probability vector has non-finite entries")
    if np.any(arr < -tol) or np.any(arr > 1 + tol):
        raise ParameterError("probability vector entries must lie in [0, 1]")
    if abs(arr.sum() - 1.0) > tol:
        raise ParameterError(f"probability vector sums to {arr.sum():.17g}, not 1")
    return arr


def top_two(p) -> tuple[int, int]:
    """Indices of the largest and second-largest entries, ties to the lowest index."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ParameterError("top_two needs at least two classes")
    best, second = top_two_rows(arr[None, :])
    return int(best[0]), int(second[0])


def top_two_rows(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``top_two`` over an (n, N_c) array."""
    P = np.asarray(P, dtype=np.float64)
    best = np.argmax(P, axis=1)
    masked = P.copy()
    masked[np.arange(P.shape[0]), best] = -np.inf
    second = np.argmax(masked, axis=1)
    return best, second


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic class-flip probabilities, ``rows[i, j] = Pr(noisy=j | clean=i)``."""

    rows: np.ndarray
    kind: str = "custom"
    rho: Optional[float] = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1] or rows.shape[0] < 2:
            raise ParameterError(f"transition matrix must be square with N_c >= 2, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ParameterError("transition matrix has non-finite entries")
        if np.any(rows < 0) or np.any(rows > 1):
            raise ParameterError("transition matrix entries must lie in [0, 1]")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            raise ParameterError(f"transition matrix rows must sum to 1, got {sums.tolist()}")
        if rows.shape[0] == 2 and rows[0, 1] + rows[1, 0] >= 1.0:
            raise ParameterError("binary transition matrix needs tau_01 + tau_10 < 1")
        if self.kind not in ("uniform", "pair", "custom"):
            raise ParameterError(f"unknown transition kind {self.kind!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n_classes(self) -> int:
        return self.rows.shape[0]

    @property
    def min_diagonal(self) -> float:
        return float(np.min(np.diag(self.rows)))

    def dominance_violations(self) -> list[tuple[int, int]]:
        """Pairs (i, j), j != i, where tau_ii <= tau_ij."""
        out = []
        for i in range(self.n_classes):
            for j in range(self.n_classes):
                if i != j and self.rows[i, i] <= self.rows[i, j]:
                    out.append((i, j))
        return out

    def is_diagonally_dominant(self) -> bool:
        return not self.dominance_violations()

    def is_symmetric_uniform(self, tol: float = CONSTRUCT_TOL) -> bool:
        """True when every off-diagonal entry is the same value."""
        off = self.rows[~np.eye(self.n_classes, dtype=bool)]
        return bool(np.ptp(off) <= tol)

    def binary_rates(self) -> tuple[float, float]:
        """Return ``(tau_01, tau_10)``; raises for non-binary matrices."""
        if self.n_classes != 2:
            raise ParameterError(f"binary transition matrix required, got N_c={self.n_classes}")
        return float(self.rows[0, 1]), float(self.rows[1, 0])

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "kind": self.kind,
            "rho": self.rho,
            "rows": self.rows.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TransitionMatrix":
        for key in ("n_classes", "rows"):
            if key not in doc:
                raise SchemaError(f"transition matrix document missing field {key!r}")
        tau = cls(np.asarray(doc["rows"], dtype=np.float64), kind=doc.get("kind", "custom"), rho=doc.get("rho"))
        if tau.n_classes != int(doc["n_classes"]):
            raise SchemaError("field 'n_classes' disagrees with the shape of 'rows'")
        return tau

    @classmethod
    def binary(cls, tau_10: float, tau_01: float) -> "TransitionMatrix":
        return cls(np.array([[1.0 - tau_01, tau_01], [tau_10, 1.0 - tau_10]]))


def make_uniform_flip(n_classes: int, rho: float) -> TransitionMatrix:
    """Flip to every other class with equal probability ``rho / (N_c - 1)``."""
    if int(n_classes) != n_classes or n_classes < 2:
        raise ParameterError("n_classes must be an integer >= 2")
    if not (0.0 <= rho < (n_classes - 1) / n_classes):
        raise ParameterError(f"uniform flip rate must satisfy 0 <= rho < {(n_classes - 1) / n_classes:g}")
    rows = np.full((n_classes, n_classes), rho / (n_classes - 1))
    np.fill_diagonal(rows, 1.0 - rho)
    return TransitionMatrix(rows, kind="uniform", rho=float(rho))


def make_pair_flip(n_classes: int, rho: float) -> TransitionMatrix:
    """Flip class i to (i + 1) mod N_c with probability ``rho``."""
    if int(n_classes) != n_classes or n_classes < 2:
        raise ParameterError("n_classes must be an integer >= 2")
    if not (0.0 <= rho < 0.5):
        raise ParameterError("pair flip rate must satisfy 0 <= rho < 0.5")
    rows = np.zeros((n_classes, n_classes))
    for i in range(n_classes):
        rows[i, i] = 1.0 - rho
        rows[i, (i + 1) % n_classes] += rho
    return TransitionMatrix(rows, kind="pair", rho=float(rho))


def _check_labels(name: str, labels, n: int, n_classes: int) -> Optional[np.ndarray]:
    if labels is None:
        return None
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ParameterError(f"{name} must have length {n}, got shape {arr.shape}")
    if arr.size and (not np.issubdtype(arr.dtype, np.integer)):
        if not np.all(arr == np.round(arr)):
            raise ParameterError(f"{name} must be integers")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise ParameterError(f"{name} must lie in [0, {n_classes})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature rows with noisy labels and optional clean / Bayes labels.

    ``sample_ids`` identify samples independently of their row position; per-sample
    randomness is keyed on them.
    """

    features: np.ndarray
    noisy_labels: np.ndarray
    n_classes: int
    clean_labels: Optional[np.ndarray] = None
    bayes_labels: Optional[np.ndarray] = None
    sample_ids: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ParameterError(f"features must be 2-d, got shape {X.shape}")
        if self.n_classes < 2:
            raise ParameterError("n_classes must be >= 2")
        n = X.shape[0]
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        for name in ("noisy_labels", "clean_labels", "bayes_labels"):
            object.__setattr__(self, name, _check_labels(name, getattr(self, name), n, self.n_classes))
        if self.noisy_labels is None:
            raise ParameterError("noisy_labels are required")
        ids = np.arange(n, dtype=np.int64) if self.sample_ids is None else np.asarray(self.sample_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise ParameterError("sample_ids must have one entry per row")
        ids.setflags(write=False)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def labels(self, which: str) -> np.ndarray:
        """Return the label array named ``noisy``, ``clean`` or ``bayes``."""
        if which not in ("noisy", "clean", "bayes"):
            raise ParameterError(f"unknown label array {which!r}")
        arr = getattr(self, f"{which}_labels")
        if arr is None:
            raise StateError(f"dataset has no {which} labels")
        return arr

    def replace(self, **changes) -> "LabeledDataset":
        return dataclasses.replace(self, **changes)

    def take(self, index) -> "LabeledDataset":
        """Subset / reorder rows, keeping sample ids attached."""
        index = np.asarray(index)
        pick = lambda a: None if a is None else a[index]
        return LabeledDataset(
            self.features[index],
            self.noisy_labels[index],
            self.n_classes,
            clean_labels=pick(self.clean_labels),
            bayes_labels=pick(self.bayes_labels),
            sample_ids=self.sample_ids[index],
        )


class ConditionalModel(abc.ABC):
    """Maps feature vectors to probability vectors over ``n_classes`` classes."""

    n_classes: int

    @abc.abstractmethod
    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Return an (n, n_classes) array of probability rows."""

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.predict_proba(x[None, :])[0]


class FunctionModel(ConditionalModel):
    """Wrap a vectorized callable ``X -> (n, N_c)`` as a conditional model."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_classes: int):
        self._fn = fn
        self.n_classes = int(n_classes)

    def predict_proba(self, X):
        P = np.asarray(self._fn(np.asarray(X, dtype=np.float64)), dtype=np.float64)
        if P.ndim != 2 or P.shape[1] != self.n_classes:
            raise ParameterError(f"model returned shape {P.shape}, expected (n, {self.n_classes})")
        return P


class ConstantModel(ConditionalModel):
    """Predicts the same probability vector everywhere."""

    def __init__(self, p: Sequence[float]):
        self.p = as_prob_vector(p)
        self.n_classes = self.p.size

    def predict_proba(self, X):
        return np.tile(self.p, (np.asarray(X).shape[0], 1))


class NoisyConditional(ConditionalModel):
    """The noisy conditional probability obtained by pushing ``eta`` through ``tau``."""

    def __init__(self, eta: ConditionalModel, tau: TransitionMatrix):
        if eta.n_classes != tau.n_classes:
            raise ParameterError(f"model has {eta.n_classes} classes but tau is {tau.n_classes}x{tau.n_classes}")
        self.eta = eta
        self.tau = tau
        self.n_classes = eta.n_classes

    def predict_proba(self, X):
        # noisy_i = sum_j tau[j, i] * eta_j
        return self.eta.predict_proba(X) @ self.tau.rows


def compose_noisy_conditional(eta: ConditionalModel, tau: TransitionMatrix) -> NoisyConditional:
    return NoisyConditional(eta, tau)

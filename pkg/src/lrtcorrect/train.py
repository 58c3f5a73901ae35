"""A small tanh MLP trained by mini-batch gradient descent, and the AdaCorr loop."""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ConditionalModel, LabeledDataset, NumericalError, ParameterError, SchemaError, StateError
from .io import atomic_write_bytes
from .lrt import correct_rows
from .rng import RandomSource

LOG_FLOOR = 1e-12
CHECKPOINT_MAGIC = b"LRTCMLP\x00"
CHECKPOINT_VERSION = 1


class MlpModel(ConditionalModel):
    """Fully connected network, tanh hidden layers, softmax output."""

    def __init__(self, widths: Sequence[int], rng: Optional[RandomSource] = None, params=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ParameterError("need at least input and output widths, all positive")
        if widths[-1] < 2:
            raise ParameterError("output layer needs at least two classes")
        self.widths = widths
        self.n_classes = widths[-1]
        if params is not None:
            self.params = [np.array(p, dtype=np.float64) for p in params]
            shapes = [s for a, b in zip(widths[:-1], widths[1:]) for s in ((a, b), (b,))]
            if [p.shape for p in self.params] != shapes:
                raise ParameterError("parameter shapes do not match the layer widths")
            return
        if rng is None:
            raise ParameterError("an initialization RandomSource is required")
        g = rng.generator("mlp/init")
        self.params = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.params.append(g.uniform(-limit, limit, (fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MlpModel":
        return MlpModel(self.widths, params=[p.copy() for p in self.params])

    def _forward(self, X):
        acts = [np.asarray(X, dtype=np.float64)]
        n_layers = len(self.params) // 2
        for k in range(n_layers - 1):
            acts.append(np.tanh(acts[-1] @ self.params[2 * k] + self.params[2 * k + 1]))
        logits = acts[-1] @ self.params[-2] + self.params[-1]
        logp = logits - logits.max(axis=1, keepdims=True)
        logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
        return acts, logp

    def predict_proba(self, X):
        return np.exp(self._forward(X)[1])


def loss_and_grad(model: MlpModel, X, labels, fr_probs=None):
    """Mean cross-entropy on ``labels`` plus, when ``fr_probs`` is given, the soft-target
    cross-entropy against the stored earlier predictions.

    Log-probabilities are floored at ``log(1e-12)``; gradients are exact for the
    floored loss.  Returns ``(loss, grads)`` with ``grads`` aligned to ``model.params``.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    B = X.shape[0]
    acts, logp = model._forward(X)
    targets = np.zeros_like(logp)
    targets[np.arange(B), labels] = 1.0
    if fr_probs is not None:
        fr_probs = np.asarray(fr_probs, dtype=np.float64)
        if fr_probs.shape != logp.shape:
            raise ParameterError(f"retroactive targets have shape {fr_probs.shape}, expected {logp.shape}")
        targets = targets + fr_probs
    floor = np.log(LOG_FLOOR)
    active = logp > floor
    loss = -float(np.sum(targets * np.maximum(logp, floor))) / B
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss")
    r = targets * active
    dz = (np.exp(logp) * r.sum(axis=1, keepdims=True) - r) / B
    grads = [None] * len(model.params)
    for k in range(len(model.params) // 2 - 1, -1, -1):
        h = acts[k]
        grads[2 * k] = h.T @ dz
        grads[2 * k + 1] = dz.sum(axis=0)
        if k:
            dz = (dz @ model.params[2 * k].T) * (1.0 - h**2)
    return loss, grads


@dataclass
class AdaCorrConfig:
    burn_in: int = 25
    epochs: int = 120
    delta: float = 0.95
    correction_offset: int = 10
    refresh_offset: int = 40
    lr: float = 0.05
    lr_halve_every: Optional[int] = 60
    batch_size: int = 128
    hidden: tuple = (32, 32)
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not (0 <= self.burn_in < self.epochs):
            raise ParameterError("need 0 <= burn_in < epochs")
        if not (0 < self.delta <= 1):
            raise ParameterError("delta must lie in (0, 1]")
        if self.lr <= 0 or self.batch_size < 1:
            raise ParameterError("lr must be positive and batch_size >= 1")
        if self.lr_halve_every is not None and self.lr_halve_every < 1:
            raise ParameterError("lr_halve_every must be positive or None")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_acc_current: float
    test_acc_clean: float
    frac_labels_bayes: float
    n_flipped: int
    loss: float


TRACE_COLUMNS = ("epoch", "train_acc_current", "test_acc_clean", "frac_labels_bayes", "n_flipped", "loss")


@dataclass
class TrainingTrace:
    records: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.train_acc_current:.17g},{r.test_acc_clean:.17g},"
                f"{r.frac_labels_bayes:.17g},{r.n_flipped},{r.loss:.17g}"
            )
        return "\n".join(lines) + "\n"


class TrainingDiverged(NumericalError):
    def __init__(self, message, trace: TrainingTrace):
        super().__init__(message)
        self.trace = trace


def evaluate(model: ConditionalModel, data: LabeledDataset, against: str = "clean") -> float:
    """Fraction of samples whose argmax prediction equals the requested labels."""
    target = data.labels(against)
    return float(np.mean(np.argmax(model.predict_proba(data.features), axis=1) == target))


def _reference_labels(data: LabeledDataset) -> Optional[np.ndarray]:
    if data.bayes_labels is not None:
        return data.bayes_labels
    return data.clean_labels


def _run(data, test, config, rng, adacorr: bool):
    if test.clean_labels is None:
        raise StateError("test set needs clean labels")
    if test.n_classes != data.n_classes or test.d != data.d:
        raise ParameterError("train and test sets disagree on shape")
    rng = RandomSource(config.seed) if rng is None else rng
    X = data.features
    n = data.n
    model = MlpModel([data.d, *config.hidden, data.n_classes], rng)
    labels = np.array(data.noisy_labels)
    reference = _reference_labels(data)
    fr = None
    trace = TrainingTrace()
    m = config.burn_in
    for epoch in range(1, config.epochs + 1):
        n_flipped = 0
        if adacorr and epoch == m + 1:
            fr = model.predict_proba(X)
        if adacorr and epoch == m + config.refresh_offset and epoch > m + 1:
            fr = model.predict_proba(X)
        if adacorr and epoch >= m + config.correction_offset and epoch > m:
            _, rejected, labels, _ = correct_rows(model.predict_proba(X), labels, config.delta)
            n_flipped = int(rejected.sum())
        step = config.lr
        if config.lr_halve_every:
            step *= 0.5 ** ((epoch - 1) // config.lr_halve_every)
        order = rng.generator("train/shuffle", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            try:
                loss, grads = loss_and_grad(model, X[idx], labels[idx], None if fr is None else fr[idx])
            except NumericalError as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch at {start}: {exc}", trace) from None
            for p, g in zip(model.params, grads):
                p -= step * g
            total += loss * idx.size
        predictions = np.argmax(model.predict_proba(X), axis=1)
        trace.records.append(
            EpochRecord(
                epoch=epoch,
                train_acc_current=float(np.mean(predictions == labels)),
                test_acc_clean=evaluate(model, test, "clean"),
                frac_labels_bayes=float("nan") if reference is None else float(np.mean(labels == reference)),
                n_flipped=n_flipped,
                loss=total / n,
            )
        )
    return model, trace, data.replace(noisy_labels=labels)


def train_adacorr(data: LabeledDataset, test: LabeledDataset, config: AdaCorrConfig, rng: Optional[RandomSource] = None):
    """Burn-in on cross-entropy, then retroactive + cross-entropy training with a
    likelihood-ratio correction pass at the start of every epoch from ``burn_in + 10``.

    The retroactive targets are the per-sample predictions after the burn-in, refreshed
    once at epoch ``burn_in + 40`` (skipped when training ends earlier).
    Returns ``(model, trace, corrected_dataset)``.
    """
    return _run(data, test, config, rng, adacorr=True)


def train_standard(data: LabeledDataset, test: LabeledDataset, config: AdaCorrConfig, rng: Optional[RandomSource] = None):
    """Plain cross-entropy training on ``data.noisy_labels`` with the same budget."""
    return _run(data, test, config, rng, adacorr=False)


def checkpoint_bytes(model: MlpModel) -> bytes:
    out = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(model.widths))]
    out.append(struct.pack(f"<{len(model.widths)}I", *model.widths))
    for p in model.params:
        out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(model: MlpModel, path) -> None:
    atomic_write_bytes(path, checkpoint_bytes(model))


def load_checkpoint(path) -> MlpModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise SchemaError(f"{path}: not a model checkpoint")
    version, n_w = struct.unpack_from("<II", blob, 8)
    if version != CHECKPOINT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {version}")
    widths = struct.unpack_from(f"<{n_w}I", blob, 16)
    offset = 16 + 4 * n_w
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            params.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy())
            offset += 8 * count
    if offset != len(blob):
        raise SchemaError(f"{path}: trailing bytes in checkpoint")
    return MlpModel(widths, params=params)

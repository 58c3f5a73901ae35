"""Structured experiment configuration and the oracle bounds pipeline."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .bounds import (
    PerturbedModel,
    TsybakovFit,
    bound_corollary_binary,
    bound_lemma1,
    bound_thm1,
    bound_thm2,
    empirical_correction_error,
    empirical_joint,
    empirical_psi,
    empirical_side_errors,
    epsilon_sup,
    fit_tsybakov,
)
from .core import ParameterError, TransitionMatrix, compose_noisy_conditional, make_pair_flip, make_uniform_flip
from .lrt import (
    correct_rows,
    delta_binary_corollary,
    delta_sensitivity,
    delta_specificity,
    delta_theorem1,
    delta_theorem2,
    lrt_correct_dataset,
)
from .noise import inject_noise
from .rng import RandomSource
from .synth import GaussianMixtureSpec, bayes_labels, exact_eta, sample_dataset
from .train import AdaCorrConfig

DELTA_MODES = ("fixed", "thm-sensitivity", "thm-specificity", "binary-corollary")
NOISE_KINDS = ("uniform", "pair", "binary", "custom")


def _require_seed(section: str, doc: dict) -> int:
    if "seed" not in doc:
        raise ParameterError(f"[{section}] needs an explicit seed")
    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ParameterError(f"[{section}] seed must be a non-negative integer")
    return seed


def _known(section: str, doc: dict, allowed) -> None:
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ParameterError(f"[{section}] unknown field {extra[0]!r}")


@dataclass
class SynthSection:
    seed: int
    n: int = 20000
    mixture: str = "paper"
    dim: Optional[int] = None
    n_classes: int = 3
    scale: float = 2.0
    first_id: int = 0

    def spec(self) -> GaussianMixtureSpec:
        if self.mixture == "paper":
            return GaussianMixtureSpec.paper_mixture(10 if self.dim is None else self.dim)
        if self.mixture == "one-hot":
            return GaussianMixtureSpec.one_hot(self.n_classes, self.scale, self.dim)
        raise ParameterError(f"[synth] unknown mixture {self.mixture!r}")


@dataclass
class NoiseSection:
    seed: int
    kind: str = "uniform"
    rho: Optional[float] = None
    tau_10: Optional[float] = None
    tau_01: Optional[float] = None
    rows: Optional[list] = None

    def tau(self, n_classes: int) -> TransitionMatrix:
        if self.kind == "uniform":
            return make_uniform_flip(n_classes, self._need("rho"))
        if self.kind == "pair":
            return make_pair_flip(n_classes, self._need("rho"))
        if self.kind == "binary":
            if n_classes != 2:
                raise ParameterError("[noise] kind 'binary' needs a two-class mixture")
            return TransitionMatrix.binary(self._need("tau_10"), self._need("tau_01"))
        if self.kind == "custom":
            return TransitionMatrix(np.asarray(self._need("rows"), dtype=np.float64))
        raise ParameterError(f"[noise] unknown kind {self.kind!r}; expected one of {NOISE_KINDS}")

    def _need(self, name):
        value = getattr(self, name)
        if value is None:
            raise ParameterError(f"[noise] kind {self.kind!r} needs field {name!r}")
        return value


@dataclass
class FitSection:
    t_min: float = 0.01
    t_max: float = 0.9
    n_grid: int = 30
    mode: str = "auto"
    drop_saturated: bool = True


@dataclass
class CorrectionSection:
    # None picks binary-corollary for two classes and thm-sensitivity otherwise
    delta_mode: Optional[str] = None
    delta: Optional[float] = None

    def __post_init__(self):
        if self.delta_mode is not None and self.delta_mode not in DELTA_MODES:
            raise ParameterError(f"[correction] delta_mode must be one of {DELTA_MODES}")
        if self.delta_mode == "fixed" and self.delta is None:
            raise ParameterError("[correction] delta_mode 'fixed' needs field 'delta'")


@dataclass
class BoundsSection:
    seed: int
    epsilons: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    t0: Optional[float] = None

    def __post_init__(self):
        self.epsilons = [float(e) for e in self.epsilons]
        if any(e < 0 for e in self.epsilons):
            raise ParameterError("[bounds] epsilons must be non-negative")


@dataclass
class ExperimentConfig:
    synth: SynthSection
    noise: NoiseSection
    fit: FitSection = field(default_factory=FitSection)
    correction: CorrectionSection = field(default_factory=CorrectionSection)
    bounds: Optional[BoundsSection] = None
    train: Optional[AdaCorrConfig] = None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _known("top level", doc, ("synth", "noise", "fit", "correction", "bounds", "train"))
        for name in ("synth", "noise"):
            if name not in doc:
                raise ParameterError(f"config needs a [{name}] section")

        def build(name, klass, seeded):
            section = dict(doc.get(name, {}))
            _known(name, section, klass.__dataclass_fields__)
            if seeded:
                _require_seed(name, section)
            try:
                return klass(**section)
            except TypeError as exc:
                raise ParameterError(f"[{name}] {exc}") from None

        train = None
        if "train" in doc:
            train = build("train", AdaCorrConfig, True)
        return cls(
            synth=build("synth", SynthSection, True),
            noise=build("noise", NoiseSection, True),
            fit=build("fit", FitSection, False),
            correction=build("correction", CorrectionSection, False),
            bounds=build("bounds", BoundsSection, True) if "bounds" in doc else None,
            train=train,
        )

    def to_dict(self) -> dict:
        out = {}
        for name in ("synth", "noise", "fit", "correction", "bounds", "train"):
            value = getattr(self, name)
            if value is None:
                continue
            out[name] = value.to_dict() if hasattr(value, "to_dict") else asdict(value)
        return {k: {kk: vv for kk, vv in v.items() if vv is not None} for k, v in out.items()}

    def seeds(self) -> dict:
        out = {"synth": self.synth.seed, "noise": self.noise.seed}
        if self.bounds is not None:
            out["bounds"] = self.bounds.seed
        if self.train is not None:
            out["train"] = self.train.seed
        return out


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as TOML scalars or arrays."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    doc = copy.deepcopy(doc)
    for item in assignments or ():
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ParameterError(f"override {item!r} is not of the form section.key=value")
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        doc.setdefault(section, {})[name] = value
    return doc


@dataclass
class OraclePipeline:
    """Samples with clean, noisy and Bayes labels plus the exact conditionals."""

    config: ExperimentConfig
    spec: GaussianMixtureSpec
    tau: TransitionMatrix
    data: object
    eta: object
    eta_tilde: object


def build_pipeline(cfg: ExperimentConfig) -> OraclePipeline:
    spec = cfg.synth.spec()
    eta = exact_eta(spec)
    tau = cfg.noise.tau(spec.n_classes)
    data = sample_dataset(spec, cfg.synth.n, RandomSource(cfg.synth.seed), first_id=cfg.synth.first_id)
    data = inject_noise(bayes_labels(eta, data), tau, RandomSource(cfg.noise.seed))
    return OraclePipeline(cfg, spec, tau, data, eta, compose_noisy_conditional(eta, tau))


def fit_from_config(pipe: OraclePipeline) -> TsybakovFit:
    f = pipe.config.fit
    return fit_tsybakov(
        pipe.eta, pipe.data, t_min=f.t_min, t_max=f.t_max, n_grid=f.n_grid, mode=f.mode, drop_saturated=f.drop_saturated
    )


def resolve_delta(mode: str, fixed: Optional[float], eta, tau, f, data) -> float:
    if mode == "fixed":
        return float(fixed)
    if mode == "binary-corollary":
        return delta_binary_corollary(tau)
    if mode == "thm-sensitivity":
        return delta_sensitivity(eta, tau, f, data)
    if mode == "thm-specificity":
        return delta_specificity(eta, tau, f, data)
    raise ParameterError(f"unknown delta mode {mode!r}")


def run_bounds_experiment(cfg: ExperimentConfig, fit: Optional[TsybakovFit] = None) -> dict:
    """Perturb the exact noisy conditional at every epsilon, correct, and compare the
    empirical error frequencies with the closed-form bounds.

    Bounds are evaluated at the measured sup-norm error of the perturbed model, which
    never exceeds the nominal epsilon.
    """
    if cfg.bounds is None:
        raise ParameterError("config needs a [bounds] section")
    pipe = build_pipeline(cfg)
    fit = fit_from_config(pipe) if fit is None else fit
    binary = pipe.spec.n_classes == 2
    t0 = cfg.bounds.t0 if cfg.bounds.t0 is not None else (0.5 if binary else 1.0)
    data, tau = pipe.data, pipe.tau
    perturb_rng = RandomSource(cfg.bounds.seed)
    mode = cfg.correction.delta_mode or ("binary-corollary" if binary else "thm-sensitivity")
    records = []
    for k, eps in enumerate(cfg.bounds.epsilons):
        f = pipe.eta_tilde if eps == 0 else PerturbedModel(pipe.eta_tilde, eps, perturb_rng, pipe.spec.dim, stream=f"perturb/{k}")
        probs = f.predict_proba(data.features)
        measured = epsilon_sup(f, pipe.eta_tilde, data)
        delta = resolve_delta(mode, cfg.correction.delta, pipe.eta, tau, f, data)
        corrected, report = lrt_correct_dataset(data, f, delta, probs=probs)
        base = {"epsilon": eps, "epsilon_measured": measured, "delta_used": report.delta_used}
        if binary:
            Delta = delta_theorem1(tau)
            joint = bound_thm1(measured, fit, tau, t0)
            corr = bound_corollary_binary(measured, fit, tau, t0)
            rows = [
                ("thm1", joint, empirical_joint(f, data, Delta, probs=probs), Delta),
                ("corollary_binary", corr, empirical_correction_error(corrected), None),
            ]
        else:
            Delta = delta_theorem2(pipe.eta, tau, data)
            psi = empirical_psi(pipe.eta, f, data)
            flipped, kept = empirical_side_errors(corrected, report)
            rows = [
                ("thm2", bound_thm2(measured, fit, tau, t0), empirical_joint(f, data, Delta, probs=probs), Delta),
                ("lemma1_reject", bound_lemma1(measured, fit, tau, psi, "reject", t0), flipped, None),
                ("lemma1_accept", bound_lemma1(measured, fit, tau, psi, "accept", t0), kept, None),
            ]
        for kind, bound, empirical, level in rows:
            rec = dict(base, bound_kind=kind, bound_value=bound.value, empirical_value=empirical, validity_flag=bound.valid)
            if bound.per_case is not None:
                rec["bound_per_case"] = bound.per_case
            if level is not None:
                rec["confidence_level"] = level
            records.append(rec)
    return {"fit": fit.to_dict(), "tau": tau.to_dict(), "t0": t0, "records": records}


def correct_with_oracle(pipe: OraclePipeline, delta: float):
    """Single oracle correction pass with ``f`` equal to the exact noisy conditional."""
    F = pipe.eta_tilde.predict_proba(pipe.data.features)
    _, rejected, new, _ = correct_rows(F, pipe.data.noisy_labels, delta)
    return pipe.data.replace(noisy_labels=new), rejected

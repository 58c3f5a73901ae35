"""Property-based checks of the numerical invariants."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lrtcorrect import RandomSource
from lrtcorrect.bounds import (
    TsybakovFit,
    bound_corollary_binary,
    bound_lemma1,
    bound_thm1,
    bound_thm2,
    bound_thm3,
    margin_probability,
)
from lrtcorrect.core import (
    ConstantModel,
    FunctionModel,
    TransitionMatrix,
    compose_noisy_conditional,
    make_pair_flip,
    make_uniform_flip,
    top_two,
)
from lrtcorrect.lrt import correct_rows, likelihood_ratio_rows, lrt_correct_dataset
from lrtcorrect.synth import GaussianMixtureSpec, exact_eta, sample_dataset

from oracles import argmax_lowest

MANY = settings(max_examples=1000)

unit = st.floats(0.0, 1.0, allow_nan=False, allow_subnormal=False)


@st.composite
def prob_rows(draw, n_rows=None, n_classes=None):
    k = draw(st.integers(2, 8)) if n_classes is None else n_classes
    r = draw(st.integers(1, 12)) if n_rows is None else n_rows
    raw = draw(arrays(np.float64, (r, k), elements=unit))
    # keep rows away from all-zero so they normalize
    raw[:, 0] += 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


@st.composite
def stochastic_matrix(draw, n_classes):
    raw = draw(arrays(np.float64, (n_classes, n_classes), elements=unit)) + 1e-3
    raw[np.diag_indices(n_classes)] += n_classes
    return TransitionMatrix(raw / raw.sum(axis=1, keepdims=True))


@st.composite
def uniform_args(draw):
    n = draw(st.integers(2, 20))
    rho = draw(st.floats(0.0, (n - 1) / n, exclude_max=True, allow_subnormal=False))
    return n, rho


@st.composite
def lrt_case(draw):
    F = draw(prob_rows())
    labels = draw(arrays(np.int64, F.shape[0], elements=st.integers(0, F.shape[1] - 1)))
    return F, labels


# -- transition matrices and the noisy conditional ---------------------------------


@MANY
@given(uniform_args(), st.booleans())
def test_constructed_matrices_are_stochastic(args, pair):
    n, rho = args
    tau = make_pair_flip(n, min(rho, 0.499)) if pair else make_uniform_flip(n, rho)
    assert np.all(np.abs(tau.rows.sum(axis=1) - 1.0) < 1e-12)
    assert np.all((tau.rows >= 0) & (tau.rows <= 1))
    assert tau.is_diagonally_dominant()


@MANY
@given(st.integers(2, 6).flatmap(lambda k: st.tuples(prob_rows(n_classes=k), prob_rows(n_classes=k), stochastic_matrix(k))))
def test_noisy_conditional_normalized_and_linear(case):
    A, B, tau = case
    n = min(len(A), len(B))
    A, B = A[:n], B[:n]
    X = np.zeros((n, 1))

    def noisy(P):
        return compose_noisy_conditional(FunctionModel(lambda _: P, P.shape[1]), tau).predict_proba(X)

    na, nb = noisy(A), noisy(B)
    assert np.all(np.abs(na.sum(axis=1) - 1.0) < 1e-9)
    assert np.all(na >= 0)
    assert np.max(np.abs(noisy(0.5 * A + 0.5 * B) - (0.5 * na + 0.5 * nb))) < 1e-12


@MANY
@given(prob_rows(n_rows=1))
def test_top_two_survives_monotone_rescaling(P):
    p = P[0]
    q = p**3 / np.sum(p**3)
    # cubing can merge nearly equal entries in floating point; exact ties must be preserved
    assume(len(np.unique(p)) == len(np.unique(q)))
    assert top_two(p) == top_two(q)


# -- likelihood-ratio correction ---------------------------------------------------


@MANY
@given(lrt_case(), unit)
def test_decision_invariants(case, delta):
    F, labels = case
    lr, rejected, new, m = correct_rows(F, labels, delta)
    assert np.all((lr >= 0) & (lr <= 1))
    assert np.array_equal(rejected, lr < delta)
    assert np.all(F[np.arange(len(F)), new][rejected] == F.max(axis=1)[rejected])
    assert np.array_equal(new[~rejected], labels[~rejected])


@MANY
@given(lrt_case(), unit)
def test_correction_is_idempotent(case, delta):
    F, labels = case
    _, _, once, _ = correct_rows(F, labels, delta)
    _, rejected, twice, _ = correct_rows(F, once, delta)
    assert not rejected.any()
    assert np.array_equal(once, twice)


@MANY
@given(lrt_case(), unit, unit)
def test_flipped_set_grows_with_delta(case, a, b):
    F, labels = case
    lo, hi = sorted((a, b))
    _, small, _, _ = correct_rows(F, labels, lo)
    _, large, _, _ = correct_rows(F, labels, hi)
    assert np.all(large[small])


@MANY
@given(lrt_case(), st.floats(1e-3, 1e3), unit)
def test_decisions_scale_invariant(case, c, delta):
    F, labels = case
    G = F * c
    G /= G.sum(axis=1, keepdims=True)
    lr_f = likelihood_ratio_rows(F, labels)
    lr_g = likelihood_ratio_rows(G, labels)
    assert np.allclose(lr_f, lr_g, rtol=0, atol=1e-12)
    _, rf, nf, _ = correct_rows(F, labels, delta)
    _, rg, ng, _ = correct_rows(G, labels, delta)
    # rounding can only matter for ratios sitting on the threshold
    clear = np.abs(lr_f - delta) > 1e-12
    assert np.array_equal(rf[clear], rg[clear])
    assert np.array_equal(nf[clear], ng[clear])


@pytest.mark.parametrize("n_classes,rho", [(3, 0.3), (5, 0.6), (10, 0.4)])
def test_symmetric_noise_preserves_argmax(n_classes, rho):
    spec = GaussianMixtureSpec.one_hot(n_classes)
    eta = exact_eta(spec)
    data = sample_dataset(spec, 10_000, RandomSource(n_classes))
    P = eta.predict_proba(data.features)
    Pt = compose_noisy_conditional(eta, make_uniform_flip(n_classes, rho)).predict_proba(data.features)
    for row, noisy_row in zip(P, Pt):
        assert argmax_lowest(row) == argmax_lowest(noisy_row)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_oracle_correction_at_one_recovers_argmax(seed):
    spec = GaussianMixtureSpec.one_hot(4)
    eta = exact_eta(spec)
    data = sample_dataset(spec, 200, RandomSource(seed))
    f = compose_noisy_conditional(eta, make_uniform_flip(4, 0.5))
    corrected, report = lrt_correct_dataset(data, f, 1.0)
    assert np.array_equal(corrected.noisy_labels, np.argmax(eta.predict_proba(data.features), axis=1))


# -- bounds ------------------------------------------------------------------------

constants = st.tuples(st.floats(0.01, 5.0), st.floats(0.1, 3.0))
eps = st.floats(0.0, 2.0, allow_subnormal=False)


@MANY
@given(constants, eps, eps, st.floats(0.0, 0.45), st.floats(0.0, 0.45), st.floats(0.0, 1.0))
def test_bounds_nonnegative_and_nondecreasing(cl, e1, e2, t10, t01, psi):
    fit = TsybakovFit.from_constants(*cl)
    binary = TransitionMatrix.binary(t10, t01)
    multi = make_uniform_flip(3, 0.3)
    lo, hi = sorted((e1, e2))
    evaluators = [
        lambda e: bound_thm1(e, fit, binary).value,
        lambda e: bound_corollary_binary(e, fit, binary).value,
        lambda e: bound_thm2(e, fit, multi).value,
        lambda e: bound_lemma1(e, fit, make_pair_flip(3, 0.2), psi, "reject").value,
        lambda e: bound_lemma1(e, fit, make_pair_flip(3, 0.2), psi, "accept").value,
        lambda e: bound_thm3(e, 0.01, 0.5, fit, make_pair_flip(3, 0.2), psi, "accept").value,
    ]
    for bound in evaluators:
        a, b = bound(lo), bound(hi)
        assert 0 <= a <= b


@MANY
@given(constants, st.floats(1e-4, 1.0), st.floats(0.1, 10.0), st.floats(0.0, 0.45), st.floats(0.0, 0.45))
def test_pure_power_bounds_are_homogeneous(cl, e, k, t10, t01):
    fit = TsybakovFit.from_constants(*cl)
    binary = TransitionMatrix.binary(t10, t01)
    multi = make_pair_flip(4, 0.25)
    for bound in (
        lambda x: bound_thm1(x, fit, binary).value,
        lambda x: bound_thm2(x, fit, multi).value,
        lambda x: bound_lemma1(x, fit, multi, 0.0, "reject").value,
    ):
        assert bound(k * e) == pytest.approx(k**fit.lam * bound(e), rel=1e-10)


@given(constants)
def test_bounds_vanish_at_zero(cl):
    fit = TsybakovFit.from_constants(*cl)
    tau = make_uniform_flip(2, 0.3)
    assert bound_thm1(0.0, fit, tau).value == 0
    assert bound_corollary_binary(0.0, fit, tau).value == 0
    assert bound_thm2(0.0, fit, tau).value == 0
    assert bound_lemma1(0.0, fit, tau, 0.0, "accept").value == 0
    assert bound_thm3(0.0, 0.0, 0.5, fit, tau, 0.0, "reject").value == 0


@given(unit, unit)
def test_margin_probability_nondecreasing(paper_eta, mixture_10k, a, b):
    lo, hi = sorted((a, b))
    assert margin_probability(paper_eta, mixture_10k, lo) <= margin_probability(paper_eta, mixture_10k, hi)


@given(prob_rows(n_rows=1), st.integers(0, 7))
def test_constant_model_ratio_definition(P, label):
    p = P[0]
    label = label % p.size
    f = ConstantModel(p)
    lr = likelihood_ratio_rows(f.predict_proba(np.zeros((1, 1))), np.array([label]))[0]
    assert lr == pytest.approx(p[label] / p.max(), abs=1e-15)

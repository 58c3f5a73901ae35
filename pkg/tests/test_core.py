import numpy as np
import pytest

from lrtcorrect import (
    ConstantModel,
    FunctionModel,
    LabeledDataset,
    ParameterError,
    SchemaError,
    StateError,
    TransitionMatrix,
    as_prob_vector,
    compose_noisy_conditional,
    make_pair_flip,
    make_uniform_flip,
    top_two,
)

from oracles import noisy_posterior_loop


class TestUniformFlip:
    def test_zero_noise_is_identity(self):
        assert np.array_equal(make_uniform_flip(2, 0.0).rows, np.eye(2))

    def test_ten_classes_rho_04(self):
        tau = make_uniform_flip(10, 0.4)
        assert np.allclose(np.diag(tau.rows), 0.6, atol=0, rtol=1e-15)
        off = tau.rows[~np.eye(10, dtype=bool)]
        assert np.allclose(off, 0.4 / 9, atol=0, rtol=1e-15)

    def test_three_classes_rows(self):
        tau = make_uniform_flip(3, 0.3)
        assert np.allclose(tau.rows[0], [0.7, 0.15, 0.15])
        assert np.all(np.abs(tau.rows.sum(axis=1) - 1) < 1e-12)
        assert tau.kind == "uniform" and tau.rho == 0.3

    @pytest.mark.parametrize("n, rho", [(2, 0.5), (3, 2 / 3), (2, -0.1), (1, 0.1), (2.5, 0.1)])
    def test_rejects_bad_arguments(self, n, rho):
        with pytest.raises(ParameterError):
            make_uniform_flip(n, rho)


class TestPairFlip:
    def test_four_classes(self):
        tau = make_pair_flip(4, 0.2)
        expected = 0.8 * np.eye(4) + 0.2 * np.roll(np.eye(4), 1, axis=1)
        assert np.array_equal(tau.rows, expected)

    def test_binary_is_symmetric(self):
        assert np.allclose(make_pair_flip(2, 0.3).rows, [[0.7, 0.3], [0.3, 0.7]])

    def test_zero_is_identity(self):
        assert np.array_equal(make_pair_flip(5, 0.0).rows, np.eye(5))

    def test_rho_half_rejected(self):
        with pytest.raises(ParameterError):
            make_pair_flip(4, 0.5)


class TestTransitionMatrix:
    def test_rejects_non_stochastic(self):
        with pytest.raises(ParameterError):
            TransitionMatrix(np.array([[0.9, 0.2], [0.1, 0.9]]))

    def test_rejects_binary_degenerate(self):
        with pytest.raises(ParameterError):
            TransitionMatrix.binary(0.5, 0.5)

    def test_binary_layout(self):
        tau = TransitionMatrix.binary(tau_10=0.1, tau_01=0.3)
        assert tau.binary_rates() == (0.3, 0.1)
        assert np.allclose(tau.rows, [[0.7, 0.3], [0.1, 0.9]])

    def test_dominance_violations_reported(self):
        tau = TransitionMatrix(np.array([[0.4, 0.6, 0.0], [0.0, 1.0, 0.0], [0.2, 0.3, 0.5]]))
        assert tau.dominance_violations() == [(0, 1)]
        assert not tau.is_diagonally_dominant()
        assert make_uniform_flip(3, 0.3).is_diagonally_dominant()

    def test_symmetric_uniform(self):
        assert make_uniform_flip(4, 0.2).is_symmetric_uniform()
        assert not make_pair_flip(4, 0.2).is_symmetric_uniform()
        assert not TransitionMatrix.binary(0.2, 0.3).is_symmetric_uniform()

    def test_binary_rates_need_two_classes(self):
        with pytest.raises(ParameterError):
            make_uniform_flip(3, 0.1).binary_rates()

    def test_dict_round_trip(self):
        tau = make_pair_flip(3, 0.25)
        back = TransitionMatrix.from_dict(tau.to_dict())
        assert np.array_equal(back.rows, tau.rows) and back.kind == "pair" and back.rho == 0.25

    def test_from_dict_checks_fields(self):
        with pytest.raises(SchemaError, match="rows"):
            TransitionMatrix.from_dict({"n_classes": 2})
        with pytest.raises(SchemaError, match="n_classes"):
            TransitionMatrix.from_dict({"n_classes": 3, "rows": [[1, 0], [0, 1]]})

    def test_rows_read_only(self):
        with pytest.raises(ValueError):
            make_uniform_flip(2, 0.1).rows[0, 0] = 0.5


class TestCompose:
    def test_binary_arithmetic(self):
        eta = ConstantModel([0.5, 0.5])
        tau = TransitionMatrix.binary(tau_10=0.1, tau_01=0.3)
        assert compose_noisy_conditional(eta, tau).predict(np.zeros(1))[1] == pytest.approx(0.6, abs=1e-15)

    def test_identity_tau(self):
        rng = np.random.default_rng(0)
        P = rng.dirichlet(np.ones(4), size=50)
        eta = FunctionModel(lambda X: P, 4)
        out = compose_noisy_conditional(eta, TransitionMatrix(np.eye(4))).predict_proba(np.zeros((50, 1)))
        assert np.array_equal(out, P)

    def test_three_class_against_loop(self):
        eta = [0.7, 0.2, 0.1]
        tau = make_uniform_flip(3, 0.3)
        got = compose_noisy_conditional(ConstantModel(eta), tau).predict(np.zeros(1))
        assert np.allclose(got, noisy_posterior_loop(eta, tau.rows.tolist()), atol=1e-15)
        assert np.allclose(got, [0.535, 0.26, 0.205], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            compose_noisy_conditional(ConstantModel([0.5, 0.5]), make_uniform_flip(3, 0.1))


class TestTopTwo:
    @pytest.mark.parametrize(
        "p, expected", [((0.5, 0.3, 0.2), (0, 1)), ((0.5, 0.5), (0, 1)), ((0.1, 0.1, 0.8), (2, 0))]
    )
    def test_examples(self, p, expected):
        assert top_two(p) == expected

    def test_needs_two_classes(self):
        with pytest.raises(ParameterError):
            top_two([1.0])


class TestProbVector:
    def test_accepts_text_tolerance(self):
        as_prob_vector([0.3333333333, 0.3333333333, 0.3333333334])

    @pytest.mark.parametrize("p", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0], [1.0]])
    def test_rejects(self, p):
        with pytest.raises(ParameterError):
            as_prob_vector(p)


class TestLabeledDataset:
    def test_shapes_and_read_only(self):
        data = LabeledDataset(np.zeros((3, 2)), [0, 1, 1], 2, clean_labels=[0, 1, 0])
        assert (data.n, data.d) == (3, 2)
        assert np.array_equal(data.sample_ids, [0, 1, 2])
        with pytest.raises(ValueError):
            data.noisy_labels[0] = 1

    def test_label_range_checked(self):
        with pytest.raises(ParameterError):
            LabeledDataset(np.zeros((2, 1)), [0, 2], 2)
        with pytest.raises(ParameterError):
            LabeledDataset(np.zeros((2, 1)), [0, 1], 2, clean_labels=[0])

    def test_missing_labels_state_error(self):
        data = LabeledDataset(np.zeros((2, 1)), [0, 1], 2)
        with pytest.raises(StateError):
            data.labels("bayes")

    def test_take_keeps_ids(self):
        data = LabeledDataset(np.arange(8.0).reshape(4, 2), [0, 1, 0, 1], 2, sample_ids=[10, 11, 12, 13])
        sub = data.take([3, 1])
        assert np.array_equal(sub.sample_ids, [13, 11])
        assert np.array_equal(sub.features, [[6, 7], [2, 3]])

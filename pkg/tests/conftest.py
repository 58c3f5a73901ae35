import numpy as np
import pytest
from hypothesis import settings

from lrtcorrect import RandomSource, make_uniform_flip
from lrtcorrect.synth import GaussianMixtureSpec, bayes_labels, exact_eta, sample_dataset

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def paper_spec():
    return GaussianMixtureSpec.paper_mixture()


@pytest.fixture(scope="session")
def paper_eta(paper_spec):
    return exact_eta(paper_spec)


@pytest.fixture(scope="session")
def mixture_10k(paper_spec, paper_eta):
    data = sample_dataset(paper_spec, 10_000, RandomSource(3))
    return bayes_labels(paper_eta, data)


@pytest.fixture(scope="session")
def three_class():
    spec = GaussianMixtureSpec.one_hot(3)
    eta = exact_eta(spec)
    data = bayes_labels(eta, sample_dataset(spec, 10_000, RandomSource(5)))
    return spec, eta, data

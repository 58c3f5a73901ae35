"""Error-bounded correction of noisy labels with a likelihood-ratio test."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ConditionalModel,
    ConstantModel,
    DegenerateClassifierError,
    FunctionModel,
    InsufficientDataError,
    LabeledDataset,
    LrtError,
    NoisyConditional,
    NumericalError,
    ParameterError,
    SchemaError,
    StateError,
    TransitionMatrix,
    as_prob_vector,
    compose_noisy_conditional,
    make_pair_flip,
    make_uniform_flip,
    top_two,
    top_two_rows,
)
from .rng import RandomSource  # noqa: E402

"""Unsupervised segmentation of multi-step activity sequences.

Alternates between a discriminative anchor embedding of per-frame features
and a generative temporal model: per-video bags of sub-activity labels with
a collapsed Dirichlet prior, orderings under a Generalized Mallows model,
and optional background frames under a collapsed Beta-Bernoulli prior.
"""

from .embedding import EmbeddingWeights, FeatureCorpus
from .errors import InputError, StateError
from .inference import RunConfig, run_inference
from .io import GeneratorConfig, generate_synthetic
from .mallows import MallowsParams
from .metrics import evaluate_segmentation

__version__ = "0.1.0"

__all__ = [
    "EmbeddingWeights",
    "FeatureCorpus",
    "GeneratorConfig",
    "InputError",
    "MallowsParams",
    "RunConfig",
    "StateError",
    "evaluate_segmentation",
    "generate_synthetic",
    "run_inference",
    "__version__",
]

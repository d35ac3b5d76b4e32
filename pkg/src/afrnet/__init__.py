"""Zero-shot feature synthesis with adversarial residuals.

The pipeline: class-mean visual prototypes are regressed from semantic
vectors (one epsilon-SVR per dimension, PCA-reduced inputs), the
best-predicted dimensions are kept as the compact feature space, a
conditional WGAN-GP generates per-sample residuals around the predicted
prototypes, and a softmax (or nearest-prototype) classifier over the
synthesized unseen-class features is scored with class-balanced
accuracy under the conventional and generalized protocols.
"""

from . import autodiff, classifier, data, gan, kernels, prototype
from .errors import (
    AfrnetError,
    ContractError,
    DataError,
    DimensionError,
    FileFormatError,
    SolverError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "autodiff",
    "classifier",
    "data",
    "gan",
    "kernels",
    "prototype",
    "AfrnetError",
    "ContractError",
    "DataError",
    "DimensionError",
    "FileFormatError",
    "SolverError",
    "TrainingError",
    "__version__",
]

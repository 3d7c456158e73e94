"""Lane-attention vehicle trajectory prediction.

Thin Python facade over the C++ core: synthetic dataset generation,
two-phase training, multimodal prediction, and evaluation metrics.
"""

from laneattn._core import (
    ConfigError,
    DataError,
    Dataset,
    DimensionError,
    GeometryError,
    Model,
    NumericError,
    Scene,
    UsageError,
    ade,
    evaluate,
    evaluate_cv_baseline,
    generate,
    load_dataset,
    load_model,
    train,
    write_dataset,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "GeometryError",
    "Model",
    "NumericError",
    "Scene",
    "UsageError",
    "ade",
    "evaluate",
    "evaluate_cv_baseline",
    "generate",
    "load_dataset",
    "load_model",
    "train",
    "write_dataset",
]

__version__ = "0.1.0"

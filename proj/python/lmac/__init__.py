"""Python bindings for the lmac audio interpretation library."""

from ._lmac import (
    Classifier,
    ConfigError,
    Decoder,
    FormatError,
    LmacError,
    MissingPrerequisite,
    NumericError,
    ShapeError,
    complexity,
    evaluate_masks,
    generate_clip,
    interpret,
    istft,
    log_mel,
    run_cli,
    sparseness,
    ssim,
    stft,
)

__all__ = [
    "Classifier",
    "ConfigError",
    "Decoder",
    "FormatError",
    "LmacError",
    "MissingPrerequisite",
    "NumericError",
    "ShapeError",
    "complexity",
    "evaluate_masks",
    "generate_clip",
    "interpret",
    "istft",
    "log_mel",
    "run_cli",
    "sparseness",
    "ssim",
    "stft",
]

from .infer import ClassificationResult, forward, preprocess, softmax
from .kernels import BACKEND
from .model import (
    Layer,
    Model,
    ModelFormatError,
    bmnet_tiny,
    conv_output_size,
    load_model,
    save_model,
)

__all__ = [
    "BACKEND",
    "ClassificationResult",
    "Layer",
    "Model",
    "ModelFormatError",
    "bmnet_tiny",
    "conv_output_size",
    "forward",
    "load_model",
    "preprocess",
    "save_model",
    "softmax",
]

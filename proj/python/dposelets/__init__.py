"""Poselet person detection with HOG or learned convolutional features."""

from ._dposelets import (
    Box,
    Detection,
    DposeletsError,
    DetectConfig,
    Model,
    average_precision,
    classifier_ap,
    detect,
    evaluate,
    generate_toy_corpus,
    hog_descriptor,
    load_image,
)

__all__ = [
    "Box",
    "Detection",
    "DposeletsError",
    "DetectConfig",
    "Model",
    "average_precision",
    "classifier_ap",
    "detect",
    "evaluate",
    "generate_toy_corpus",
    "hog_descriptor",
    "load_image",
]

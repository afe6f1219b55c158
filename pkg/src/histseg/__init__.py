"""Superpixel + CNN page segmentation for historical document images."""

from histseg.imageio import (
    DEFAULT_PALETTE,
    FormatError,
    Palette,
    downscale,
    downscale_labels,
    load_gray,
    load_labels,
    write_labels,
)
from histseg.superpixel import SuperpixelMap, centroids, slic
from histseg.dataset import Patch, PatchSet, build_training_set, extract_patch, project_labels
from histseg.nn import Network, NetworkConfig, TrainConfig, predict, train
from histseg.metrics import ConfusionMatrix

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "DEFAULT_PALETTE",
    "FormatError",
    "Network",
    "NetworkConfig",
    "Palette",
    "Patch",
    "PatchSet",
    "SuperpixelMap",
    "TrainConfig",
    "build_training_set",
    "centroids",
    "downscale",
    "downscale_labels",
    "extract_patch",
    "load_gray",
    "load_labels",
    "predict",
    "project_labels",
    "slic",
    "train",
    "write_labels",
]

"""Neural possession backbone: set-attention embeddings over tracking data,
trained with coarse sender/receiver and edge-emission objectives, exported as
binary score files consumable by the possession-path decoding engine."""

from .data import Dataset, EpisodeTensors, load_dataset
from .graphrules import OUTSIDE_NAMES, EdgeRules, build_edge_rules
from .model import BackboneConfig, PossessionBackbone
from .scorefile import read_scores, write_scores
from .train import build_model, export_scores, train

__all__ = [
    "BackboneConfig",
    "Dataset",
    "EdgeRules",
    "EpisodeTensors",
    "OUTSIDE_NAMES",
    "PossessionBackbone",
    "build_edge_rules",
    "build_model",
    "export_scores",
    "load_dataset",
    "read_scores",
    "train",
    "write_scores",
]

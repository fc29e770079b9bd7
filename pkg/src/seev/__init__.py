"""Synthesis and exact verification of ReLU neural control barrier functions."""

__version__ = "0.1.0"

from .network import ActivationSet, Network, RegionAffine, load_weights, save_weights

__all__ = [
    "ActivationSet",
    "Network",
    "RegionAffine",
    "load_weights",
    "save_weights",
    "__version__",
]

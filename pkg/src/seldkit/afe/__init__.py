"""Auditory front-end: cochleagram, ratemap, AMS, spectral features, cues."""

from seldkit.afe.gammatone import (
    Cochleagram,
    cochleagram,
    erb_bandwidth,
    erb_rate,
    erb_rate_inverse,
    erb_space,
)
from seldkit.afe.ratemap import Ratemap, ratemap
from seldkit.afe.ams import AmsRepresentation, ams, modulation_centers
from seldkit.afe.spectral import (
    SPECTRAL_FEATURE_NAMES,
    spectral_features,
    spectral_features_block,
)
from seldkit.afe.cues import BinauralCues, binaural_cues

__all__ = [
    "AmsRepresentation",
    "BinauralCues",
    "Cochleagram",
    "Ratemap",
    "SPECTRAL_FEATURE_NAMES",
    "ams",
    "binaural_cues",
    "cochleagram",
    "erb_bandwidth",
    "erb_rate",
    "erb_rate_inverse",
    "erb_space",
    "modulation_centers",
    "ratemap",
    "spectral_features",
    "spectral_features_block",
]

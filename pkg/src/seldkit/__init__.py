"""seldkit: joint sound event detection and localization on binaural audio.

The package synthesizes binaural acoustic scenes, extracts an auditory
representation (gammatone cochleagram, ratemap, amplitude modulation
spectrogram, spectral features, interaural cues), spatially segregates the
scene into candidate streams via probabilistic softmasks, and trains sparse
logistic-regression detectors on block-level feature statistics.
"""

from seldkit.params import SAMPLE_RATE

__version__ = "0.1.0"

__all__ = ["SAMPLE_RATE", "__version__"]

"""Shared signal-processing constants.

Every stage of the pipeline operates on a fixed 44.1 kHz grid; frame and
block geometry is defined once here so that representations computed in
different modules stay aligned.
"""

from __future__ import annotations

SAMPLE_RATE = 44100

# Short-term frame grid shared by ratemap, AMS, spectral features and
# binaural cues.
FRAME_LEN_S = 0.020
FRAME_SHIFT_S = 0.010

# Block grid used for labeling, masking and feature assembly.  Kept in
# integer milliseconds; 333 ms is deliberately not 1/3 s.
BLOCK_LEN_MS = 500
BLOCK_SHIFT_MS = 333

# Gammatone filterbank layout.
RATEMAP_CHANNELS = 32
AMS_CHANNELS = 16
AMS_MOD_FILTERS = 8
FREQ_LO_HZ = 80.0
FREQ_HI_HZ = 8000.0

# Cross-correlation search range for interaural time differences.
MAX_ITD_S = 1.1e-3

# Energy floor used wherever a ratio could divide by zero.
ENERGY_EPS = 1e-12

# Activity threshold: a frame or block counts as active when its power
# exceeds the unit's peak power by more than this many dB down.
ACTIVITY_THRESHOLD_DB = -40.0


def frame_len_samples(fs: int = SAMPLE_RATE) -> int:
    return int(round(FRAME_LEN_S * fs))


def frame_shift_samples(fs: int = SAMPLE_RATE) -> int:
    return int(round(FRAME_SHIFT_S * fs))


def n_frames(n_samples: int, fs: int = SAMPLE_RATE) -> int:
    """Number of complete short-term frames in a signal."""
    flen = frame_len_samples(fs)
    shift = frame_shift_samples(fs)
    if n_samples < flen:
        return 0
    return (n_samples - flen) // shift + 1

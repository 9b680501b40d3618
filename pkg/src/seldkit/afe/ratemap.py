"""Ratemap: smoothed cochleagram energy on the short-term frame grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from seldkit.afe.gammatone import Cochleagram
from seldkit.params import (
    FRAME_LEN_S,
    FRAME_SHIFT_S,
    frame_len_samples,
    frame_shift_samples,
    n_frames,
)

LEAKY_TAU_S = 0.008


def frame_view(x: np.ndarray, flen: int, shift: int) -> np.ndarray:
    """Strided view (..., n_frames, flen) over the last axis, full frames only."""
    n = (x.shape[-1] - flen) // shift + 1
    if n <= 0:
        raise ValueError("signal shorter than one frame")
    view = np.lib.stride_tricks.sliding_window_view(x, flen, axis=-1)
    return view[..., ::shift, :][..., :n, :]


@dataclass
class Ratemap:
    """Frame-rate auditory spectrogram, (n_frames, n_channels)."""

    data: np.ndarray
    cfs: np.ndarray
    frame_len_s: float = FRAME_LEN_S
    frame_shift_s: float = FRAME_SHIFT_S

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def ratemap(coch: Cochleagram) -> Ratemap:
    """Leaky-integrate the cochleagram and average it over 20 ms frames.

    The integrator has an 8 ms time constant; frames advance every 10 ms.
    Frame count is ``floor((n_samples - frame_len) / shift) + 1``.
    """
    fs = coch.fs
    if n_frames(coch.n_samples, fs) < 1:
        raise ValueError("signal shorter than one frame")
    a = np.exp(-1.0 / (LEAKY_TAU_S * fs))
    smoothed = signal.lfilter([1.0 - a], [1.0, -a], coch.data, axis=1)
    frames = frame_view(smoothed, frame_len_samples(fs), frame_shift_samples(fs))
    return Ratemap(data=frames.mean(axis=-1).T.copy(), cfs=coch.cfs)

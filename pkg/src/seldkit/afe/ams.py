"""Amplitude modulation spectrogram (AMS).

Each channel of a 16-channel inner-hair-cell representation is analyzed by
a bank of 8 second-order bandpass modulation filters with center
frequencies doubling from 2 Hz to 256 Hz.  The envelope is first decimated
to 900 Hz (an integer divisor of 44.1 kHz whose frame grid stays aligned
with the 20 ms / 10 ms analysis frames); the anti-alias low-pass removes
carrier remnants that survive the inner-hair-cell smoothing.  Filter
output magnitudes are averaged per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from seldkit.afe.gammatone import Cochleagram
from seldkit.afe.ratemap import frame_view
from seldkit.params import AMS_MOD_FILTERS, n_frames

MOD_F_LO_HZ = 2.0
DECIMATION = 49  # 44100 / 49 = 900 Hz envelope rate


def modulation_centers(n_filters: int = AMS_MOD_FILTERS) -> np.ndarray:
    """Modulation filter center frequencies: 2, 4, ..., 256 Hz."""
    return MOD_F_LO_HZ * 2.0 ** np.arange(n_filters)


def _modulation_sos(fc: float, fs_env: float) -> np.ndarray:
    # Octave-wide band around fc; butter order 1 bandpass = 2 poles.
    lo = fc / np.sqrt(2.0)
    hi = fc * np.sqrt(2.0)
    return signal.butter(1, [lo / (fs_env / 2.0), hi / (fs_env / 2.0)], btype="band", output="sos")


@dataclass
class AmsRepresentation:
    """(n_frames, n_channels, n_mod_filters) modulation magnitudes."""

    data: np.ndarray
    cfs: np.ndarray
    mod_centers: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def ams(coch: Cochleagram) -> AmsRepresentation:
    """Modulation analysis of an inner-hair-cell representation.

    Returns per-frame mean magnitudes, shape
    (n_frames, n_channels, n_mod_filters); all values nonnegative.  The
    frame count matches the ratemap of the same signal.
    """
    fs = coch.fs
    if fs % DECIMATION != 0:
        raise ValueError("sample rate must be divisible by the envelope decimation")
    fs_env = fs // DECIMATION
    nf = n_frames(coch.n_samples, fs)
    if nf < 1:
        raise ValueError("signal shorter than one frame")

    env = signal.resample_poly(coch.data, up=1, down=DECIMATION, axis=1)
    flen = int(round(0.020 * fs_env))
    shift = int(round(0.010 * fs_env))

    centers = modulation_centers()
    out = np.empty((nf, coch.n_channels, centers.size))
    for m, fc in enumerate(centers):
        sos = _modulation_sos(fc, fs_env)
        y = signal.sosfilt(sos, env, axis=1)
        np.abs(y, out=y)
        frames = frame_view(y, flen, shift).mean(axis=-1).T
        out[:, :, m] = frames[:nf]
    return AmsRepresentation(data=out, cfs=coch.cfs, mod_centers=centers)

"""Per-frame, per-channel interaural cues.

For each 20 ms frame and gammatone channel the interaural time difference
(ITD) is the lag maximizing the normalized cross-correlation between the
mean-removed ear signals, searched over +/- 1.1 ms and refined by
parabolic interpolation around the peak; positive ITD means the right ear
lags (source on the left).  Normalization is per lag (Pearson over the
overlapping segment), which keeps the peak of an autocorrelation at lag
zero and avoids the zero-lag bias of tapered linear correlation.  The
interaural level difference (ILD) is ``10 * log10(E_left / E_right)`` with
energies floored at 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from seldkit.afe.gammatone import Cochleagram
from seldkit.afe.ratemap import frame_view
from seldkit.params import (
    ENERGY_EPS,
    MAX_ITD_S,
    frame_len_samples,
    frame_shift_samples,
)

_CHANNEL_CHUNK = 4  # bounds transient memory on long inputs


@dataclass
class BinauralCues:
    """ITD (seconds) and ILD (dB), each (n_frames, n_channels)."""

    itd: np.ndarray
    ild: np.ndarray
    cfs: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.itd.shape[0]

    def stack(self) -> np.ndarray:
        """(n_frames, n_channels, 2) array with ITD and ILD stacked."""
        return np.stack([self.itd, self.ild], axis=-1)

    def __getitem__(self, frames) -> "BinauralCues":
        return BinauralCues(itd=self.itd[frames], ild=self.ild[frames], cfs=self.cfs)


def _chunk_cues(lw: np.ndarray, rw: np.ndarray, max_lag: int, flen: int):
    """ITD lags (fractional samples) and ILD for one channel chunk."""
    e_l = (lw**2).sum(axis=-1)
    e_r = (rw**2).sum(axis=-1)
    ild = 10.0 * np.log10(np.maximum(e_l, ENERGY_EPS) / np.maximum(e_r, ENERGY_EPS))

    # Mean removal per window keeps the rectified representations' DC from
    # flattening the correlation peak.
    lz = lw - lw.mean(axis=-1, keepdims=True)
    rz = rw - rw.mean(axis=-1, keepdims=True)

    # Linear cross-correlation c(k) = sum_t l[t] r[t + k] via FFT; padding
    # to flen + max_lag keeps lags within +/- max_lag free of wrap-around.
    nfft = sp_fft.next_fast_len(flen + max_lag + 1)
    spec = np.conj(sp_fft.rfft(lz, nfft, axis=-1)) * sp_fft.rfft(rz, nfft, axis=-1)
    corr = sp_fft.irfft(spec, nfft, axis=-1)
    # Reorder circular lags to [-max_lag .. +max_lag].
    corr = np.concatenate([corr[..., -max_lag:], corr[..., : max_lag + 1]], axis=-1)

    # Pearson normalization per lag: energies of exactly the overlapping
    # segments, via cumulative sums.
    lags = np.arange(-max_lag, max_lag + 1)
    cs_l = np.cumsum(lz**2, axis=-1)
    cs_r = np.cumsum(rz**2, axis=-1)

    def seg_energy(cs, start, stop):
        # sum over [start, stop) per lag; start/stop are (n_lags,) indices
        hi = np.take(cs, stop - 1, axis=-1)
        lo = np.where(start > 0, np.take(cs, np.maximum(start - 1, 0), axis=-1), 0.0)
        return hi - lo

    el = seg_energy(cs_l, np.maximum(0, -lags), flen - np.maximum(0, lags))
    er = seg_energy(cs_r, np.maximum(0, lags), flen + np.minimum(0, lags))
    norm = np.sqrt(np.maximum(el, 0.0) * np.maximum(er, 0.0))
    corr = np.where(norm > ENERGY_EPS, corr / np.maximum(norm, ENERGY_EPS), 0.0)

    silent = np.sqrt(lz.var(axis=-1) * rz.var(axis=-1)) * flen <= ENERGY_EPS

    peak = np.argmax(corr, axis=-1)
    inner = np.clip(peak, 1, 2 * max_lag - 1)
    take = np.take_along_axis
    c0 = take(corr, inner[..., None], axis=-1)[..., 0]
    cm = take(corr, inner[..., None] - 1, axis=-1)[..., 0]
    cp = take(corr, inner[..., None] + 1, axis=-1)[..., 0]
    denom = cm - 2.0 * c0 + cp
    delta = np.where(denom != 0, 0.5 * (cm - cp) / np.where(denom == 0, 1.0, denom), 0.0)
    delta = np.clip(delta, -1.0, 1.0)
    # No interpolation at the search boundary.
    delta = np.where(peak == inner, delta, 0.0)

    lag = peak - max_lag + delta
    lag = np.where(silent, 0.0, lag)
    return lag, ild


def binaural_cues(left: Cochleagram, right: Cochleagram) -> BinauralCues:
    """Extract ITD/ILD per frame and channel from two ear cochleagrams."""
    if left.data.shape != right.data.shape or left.fs != right.fs:
        raise ValueError("ear representations must share shape and sample rate")
    fs = left.fs
    flen = frame_len_samples(fs)
    shift = frame_shift_samples(fs)
    max_lag = int(np.floor(MAX_ITD_S * fs))  # 48 samples at 44.1 kHz

    n_ch = left.data.shape[0]
    itd_rows = []
    ild_rows = []
    for c0 in range(0, n_ch, _CHANNEL_CHUNK):
        sl = slice(c0, min(c0 + _CHANNEL_CHUNK, n_ch))
        lw = frame_view(left.data[sl], flen, shift)
        rw = frame_view(right.data[sl], flen, shift)
        lag, ild = _chunk_cues(lw, rw, max_lag, flen)
        itd_rows.append(lag)
        ild_rows.append(ild)

    itd = np.clip(np.concatenate(itd_rows, axis=0) / fs, -MAX_ITD_S, MAX_ITD_S)
    ild = np.concatenate(ild_rows, axis=0)
    return BinauralCues(itd=itd.T, ild=ild.T, cfs=left.cfs.copy())

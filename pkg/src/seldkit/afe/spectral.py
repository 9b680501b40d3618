"""Frame-level spectral features computed from ratemap frames.

All 14 features operate on a nonnegative spectral envelope ``x`` over
gammatone channels with center frequencies ``f`` (Hz).  With
``s = sum(x)``, ``p = x / s`` and ``c`` the centroid:

==============  ======================================================
centroid        sum(f * x) / s
spread          sqrt(sum((f - c)^2 * x) / s)
brightness      energy fraction of channels with f >= 1500 Hz
hfc             mean over channels of (k + 1) * x_k^2 (k = 0-based index)
crest           max(x) / mean(x)
decrease        sum_{k>=1}((x_k - x_0) / k) / sum_{k>=1} x_k
entropy         -sum(p * ln p)   (max = ln n_channels)
flatness        geometric mean / arithmetic mean of x
irregularity    sum((x_k - x_{k+1})^2) / sum(x_k^2)
kurtosis        sum((f - c)^4 * x) / (s * spread^4)
skewness        sum((f - c)^3 * x) / (s * spread^3)
rolloff         center frequency where cumulative sum reaches 95% of s
flux            Euclidean distance to the previous frame
variation       1 - cosine similarity with the previous frame
==============  ======================================================

Degenerate frames fall back to documented constants: a frame with zero
(or subnormal, below 1e-280) total energy has centroid at the middle of
the ERB-rate axis, flatness 1 and all other features 0; a vanishing
spread sends skewness and kurtosis to 0; a vanishing tail (all energy in
channel 0) sends decrease to 0; a zero previous frame sends variation
to 0.
"""

from __future__ import annotations

import numpy as np

from seldkit.afe.gammatone import erb_rate, erb_rate_inverse

SPECTRAL_FEATURE_NAMES = (
    "centroid",
    "spread",
    "brightness",
    "hfc",
    "crest",
    "decrease",
    "entropy",
    "flatness",
    "irregularity",
    "kurtosis",
    "skewness",
    "rolloff",
    "flux",
    "variation",
)

BRIGHTNESS_EDGE_HZ = 1500.0
ROLLOFF_FRACTION = 0.95
_EPS = 1e-300  # guards exact zero divisions only; never changes finite math


def _mid_erb_freq(cfs: np.ndarray) -> float:
    return float(erb_rate_inverse(0.5 * (erb_rate(cfs[0]) + erb_rate(cfs[-1]))))


def spectral_features_block(frames: np.ndarray, cfs: np.ndarray) -> np.ndarray:
    """All 14 features for a (n_frames, n_channels) ratemap block.

    Flux and variation compare against the preceding frame inside the
    block; the first frame compares against itself.
    """
    x = np.asarray(frames, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected (n_frames, n_channels)")
    if np.any(x < 0):
        raise ValueError("ratemap frames must be nonnegative")
    nfr, nch = x.shape
    f = np.asarray(cfs, dtype=float)
    if f.size != nch:
        raise ValueError("center frequency count mismatch")

    s = x.sum(axis=1)
    # Frames whose total energy sits in the subnormal range behave like
    # zero frames: ratios of their entries are rounding noise and naive
    # divisions underflow to 0/0.  Real envelopes are far above 1e-280,
    # so the cutoff only reclassifies numerically empty frames.
    zero = s < 1e-280
    s_safe = np.where(zero, 1.0, s)

    centroid = (x * f).sum(axis=1) / s_safe
    dev = f[None, :] - centroid[:, None]
    spread_sq = (x * dev**2).sum(axis=1) / s_safe
    spread = np.sqrt(np.maximum(spread_sq, 0.0))

    bright_cols = f >= BRIGHTNESS_EDGE_HZ
    brightness = x[:, bright_cols].sum(axis=1) / s_safe

    hfc = (x**2 * (np.arange(nch) + 1.0)).mean(axis=1)

    crest = x.max(axis=1) / (s_safe / nch)

    # A tail below a millionth of the frame energy is a channel-0 point
    # mass; its decrease is a ratio of rounding noise, so it falls back
    # to 0 like the other point-mass cases.
    k = np.arange(1, nch)
    tail = x[:, 1:].sum(axis=1)
    tail_ok = tail > 1e-6 * s
    decrease = ((x[:, 1:] - x[:, :1]) / k).sum(axis=1) / np.where(tail_ok, tail, 1.0)
    decrease[~tail_ok] = 0.0

    p = x / s_safe[:, None]
    entropy = -(p * np.log(p + _EPS)).sum(axis=1)

    log_x = np.log(x + _EPS)
    geo = np.exp(log_x.mean(axis=1))
    geo = np.where(x.min(axis=1) <= 0.0, 0.0, geo)
    flatness = geo / (s_safe / nch)

    diff = np.diff(x, axis=1)
    irregularity = (diff**2).sum(axis=1) / np.maximum((x**2).sum(axis=1), _EPS)

    # A spread below a millionth of the frequency range means the energy
    # sits in a single channel; skewness and kurtosis of a point mass
    # fall back to 0.  The relative floor also keeps the standardized
    # deviations bounded when a nearly-point mass leaves a tiny spread.
    spread_ok = spread > 1e-6 * (f.max() - f.min())
    sp_safe = np.where(spread_ok, spread, 1.0)
    z = dev / sp_safe[:, None]
    skewness = (p * z**3).sum(axis=1)
    kurtosis = (p * z**4).sum(axis=1)
    skewness[~spread_ok] = 0.0
    kurtosis[~spread_ok] = 0.0

    cum = np.cumsum(x, axis=1)
    reach = cum >= ROLLOFF_FRACTION * s_safe[:, None]
    rolloff = f[np.argmax(reach, axis=1)]

    prev = np.vstack([x[:1], x[:-1]])
    flux = np.linalg.norm(x - prev, axis=1)
    nx = np.linalg.norm(x, axis=1)
    npv = np.linalg.norm(prev, axis=1)
    denom_ok = (nx > 1e-280) & (npv > 1e-280)  # subnormal norms act as zero
    variation = np.zeros(nfr)
    variation[denom_ok] = 1.0 - (x[denom_ok] * prev[denom_ok]).sum(axis=1) / (
        nx[denom_ok] * npv[denom_ok]
    )

    out = np.column_stack(
        [
            centroid,
            spread,
            brightness,
            hfc,
            crest,
            decrease,
            entropy,
            flatness,
            irregularity,
            kurtosis,
            skewness,
            rolloff,
            flux,
            variation,
        ]
    )
    if np.any(zero):
        out[zero] = 0.0
        out[zero, SPECTRAL_FEATURE_NAMES.index("centroid")] = _mid_erb_freq(f)
        out[zero, SPECTRAL_FEATURE_NAMES.index("flatness")] = 1.0
    return out


def spectral_features(
    frame: np.ndarray, prev_frame: np.ndarray | None, cfs: np.ndarray
) -> np.ndarray:
    """Features for a single ratemap frame; prev_frame feeds flux/variation."""
    frame = np.asarray(frame, dtype=float)
    prev = frame if prev_frame is None else np.asarray(prev_frame, dtype=float)
    return spectral_features_block(np.vstack([prev, frame]), cfs)[1]

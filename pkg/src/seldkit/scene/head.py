"""Binaural rendering through a parametric spherical head or measured IRs.

Azimuth convention: 0 degrees is straight ahead, positive azimuths are on
the left, angles live in (-180, 180].  The parametric head applies the
Woodworth interaural delay

    itd(phi) = (a / c) * (sin(phi) + phi)      (phi in radians, |phi| <= 90)

mirrored beyond +/-90 degrees, split into per-ear delays (near ear
advanced by ``a sin|phi| / c``, far ear delayed by ``a |phi| / c`` around a
common base latency), plus a first-order head-shadow magnitude per ear
whose high-frequency gain is ``1 + sin(phi)`` toward the source and
``1 - sin(phi)`` away from it.  Rendering happens in the frequency
domain: the delays are exact phase terms and the shadow is applied with
zero phase, so it shapes level only and the interaural delay stays the
analytic Woodworth value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from seldkit.params import SAMPLE_RATE

DEFAULT_HEAD_RADIUS_M = 0.0875
SPEED_OF_SOUND_M_S = 343.0

_RENDER_PAD = 4096  # FFT zero padding; covers delays and filter ringing


def wrap_azimuth(az_deg: float) -> float:
    """Wrap an azimuth to (-180, 180]."""
    w = math.fmod(float(az_deg) + 180.0, 360.0)
    if w <= 0.0:
        w += 360.0
    return w - 180.0


def fold_frontal(az_deg: float) -> float:
    """Mirror an azimuth about the ear axis into [-90, 90]."""
    az = wrap_azimuth(az_deg)
    if az > 90.0:
        return 180.0 - az
    if az < -90.0:
        return -180.0 - az
    return az


def circular_distance(a_deg: float, b_deg: float) -> float:
    """Absolute angular distance between two azimuths, in [0, 180]."""
    return abs(wrap_azimuth(a_deg - b_deg))


def woodworth_itd(
    az_deg: float,
    head_radius_m: float = DEFAULT_HEAD_RADIUS_M,
    speed_of_sound: float = SPEED_OF_SOUND_M_S,
) -> float:
    """Interaural time difference in seconds; positive for left-side sources."""
    phi = math.radians(fold_frontal(az_deg))
    return (head_radius_m / speed_of_sound) * (math.sin(phi) + phi)


@dataclass
class HeadModel:
    """Rendering head: parametric sphere or a measured impulse-response set.

    For ``kind="impulse_response_set"``, ``ir_table`` maps azimuth in
    degrees to an (ir_left, ir_right) pair; requests farther than the
    table's grid step from any entry raise.
    """

    kind: str = "parametric_sphere"
    head_radius_m: float = DEFAULT_HEAD_RADIUS_M
    speed_of_sound: float = SPEED_OF_SOUND_M_S
    ir_table: dict[float, tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        if self.kind not in ("parametric_sphere", "impulse_response_set"):
            raise ValueError(f"unknown head model kind: {self.kind!r}")
        if self.kind == "impulse_response_set" and not self.ir_table:
            raise ValueError("impulse_response_set head needs a non-empty ir_table")

    def to_dict(self) -> dict:
        if self.kind != "parametric_sphere":
            raise ValueError("only parametric heads serialize to config dicts")
        return {
            "kind": self.kind,
            "head_radius_m": self.head_radius_m,
            "speed_of_sound": self.speed_of_sound,
        }

    @staticmethod
    def from_dict(d: dict) -> "HeadModel":
        return HeadModel(
            kind=d.get("kind", "parametric_sphere"),
            head_radius_m=d.get("head_radius_m", DEFAULT_HEAD_RADIUS_M),
            speed_of_sound=d.get("speed_of_sound", SPEED_OF_SOUND_M_S),
        )


def _ear_delays_s(az_deg: float, radius: float, c: float) -> tuple[float, float]:
    """(left, right) propagation delays around a shared base latency."""
    phi = math.radians(fold_frontal(az_deg))
    base = radius / c  # keeps the near-ear advance nonnegative
    near = base - (radius / c) * math.sin(abs(phi))
    far = base + (radius / c) * abs(phi)
    if phi >= 0.0:  # source on the left: left ear near
        return near, far
    return far, near


def _shadow_magnitude(alpha: float, radius: float, c: float, freqs: np.ndarray) -> np.ndarray:
    """First-order head-shadow magnitude: DC gain 1, high-frequency gain alpha.

    Applied with zero phase so the interaural delay stays exactly the
    Woodworth value; the corner sits at 2c/a like the classic spherical
    shadow approximation.
    """
    wc = 2.0 * c / radius
    w = 2.0 * np.pi * freqs
    return np.sqrt((wc**2 + (alpha * w) ** 2) / (wc**2 + w**2))


def render_source(mono: np.ndarray, azimuth_deg: float, head: HeadModel):
    """Render a mono source at an azimuth to a binaural pair.

    Returns a :class:`seldkit.scene.mix.BinauralSignal` without
    annotations.  Output length equals the input length; both ears share
    the same base latency so interaural timing is exact.
    """
    from seldkit.scene.mix import BinauralSignal

    x = np.asarray(mono, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("expected a non-empty mono signal")
    fs = SAMPLE_RATE
    az = wrap_azimuth(azimuth_deg)

    if head.kind == "impulse_response_set":
        best = min(head.ir_table, key=lambda a: abs(wrap_azimuth(a - az)))
        keys = sorted(head.ir_table)
        gaps = [abs(wrap_azimuth(keys[(i + 1) % len(keys)] - keys[i])) for i in range(len(keys))]
        step = max(gaps) if gaps else 360.0
        if abs(wrap_azimuth(best - az)) > step:
            raise ValueError(f"no impulse response within {step} deg of azimuth {az}")
        ir_l, ir_r = head.ir_table[best]
        left = signal.oaconvolve(x, ir_l)[: x.size]
        right = signal.oaconvolve(x, ir_r)[: x.size]
        return BinauralSignal(left=left, right=right, fs=fs, annotations=[])

    d_l, d_r = _ear_delays_s(az, head.head_radius_m, head.speed_of_sound)
    sin_phi = math.sin(math.radians(az))  # front-back symmetric by sin()
    nfft = sp_fft.next_fast_len(x.size + _RENDER_PAD)
    spectrum = sp_fft.rfft(x, nfft)
    freqs = sp_fft.rfftfreq(nfft, 1.0 / fs)
    out = []
    for delay, alpha in ((d_l, 1.0 + sin_phi), (d_r, 1.0 - sin_phi)):
        mag = _shadow_magnitude(alpha, head.head_radius_m, head.speed_of_sound, freqs)
        phase = np.exp(-2j * np.pi * freqs * delay)
        out.append(sp_fft.irfft(spectrum * mag * phase, nfft)[: x.size])
    return BinauralSignal(left=out[0], right=out[1], fs=fs, annotations=[])

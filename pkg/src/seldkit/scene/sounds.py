"""Sound material: a deterministic synthetic class catalog and WAV ingestion.

Synthetic sounds are event sequences (bursts of class-specific texture
separated by true silence) generated reproducibly from (class_id, seed).
The catalog holds four detectable event classes plus a ``general`` class
of broadband, randomly textured sounds used as distractor material and
negative examples:

``tonal_alarm``   gated harmonic tone, slow on/off beeping
``noise_burst``   trains of sharp broadband noise bursts
``am_noise``      low-passed noise with fast (25-45 Hz) amplitude modulation
``chirp``         repeating upward frequency sweeps
``general``       tilted broadband noise with random slow modulation

Real recordings enter through ``load_wav`` plus a CSV annotation sidecar
with ``onset_s, offset_s, class`` rows.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from seldkit.params import SAMPLE_RATE

SOUND_CLASSES = ("tonal_alarm", "noise_burst", "am_noise", "chirp", "general")

_EDGE_RAMP_S = 0.005
_TARGET_RMS = 0.1


@dataclass(frozen=True)
class SoundRef:
    """Reference to one sound file, synthetic or on disk.

    ``sound_id`` identifies the file for split and cross-validation
    bookkeeping; two refs with equal ids denote the same material.
    """

    kind: str  # "synthetic" | "file"
    class_id: str
    seed: int | None = None
    path: str | None = None

    @property
    def sound_id(self) -> str:
        if self.kind == "synthetic":
            return f"{self.class_id}#{self.seed}"
        return f"file:{self.path}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "class_id": self.class_id, "seed": self.seed, "path": self.path}

    @staticmethod
    def from_dict(d: dict) -> "SoundRef":
        return SoundRef(kind=d["kind"], class_id=d["class_id"], seed=d.get("seed"), path=d.get("path"))


@dataclass
class FileSound:
    """Loaded sound material with event annotations."""

    samples: np.ndarray
    events: list[tuple[float, float]]
    class_id: str
    sound_id: str
    fs: int = SAMPLE_RATE


def _event_grid(rng: np.random.Generator, duration_s: float) -> list[tuple[float, float]]:
    """Alternating event/silence layout; every event lies inside the sound."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if duration_s < 1.4:
        return [(0.15 * duration_s, 0.85 * duration_s)]
    events = []
    t = rng.uniform(0.2, 0.45)
    while t + 0.9 <= duration_s:
        dur = rng.uniform(0.9, min(2.0, duration_s - t))
        events.append((t, t + dur))
        t += dur + rng.uniform(0.45, 0.9)
    if not events:
        events.append((0.15 * duration_s, 0.85 * duration_s))
    return events


def _ramped(env: np.ndarray, fs: int) -> np.ndarray:
    """Apply raised-cosine edges so events start and stop without clicks."""
    n = min(int(_EDGE_RAMP_S * fs), env.size // 2)
    if n > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)
        env[:n] *= ramp
        env[-n:] *= ramp[::-1]
    return env


def _tonal_alarm(rng, t):
    f0 = rng.uniform(700.0, 1500.0)
    gate_hz = rng.uniform(3.5, 7.0)
    vibrato = 1.0 + 0.004 * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t)
    tone = np.sin(2 * np.pi * f0 * vibrato * t) + 0.3 * np.sin(2 * np.pi * 2 * f0 * t)
    gate = 0.5 * (1.0 + np.tanh(8.0 * np.sin(2 * np.pi * gate_hz * t)))
    return tone * gate


def _noise_burst(rng, t):
    fs = SAMPLE_RATE
    out = np.zeros(t.size)
    pos = 0.0
    while pos < t[-1]:
        dur = rng.uniform(0.05, 0.12)
        i0 = int(pos * fs)
        n = min(int(dur * fs), t.size - i0)
        if n <= 0:
            break
        burst = rng.standard_normal(n) * np.exp(-np.arange(n) / (0.25 * n))
        out[i0 : i0 + n] += burst
        pos += dur + rng.uniform(0.15, 0.35)
    return out


def _am_noise(rng, t):
    fs = SAMPLE_RATE
    base = rng.standard_normal(t.size)
    sos = signal.butter(2, 4000.0 / (fs / 2), btype="low", output="sos")
    base = signal.sosfilt(sos, base)
    f_mod = rng.uniform(25.0, 45.0)
    return base * (1.0 + 0.9 * np.sin(2 * np.pi * f_mod * t)) / 1.9


def _chirp(rng, t):
    sweep_s = rng.uniform(0.4, 0.7)
    phase = (t % sweep_s) / sweep_s
    f0, f1 = 300.0, 5500.0
    inst = f0 * (f1 / f0) ** phase
    # Integrate instantaneous frequency for a smooth repeating sweep.
    arg = np.cumsum(inst) / SAMPLE_RATE
    return np.sin(2 * np.pi * arg)


def _general(rng, t):
    fs = SAMPLE_RATE
    base = rng.standard_normal(t.size)
    # Mild random spectral tilt keeps the long-term spectrum broadband.
    tilt = rng.uniform(-0.3, 0.3)
    b, a = [1.0, tilt], [1.0]
    base = signal.lfilter(b, a, base)
    mod = 1.0 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
    if rng.uniform() < 0.5:
        base += 0.4 * np.sin(2 * np.pi * rng.uniform(400, 3000) * t)
    return base * mod


_SYNTHS = {
    "tonal_alarm": _tonal_alarm,
    "noise_burst": _noise_burst,
    "am_noise": _am_noise,
    "chirp": _chirp,
    "general": _general,
}


def synth_class_sound(
    class_id: str, seed: int, duration_s: float
) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Deterministic synthetic sound of one class.

    Returns the mono signal at 44.1 kHz and its event annotations as
    (onset_s, offset_s) pairs.  Silence between events is exactly zero;
    events are normalized to a common active RMS.
    """
    if class_id not in _SYNTHS:
        raise ValueError(f"unknown sound class: {class_id!r}")
    rng = np.random.default_rng([zlib.crc32(class_id.encode()), seed])
    fs = SAMPLE_RATE
    n = int(round(duration_s * fs))
    events = _event_grid(rng, duration_s)
    out = np.zeros(n)
    for onset, offset in events:
        i0, i1 = int(round(onset * fs)), int(round(offset * fs))
        i1 = min(i1, n)
        if i1 <= i0:
            continue
        t = np.arange(i1 - i0) / fs
        chunk = _SYNTHS[class_id](rng, t)
        out[i0:i1] = _ramped(np.ones(i1 - i0), fs) * chunk
    rms = np.sqrt(np.mean(out[out != 0.0] ** 2)) if np.any(out != 0.0) else 0.0
    if rms > 0:
        out *= _TARGET_RMS / rms
    return out, events


def load_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a mono PCM16 or float32 WAV, resampled to 44.1 kHz."""
    fs, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio")
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(float)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    if fs != SAMPLE_RATE:
        ratio = Fraction(SAMPLE_RATE, fs)
        x = signal.resample_poly(x, ratio.numerator, ratio.denominator)
    return x, SAMPLE_RATE


def read_annotation_csv(path: str | Path) -> tuple[list[tuple[float, float]], str]:
    """Read an event sidecar: CSV with onset_s, offset_s, class columns."""
    events = []
    classes = set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            onset, offset = float(row["onset_s"]), float(row["offset_s"])
            if offset <= onset:
                raise ValueError(f"{path}: event offset must exceed onset")
            events.append((onset, offset))
            classes.add(row["class"].strip())
    if len(classes) != 1:
        raise ValueError(f"{path}: expected exactly one event class, got {sorted(classes)}")
    return events, classes.pop()


def load_sound(ref: SoundRef, duration_s: float) -> FileSound:
    """Materialize a sound reference, looped or truncated to duration_s.

    Synthetic refs are generated at the requested length.  File refs are
    looped when shorter than the scene and truncated when longer, with
    event annotations adjusted accordingly.
    """
    fs = SAMPLE_RATE
    n = int(round(duration_s * fs))
    if ref.kind == "synthetic":
        samples, events = synth_class_sound(ref.class_id, ref.seed, duration_s)
        return FileSound(samples=samples, events=events, class_id=ref.class_id, sound_id=ref.sound_id)
    if ref.kind != "file":
        raise ValueError(f"unknown sound ref kind: {ref.kind!r}")
    x, _ = load_wav(ref.path)
    base = Path(ref.path).with_suffix(".csv")
    events, class_id = read_annotation_csv(base)
    if ref.class_id and class_id != ref.class_id:
        raise ValueError(f"{ref.path}: annotated class {class_id!r} != ref class {ref.class_id!r}")
    reps = int(np.ceil(n / x.size))
    looped = np.tile(x, reps)[:n]
    src_dur = x.size / fs
    all_events = []
    for r in range(reps):
        for onset, offset in events:
            o, f = onset + r * src_dur, offset + r * src_dur
            if o >= duration_s:
                continue
            all_events.append((o, min(f, duration_s)))
    return FileSound(samples=looped, events=all_events, class_id=class_id, sound_id=ref.sound_id)

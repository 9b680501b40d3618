"""Scene mixing: SNR calibration, annotations, diffuse background noise.

Source powers are measured as mean squared amplitude over both ear
channels, restricted to active frames: 20 ms / 10 ms frames whose power
exceeds the source's peak frame power by more than -40 dB.  Distractors
are scaled so the target-to-distractor active-power ratio matches the
requested SNR; the gating is scale invariant, so calibration is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from seldkit.params import (
    ACTIVITY_THRESHOLD_DB,
    SAMPLE_RATE,
    frame_len_samples,
    frame_shift_samples,
)
from seldkit.scene.head import HeadModel, render_source
from seldkit.scene.sounds import load_sound


@dataclass
class SourceAnnotation:
    """Ground truth for one source in a rendered scene."""

    class_id: str
    azimuth_deg: float
    role: str  # "target" | "distractor"
    events: list[tuple[float, float]]
    sound_id: str


@dataclass
class BinauralSignal:
    """Two-ear signal with per-source ground-truth annotations."""

    left: np.ndarray
    right: np.ndarray
    fs: int = SAMPLE_RATE
    annotations: list[SourceAnnotation] = field(default_factory=list)

    @property
    def duration_s(self) -> float:
        return self.left.size / self.fs

    def __add__(self, other: "BinauralSignal") -> "BinauralSignal":
        if self.left.size != other.left.size:
            raise ValueError("cannot mix signals of different lengths")
        return BinauralSignal(
            left=self.left + other.left,
            right=self.right + other.right,
            fs=self.fs,
            annotations=self.annotations + other.annotations,
        )

    def scaled(self, gain: float) -> "BinauralSignal":
        return BinauralSignal(
            left=self.left * gain, right=self.right * gain, fs=self.fs, annotations=self.annotations
        )


@dataclass
class SceneRender:
    """A mixed scene plus its individually scaled source components."""

    mixture: BinauralSignal
    sources: list[BinauralSignal]

    @property
    def annotations(self) -> list[SourceAnnotation]:
        return self.mixture.annotations


def frame_powers(sig: BinauralSignal) -> np.ndarray:
    """Mean power per 20 ms frame (10 ms shift), averaged over both ears."""
    flen = frame_len_samples(sig.fs)
    shift = frame_shift_samples(sig.fs)
    n = (sig.left.size - flen) // shift + 1
    if n < 1:
        raise ValueError("signal shorter than one frame")
    sq = 0.5 * (sig.left**2 + sig.right**2)
    cs = np.concatenate([[0.0], np.cumsum(sq)])
    starts = np.arange(n) * shift
    return (cs[starts + flen] - cs[starts]) / flen


def active_power(sig: BinauralSignal) -> float:
    """Mean power over frames within -40 dB of the peak frame power."""
    p = frame_powers(sig)
    peak = p.max()
    if peak <= 0.0:
        raise ValueError("source has no active-period energy")
    active = p > peak * 10.0 ** (ACTIVITY_THRESHOLD_DB / 10.0)
    return float(p[active].mean())


def render_scene(cfg, head: HeadModel) -> SceneRender:
    """Render a SceneConfig: per-source binaural components plus mixture.

    Exactly one source must have the target role; each distractor is
    scaled to its configured SNR relative to the target.  The optional
    diffuse background is added afterwards.
    """
    targets = [s for s in cfg.sources if s.role == "target"]
    if len(targets) != 1:
        raise ValueError("scene must contain exactly one target source")
    distractors = [s for s in cfg.sources if s.role != "target"]
    if len(cfg.snr_db) != len(distractors):
        raise ValueError("need one SNR per distractor")

    rendered: list[BinauralSignal] = []
    for spec in cfg.sources:
        sound = load_sound(spec.sound, cfg.duration_s)
        sig = render_source(sound.samples, spec.azimuth_deg, head)
        sig.annotations = [
            SourceAnnotation(
                class_id=sound.class_id,
                azimuth_deg=spec.azimuth_deg,
                role=spec.role,
                events=list(sound.events),
                sound_id=sound.sound_id,
            )
        ]
        rendered.append(sig)

    t_idx = cfg.sources.index(targets[0])
    p_target = active_power(rendered[t_idx])
    scaled: list[BinauralSignal] = []
    d = 0
    for i, sig in enumerate(rendered):
        if i == t_idx:
            scaled.append(sig)
            continue
        p = active_power(sig)
        gain = np.sqrt(p_target / (p * 10.0 ** (cfg.snr_db[d] / 10.0)))
        scaled.append(sig.scaled(gain))
        d += 1

    mixture = scaled[0]
    for sig in scaled[1:]:
        mixture = mixture + sig
    render = SceneRender(mixture=mixture, sources=scaled)

    if cfg.diffuse_snr_db is not None and np.isfinite(cfg.diffuse_snr_db):
        noisy = add_diffuse_noise(render.mixture, cfg.diffuse_snr_db, head, seed=cfg.rng_seed)
        render = SceneRender(mixture=noisy, sources=scaled)
    return render


def mix_scene(cfg, head: HeadModel) -> BinauralSignal:
    """Render a scene and return only the calibrated mixture."""
    return render_scene(cfg, head).mixture


def add_diffuse_noise(
    scene: BinauralSignal, snr_db: float, head: HeadModel, seed: int = 0
) -> BinauralSignal:
    """Surround the scene with isotropic noise at a given SNR.

    The background is the superposition of 360 independent white-noise
    point sources at 1-degree spacing, scaled so the scene's active power
    exceeds the background power by snr_db.  An infinite SNR returns the
    scene unchanged.
    """
    if np.isinf(snr_db):
        return scene
    n = scene.left.size
    rng = np.random.default_rng([0xD1FF, seed])
    left = np.zeros(n)
    right = np.zeros(n)
    for az in range(-179, 181):
        noise = rng.standard_normal(n)
        sig = render_source(noise, float(az), head)
        left += sig.left
        right += sig.right
    diffuse = BinauralSignal(left=left, right=right, fs=scene.fs)
    p_scene = active_power(scene)
    p_diff = active_power(diffuse)
    gain = np.sqrt(p_scene / (p_diff * 10.0 ** (snr_db / 10.0)))
    return BinauralSignal(
        left=scene.left + gain * left,
        right=scene.right + gain * right,
        fs=scene.fs,
        annotations=scene.annotations,
    )

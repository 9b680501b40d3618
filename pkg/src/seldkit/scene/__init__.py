"""Binaural scene synthesis: sounds, head model, mixing, suites."""

from seldkit.scene.sounds import (
    SOUND_CLASSES,
    FileSound,
    SoundRef,
    load_sound,
    load_wav,
    read_annotation_csv,
    synth_class_sound,
)
from seldkit.scene.head import HeadModel, render_source, woodworth_itd
from seldkit.scene.mix import (
    BinauralSignal,
    SceneRender,
    SourceAnnotation,
    active_power,
    add_diffuse_noise,
    frame_powers,
    mix_scene,
    render_scene,
)
from seldkit.scene.suites import (
    SCENE_MODES,
    SceneConfig,
    SourceSpec,
    build_scene_suite,
    load_suite,
    mode_positions,
    save_suite,
)

__all__ = [
    "BinauralSignal",
    "FileSound",
    "HeadModel",
    "SCENE_MODES",
    "SOUND_CLASSES",
    "SceneConfig",
    "SceneRender",
    "SoundRef",
    "SourceAnnotation",
    "SourceSpec",
    "active_power",
    "add_diffuse_noise",
    "build_scene_suite",
    "frame_powers",
    "load_sound",
    "load_suite",
    "load_wav",
    "mix_scene",
    "mode_positions",
    "read_annotation_csv",
    "render_scene",
    "render_source",
    "save_suite",
    "synth_class_sound",
]

"""Scene configuration suites for training and evaluation.

Multi-source scenes follow one of four spatial modes:

``bisected``        sources straddle the nose: a gap-spaced grid centered
                    on 0 degrees
``target_at_zero``  the target sits at 0 degrees; distractors extend to
                    one side (or straddle it for the 3-source center case)
``front_left``      a gap-spaced grid inside the front-left quadrant,
                    starting at 15 degrees
``ear_centered``    a gap-spaced grid in the left hemisphere symmetric
                    about the ear axis (90 degrees)

The training suite draws random scenes (1-4 sources on a 22.5-degree
azimuth grid, SNRs uniform in [-20, +20] dB).  The evaluation suite
enumerates the cross product of source counts, SNRs {-20,-10,0,+10,+20},
azimuth gaps {0,10,20,45,60,90,120,180}, the four modes and target-end /
target-center placements, pruning combinations whose geometry does not
fit; the pruning rules live in :func:`mode_positions`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seldkit.scene.sounds import SOUND_CLASSES, SoundRef

SCENE_MODES = ("bisected", "target_at_zero", "front_left", "ear_centered")
TEST_SNRS_DB = (-20.0, -10.0, 0.0, 10.0, 20.0)
TEST_GAPS_DEG = (0.0, 10.0, 20.0, 45.0, 60.0, 90.0, 120.0, 180.0)
TRAIN_AZIMUTH_STEP_DEG = 22.5
FRONT_LEFT_START_DEG = 15.0


@dataclass(frozen=True)
class SourceSpec:
    sound: SoundRef
    azimuth_deg: float
    role: str  # "target" | "distractor"

    def to_dict(self) -> dict:
        return {"sound": self.sound.to_dict(), "azimuth_deg": self.azimuth_deg, "role": self.role}

    @staticmethod
    def from_dict(d: dict) -> "SourceSpec":
        return SourceSpec(
            sound=SoundRef.from_dict(d["sound"]), azimuth_deg=d["azimuth_deg"], role=d["role"]
        )


@dataclass
class SceneConfig:
    scene_id: str
    sources: list[SourceSpec]
    snr_db: list[float]
    duration_s: float
    rng_seed: int
    scene_mode: str | None = None
    azimuth_gap_deg: float | None = None
    target_position: str | None = None
    diffuse_snr_db: float | None = None

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def target(self) -> SourceSpec:
        return next(s for s in self.sources if s.role == "target")

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "sources": [s.to_dict() for s in self.sources],
            "snr_db": list(self.snr_db),
            "duration_s": self.duration_s,
            "rng_seed": self.rng_seed,
            "scene_mode": self.scene_mode,
            "azimuth_gap_deg": self.azimuth_gap_deg,
            "target_position": self.target_position,
            "diffuse_snr_db": self.diffuse_snr_db,
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneConfig":
        return SceneConfig(
            scene_id=d["scene_id"],
            sources=[SourceSpec.from_dict(s) for s in d["sources"]],
            snr_db=list(d["snr_db"]),
            duration_s=d["duration_s"],
            rng_seed=d["rng_seed"],
            scene_mode=d.get("scene_mode"),
            azimuth_gap_deg=d.get("azimuth_gap_deg"),
            target_position=d.get("target_position"),
            diffuse_snr_db=d.get("diffuse_snr_db"),
        )


def save_suite(scenes: list[SceneConfig], path: str | Path) -> None:
    payload = {"scenes": [s.to_dict() for s in scenes]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def load_suite(path: str | Path) -> list[SceneConfig]:
    payload = json.loads(Path(path).read_text())
    return [SceneConfig.from_dict(d) for d in payload["scenes"]]


def mode_positions(
    mode: str, n_sources: int, gap_deg: float, target_position: str
) -> tuple[list[float], int] | None:
    """Source azimuths and target index for a spatial mode.

    Returns None when the combination is geometrically infeasible:
    grids must fit their hemisphere (front-left quadrant, left
    hemisphere, full circle without wrap collision), co-located layouts
    (gap 0) are only exercised in target_at_zero mode, and target-center
    placement exists only for 3 sources.
    """
    if mode not in SCENE_MODES:
        raise ValueError(f"unknown scene mode: {mode!r}")
    if n_sources < 2:
        return None
    if target_position == "center" and n_sources != 3:
        return None
    span = (n_sources - 1) * gap_deg

    if mode == "bisected":
        if gap_deg <= 0.0 or span >= 360.0:
            return None
        pos = [-span / 2.0 + i * gap_deg for i in range(n_sources)]
        t_idx = n_sources - 1 if target_position == "end" else (n_sources - 1) // 2
    elif mode == "target_at_zero":
        if target_position == "center":
            if gap_deg <= 0.0 or gap_deg > 180.0:
                return None
            pos = [-gap_deg, 0.0, gap_deg]
            t_idx = 1
        else:
            if span > 180.0:
                return None
            pos = [i * gap_deg for i in range(n_sources)]
            t_idx = 0
    elif mode == "front_left":
        if gap_deg <= 0.0 or FRONT_LEFT_START_DEG + span > 90.0:
            return None
        pos = [FRONT_LEFT_START_DEG + i * gap_deg for i in range(n_sources)]
        t_idx = n_sources - 1 if target_position == "end" else (n_sources - 1) // 2
    else:  # ear_centered
        if gap_deg <= 0.0 or span > 180.0:
            return None
        pos = [90.0 - span / 2.0 + i * gap_deg for i in range(n_sources)]
        t_idx = 0 if target_position == "end" else (n_sources - 1) // 2
    return pos, t_idx


def _single_source_layouts() -> list[tuple[str, float]]:
    # One-source scenes carry a mode label for reporting only.
    return [("target_at_zero", 0.0), ("front_left", 45.0), ("ear_centered", 90.0)]


class _SoundPicker:
    """Deterministic target/distractor assignment from a sound pool."""

    def __init__(self, pool: dict[str, list[SoundRef]], target_classes: list[str], seed: int):
        self.pool = {c: list(refs) for c, refs in pool.items()}
        self.targets = list(target_classes)
        for c in self.targets:
            if not self.pool.get(c):
                raise ValueError(f"sound pool has no material for target class {c!r}")
        self.rng = np.random.default_rng([0x5EED, seed])
        self._next = 0

    def pick_target(self) -> tuple[str, SoundRef]:
        cls = self.targets[self._next % len(self.targets)]
        self._next += 1
        refs = self.pool[cls]
        return cls, refs[int(self.rng.integers(len(refs)))]

    def pick_distractors(self, target_class: str, count: int) -> list[SoundRef]:
        classes = [c for c in self.pool if c != target_class and self.pool[c]]
        if count > len(classes):
            raise ValueError("not enough distinct distractor classes in pool")
        chosen = self.rng.choice(len(classes), size=count, replace=False)
        out = []
        for idx in chosen:
            refs = self.pool[classes[int(idx)]]
            out.append(refs[int(self.rng.integers(len(refs)))])
        return out


def _train_scene(picker: _SoundPicker, rng: np.random.Generator, idx: int, duration_s: float) -> SceneConfig:
    n_sources = int(rng.integers(1, 5))
    grid = np.arange(-157.5, 180.1, TRAIN_AZIMUTH_STEP_DEG)
    azimuths = rng.choice(grid, size=n_sources, replace=True)
    t_class, t_ref = picker.pick_target()
    d_refs = picker.pick_distractors(t_class, n_sources - 1)
    sources = [SourceSpec(sound=t_ref, azimuth_deg=float(azimuths[0]), role="target")]
    sources += [
        SourceSpec(sound=ref, azimuth_deg=float(az), role="distractor")
        for ref, az in zip(d_refs, azimuths[1:])
    ]
    snrs = [float(rng.uniform(-20.0, 20.0)) for _ in range(n_sources - 1)]
    return SceneConfig(
        scene_id=f"train{idx:04d}",
        sources=sources,
        snr_db=snrs,
        duration_s=duration_s,
        rng_seed=int(rng.integers(2**31)),
    )


def _test_grid(
    picker: _SoundPicker,
    seed: int,
    duration_s: float,
    counts=(1, 2, 3, 4),
    snrs=TEST_SNRS_DB,
    gaps=TEST_GAPS_DEG,
) -> list[SceneConfig]:
    scenes = []
    idx = 0

    def emit(n, mode, gap, snr, positions, t_idx, target_position):
        nonlocal idx
        t_class, t_ref = picker.pick_target()
        d_refs = picker.pick_distractors(t_class, n - 1)
        sources = []
        d = 0
        for i, az in enumerate(positions):
            if i == t_idx:
                sources.append(SourceSpec(sound=t_ref, azimuth_deg=float(az), role="target"))
            else:
                sources.append(SourceSpec(sound=d_refs[d], azimuth_deg=float(az), role="distractor"))
                d += 1
        scenes.append(
            SceneConfig(
                scene_id=f"test{idx:04d}",
                sources=sources,
                snr_db=[float(snr)] * (n - 1),
                duration_s=duration_s,
                rng_seed=seed * 100003 + idx,
                scene_mode=mode,
                azimuth_gap_deg=float(gap) if n > 1 else None,
                target_position=target_position if n > 1 else None,
            )
        )
        idx += 1

    for n in counts:
        if n == 1:
            for mode, az in _single_source_layouts():
                emit(1, mode, 0.0, 0.0, [az], 0, None)
            continue
        for mode in SCENE_MODES:
            for gap in gaps:
                for target_position in ("end", "center"):
                    layout = mode_positions(mode, n, gap, target_position)
                    if layout is None:
                        continue
                    for snr in snrs:
                        emit(n, mode, gap, snr, layout[0], layout[1], target_position)
    return scenes


# Deterministic desk-scale subsample: strata keep all modes, both
# mid-range gaps and central SNRs represented so mode and perturbation
# contrasts stay measurable on 60 scenes.
_DESK_MULTI = [
    (n, mode, gap, snr, tp)
    for n in (2, 3)
    for mode in ("bisected", "target_at_zero", "ear_centered")
    for gap in (60.0, 90.0)
    for snr in (0.0, 10.0)
    for tp in ("end",)
] + [
    (2, "front_left", 45.0, 0.0, "end"),
    (2, "front_left", 60.0, 0.0, "end"),
    (2, "front_left", 45.0, 10.0, "end"),
    (2, "front_left", 60.0, 10.0, "end"),
    (2, "bisected", 120.0, 0.0, "end"),
    (2, "target_at_zero", 120.0, 0.0, "end"),
    (2, "ear_centered", 120.0, 0.0, "end"),
    (2, "bisected", 90.0, -10.0, "end"),
    (2, "target_at_zero", 90.0, -10.0, "end"),
    (2, "ear_centered", 90.0, -10.0, "end"),
    (2, "bisected", 90.0, 20.0, "end"),
    (2, "bisected", 90.0, -20.0, "end"),
    (3, "bisected", 60.0, 0.0, "center"),
    (3, "target_at_zero", 60.0, 0.0, "center"),
    (3, "ear_centered", 60.0, 0.0, "center"),
    (4, "bisected", 45.0, 0.0, "end"),
    (4, "target_at_zero", 45.0, 0.0, "end"),
    (4, "ear_centered", 45.0, 0.0, "end"),
    (4, "bisected", 60.0, 10.0, "end"),
    (4, "ear_centered", 60.0, 10.0, "end"),
    (4, "target_at_zero", 60.0, 10.0, "end"),
    (2, "bisected", 45.0, 0.0, "end"),
    (2, "target_at_zero", 45.0, 0.0, "end"),
    (2, "ear_centered", 45.0, 0.0, "end"),
]


def build_scene_suite(
    kind: str,
    seed: int,
    pool: dict[str, list[SoundRef]],
    target_classes: list[str] | None = None,
    duration_s: float = 30.0,
    profile: str = "paper",
    n_train: int | None = None,
) -> list[SceneConfig]:
    """Build a train or test suite of scene configurations.

    ``profile="paper"`` gives 80 random training scenes or the full
    pruned evaluation grid; ``profile="desk"`` gives 20 training scenes
    or a fixed 60-scene stratified subsample (12 single-source scenes,
    one per target class and layout, plus 48 multi-source scenes).
    """
    if kind not in ("train", "test"):
        raise ValueError("kind must be 'train' or 'test'")
    if profile not in ("paper", "desk"):
        raise ValueError("profile must be 'paper' or 'desk'")
    targets = list(target_classes or [c for c in SOUND_CLASSES if c != "general"])
    picker = _SoundPicker(pool, targets, seed)

    if kind == "train":
        n_scenes = n_train if n_train is not None else (80 if profile == "paper" else 20)
        rng = np.random.default_rng([0x7ABA, seed])
        return [_train_scene(picker, rng, i, duration_s) for i in range(n_scenes)]

    if profile == "paper":
        return _test_grid(picker, seed, duration_s)

    scenes = []
    idx = 0
    for cls in targets:
        for mode, az in _single_source_layouts():
            refs = picker.pool[cls]
            ref = refs[int(picker.rng.integers(len(refs)))]
            scenes.append(
                SceneConfig(
                    scene_id=f"test{idx:04d}",
                    sources=[SourceSpec(sound=ref, azimuth_deg=az, role="target")],
                    snr_db=[],
                    duration_s=duration_s,
                    rng_seed=seed * 100003 + idx,
                    scene_mode=mode,
                )
            )
            idx += 1
    for n, mode, gap, snr, tp in _DESK_MULTI:
        layout = mode_positions(mode, n, gap, tp)
        if layout is None:
            raise RuntimeError("desk stratum must be feasible")
        t_class, t_ref = picker.pick_target()
        d_refs = picker.pick_distractors(t_class, n - 1)
        sources = []
        d = 0
        for i, az in enumerate(layout[0]):
            if i == layout[1]:
                sources.append(SourceSpec(sound=t_ref, azimuth_deg=float(az), role="target"))
            else:
                sources.append(SourceSpec(sound=d_refs[d], azimuth_deg=float(az), role="distractor"))
                d += 1
        scenes.append(
            SceneConfig(
                scene_id=f"test{idx:04d}",
                sources=sources,
                snr_db=[float(snr)] * (n - 1),
                duration_s=duration_s,
                rng_seed=seed * 100003 + idx,
                scene_mode=mode,
                azimuth_gap_deg=gap,
                target_position=tp,
            )
        )
        idx += 1
    return scenes

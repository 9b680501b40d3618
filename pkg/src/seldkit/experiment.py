"""End-to-end experiment orchestration.

Ties the pipeline stages together: sound material management with a
file-level train/test split, scene suite construction, binaural
rendering, the auditory front-end, stream segregation, feature and
label assembly, detector training with cross-validated lambda
selection, and evaluation under a perturbation grid.

The three entry points mirror the command-line interface:

* :func:`run_train` fits the cue observation model, renders the
  training suite, assembles segregated (ground-truth streams) and
  fullstream samples, trains one detector per (class, kind), and
  writes models plus a manifest keyed by the config hash;
* :func:`run_test` renders the test suite, evaluates every detector on
  every scene under every perturbation-grid point, and writes the
  per-scene metric tables;
* :func:`emit_report` aggregates those tables into plot-ready series.

All randomness flows from named seeds in :class:`ExperimentConfig`;
reruns with an identical config produce byte-identical artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seldkit.afe.ams import ams
from seldkit.afe.cues import BinauralCues, binaural_cues
from seldkit.afe.gammatone import cochleagram
from seldkit.afe.ratemap import ratemap
from seldkit.afe.spectral import spectral_features_block
from seldkit.features import (
    ActiveStreams,
    Block,
    LabeledSample,
    SampleSet,
    apply_softmask,
    assemble_feature_vector,
    block_energies,
    build_sample_set,
    detect_active_sources,
    feature_layout,
    label_block,
    label_stream_samples,
    segment_blocks,
)
from seldkit.lasso import (
    DetectionModel,
    build_cv_plan,
    model_from_path,
    select_lambda_cv,
    subsample_per_file,
)
from seldkit.metrics import (
    BlockOutcome,
    N_PLACEMENT_BINS,
    PLACEMENT_BIN_DEG,
    StreamConfusion,
    fullstream_metrics,
    localized_stats,
    streamwise_metrics,
    timewise_aggregate,
    write_csv,
)
from seldkit.params import AMS_CHANNELS
from seldkit.perturb import PerturbationSpec
from seldkit.scene.head import DEFAULT_HEAD_RADIUS_M, SPEED_OF_SOUND_M_S, HeadModel
from seldkit.scene.mix import frame_powers, render_scene
from seldkit.scene.sounds import SOUND_CLASSES, SoundRef, read_annotation_csv
from seldkit.scene.suites import SceneConfig, build_scene_suite, save_suite
from seldkit.segregation import (
    ObservationModel,
    collect_model_cues,
    compute_softmasks,
    fit_from_cues,
    load_observation_model,
    save_observation_model,
    select_order_from_cues,
)

DEFAULT_TARGET_CLASSES = ("tonal_alarm", "noise_burst", "am_noise", "chirp")

RESULT_COLUMNS = [
    "scene_id",
    "scene_mode",
    "n_sources",
    "azimuth_gap_deg",
    "snr_db",
    "target_class",
    "detector_class",
    "perturbation",
    "sigma_deg",
    "count_delta",
    "count_error_range",
    "n_blocks_kept",
    "n_label_excluded",
    "tp",
    "fn",
    "tn_pp",
    "fp_pp",
    "tn_npp",
    "fp_npp",
    "sens",
    "spec_pp",
    "spec_npp",
    "spec_sw",
    "bac_sw",
    "dr_tw",
    "spec_tw",
    "bac_tw",
    "fs_tp",
    "fs_fn",
    "fs_tn",
    "fs_fp",
    "fs_dr",
    "fs_spec",
    "fs_bac",
    "bapr",
    "nep",
    "azm_err",
    "n_localized",
]

PLACEMENT_COLUMNS = ["scene_id", "detector_class", "perturbation", "bin_lo_deg", "fired", "total"]

REPORT_METRICS = [
    "sens",
    "spec_pp",
    "spec_npp",
    "spec_sw",
    "bac_sw",
    "dr_tw",
    "spec_tw",
    "bac_tw",
    "fs_dr",
    "fs_spec",
    "fs_bac",
    "bapr",
    "nep",
    "azm_err",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete recipe for one experiment; hashable for provenance."""

    output_dir: str
    dataset_kind: str = "synthetic"  # "synthetic" | "wav_dir"
    wav_dir: str | None = None
    target_classes: tuple[str, ...] = DEFAULT_TARGET_CLASSES
    n_files_per_class: int = 8
    split_ratio: float = 0.75
    split_seed: int = 0
    profile: str = "desk"  # "desk" | "paper"
    scene_duration_s: float = 10.0
    n_train_scenes: int | None = None
    train_suite_seed: int = 11
    test_suite_seed: int = 22
    head_radius_m: float = DEFAULT_HEAD_RADIUS_M
    speed_of_sound: float = SPEED_OF_SOUND_M_S
    glm_order: int | None = None  # None selects the order by BIC
    glm_fit_seed: int = 0
    glm_fit_duration_s: float = 0.5
    cv_seed: int = 0
    sample_cap: int = 200_000
    azimuth_sigmas: tuple[float, ...] = (0.0, 5.0, 10.0, 20.0, 45.0)
    count_deltas: tuple[int, ...] = (-2, 2)
    count_error_range: int = 0
    perturb_seed: int = 0

    def __post_init__(self):
        if self.dataset_kind not in ("synthetic", "wav_dir"):
            raise ValueError("dataset_kind must be 'synthetic' or 'wav_dir'")
        if self.dataset_kind == "wav_dir" and not self.wav_dir:
            raise ValueError("wav_dir dataset needs a directory path")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split ratio must be in (0, 1)")
        if not self.target_classes:
            raise ValueError("at least one target class is required")

    def head(self) -> HeadModel:
        return HeadModel(
            kind="parametric_sphere",
            head_radius_m=self.head_radius_m,
            speed_of_sound=self.speed_of_sound,
        )

    def perturbation_grid(self) -> list[PerturbationSpec]:
        """Identity first, then azimuth sigmas, then count errors."""
        grid = [PerturbationSpec(rng_seed=self.perturb_seed)]
        for sigma in self.azimuth_sigmas:
            if sigma != 0.0:
                grid.append(PerturbationSpec(azimuth_sigma_deg=sigma, rng_seed=self.perturb_seed))
        for delta in self.count_deltas:
            if delta != 0:
                grid.append(PerturbationSpec(count_delta=delta, rng_seed=self.perturb_seed))
        if self.count_error_range > 0:
            grid.append(
                PerturbationSpec(count_error_range=self.count_error_range, rng_seed=self.perturb_seed)
            )
        return grid

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["target_classes"] = list(self.target_classes)
        d["azimuth_sigmas"] = list(self.azimuth_sigmas)
        d["count_deltas"] = list(self.count_deltas)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        for key in ("target_classes", "azimuth_sigmas", "count_deltas"):
            if key in d:
                d[key] = tuple(d[key])
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return ExperimentConfig(**d)

    @staticmethod
    def load(path: str | Path) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_sound_pool(config: ExperimentConfig) -> dict[str, list[SoundRef]]:
    """All sound material, per class, before the train/test split."""
    if config.dataset_kind == "synthetic":
        classes = [c for c in SOUND_CLASSES if c in config.target_classes or c == "general"]
        missing = set(config.target_classes) - set(classes)
        if missing:
            raise ValueError(f"unknown synthetic target classes: {sorted(missing)}")
        return {
            c: [SoundRef(kind="synthetic", class_id=c, seed=i) for i in range(config.n_files_per_class)]
            for c in classes
        }
    pool: dict[str, list[SoundRef]] = {}
    wav_dir = Path(config.wav_dir)
    if not wav_dir.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {wav_dir}")
    for wav in sorted(wav_dir.glob("*.wav")):
        sidecar = wav.with_suffix(".csv")
        if not sidecar.exists():
            raise FileNotFoundError(f"missing annotation sidecar for {wav.name}")
        _, class_id = read_annotation_csv(sidecar)
        pool.setdefault(class_id, []).append(
            SoundRef(kind="file", class_id=class_id, path=str(wav))
        )
    missing = set(config.target_classes) - set(pool)
    if missing:
        raise ValueError(f"dataset has no material for classes: {sorted(missing)}")
    return pool


def split_pool(
    pool: dict[str, list[SoundRef]], ratio: float, seed: int
) -> tuple[dict[str, list[SoundRef]], dict[str, list[SoundRef]]]:
    """File-level split: every file lands in exactly one side."""
    rng = np.random.default_rng([0x5917, seed])
    train: dict[str, list[SoundRef]] = {}
    test: dict[str, list[SoundRef]] = {}
    for class_id in sorted(pool):
        refs = list(pool[class_id])
        if len(refs) < 2:
            raise ValueError(f"class {class_id!r} needs at least two files to split")
        order = rng.permutation(len(refs))
        n_train = max(1, min(len(refs) - 1, int(round(ratio * len(refs)))))
        train[class_id] = [refs[i] for i in sorted(order[:n_train])]
        test[class_id] = [refs[i] for i in sorted(order[n_train:])]
    overlap = {r.sound_id for v in train.values() for r in v} & {
        r.sound_id for v in test.values() for r in v
    }
    if overlap:
        raise RuntimeError(f"train/test file overlap: {sorted(overlap)}")
    return train, test


@dataclass
class SceneRepresentation:
    """Everything the evaluation needs from one rendered scene."""

    scene: SceneConfig
    ratemap: np.ndarray  # (n_frames, 32), ear-averaged
    ams: np.ndarray  # (n_frames, 16, 8), ear-averaged
    cues: BinauralCues
    cfs: np.ndarray
    blocks: list[Block]
    block_active: list[ActiveStreams]
    class_events: dict[str, list[tuple[float, float]]]
    class_azimuth: dict[str, float]
    class_sound_id: dict[str, str]
    fullstream_features: np.ndarray  # (n_blocks, layout dimension)


def compute_scene_representation(scene: SceneConfig, head: HeadModel) -> SceneRepresentation:
    """Render one scene and run the complete auditory front-end."""
    render = render_scene(scene, head)
    mixture = render.mixture
    coch_l = cochleagram(mixture.left, mixture.fs)
    coch_r = cochleagram(mixture.right, mixture.fs)
    coch16_l = cochleagram(mixture.left, mixture.fs, n_channels=AMS_CHANNELS)
    coch16_r = cochleagram(mixture.right, mixture.fs, n_channels=AMS_CHANNELS)

    rm = 0.5 * (ratemap(coch_l).data + ratemap(coch_r).data)
    am = 0.5 * (ams(coch16_l).data + ams(coch16_r).data)
    cues = binaural_cues(coch_l, coch_r)
    n_frames = min(rm.shape[0], am.shape[0], cues.n_frames)
    rm, am, cues = rm[:n_frames], am[:n_frames], cues[:n_frames]

    blocks = segment_blocks(n_frames, scene.duration_s)

    powers = np.stack([frame_powers(src)[:n_frames] for src in render.sources])
    energies = block_energies(powers, blocks)
    max_energy = energies.max(axis=1)
    azimuths = np.array([s.azimuth_deg for s in scene.sources])
    block_active = [detect_active_sources(energies[:, b.index], max_energy, azimuths) for b in blocks]

    class_events: dict[str, list[tuple[float, float]]] = {}
    class_azimuth: dict[str, float] = {}
    class_sound_id: dict[str, str] = {}
    for ann in render.annotations:
        if ann.class_id in class_events:
            raise ValueError(f"scene {scene.scene_id} has two sources of class {ann.class_id!r}")
        class_events[ann.class_id] = list(ann.events)
        class_azimuth[ann.class_id] = ann.azimuth_deg
        class_sound_id[ann.class_id] = ann.sound_id

    fullstream = np.stack(
        [
            assemble_feature_vector(
                rm[b.frame_start : b.frame_stop],
                am[b.frame_start : b.frame_stop],
                spectral_features_block(rm[b.frame_start : b.frame_stop], coch_l.cfs),
            )
            for b in blocks
        ]
    )
    return SceneRepresentation(
        scene=scene,
        ratemap=rm,
        ams=am,
        cues=cues,
        cfs=coch_l.cfs,
        blocks=blocks,
        block_active=block_active,
        class_events=class_events,
        class_azimuth=class_azimuth,
        class_sound_id=class_sound_id,
        fullstream_features=fullstream,
    )


def stream_block_features(
    rep: SceneRepresentation,
    block: Block,
    stream_azimuths,
    model: ObservationModel,
) -> np.ndarray:
    """Masked feature vectors of one block, one row per stream."""
    sl = slice(block.frame_start, block.frame_stop)
    masks = compute_softmasks(model, rep.cues[sl], stream_azimuths)
    rm, am = rep.ratemap[sl], rep.ams[sl]
    rows = []
    for mask in masks:
        masked_rm, masked_am, spectral = apply_softmask(rm, am, rep.cfs, mask)
        rows.append(assemble_feature_vector(masked_rm, masked_am, spectral))
    return np.stack(rows)


def _fit_observation_model(config: ExperimentConfig) -> ObservationModel:
    head = config.head()
    grid, itd, ild = collect_model_cues(
        head, seed=config.glm_fit_seed, duration_s=config.glm_fit_duration_s
    )
    order = config.glm_order
    if order is None:
        order = select_order_from_cues(grid, itd, ild)
    return fit_from_cues(grid, itd, ild, order)


def collect_scene_samples(
    rep: SceneRepresentation,
    obs_model: ObservationModel,
    target_classes,
) -> dict[tuple[str, str], list[LabeledSample]]:
    """Training samples of one scene, keyed by (class, kind).

    Segregated samples use ground-truth stream azimuths (the active
    sources of each block); fullstream samples use the unmasked block
    features.  Blocks with an excluded label for a class are skipped
    for that class; at training time blocks are otherwise kept even
    when some scene sources are inactive.
    """
    scene = rep.scene
    out: dict[tuple[str, str], list[LabeledSample]] = {
        (c, kind): [] for c in target_classes for kind in ("segregated", "fullstream")
    }
    for block in rep.blocks:
        active = rep.block_active[block.index]
        seg_features = None
        if active.n_streams > 0:
            seg_features = stream_block_features(rep, block, active.stream_azimuths, obs_model)
        for class_id in target_classes:
            events = rep.class_events.get(class_id, [])
            label = label_block(events, block)
            if label is None:
                continue
            sound_id = rep.class_sound_id.get(class_id, scene.target.sound.sound_id)
            common = dict(
                scene_id=scene.scene_id,
                block_index=block.index,
                sound_id=sound_id,
                source_count=scene.n_sources,
            )
            out[(class_id, "fullstream")].append(
                LabeledSample(
                    features=rep.fullstream_features[block.index],
                    label=label,
                    stream_azimuth=float("nan"),
                    negative_kind="",
                    **common,
                )
            )
            if seg_features is None:
                continue
            target_azimuth = rep.class_azimuth.get(class_id, 0.0)
            stream_labels = label_stream_samples(label, active.stream_azimuths, target_azimuth)
            for i, (stream_label, kind) in enumerate(stream_labels):
                out[(class_id, "segregated")].append(
                    LabeledSample(
                        features=seg_features[i],
                        label=stream_label,
                        stream_azimuth=active.stream_azimuths[i],
                        negative_kind=kind or "",
                        **common,
                    )
                )
    return out


def _detector_cv_plan(samples: SampleSet, n_folds: int, seed: int):
    """Folds over sound files in which every fold holds both labels.

    Files are stratified by which labels their samples carry; the fold
    count shrinks until every fold contains at least one
    positive-carrying and one negative-carrying file, since a held-out
    fold with a single label class cannot be scored.
    """
    sound_ids = samples.sound_ids
    pos_files = set(np.unique(sound_ids[samples.labels == 1]).tolist())
    neg_files = set(np.unique(sound_ids[samples.labels == -1]).tolist())
    all_files = np.unique(sound_ids).tolist()
    if len(pos_files) < 2 or len(neg_files) < 2:
        raise ValueError(
            "cross-validation needs both labels spread over at least two sound files each"
        )
    file_classes = {
        f: ("pos" if f in pos_files else "") + ("neg" if f in neg_files else "")
        for f in all_files
    }
    for folds in range(min(n_folds, len(pos_files), len(neg_files)), 1, -1):
        plan = build_cv_plan(file_classes, n_folds=folds, seed=seed)
        if all(fold & pos_files and fold & neg_files for fold in plan.folds):
            return plan
    raise ValueError("no fold assignment covers both labels in every fold")


def train_detector(
    samples: SampleSet, target_class: str, kind: str, config: ExperimentConfig
) -> tuple[DetectionModel, dict]:
    """Cross-validate lambda and fit the final detector."""
    keep = subsample_per_file(samples.sound_ids, cap=config.sample_cap, seed=config.cv_seed)
    sub = samples.subset(keep)
    plan = _detector_cv_plan(sub, n_folds=6, seed=config.cv_seed)
    kinds = sub.negative_kinds if kind == "segregated" else None
    best_lambda, path, scores = select_lambda_cv(
        sub.features,
        sub.labels,
        sub.source_counts,
        kinds,
        sub.sound_ids,
        plan,
        kind,
        on_degenerate="merge",
    )
    index = int(np.flatnonzero(path.lambdas == best_lambda)[0])
    model = model_from_path(path, index, target_class, kind)
    info = {
        "lambda": best_lambda,
        "cv_score": float(scores[index]),
        "n_active": model.n_active,
        "n_samples": int(len(sub.labels)),
        "n_folds": len(plan.folds),
    }
    return model, info


def _pool_ids(pool: dict[str, list[SoundRef]]) -> dict[str, list[str]]:
    return {c: [r.sound_id for r in refs] for c, refs in sorted(pool.items())}


def _map_scenes(worker, scenes, jobs: int):
    """Map a picklable worker over scenes, optionally in processes."""
    if jobs <= 1:
        return [worker(s) for s in scenes]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, scenes, chunksize=1))


@dataclass
class _TrainWorker:
    config: ExperimentConfig
    obs_model: ObservationModel

    def __call__(self, scene: SceneConfig):
        rep = compute_scene_representation(scene, self.config.head())
        return collect_scene_samples(rep, self.obs_model, self.config.target_classes)


def run_train(config: ExperimentConfig, jobs: int = 1) -> dict:
    """Fit the observation model and all detectors; write the manifest."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pool = build_sound_pool(config)
    train_pool, test_pool = split_pool(pool, config.split_ratio, config.split_seed)

    obs_model = _fit_observation_model(config)
    save_observation_model(obs_model, out_dir / "observation_model.json")

    scenes = build_scene_suite(
        kind="train",
        seed=config.train_suite_seed,
        pool=train_pool,
        target_classes=list(config.target_classes),
        duration_s=config.scene_duration_s,
        profile=config.profile,
        n_train=config.n_train_scenes,
    )
    save_suite(scenes, out_dir / "train_suite.json")

    per_scene = _map_scenes(_TrainWorker(config, obs_model), scenes, jobs)
    layout = feature_layout()
    detectors: dict[str, dict] = {}
    sample_counts: dict[str, int] = {}
    for class_id in config.target_classes:
        for kind in ("segregated", "fullstream"):
            records = [s for scene_samples in per_scene for s in scene_samples[(class_id, kind)]]
            sample_set = build_sample_set(records, kind=kind, layout=layout)
            model, info = train_detector(sample_set, class_id, kind, config)
            name = f"detector_{kind}_{class_id}.json"
            model.save(out_dir / name)
            detectors[f"{kind}/{class_id}"] = {"file": name, **info}
            sample_counts[f"{kind}/{class_id}"] = info["n_samples"]

    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "feature_dimension": layout.dimension,
        "glm_order": obs_model.order,
        "train_files": _pool_ids(train_pool),
        "test_files": _pool_ids(test_pool),
        "n_train_scenes": len(scenes),
        "detectors": detectors,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(output_dir: str | Path) -> dict:
    path = Path(output_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}; run training first")
    return json.loads(path.read_text())


def load_detectors(output_dir: str | Path, manifest: dict) -> dict[str, DetectionModel]:
    out = {}
    for key, entry in manifest["detectors"].items():
        out[key] = DetectionModel.load(Path(output_dir) / entry["file"])
    return out


def evaluate_scene(
    rep: SceneRepresentation,
    obs_model: ObservationModel,
    detectors: dict[str, DetectionModel],
    target_classes,
    grid: list[PerturbationSpec],
) -> tuple[list[dict], list[dict]]:
    """Metric rows of one scene: per (detector class, perturbation).

    Blocks in which not all scene sources are active are dropped
    before evaluation; the remaining blocks are scored per class with
    the segregated detectors on perturbed stream reports and the
    fullstream detectors on unmasked block features.
    """
    scene = rep.scene
    kept = [b for b in rep.blocks if len(rep.block_active[b.index].source_indices) == scene.n_sources]

    fs_margins = {
        c: detectors[f"fullstream/{c}"].margins(rep.fullstream_features) for c in target_classes
    }

    rows: list[dict] = []
    placement_rows: list[dict] = []
    for spec in grid:
        # Perturbed stream reports and their masked features, shared by
        # every detector class at this grid point.
        block_reports: list[list[float]] = []
        block_margins: dict[str, list[np.ndarray]] = {c: [] for c in target_classes}
        for block in kept:
            active = rep.block_active[block.index]
            reported = spec.apply(active.stream_azimuths, scene.scene_id, block.index)
            block_reports.append(reported)
            features = stream_block_features(rep, block, reported, obs_model)
            for c in target_classes:
                block_margins[c].append(detectors[f"segregated/{c}"].margins(features))

        for c in target_classes:
            azimuth = rep.class_azimuth.get(c)
            conf = StreamConfusion()
            outcomes = []
            fs_pred_list = []
            fs_truth = []
            n_excluded = 0
            for j, block in enumerate(kept):
                label = label_block(rep.class_events.get(c, []), block)
                if label is None:
                    n_excluded += 1
                    continue
                reported = block_reports[j]
                fired = block_margins[c][j] >= 0.0
                stream_labels = label_stream_samples(label, reported, azimuth if azimuth is not None else 0.0)
                labels = [sl for sl, _ in stream_labels]
                kinds = [k or "" for _, k in stream_labels]
                preds = np.where(fired, 1, -1)
                conf = conf + StreamConfusion.from_samples(labels, kinds, preds)
                outcomes.append(
                    BlockOutcome(
                        truth=label,
                        stream_azimuths=tuple(reported),
                        fired=tuple(bool(f) for f in fired),
                        target_azimuth=azimuth,
                    )
                )
                fs_pred_list.append(1 if fs_margins[c][block.index] >= 0.0 else -1)
                fs_truth.append(label)

            sw = streamwise_metrics(conf)
            tw = timewise_aggregate(outcomes)
            loc = localized_stats(outcomes)
            fs_pred = np.asarray(fs_pred_list)
            fs_true = np.asarray(fs_truth)
            fs = fullstream_metrics(fs_pred, fs_true)
            rows.append(
                {
                    "scene_id": scene.scene_id,
                    "scene_mode": scene.scene_mode or "",
                    "n_sources": scene.n_sources,
                    "azimuth_gap_deg": scene.azimuth_gap_deg,
                    "snr_db": scene.snr_db[0] if scene.snr_db else None,
                    "target_class": scene.target.sound.class_id,
                    "detector_class": c,
                    "perturbation": spec.label(),
                    "sigma_deg": spec.azimuth_sigma_deg,
                    "count_delta": spec.count_delta,
                    "count_error_range": spec.count_error_range,
                    "n_blocks_kept": len(kept),
                    "n_label_excluded": n_excluded,
                    "tp": conf.tp,
                    "fn": conf.fn,
                    "tn_pp": conf.tn_pp,
                    "fp_pp": conf.fp_pp,
                    "tn_npp": conf.tn_npp,
                    "fp_npp": conf.fp_npp,
                    "sens": sw.sens,
                    "spec_pp": sw.spec_pp,
                    "spec_npp": sw.spec_npp,
                    "spec_sw": sw.spec_sw,
                    "bac_sw": sw.bac_sw,
                    "dr_tw": tw.dr_tw,
                    "spec_tw": tw.spec_tw,
                    "bac_tw": tw.bac_tw,
                    "fs_tp": int(((fs_true == 1) & (fs_pred == 1)).sum()),
                    "fs_fn": int(((fs_true == 1) & (fs_pred == -1)).sum()),
                    "fs_tn": int(((fs_true == -1) & (fs_pred == -1)).sum()),
                    "fs_fp": int(((fs_true == -1) & (fs_pred == 1)).sum()),
                    "fs_dr": fs.dr,
                    "fs_spec": fs.spec,
                    "fs_bac": fs.bac,
                    "bapr": loc.bapr,
                    "nep": loc.nep,
                    "azm_err": loc.azm_err,
                    "n_localized": loc.n_blocks,
                }
            )
            if loc.placement_total.sum() > 0:
                for b in range(N_PLACEMENT_BINS):
                    placement_rows.append(
                        {
                            "scene_id": scene.scene_id,
                            "detector_class": c,
                            "perturbation": spec.label(),
                            "bin_lo_deg": b * PLACEMENT_BIN_DEG,
                            "fired": loc.placement_fired[b],
                            "total": loc.placement_total[b],
                        }
                    )
    return rows, placement_rows


@dataclass
class _TestWorker:
    config: ExperimentConfig
    obs_model: ObservationModel
    detectors: dict[str, DetectionModel]
    grid: list[PerturbationSpec]

    def __call__(self, scene: SceneConfig):
        rep = compute_scene_representation(scene, self.config.head())
        return evaluate_scene(
            rep, self.obs_model, self.detectors, self.config.target_classes, self.grid
        )


def run_test(config: ExperimentConfig, jobs: int = 1, max_scenes: int | None = None) -> dict:
    """Evaluate all detectors over the test suite and perturbation grid."""
    out_dir = Path(config.output_dir)
    manifest = load_manifest(out_dir)
    if manifest["config_hash"] != config.config_hash():
        raise ValueError(
            "config hash mismatch: trained models belong to a different configuration"
        )
    layout = feature_layout()
    if manifest["feature_dimension"] != layout.dimension:
        raise ValueError("feature layout changed since training")
    obs_model = load_observation_model(out_dir / "observation_model.json")
    detectors = load_detectors(out_dir, manifest)
    for model in detectors.values():
        if model.n_features != layout.dimension:
            raise ValueError("detector feature dimension does not match the layout")

    pool = build_sound_pool(config)
    _, test_pool = split_pool(pool, config.split_ratio, config.split_seed)
    scenes = build_scene_suite(
        kind="test",
        seed=config.test_suite_seed,
        pool=test_pool,
        target_classes=list(config.target_classes),
        duration_s=config.scene_duration_s,
        profile=config.profile,
    )
    save_suite(scenes, out_dir / "test_suite.json")
    if max_scenes is not None:
        scenes = scenes[:max_scenes]

    grid = config.perturbation_grid()
    results = _map_scenes(_TestWorker(config, obs_model, detectors, grid), scenes, jobs)
    rows = [r for scene_rows, _ in results for r in scene_rows]
    placement = [p for _, scene_placement in results for p in scene_placement]
    rows.sort(key=lambda r: (r["scene_id"], r["detector_class"], r["perturbation"]))
    placement.sort(
        key=lambda r: (r["scene_id"], r["detector_class"], r["perturbation"], r["bin_lo_deg"])
    )
    write_csv(out_dir / "results.csv", rows, RESULT_COLUMNS)
    if placement:
        write_csv(out_dir / "placement.csv", placement, PLACEMENT_COLUMNS)
    return {
        "n_scenes": len(scenes),
        "n_rows": len(rows),
        "n_grid_points": len(grid),
        "results": str(out_dir / "results.csv"),
    }


def _series_frame(df, key):
    """Long-format aggregate of every report metric for one grouping."""
    import pandas as pd

    records = []
    for value, group in df.groupby(key, dropna=False):
        for metric in REPORT_METRICS:
            defined = group[metric].dropna()
            records.append(
                {
                    "series": key,
                    "group": value,
                    "metric": metric,
                    "mean": defined.mean() if len(defined) else None,
                    "p25": defined.quantile(0.25) if len(defined) else None,
                    "p75": defined.quantile(0.75) if len(defined) else None,
                    "n": int(len(defined)),
                    "n_undefined": int(group[metric].isna().sum()),
                }
            )
    return pd.DataFrame.from_records(records)


def emit_report(output_dir: str | Path) -> dict:
    """Aggregate per-scene results into plot-ready series tables.

    Emits ``metrics_long.csv`` (one row per scene, detector class, and
    metric at the identity perturbation), ``summary.csv`` (mean and
    quartile series grouped by scene mode, SNR, source count, azimuth
    sigma, and count delta, on scenes whose target matches the
    detector), and ``placement_summary.csv`` (pooled placement
    likelihood histograms per scene mode and azimuth sigma).
    """
    import pandas as pd

    out_dir = Path(output_dir)
    results_path = out_dir / "results.csv"
    if not results_path.exists():
        raise FileNotFoundError(f"no results at {results_path}; run testing first")
    df = pd.read_csv(results_path)
    if df.empty:
        raise ValueError("results table is empty")

    identity = df[(df["sigma_deg"] == 0) & (df["count_delta"].isna()) & (df["count_error_range"] == 0)]
    long = identity.melt(
        id_vars=["scene_id", "detector_class"],
        value_vars=REPORT_METRICS,
        var_name="metric",
        value_name="value",
    ).sort_values(["scene_id", "detector_class", "metric"], kind="stable")
    long.to_csv(out_dir / "metrics_long.csv", index=False)

    target_rows = df[df["detector_class"] == df["target_class"]]
    ident_target = target_rows[
        (target_rows["sigma_deg"] == 0)
        & (target_rows["count_delta"].isna())
        & (target_rows["count_error_range"] == 0)
    ]
    sigma_rows = target_rows[target_rows["count_delta"].isna() & (target_rows["count_error_range"] == 0)]
    delta_rows = target_rows[
        ((target_rows["sigma_deg"] == 0) & (target_rows["count_error_range"] == 0))
    ].copy()
    delta_rows["count_delta"] = delta_rows["count_delta"].fillna(0)

    frames = [
        _series_frame(ident_target, "scene_mode"),
        _series_frame(ident_target, "snr_db"),
        _series_frame(ident_target, "n_sources"),
        _series_frame(sigma_rows, "sigma_deg"),
        _series_frame(delta_rows, "count_delta"),
    ]
    summary = pd.concat(frames, ignore_index=True)
    bad = summary.dropna(subset=["p25", "p75"])
    if (bad["p25"] > bad["p75"]).any():
        raise AssertionError("quantile bands are not ordered")
    summary.to_csv(out_dir / "summary.csv", index=False)

    n_placement = 0
    placement_path = out_dir / "placement.csv"
    if placement_path.exists():
        pl = pd.read_csv(placement_path)
        pl = pl.merge(
            df[["scene_id", "detector_class", "perturbation", "scene_mode", "sigma_deg",
                "count_delta", "count_error_range", "target_class"]].drop_duplicates(),
            on=["scene_id", "detector_class", "perturbation"],
            how="left",
        )
        pl = pl[pl["detector_class"] == pl["target_class"]]
        out_frames = []
        ident = pl[(pl["sigma_deg"] == 0) & (pl["count_delta"].isna()) & (pl["count_error_range"] == 0)]
        for series, source in (("scene_mode", ident), ("sigma_deg", pl[pl["count_delta"].isna() & (pl["count_error_range"] == 0)])):
            grouped = source.groupby([series, "bin_lo_deg"], dropna=False).agg(
                fired=("fired", "sum"), total=("total", "sum")
            )
            grouped["proportion"] = grouped["fired"] / grouped["total"].where(grouped["total"] > 0)
            grouped = grouped.reset_index()
            grouped.insert(0, "series", series)
            grouped = grouped.rename(columns={series: "group"})
            out_frames.append(grouped)
        placement_summary = pd.concat(out_frames, ignore_index=True)
        placement_summary.to_csv(out_dir / "placement_summary.csv", index=False)
        n_placement = len(placement_summary)

    return {
        "summary": str(out_dir / "summary.csv"),
        "n_series_rows": len(summary),
        "n_placement_rows": n_placement,
    }

"""Block segmentation, stream activity, masking, and L-statistic features.

Representations are cut into 500 ms blocks shifted by 333 ms.  Within a
block, the active sources define the candidate streams (co-located
sources merge into one stream), each stream's softmask is applied to
the ratemap and modulation spectrogram, spectral features are
recomputed from the masked ratemap, and every feature channel is
summarized over time by four L-statistics (L-mean, L-scale, L-skewness,
L-kurtosis) of the series itself and its first two discrete
derivatives.

Block/frame bookkeeping is integer arithmetic in milliseconds: block k
spans [333k, 333k + 500) ms and owns the 10 ms frames whose start lies
in that interval, 50 frames per full block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from seldkit.afe.spectral import SPECTRAL_FEATURE_NAMES, spectral_features_block
from seldkit.params import (
    ACTIVITY_THRESHOLD_DB,
    AMS_CHANNELS,
    AMS_MOD_FILTERS,
    BLOCK_LEN_MS,
    BLOCK_SHIFT_MS,
    RATEMAP_CHANNELS,
)
from seldkit.scene.head import circular_distance, wrap_azimuth

_FRAME_SHIFT_MS = 10
L_STATISTIC_NAMES = ("l_mean", "l_scale", "l_skewness", "l_kurtosis")
DERIVATIVE_NAMES = ("d0", "d1", "d2")
MIN_BLOCK_FRAMES = 6  # second derivative still needs 4 samples


@dataclass(frozen=True)
class Block:
    """One analysis block: nominal time span plus its frame range."""

    index: int
    frame_start: int
    frame_stop: int

    @property
    def start_s(self) -> float:
        return self.index * BLOCK_SHIFT_MS / 1000.0

    @property
    def end_s(self) -> float:
        return (self.index * BLOCK_SHIFT_MS + BLOCK_LEN_MS) / 1000.0

    @property
    def n_frames(self) -> int:
        return self.frame_stop - self.frame_start


def n_blocks_for_duration(duration_s: float) -> int:
    """Block count for a signal duration; at least one full block."""
    duration_ms = int(round(duration_s * 1000.0))
    if duration_ms < BLOCK_LEN_MS:
        raise ValueError(f"signal of {duration_ms} ms is shorter than one {BLOCK_LEN_MS} ms block")
    return (duration_ms - BLOCK_LEN_MS) // BLOCK_SHIFT_MS + 1


def segment_blocks(n_frames: int, duration_s: float) -> list[Block]:
    """Blocks covering a signal, clipped to the available frame count.

    Block k owns frames with start times in [333k, 333k + 500) ms,
    i.e. frames ceil(333k / 10) .. ceil((333k + 500) / 10) - 1.
    """
    blocks = []
    for k in range(n_blocks_for_duration(duration_s)):
        t0 = k * BLOCK_SHIFT_MS
        f0 = -(-t0 // _FRAME_SHIFT_MS)
        f1 = min(-(-(t0 + BLOCK_LEN_MS) // _FRAME_SHIFT_MS), n_frames)
        if f1 - f0 < MIN_BLOCK_FRAMES:
            raise ValueError("not enough frames to cover the final block")
        blocks.append(Block(index=k, frame_start=f0, frame_stop=f1))
    return blocks


def block_energies(frame_powers: np.ndarray, blocks: list[Block]) -> np.ndarray:
    """Mean frame power per block; rows are sources, columns blocks."""
    p = np.atleast_2d(np.asarray(frame_powers, dtype=float))
    return np.stack([p[:, b.frame_start : b.frame_stop].mean(axis=1) for b in blocks], axis=1)


@dataclass(frozen=True)
class ActiveStreams:
    """Active sources of one block, merged into co-located streams."""

    source_indices: tuple[int, ...]
    stream_azimuths: tuple[float, ...]
    source_to_stream: dict[int, int]

    @property
    def n_streams(self) -> int:
        return len(self.stream_azimuths)


def detect_active_sources(
    block_energy: np.ndarray, max_energy: np.ndarray, azimuths: np.ndarray
) -> ActiveStreams:
    """Sources audible in a block, as a merged stream set.

    A source is active when its mean block energy exceeds its scene-wide
    maximum block energy by more than the -40 dB activity threshold
    (strictly; a source exactly at the threshold is inactive).  Active
    sources sharing an azimuth merge into a single stream.
    """
    thresh = 10.0 ** (ACTIVITY_THRESHOLD_DB / 10.0)
    active = [i for i in range(len(block_energy)) if block_energy[i] > max_energy[i] * thresh]
    stream_azimuths: list[float] = []
    source_to_stream: dict[int, int] = {}
    for i in active:
        az = wrap_azimuth(float(azimuths[i]))
        if az in stream_azimuths:
            source_to_stream[i] = stream_azimuths.index(az)
        else:
            source_to_stream[i] = len(stream_azimuths)
            stream_azimuths.append(az)
    return ActiveStreams(
        source_indices=tuple(active),
        stream_azimuths=tuple(stream_azimuths),
        source_to_stream=source_to_stream,
    )


def pairwise_average_mask(mask: np.ndarray) -> np.ndarray:
    """Downsample a (frames, 32) mask to the 16-channel AMS grid."""
    m = np.asarray(mask, dtype=float)
    if m.shape[1] != 2 * AMS_CHANNELS:
        raise ValueError("expected a mask on the full ratemap channel grid")
    return 0.5 * (m[:, 0::2] + m[:, 1::2])


def apply_softmask(
    ratemap_block: np.ndarray,
    ams_block: np.ndarray,
    cfs: np.ndarray,
    mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask a block's representations and derive its spectral features.

    The mask multiplies the ratemap elementwise; the modulation
    spectrogram uses the mask averaged over adjacent channel pairs; the
    14 spectral features are recomputed from the masked ratemap.
    Returns (masked ratemap, masked AMS, spectral features).
    """
    if mask.shape != ratemap_block.shape:
        raise ValueError("mask and ratemap block shapes differ")
    if ams_block.shape[:2] != (mask.shape[0], AMS_CHANNELS):
        raise ValueError("AMS block is not aligned with the mask frames")
    masked_ratemap = ratemap_block * mask
    masked_ams = ams_block * pairwise_average_mask(mask)[:, :, None]
    spectral = spectral_features_block(masked_ratemap, cfs)
    return masked_ratemap, masked_ams, spectral


@lru_cache(maxsize=64)
def _l_weights(n: int) -> np.ndarray:
    """Order-statistic weight rows for the first four sample L-moments."""
    j = np.arange(1, n + 1, dtype=float)
    b = np.empty((4, n))
    b[0] = 1.0
    b[1] = (j - 1) / (n - 1)
    b[2] = b[1] * (j - 2) / (n - 2)
    b[3] = b[2] * (j - 3) / (n - 3)
    b /= n
    lam = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [-1.0, 2.0, 0.0, 0.0],
            [1.0, -6.0, 6.0, 0.0],
            [-1.0, 12.0, -30.0, 20.0],
        ]
    )
    return lam @ b  # (4, n): rows give lambda_1..lambda_4 from sorted data


def l_statistics_matrix(series: np.ndarray) -> np.ndarray:
    """L-statistics per row of a (n_series, n_samples) matrix.

    Columns are (l_mean, l_scale, l_skewness, l_kurtosis): the first two
    sample L-moments and the ratios lambda_3/lambda_2, lambda_4/lambda_2
    (0 where lambda_2 is 0, e.g. constant series).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-d series matrix")
    n = x.shape[1]
    if n < 4:
        raise ValueError("L-statistics need at least 4 samples")
    ordered = np.sort(x, axis=1)
    lam = ordered @ _l_weights(n).T  # (n_series, 4)
    # A constant series has zero spread exactly; the dot product above
    # only reaches ~1e-16 of the mean, so pin it.
    constant = ordered[:, -1] == ordered[:, 0]
    lam[constant, 1:] = 0.0
    out = lam.copy()
    scale = lam[:, 1]
    safe = np.where(scale == 0.0, 1.0, scale)
    out[:, 2] = np.where(scale == 0.0, 0.0, lam[:, 2] / safe)
    out[:, 3] = np.where(scale == 0.0, 0.0, lam[:, 3] / safe)
    return out


def l_statistics(series) -> tuple[float, float, float, float]:
    """The four L-statistics of a single sample sequence."""
    row = l_statistics_matrix(np.asarray(series, dtype=float)[None, :])[0]
    return tuple(float(v) for v in row)


@dataclass(frozen=True)
class FeatureLayout:
    """Names every coordinate of an assembled feature vector."""

    names: tuple[str, ...]

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def select(self, prefix: str) -> list[int]:
        """Indices of all coordinates whose name starts with prefix."""
        return [i for i, n in enumerate(self.names) if n.startswith(prefix)]


@lru_cache(maxsize=1)
def feature_layout() -> FeatureLayout:
    channels = [f"ratemap/ch{i:02d}" for i in range(RATEMAP_CHANNELS)]
    channels += [
        f"ams/ch{i:02d}/mod{m}" for i in range(AMS_CHANNELS) for m in range(AMS_MOD_FILTERS)
    ]
    channels += [f"spectral/{name}" for name in SPECTRAL_FEATURE_NAMES]
    names = tuple(
        f"{ch}/{deriv}/{stat}"
        for ch in channels
        for deriv in DERIVATIVE_NAMES
        for stat in L_STATISTIC_NAMES
    )
    return FeatureLayout(names=names)


def assemble_feature_vector(
    ratemap_block: np.ndarray, ams_block: np.ndarray, spectral_block: np.ndarray
) -> np.ndarray:
    """L-statistic summary of one block's representations.

    Every feature channel (32 ratemap + 16x8 AMS + 14 spectral) yields
    the four L-statistics of its frame series and of the series' first
    and second discrete differences, ordered per the layout descriptor.
    """
    n = ratemap_block.shape[0]
    if n < MIN_BLOCK_FRAMES:
        raise ValueError("block too short for second-derivative L-statistics")
    if ams_block.shape[0] != n or spectral_block.shape[0] != n:
        raise ValueError("representations disagree on frame count")
    series = np.concatenate(
        [
            ratemap_block.T,
            ams_block.reshape(n, AMS_CHANNELS * AMS_MOD_FILTERS).T,
            spectral_block.T,
        ],
        axis=0,
    )
    d1 = np.diff(series, axis=1)
    d2 = np.diff(d1, axis=1)
    stats = np.concatenate(
        [l_statistics_matrix(series), l_statistics_matrix(d1), l_statistics_matrix(d2)], axis=1
    )
    return stats.ravel()


def _merged_intervals(events) -> list[tuple[float, float]]:
    spans = sorted((float(a), float(b)) for a, b in events if b > a)
    merged: list[tuple[float, float]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def label_block(events, block: Block) -> int | None:
    """Target label of a block: +1, -1, or None for excluded.

    Positive when target events occupy at least 75% of the block, or
    when at least 75% of some (short) event lies inside it; negative
    when the target is entirely absent; excluded otherwise.
    """
    t0, t1 = block.start_s, block.end_s
    occupied = 0.0
    for a, b in _merged_intervals(events):
        occupied += max(0.0, min(b, t1) - max(a, t0))
    short_positive = any(
        min(b, t1) - max(a, t0) >= 0.75 * (b - a) for a, b in events if b > a
    )
    if occupied == 0.0:
        return -1
    if occupied >= 0.75 * (t1 - t0) or short_positive:
        return 1
    return None


def closest_stream_index(stream_azimuths, target_azimuth: float) -> int:
    """Index of the stream nearest the target on the circle.

    Distance ties prefer the smaller absolute azimuth, then the smaller
    signed azimuth, so the choice is deterministic.
    """
    streams = list(stream_azimuths)
    if not streams:
        raise ValueError("no streams to rank")
    return min(
        range(len(streams)),
        key=lambda i: (
            circular_distance(streams[i], target_azimuth),
            abs(streams[i]),
            streams[i],
        ),
    )


def label_stream_samples(
    block_label: int, stream_azimuths, target_azimuth: float
) -> list[tuple[int, str | None]]:
    """Per-stream (label, negative kind) given the block label.

    In a negative block every stream is a target-absent negative (npp).
    In a positive block the stream closest to the target azimuth is the
    positive and the rest are target-present negatives (pp).
    """
    streams = list(stream_azimuths)
    if not streams:
        raise ValueError("no streams to label")
    if block_label == -1:
        return [(-1, "npp") for _ in streams]
    if block_label != 1:
        raise ValueError("stream labels exist only for +1/-1 blocks")
    ranked = closest_stream_index(streams, target_azimuth)
    return [(1, None) if i == ranked else (-1, "pp") for i in range(len(streams))]


@dataclass
class SampleSet:
    """Columnar set of labeled feature samples with provenance.

    ``stream_azimuths`` is NaN and ``negative_kinds`` empty for
    fullstream samples; ``negative_kinds`` is "pp"/"npp" on segregated
    negatives and empty on positives.
    """

    features: np.ndarray
    labels: np.ndarray
    stream_azimuths: np.ndarray
    negative_kinds: np.ndarray
    scene_ids: np.ndarray
    block_indices: np.ndarray
    sound_ids: np.ndarray
    source_counts: np.ndarray
    kind: str  # "segregated" | "fullstream"
    layout: FeatureLayout

    def __post_init__(self):
        n = self.features.shape[0]
        for arr in (
            self.labels,
            self.stream_azimuths,
            self.negative_kinds,
            self.scene_ids,
            self.block_indices,
            self.sound_ids,
            self.source_counts,
        ):
            if len(arr) != n:
                raise ValueError("sample columns disagree on length")
        if self.features.shape[1] != self.layout.dimension:
            raise ValueError("feature matrix does not match the layout")
        if self.kind not in ("segregated", "fullstream"):
            raise ValueError("kind must be 'segregated' or 'fullstream'")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        return SampleSet(
            features=self.features[idx],
            labels=self.labels[idx],
            stream_azimuths=self.stream_azimuths[idx],
            negative_kinds=self.negative_kinds[idx],
            scene_ids=self.scene_ids[idx],
            block_indices=self.block_indices[idx],
            sound_ids=self.sound_ids[idx],
            source_counts=self.source_counts[idx],
            kind=self.kind,
            layout=self.layout,
        )

    def save(self, path: str | Path) -> None:
        header = json.dumps({"kind": self.kind, "layout": list(self.layout.names)})
        np.savez_compressed(
            path,
            header=np.array(header),
            features=self.features,
            labels=self.labels,
            stream_azimuths=self.stream_azimuths,
            negative_kinds=self.negative_kinds,
            scene_ids=self.scene_ids,
            block_indices=self.block_indices,
            sound_ids=self.sound_ids,
            source_counts=self.source_counts,
        )

    @staticmethod
    def load(path: str | Path) -> "SampleSet":
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            return SampleSet(
                features=data["features"],
                labels=data["labels"],
                stream_azimuths=data["stream_azimuths"],
                negative_kinds=data["negative_kinds"],
                scene_ids=data["scene_ids"],
                block_indices=data["block_indices"],
                sound_ids=data["sound_ids"],
                source_counts=data["source_counts"],
                kind=header["kind"],
                layout=FeatureLayout(names=tuple(header["layout"])),
            )


def build_sample_set(samples: list, kind: str, layout: FeatureLayout | None = None) -> SampleSet:
    """Stack LabeledSample-like records into a columnar SampleSet.

    Each record needs attributes features, label, stream_azimuth,
    negative_kind, scene_id, block_index, sound_id, source_count.
    """
    layout = layout or feature_layout()
    if not samples:
        return SampleSet(
            features=np.zeros((0, layout.dimension)),
            labels=np.zeros(0, dtype=np.int8),
            stream_azimuths=np.zeros(0),
            negative_kinds=np.array([], dtype="U3"),
            scene_ids=np.array([], dtype="U32"),
            block_indices=np.zeros(0, dtype=np.int32),
            sound_ids=np.array([], dtype="U64"),
            source_counts=np.zeros(0, dtype=np.int8),
            kind=kind,
            layout=layout,
        )
    return SampleSet(
        features=np.stack([s.features for s in samples]),
        labels=np.array([s.label for s in samples], dtype=np.int8),
        stream_azimuths=np.array(
            [np.nan if s.stream_azimuth is None else s.stream_azimuth for s in samples]
        ),
        negative_kinds=np.array([s.negative_kind or "" for s in samples], dtype="U3"),
        scene_ids=np.array([s.scene_id for s in samples], dtype="U32"),
        block_indices=np.array([s.block_index for s in samples], dtype=np.int32),
        sound_ids=np.array([s.sound_id for s in samples], dtype="U64"),
        source_counts=np.array([s.source_count for s in samples], dtype=np.int8),
        kind=kind,
        layout=layout,
    )


@dataclass
class LabeledSample:
    """One feature vector with its label and provenance."""

    features: np.ndarray
    label: int
    stream_azimuth: float | None
    negative_kind: str | None
    scene_id: str
    block_index: int
    sound_id: str
    source_count: int

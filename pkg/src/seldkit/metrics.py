"""Detection and localization metrics over stream and block predictions.

Four metric families cover the evaluation:

* stream-wise: sensitivity and the two specificities (target-present
  negatives ``pp``, target-absent negatives ``npp``) combined into the
  balanced accuracy BAC_sw = 0.5 SENS + 0.5 SPEC_sw, where SPEC_sw
  averages the defined specificities;
* time-wise: a positive prediction in any stream of a block makes the
  block positive, then detection rate / specificity / balanced accuracy
  are computed on blocks;
* fullstream: the same block-level rates for single-stream detectors;
* localized: conditioned on the target being present and detected,
  whether exactly the closest stream fired (best-assignment-possible
  rate), how many extra streams fired (excess positives), the mean
  circular azimuth error of firing streams, and a placement likelihood
  per 10-degree distance bin.

Metrics with an empty denominator are reported as None and excluded
from aggregation instead of being zero-filled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seldkit.features import closest_stream_index
from seldkit.scene.head import circular_distance

PLACEMENT_BIN_DEG = 10.0
N_PLACEMENT_BINS = 18


def _rate(num: float, den: float) -> float | None:
    return num / den if den > 0 else None


def _mean_defined(values) -> float | None:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    return float(np.mean(defined))


@dataclass
class StreamConfusion:
    """Weighted stream-sample confusion with split negative kinds."""

    tp: float = 0.0
    fn: float = 0.0
    tn_pp: float = 0.0
    fp_pp: float = 0.0
    tn_npp: float = 0.0
    fp_npp: float = 0.0

    def __add__(self, other: "StreamConfusion") -> "StreamConfusion":
        return StreamConfusion(
            tp=self.tp + other.tp,
            fn=self.fn + other.fn,
            tn_pp=self.tn_pp + other.tn_pp,
            fp_pp=self.fp_pp + other.fp_pp,
            tn_npp=self.tn_npp + other.tn_npp,
            fp_npp=self.fp_npp + other.fp_npp,
        )

    @staticmethod
    def from_samples(labels, kinds, predictions, weights=None) -> "StreamConfusion":
        """Accumulate (optionally weighted) stream-sample outcomes."""
        labels = np.asarray(labels)
        kinds = np.asarray(kinds)
        predictions = np.asarray(predictions)
        w = np.ones(len(labels)) if weights is None else np.asarray(weights, dtype=float)
        conf = StreamConfusion()
        pos = labels == 1
        conf.tp = float(w[pos & (predictions == 1)].sum())
        conf.fn = float(w[pos & (predictions == -1)].sum())
        for kind, tn_attr, fp_attr in (("pp", "tn_pp", "fp_pp"), ("npp", "tn_npp", "fp_npp")):
            sel = (labels == -1) & (kinds == kind)
            setattr(conf, tn_attr, float(w[sel & (predictions == -1)].sum()))
            setattr(conf, fp_attr, float(w[sel & (predictions == 1)].sum()))
        return conf


@dataclass
class StreamwiseMetrics:
    sens: float | None
    spec_pp: float | None
    spec_npp: float | None
    spec_sw: float | None
    bac_sw: float | None


def streamwise_metrics(conf: StreamConfusion) -> StreamwiseMetrics:
    """Sensitivity, split specificities, and stream-wise balanced accuracy."""
    sens = _rate(conf.tp, conf.tp + conf.fn)
    spec_pp = _rate(conf.tn_pp, conf.tn_pp + conf.fp_pp)
    spec_npp = _rate(conf.tn_npp, conf.tn_npp + conf.fp_npp)
    spec_sw = _mean_defined([spec_pp, spec_npp])
    bac_sw = None if sens is None or spec_sw is None else 0.5 * sens + 0.5 * spec_sw
    return StreamwiseMetrics(sens, spec_pp, spec_npp, spec_sw, bac_sw)


@dataclass(frozen=True)
class BlockOutcome:
    """One evaluated block: truth, stream geometry, per-stream firing."""

    truth: int  # +1 | -1
    stream_azimuths: tuple[float, ...]
    fired: tuple[bool, ...]
    target_azimuth: float | None = None

    def __post_init__(self):
        if len(self.stream_azimuths) != len(self.fired):
            raise ValueError("stream azimuths and firings disagree on length")

    @property
    def detected(self) -> bool:
        return any(self.fired)


@dataclass
class TimewiseMetrics:
    dr_tw: float | None
    spec_tw: float | None
    bac_tw: float | None


def timewise_aggregate(outcomes) -> TimewiseMetrics:
    """Block-level rates after OR-aggregating stream predictions."""
    pos_total = pos_hit = neg_total = neg_clean = 0
    for out in outcomes:
        if out.truth == 1:
            pos_total += 1
            pos_hit += int(out.detected)
        else:
            neg_total += 1
            neg_clean += int(not out.detected)
    dr = _rate(pos_hit, pos_total)
    spec = _rate(neg_clean, neg_total)
    bac = None if dr is None or spec is None else 0.5 * (dr + spec)
    return TimewiseMetrics(dr, spec, bac)


@dataclass
class FullstreamMetrics:
    dr: float | None
    spec: float | None
    bac: float | None


def fullstream_metrics(predictions, truth) -> FullstreamMetrics:
    """Detection rate and specificity of block-level predictions."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    pos = truth == 1
    neg = truth == -1
    dr = _rate(float((predictions[pos] == 1).sum()), float(pos.sum()))
    spec = _rate(float((predictions[neg] == -1).sum()), float(neg.sum()))
    bac = None if dr is None or spec is None else 0.5 * (dr + spec)
    return FullstreamMetrics(dr, spec, bac)


@dataclass
class LocalizedStats:
    """Localization quality on blocks with a present, detected target.

    ``placement`` holds, per 10-degree circular-distance bin, the
    fraction of candidate streams at that distance that fired (NaN for
    bins without streams); the ``placement_fired``/``placement_total``
    counts behind it allow pooling across scenes.  ``n_blocks`` counts
    the conditioned blocks.
    """

    bapr: float | None
    nep: float | None
    azm_err: float | None
    placement: np.ndarray = field(default_factory=lambda: np.full(N_PLACEMENT_BINS, np.nan))
    placement_fired: np.ndarray = field(default_factory=lambda: np.zeros(N_PLACEMENT_BINS))
    placement_total: np.ndarray = field(default_factory=lambda: np.zeros(N_PLACEMENT_BINS))
    n_blocks: int = 0


def _placement_bin(distance_deg: float) -> int:
    return min(int(distance_deg // PLACEMENT_BIN_DEG), N_PLACEMENT_BINS - 1)


def localized_stats(outcomes) -> LocalizedStats:
    """Best-assignment rate, excess positives, azimuth error, placement.

    Only blocks whose target is present (truth +1) and detected (at
    least one stream fired) contribute.  The best-assignment-possible
    rate requires that exactly the stream closest to the target fired;
    excess positives count the other firing streams; the azimuth error
    pools the circular distance of every firing stream to the target.
    """
    n_blocks = 0
    best = 0
    excess_total = 0
    distances: list[float] = []
    stream_count = np.zeros(N_PLACEMENT_BINS)
    fired_count = np.zeros(N_PLACEMENT_BINS)
    for out in outcomes:
        if out.truth != 1 or not out.detected:
            continue
        if out.target_azimuth is None:
            raise ValueError("a positive block needs a target azimuth")
        n_blocks += 1
        closest = closest_stream_index(out.stream_azimuths, out.target_azimuth)
        fired_idx = [i for i, f in enumerate(out.fired) if f]
        best += int(fired_idx == [closest])
        excess_total += sum(1 for i in fired_idx if i != closest)
        for i, az in enumerate(out.stream_azimuths):
            d = circular_distance(az, out.target_azimuth)
            b = _placement_bin(d)
            stream_count[b] += 1
            if out.fired[i]:
                fired_count[b] += 1
                distances.append(d)
    if n_blocks == 0:
        return LocalizedStats(bapr=None, nep=None, azm_err=None, n_blocks=0)
    placement = np.where(stream_count > 0, fired_count / np.maximum(stream_count, 1), np.nan)
    return LocalizedStats(
        bapr=best / n_blocks,
        nep=excess_total / n_blocks,
        azm_err=float(np.mean(distances)),
        placement=placement,
        placement_fired=fired_count,
        placement_total=stream_count,
        n_blocks=n_blocks,
    )


def placement_bin_edges() -> np.ndarray:
    """Edges of the placement-likelihood bins, 0..180 degrees."""
    return np.arange(0.0, 180.0 + PLACEMENT_BIN_DEG, PLACEMENT_BIN_DEG)


def write_csv(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> None:
    """Write dict rows to CSV; None becomes an empty cell."""
    if not rows:
        raise ValueError("no rows to write")
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="raise")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})

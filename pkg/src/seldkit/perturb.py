"""Controlled corruption of stream azimuths and stream counts.

The robustness experiments feed the segregation stage deliberately
wrong information while leaving the rendered audio and the ground
truth untouched: per-block Gaussian jitter on each stream's azimuth
(a very large sigma degenerating to a uniform draw), and a random
integer error on the number of streams, removing streams uniformly
at random or appending streams at uniform azimuths, never going
below one stream.

Draws are counter-based: each (scene, block) pair gets its own
generator derived from the spec seed, so blocks can be perturbed in
any order or in parallel with identical results.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from seldkit.scene.head import wrap_azimuth

_PERTURB_SEED_TAG = 0x9E27


@dataclass(frozen=True)
class PerturbationSpec:
    """How to corrupt segregation inputs for one test condition.

    ``count_error_range`` draws a fresh signed delta per block;
    ``count_delta`` instead applies the same fixed delta to every
    block (for isolating a single count-error level).  The two are
    mutually exclusive.
    """

    azimuth_sigma_deg: float = 0.0
    count_error_range: int = 0
    count_delta: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.azimuth_sigma_deg < 0:
            raise ValueError("azimuth sigma must be nonnegative")
        if self.count_error_range < 0:
            raise ValueError("count error range must be nonnegative")
        if self.count_delta is not None and self.count_error_range != 0:
            raise ValueError("fixed count delta and a count error range are exclusive")

    @property
    def is_identity(self) -> bool:
        return (
            self.azimuth_sigma_deg == 0
            and self.count_error_range == 0
            and (self.count_delta is None or self.count_delta == 0)
        )

    def label(self) -> str:
        if self.count_delta is not None:
            return f"sigma{self.azimuth_sigma_deg:g}_delta{self.count_delta:+d}"
        return f"sigma{self.azimuth_sigma_deg:g}_count{self.count_error_range:d}"

    def to_dict(self) -> dict:
        return {
            "azimuth_sigma_deg": self.azimuth_sigma_deg,
            "count_error_range": self.count_error_range,
            "count_delta": self.count_delta,
            "rng_seed": self.rng_seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "PerturbationSpec":
        return PerturbationSpec(
            azimuth_sigma_deg=float(d.get("azimuth_sigma_deg", 0.0)),
            count_error_range=int(d.get("count_error_range", 0)),
            count_delta=d.get("count_delta"),
            rng_seed=int(d.get("rng_seed", 0)),
        )

    def block_rng(self, scene_id: str, block_index: int) -> np.random.Generator:
        """Generator for one block, independent of evaluation order."""
        return np.random.default_rng(
            [_PERTURB_SEED_TAG, self.rng_seed, zlib.crc32(scene_id.encode()), block_index]
        )

    def apply(self, stream_azimuths, scene_id: str, block_index: int) -> list[float]:
        """Perturb one block's stream azimuths per this spec."""
        rng = self.block_rng(scene_id, block_index)
        azimuths = perturb_azimuths(stream_azimuths, self.azimuth_sigma_deg, rng)
        if self.count_delta is not None:
            return apply_count_delta(azimuths, self.count_delta, rng)
        return perturb_source_count(azimuths, self.count_error_range, rng)


def perturb_azimuths(stream_azimuths, sigma_deg: float, rng: np.random.Generator) -> list[float]:
    """Add independent Gaussian jitter to each stream azimuth.

    Each stream in the block receives its own draw; results wrap to
    (-180, 180].  A sigma of 0 keeps the inputs bitwise intact.
    """
    if sigma_deg < 0:
        raise ValueError("sigma must be nonnegative")
    azimuths = [float(a) for a in stream_azimuths]
    if sigma_deg == 0:
        return azimuths
    deltas = rng.normal(0.0, sigma_deg, size=len(azimuths))
    return [wrap_azimuth(a + d) for a, d in zip(azimuths, deltas)]


def apply_count_delta(stream_azimuths, delta: int, rng: np.random.Generator) -> list[float]:
    """Shrink or grow a block's stream list by a fixed signed delta.

    Removals pick victims uniformly without replacement; additions
    append azimuths drawn uniformly from [0, 360), wrapped to the
    pipeline convention.  The block always keeps at least one stream.
    """
    azimuths = [float(a) for a in stream_azimuths]
    if delta < 0:
        n_keep = max(1, len(azimuths) + delta)
        n_drop = len(azimuths) - n_keep
        if n_drop > 0:
            drop = set(rng.choice(len(azimuths), size=n_drop, replace=False).tolist())
            azimuths = [a for i, a in enumerate(azimuths) if i not in drop]
    elif delta > 0:
        azimuths += [wrap_azimuth(float(a)) for a in rng.uniform(0.0, 360.0, size=delta)]
    return azimuths


def perturb_source_count(stream_azimuths, range_k: int, rng: np.random.Generator) -> list[float]:
    """Randomly add or remove streams from a block.

    A signed integer delta is drawn uniformly from [-k, +k] and applied
    as in :func:`apply_count_delta`.
    """
    if range_k < 0:
        raise ValueError("count error range must be nonnegative")
    azimuths = [float(a) for a in stream_azimuths]
    if range_k == 0:
        return azimuths
    delta = int(rng.integers(-range_k, range_k + 1))
    return apply_count_delta(azimuths, delta, rng)

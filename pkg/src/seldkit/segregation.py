"""Azimuth-to-cue observation model and probabilistic stream softmasks.

The observation model maps a source azimuth to the expected interaural
cues of every gammatone channel through a sine expansion

    g_l(phi) = [beta_l0^tau + sum_n beta_ln^tau sin(n phi),
                beta_l0^delta + sum_n beta_ln^delta sin(n phi)]

with a full 2x2 residual covariance R_l per channel.  The sine-only
basis is deliberately blind to front-back differences, so azimuths are
folded onto the frontal hemisphere before evaluation and mirrored
streams receive identical predictions.

Coefficients are estimated by per-channel least squares on cues
extracted from white noise rendered at a grid of frontal azimuths; the
expansion order is chosen by the Bayesian information criterion summed
over channels.  Softmasks then score every time-frequency bin under
each candidate stream's bivariate Gaussian and normalize across
streams, computed in the log domain for stability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from seldkit.afe import BinauralCues, binaural_cues, cochleagram
from seldkit.scene.head import HeadModel, fold_frontal, render_source

DEFAULT_ORDER_CANDIDATES = (1, 2, 3, 4, 5, 6, 7, 8)
_COV_RIDGE = 1e-10  # keeps near-singular channel covariances invertible
_FIT_NOISE_SEED_TAG = 0x0B5E


def default_azimuth_grid(step_deg: float = 5.0) -> np.ndarray:
    """Frontal training grid: ``step_deg`` spacing over (-90, +90]."""
    return np.arange(-90.0 + step_deg, 90.0 + step_deg / 2.0, step_deg)


@dataclass
class ObservationModel:
    """Fitted azimuth-to-cue regression with per-channel covariance.

    ``beta_itd`` and ``beta_ild`` have shape (channels, order + 1); the
    column for n = 0 is the intercept and column n weights sin(n phi).
    ``cov`` has shape (channels, 2, 2), ITD first.
    """

    order: int
    beta_itd: np.ndarray
    beta_ild: np.ndarray
    cov: np.ndarray
    azimuth_grid: np.ndarray
    n_obs: int

    def __post_init__(self):
        n_ch = self.beta_itd.shape[0]
        if self.beta_itd.shape != (n_ch, self.order + 1):
            raise ValueError("coefficient shape does not match order")
        if self.beta_ild.shape != self.beta_itd.shape:
            raise ValueError("ITD and ILD coefficient shapes differ")
        if self.cov.shape != (n_ch, 2, 2):
            raise ValueError("covariance must be (channels, 2, 2)")

    @property
    def n_channels(self) -> int:
        return self.beta_itd.shape[0]

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "beta_itd": self.beta_itd.tolist(),
            "beta_ild": self.beta_ild.tolist(),
            "cov": self.cov.tolist(),
            "azimuth_grid": np.asarray(self.azimuth_grid, dtype=float).tolist(),
            "n_obs": self.n_obs,
        }

    @staticmethod
    def from_dict(d: dict) -> "ObservationModel":
        return ObservationModel(
            order=int(d["order"]),
            beta_itd=np.asarray(d["beta_itd"], dtype=float),
            beta_ild=np.asarray(d["beta_ild"], dtype=float),
            cov=np.asarray(d["cov"], dtype=float),
            azimuth_grid=np.asarray(d["azimuth_grid"], dtype=float),
            n_obs=int(d["n_obs"]),
        )


def save_observation_model(model: ObservationModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True))


def load_observation_model(path: str | Path) -> ObservationModel:
    return ObservationModel.from_dict(json.loads(Path(path).read_text()))


def _sine_basis(az_deg: np.ndarray, order: int) -> np.ndarray:
    """Design rows [1, sin(phi), ..., sin(order * phi)], phi folded frontal."""
    phi = np.radians([fold_frontal(a) for a in np.atleast_1d(np.asarray(az_deg, dtype=float))])
    cols = [np.ones_like(phi)]
    for n in range(1, order + 1):
        cols.append(np.sin(n * phi))
    return np.column_stack(cols)


def collect_model_cues(
    head: HeadModel,
    azimuth_grid: np.ndarray | None = None,
    seed: int = 0,
    duration_s: float = 1.0,
    fs: int = 44100,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extract training cues from white noise rendered at grid azimuths.

    Returns (azimuths (A,), itd (A, F, C), ild (A, F, C)).  Collecting
    once and fitting several orders from the same cues keeps order
    selection consistent and cheap.
    """
    grid = default_azimuth_grid() if azimuth_grid is None else np.asarray(azimuth_grid, dtype=float)
    rng = np.random.default_rng([_FIT_NOISE_SEED_TAG, seed])
    itd_all = []
    ild_all = []
    for az in grid:
        noise = rng.standard_normal(int(round(duration_s * fs)))
        rendered = render_source(noise, float(az), head)
        cues = binaural_cues(cochleagram(rendered.left, fs), cochleagram(rendered.right, fs))
        itd_all.append(cues.itd)
        ild_all.append(cues.ild)
    return grid, np.stack(itd_all), np.stack(ild_all)


def fit_from_cues(
    azimuths: np.ndarray, itd: np.ndarray, ild: np.ndarray, order: int
) -> ObservationModel:
    """Least-squares fit of the sine expansion to collected cues.

    ``itd``/``ild`` have shape (azimuths, frames, channels); every frame
    is one observation.  The residual covariance is the maximum
    likelihood estimate (normalized by the observation count).
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    n_az, n_frames, n_ch = itd.shape
    design_az = _sine_basis(azimuths, order)
    design = np.repeat(design_az, n_frames, axis=0)
    rank = np.linalg.matrix_rank(design_az)
    if rank < order + 1:
        raise ValueError(f"azimuth grid too sparse for order {order} (design rank {rank})")

    targets = np.stack(
        [itd.reshape(n_az * n_frames, n_ch), ild.reshape(n_az * n_frames, n_ch)], axis=2
    )  # (obs, channels, 2)
    n = n_az * n_frames
    flat = targets.reshape(n, n_ch * 2)
    coef, _, _, _ = np.linalg.lstsq(design, flat, rcond=None)
    coef = coef.reshape(order + 1, n_ch, 2)
    resid = flat - design @ coef.reshape(order + 1, n_ch * 2)
    resid = resid.reshape(n, n_ch, 2)
    cov = np.einsum("nci,ncj->cij", resid, resid) / n

    return ObservationModel(
        order=order,
        beta_itd=coef[:, :, 0].T.copy(),
        beta_ild=coef[:, :, 1].T.copy(),
        cov=cov,
        azimuth_grid=np.asarray(azimuths, dtype=float),
        n_obs=n,
    )


def fit_observation_model(
    head: HeadModel,
    azimuth_grid: np.ndarray | None = None,
    order: int = 3,
    seed: int = 0,
    duration_s: float = 1.0,
) -> ObservationModel:
    """Render white-noise training stimuli and fit the cue regression."""
    grid, itd, ild = collect_model_cues(head, azimuth_grid, seed, duration_s)
    return fit_from_cues(grid, itd, ild, order)


def bic_from_cues(azimuths: np.ndarray, itd: np.ndarray, ild: np.ndarray, order: int) -> float:
    """Gaussian BIC summed over channels for one candidate order."""
    model = fit_from_cues(azimuths, itd, ild, order)
    n = model.n_obs
    k = 2 * (order + 1)
    sign, logdet = np.linalg.slogdet(model.cov)
    if np.any(sign <= 0):
        return np.inf
    return float(np.sum(n * logdet + k * np.log(n)))


def select_order_from_cues(
    azimuths: np.ndarray,
    itd: np.ndarray,
    ild: np.ndarray,
    candidates=DEFAULT_ORDER_CANDIDATES,
) -> int:
    """Order with the lowest summed BIC; first candidate wins ties."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate order list is empty")
    scores = [bic_from_cues(azimuths, itd, ild, order) for order in candidates]
    return candidates[int(np.argmin(scores))]


def select_model_order(
    head: HeadModel,
    candidates=DEFAULT_ORDER_CANDIDATES,
    azimuth_grid: np.ndarray | None = None,
    seed: int = 0,
    duration_s: float = 1.0,
) -> int:
    """Collect training cues once and pick the BIC-minimizing order."""
    grid, itd, ild = collect_model_cues(head, azimuth_grid, seed, duration_s)
    return select_order_from_cues(grid, itd, ild, candidates)


def predict_cues(model: ObservationModel, azimuth_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Expected per-channel (itd, ild) at an azimuth.

    The azimuth is folded onto the frontal hemisphere first, so an
    azimuth and its ear-axis mirror (180 - azimuth) produce bitwise
    identical predictions.
    """
    row = _sine_basis(np.array([azimuth_deg]), model.order)[0]
    return model.beta_itd @ row, model.beta_ild @ row


def compute_softmasks(
    model: ObservationModel, cues: BinauralCues, stream_azimuths
) -> list[np.ndarray]:
    """Per-stream softmask over the (frame, channel) cue grid.

    Each bin's observed (itd, ild) is scored under every stream's
    bivariate Gaussian (stream mean from :func:`predict_cues`, channel
    covariance from the model) and the scores are normalized across
    streams.  Weights are in [0, 1] and sum to 1 at every bin.
    """
    streams = list(stream_azimuths)
    if not streams:
        raise ValueError("need at least one stream azimuth")
    n_frames, n_ch = cues.itd.shape
    if n_ch != model.n_channels:
        raise ValueError("cue channel count does not match the model")
    if len(streams) == 1:
        return [np.ones((n_frames, n_ch))]

    cov = model.cov + _COV_RIDGE * np.eye(2)
    inv = np.linalg.inv(cov)  # (C, 2, 2)
    a, b, c = inv[:, 0, 0], inv[:, 0, 1], inv[:, 1, 1]

    loglik = np.empty((len(streams), n_frames, n_ch))
    with np.errstate(invalid="ignore"):
        for i, az in enumerate(streams):
            mu_itd, mu_ild = predict_cues(model, float(az))
            d1 = cues.itd - mu_itd
            d2 = cues.ild - mu_ild
            loglik[i] = -0.5 * (a * d1**2 + 2.0 * b * d1 * d2 + c * d2**2)

    peak = loglik.max(axis=0)
    degenerate = ~np.isfinite(peak)
    with np.errstate(invalid="ignore"):
        weights = np.exp(loglik - peak)
    weights[:, degenerate] = 1.0
    weights /= weights.sum(axis=0)
    return [weights[i] for i in range(len(streams))]

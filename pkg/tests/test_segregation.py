"""Observation model fitting, order selection, and softmasks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seldkit.afe import BinauralCues
from seldkit.scene.head import HeadModel, woodworth_itd
from seldkit.segregation import (
    ObservationModel,
    bic_from_cues,
    collect_model_cues,
    compute_softmasks,
    default_azimuth_grid,
    fit_from_cues,
    load_observation_model,
    predict_cues,
    save_observation_model,
    select_order_from_cues,
)


def _synthetic_cues(order_coeffs_itd, order_coeffs_ild, phis, frames=12, channels=6, noise=0.0, seed=0):
    """Cues generated from a sine expansion shared by all channels."""
    rng = np.random.default_rng(seed)
    rad = np.radians(phis)
    itd_curve = sum(
        c * (np.sin(n * rad) if n else np.ones_like(rad))
        for n, c in enumerate(order_coeffs_itd)
    )
    ild_curve = sum(
        c * (np.sin(n * rad) if n else np.ones_like(rad))
        for n, c in enumerate(order_coeffs_ild)
    )
    shape = (len(phis), frames, channels)
    itd = itd_curve[:, None, None] + noise * 1e-4 * rng.standard_normal(shape)
    ild = ild_curve[:, None, None] + noise * 10.0 * rng.standard_normal(shape)
    return itd, ild


def _cue_frame(itd, ild):
    itd = np.asarray(itd, dtype=float)
    return BinauralCues(itd=itd, ild=np.asarray(ild, dtype=float), cfs=np.linspace(100, 8000, itd.shape[1]))


@pytest.fixture(scope="module")
def sine_model():
    phis = default_azimuth_grid(5.0)
    itd, ild = _synthetic_cues([2e-5, 6e-4, 1e-4], [0.5, 8.0, -2.0], phis, noise=1e-4, seed=3)
    return fit_from_cues(phis, itd, ild, 3)


def test_prediction_at_zero_is_the_intercept(sine_model):
    itd, ild = predict_cues(sine_model, 0.0)
    assert np.array_equal(itd, sine_model.beta_itd[:, 0])
    assert np.array_equal(ild, sine_model.beta_ild[:, 0])


def test_noiseless_fit_interpolates_exactly():
    phis = default_azimuth_grid(10.0)
    itd, ild = _synthetic_cues([1e-5, 5e-4, -2e-4], [0.0, 6.0, 1.5], phis, noise=0.0)
    model = fit_from_cues(phis, itd, ild, 2)
    for i, az in enumerate(phis):
        p_itd, p_ild = predict_cues(model, az)
        assert np.allclose(p_itd, itd[i, 0], atol=1e-9)
        assert np.allclose(p_ild, ild[i, 0], atol=1e-9)


def test_residual_covariance_is_the_mle():
    phis = default_azimuth_grid(15.0)
    itd, ild = _synthetic_cues([0.0, 4e-4], [1.0, 7.0], phis, noise=0.5, seed=9)
    model = fit_from_cues(phis, itd, ild, 1)
    # Recompute per channel with an explicit loop over observations.
    for ch in range(itd.shape[2]):
        resid = []
        for i, az in enumerate(phis):
            p_itd, p_ild = predict_cues(model, az)
            for f in range(itd.shape[1]):
                resid.append([itd[i, f, ch] - p_itd[ch], ild[i, f, ch] - p_ild[ch]])
        resid = np.array(resid)
        oracle = resid.T @ resid / resid.shape[0]
        assert np.allclose(model.cov[ch], oracle, atol=1e-9)
    assert model.n_obs == len(phis) * itd.shape[1]


def test_order_selection_recovers_the_generator():
    phis = default_azimuth_grid(5.0)
    itd, ild = _synthetic_cues([2e-5, 1e-4, 3e-5], [2.0, 4.0, -1.0], phis, frames=20, channels=8, noise=1e-3, seed=7)
    assert select_order_from_cues(phis, itd, ild, [1, 2, 3, 4, 5]) == 2


def test_order_selection_trivia():
    phis = default_azimuth_grid(15.0)
    itd, ild = _synthetic_cues([0.0, 4e-4], [0.0, 5.0], phis, noise=0.2, seed=1)
    assert select_order_from_cues(phis, itd, ild, [4]) == 4
    best = select_order_from_cues(phis, itd, ild, [1, 2, 3])
    best_score = bic_from_cues(phis, itd, ild, best)
    for cand in (1, 2, 3):
        assert best_score <= bic_from_cues(phis, itd, ild, cand)
    with pytest.raises(ValueError):
        select_order_from_cues(phis, itd, ild, [])


def test_sparse_grid_rejects_high_order():
    phis = np.array([-30.0, 40.0])
    itd, ild = _synthetic_cues([0.0, 4e-4], [0.0, 5.0], phis, noise=0.1)
    with pytest.raises(ValueError):
        fit_from_cues(phis, itd, ild, 3)


def test_rear_azimuths_fold_to_frontal_mirror(sine_model):
    for az in (30.0, 45.0, 80.0):
        front = predict_cues(sine_model, az)
        rear = predict_cues(sine_model, 180.0 - az)
        assert np.array_equal(front[0], rear[0])
        assert np.array_equal(front[1], rear[1])


def test_single_stream_mask_is_all_ones(sine_model):
    cues = _cue_frame(np.zeros((5, sine_model.n_channels)), np.zeros((5, sine_model.n_channels)))
    (mask,) = compute_softmasks(sine_model, cues, [12.0])
    assert np.array_equal(mask, np.ones((5, sine_model.n_channels)))


def test_coincident_streams_split_evenly(sine_model):
    rng = np.random.default_rng(2)
    cues = _cue_frame(
        rng.normal(0, 2e-4, (9, sine_model.n_channels)), rng.normal(0, 3, (9, sine_model.n_channels))
    )
    masks = compute_softmasks(sine_model, cues, [25.0, 25.0])
    assert np.array_equal(masks[0], np.full_like(masks[0], 0.5))
    assert np.array_equal(masks[1], np.full_like(masks[1], 0.5))


def test_mirrored_streams_get_equal_masks(sine_model):
    rng = np.random.default_rng(4)
    cues = _cue_frame(
        rng.normal(0, 2e-4, (7, sine_model.n_channels)), rng.normal(0, 3, (7, sine_model.n_channels))
    )
    masks = compute_softmasks(sine_model, cues, [45.0, 135.0, -10.0])
    assert np.array_equal(masks[0], masks[1])


def test_permuting_streams_permutes_masks(sine_model):
    rng = np.random.default_rng(5)
    cues = _cue_frame(
        rng.normal(0, 2e-4, (6, sine_model.n_channels)), rng.normal(0, 3, (6, sine_model.n_channels))
    )
    azimuths = [-60.0, 10.0, 70.0]
    masks = compute_softmasks(sine_model, cues, azimuths)
    shuffled = compute_softmasks(sine_model, cues, azimuths[::-1])
    for a, b in zip(masks, shuffled[::-1]):
        assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n_streams=st.integers(2, 4),
    frames=st.integers(1, 12),
)
def test_masks_normalize_and_stay_in_range(sine_model, seed, n_streams, frames):
    rng = np.random.default_rng(seed)
    cues = _cue_frame(
        rng.normal(0, 3e-4, (frames, sine_model.n_channels)),
        rng.normal(0, 5, (frames, sine_model.n_channels)),
    )
    azimuths = rng.uniform(-180, 180, n_streams)
    masks = np.stack(compute_softmasks(sine_model, cues, azimuths))
    assert np.all(masks >= 0.0)
    assert np.all(masks <= 1.0)
    assert np.abs(masks.sum(axis=0) - 1.0).max() < 1e-9


def test_degenerate_bins_fall_back_to_uniform(sine_model):
    n_ch = sine_model.n_channels
    itd = np.zeros((3, n_ch))
    itd[1, :] = np.inf  # destroys every stream's likelihood in frame 1
    masks = compute_softmasks(sine_model, _cue_frame(itd, np.zeros((3, n_ch))), [0.0, 40.0, -40.0])
    for m in masks:
        assert np.allclose(m[1], 1.0 / 3.0, atol=1e-12)
    with pytest.raises(ValueError):
        compute_softmasks(sine_model, _cue_frame(itd, np.zeros((3, n_ch))), [])


def test_model_serialization_round_trip(tmp_path, sine_model):
    path = tmp_path / "model.json"
    save_observation_model(sine_model, path)
    loaded = load_observation_model(path)
    assert loaded.order == sine_model.order
    assert np.array_equal(loaded.beta_itd, sine_model.beta_itd)
    assert np.array_equal(loaded.beta_ild, sine_model.beta_ild)
    assert np.array_equal(loaded.cov, sine_model.cov)
    assert np.array_equal(loaded.azimuth_grid, sine_model.azimuth_grid)
    assert loaded.n_obs == sine_model.n_obs


def test_rendered_fit_tracks_woodworth():
    # Coarse, short version of the full-grid fidelity check: white noise
    # rendered every 15 degrees, order 3, per-channel ITD predictions
    # compared against the analytic interaural delay.
    head = HeadModel()
    grid, itd, ild = collect_model_cues(head, default_azimuth_grid(15.0), seed=0, duration_s=0.4)
    model = fit_from_cues(grid, itd, ild, 3)
    pred = np.array([predict_cues(model, az)[0] for az in grid])
    true = np.array([woodworth_itd(az) for az in grid])
    rms = np.sqrt(np.mean((pred - true[:, None]) ** 2))
    assert rms < 50e-6
    # ILD sign follows the source side: positive azimuth = left = louder left.
    ild_left = predict_cues(model, 60.0)[1]
    ild_right = predict_cues(model, -60.0)[1]
    assert ild_left.mean() > 1.0
    assert ild_right.mean() < -1.0

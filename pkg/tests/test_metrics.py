"""Tests for detection and localization metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seldkit.metrics import (
    BlockOutcome,
    StreamConfusion,
    fullstream_metrics,
    localized_stats,
    placement_bin_edges,
    streamwise_metrics,
    timewise_aggregate,
    write_csv,
)


def _outcome(truth, azimuths, fired, target=0.0):
    return BlockOutcome(
        truth=truth,
        stream_azimuths=tuple(float(a) for a in azimuths),
        fired=tuple(bool(f) for f in fired),
        target_azimuth=target if truth == 1 else None,
    )


class TestStreamwise:
    def test_perfect_classifier_scores_one(self):
        conf = StreamConfusion(tp=10, fn=0, tn_pp=5, fp_pp=0, tn_npp=7, fp_npp=0)
        m = streamwise_metrics(conf)
        assert m.sens == 1.0
        assert m.spec_pp == 1.0
        assert m.spec_npp == 1.0
        assert m.bac_sw == 1.0

    def test_half_specificities_give_three_quarters(self):
        conf = StreamConfusion(tp=4, fn=0, tn_pp=2, fp_pp=2, tn_npp=3, fp_npp=3)
        m = streamwise_metrics(conf)
        assert m.sens == 1.0
        assert m.spec_pp == 0.5
        assert m.spec_npp == 0.5
        assert m.spec_sw == 0.5
        assert m.bac_sw == 0.75

    def test_coin_flip_scores_half(self):
        conf = StreamConfusion(tp=5, fn=5, tn_pp=3, fp_pp=3, tn_npp=2, fp_npp=2)
        m = streamwise_metrics(conf)
        assert m.bac_sw == 0.5

    def test_missing_negative_kind_uses_the_other(self):
        conf = StreamConfusion(tp=3, fn=1, tn_pp=0, fp_pp=0, tn_npp=4, fp_npp=0)
        m = streamwise_metrics(conf)
        assert m.spec_pp is None
        assert m.spec_npp == 1.0
        assert m.spec_sw == 1.0
        assert m.bac_sw == pytest.approx(0.5 * 0.75 + 0.5 * 1.0)

    def test_no_positives_leaves_bac_undefined(self):
        conf = StreamConfusion(tn_pp=3, fp_pp=1, tn_npp=2, fp_npp=0)
        m = streamwise_metrics(conf)
        assert m.sens is None
        assert m.spec_sw is not None
        assert m.bac_sw is None

    def test_confusions_add(self):
        a = StreamConfusion(tp=1, fn=2, tn_pp=3, fp_pp=4, tn_npp=5, fp_npp=6)
        b = StreamConfusion(tp=10, fn=20, tn_pp=30, fp_pp=40, tn_npp=50, fp_npp=60)
        c = a + b
        assert (c.tp, c.fn, c.tn_pp, c.fp_pp, c.tn_npp, c.fp_npp) == (11, 22, 33, 44, 55, 66)

    def test_from_samples_counts_by_kind(self):
        labels = [1, 1, -1, -1, -1, -1]
        kinds = ["", "", "pp", "pp", "npp", "npp"]
        preds = [1, -1, 1, -1, -1, -1]
        conf = StreamConfusion.from_samples(labels, kinds, preds)
        assert conf.tp == 1 and conf.fn == 1
        assert conf.fp_pp == 1 and conf.tn_pp == 1
        assert conf.fp_npp == 0 and conf.tn_npp == 2

    def test_from_samples_applies_weights(self):
        labels = [1, -1]
        kinds = ["", "npp"]
        preds = [1, 1]
        conf = StreamConfusion.from_samples(labels, kinds, preds, weights=[2.5, 0.5])
        assert conf.tp == 2.5
        assert conf.fp_npp == 0.5


class TestTimewise:
    def test_partial_firing_on_positive_block_is_a_hit(self):
        out = _outcome(1, [-30, 0, 30], [False, True, False])
        m = timewise_aggregate([out])
        assert m.dr_tw == 1.0

    def test_any_firing_on_negative_block_is_one_false_positive(self):
        out = _outcome(-1, [-30, 30], [True, True])
        m = timewise_aggregate([out, _outcome(-1, [-30, 30], [False, False])])
        assert m.spec_tw == 0.5

    def test_counts_fixture(self):
        outs = []
        outs += [_outcome(1, [0], [True])] * 9
        outs += [_outcome(1, [0], [False])] * 1
        outs += [_outcome(-1, [0], [False])] * 2
        outs += [_outcome(-1, [0], [True])] * 1
        m = timewise_aggregate(outs)
        assert m.dr_tw == pytest.approx(0.9)
        assert m.spec_tw == pytest.approx(2 / 3)
        assert m.bac_tw == pytest.approx(0.5 * (0.9 + 2 / 3))

    def test_no_negatives_leaves_spec_undefined(self):
        m = timewise_aggregate([_outcome(1, [0], [True])])
        assert m.dr_tw == 1.0
        assert m.spec_tw is None
        assert m.bac_tw is None

    @given(
        st.lists(
            st.tuples(st.sampled_from([-1, 1]), st.lists(st.booleans(), min_size=1, max_size=4)),
            min_size=1,
            max_size=30,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_extra_firings_never_lower_detection(self, blocks):
        base = [
            _outcome(truth, list(range(0, 30 * len(fired), 30)), fired)
            for truth, fired in blocks
        ]
        lifted = [
            BlockOutcome(
                truth=o.truth,
                stream_azimuths=o.stream_azimuths,
                fired=tuple(True for _ in o.fired),
                target_azimuth=o.target_azimuth,
            )
            for o in base
        ]
        m0 = timewise_aggregate(base)
        m1 = timewise_aggregate(lifted)
        if m0.dr_tw is not None:
            assert m1.dr_tw >= m0.dr_tw
        if m0.spec_tw is not None:
            assert m1.spec_tw <= m0.spec_tw

    @given(
        st.lists(
            st.tuples(st.sampled_from([-1, 1]), st.booleans()), min_size=2, max_size=40
        ).filter(lambda bs: any(t == 1 for t, _ in bs) and any(t == -1 for t, _ in bs))
    )
    @settings(max_examples=50, deadline=None)
    def test_balanced_accuracy_threshold(self, blocks):
        outs = [_outcome(truth, [0], [fired]) for truth, fired in blocks]
        m = timewise_aggregate(outs)
        assert (m.bac_tw >= 0.5) == (m.dr_tw + m.spec_tw >= 1.0)


class TestFullstream:
    def test_counts_fixture(self):
        preds = [1] * 9 + [-1] + [-1, -1, 1]
        truth = [1] * 10 + [-1, -1, -1]
        m = fullstream_metrics(preds, truth)
        assert m.dr == pytest.approx(0.9)
        assert m.spec == pytest.approx(2 / 3)
        assert m.bac == pytest.approx(0.5 * (0.9 + 2 / 3))

    def test_single_class_leaves_bac_undefined(self):
        m = fullstream_metrics([1, 1], [1, 1])
        assert m.dr == 1.0
        assert m.spec is None
        assert m.bac is None


class TestLocalized:
    def test_ideal_detector(self):
        outs = [
            _outcome(1, [-40, 0, 40], [False, True, False]),
            _outcome(1, [-40, 0, 40], [False, True, False]),
        ]
        s = localized_stats(outs)
        assert s.bapr == 1.0
        assert s.nep == 0.0
        assert s.azm_err == 0.0
        assert s.n_blocks == 2

    def test_ideal_placement_is_an_indicator_at_zero(self):
        outs = [_outcome(1, [-40, 0, 40], [False, True, False])] * 3
        s = localized_stats(outs)
        assert s.placement[0] == 1.0
        assert s.placement[4] == 0.0
        defined = np.flatnonzero(~np.isnan(s.placement))
        assert set(defined) == {0, 4}

    def test_extra_firing_costs_bapr_and_nep(self):
        out = _outcome(1, [0, 10, 30], [True, True, False])
        s = localized_stats([out])
        assert s.bapr == 0.0
        assert s.nep == 1.0
        assert s.azm_err == pytest.approx(5.0)

    def test_three_fired_including_closest_scores_zero_bapr(self):
        out = _outcome(1, [0, 20, -20], [True, True, True])
        s = localized_stats([out])
        assert s.bapr == 0.0
        assert s.nep == 2.0

    def test_only_wrong_stream_fired(self):
        out = _outcome(1, [0, 30], [False, True])
        s = localized_stats([out])
        assert s.bapr == 0.0
        assert s.nep == 1.0
        assert s.azm_err == pytest.approx(30.0)

    def test_firing_distances_pool_across_blocks(self):
        outs = [
            _outcome(1, [10, 90], [True, False]),
            _outcome(1, [30, 90], [True, False]),
        ]
        s = localized_stats(outs)
        assert s.azm_err == pytest.approx(20.0)
        assert s.nep == 0.0
        assert s.bapr == 1.0

    def test_missed_and_negative_blocks_are_excluded(self):
        outs = [
            _outcome(1, [0], [False]),
            _outcome(-1, [0], [True]),
            _outcome(1, [0], [True]),
        ]
        s = localized_stats(outs)
        assert s.n_blocks == 1
        assert s.bapr == 1.0

    def test_no_conditioned_blocks_yields_undefined(self):
        s = localized_stats([_outcome(1, [0], [False])])
        assert s.bapr is None and s.nep is None and s.azm_err is None
        assert np.isnan(s.placement).all()

    def test_wraparound_distance_bins(self):
        # Stream at 170 vs target at -170 is 20 degrees away circularly.
        out = _outcome(1, [170.0], [True], target=-170.0)
        s = localized_stats([out])
        assert s.azm_err == pytest.approx(20.0)
        assert s.placement[2] == 1.0

    def test_positive_block_without_target_azimuth_raises(self):
        out = BlockOutcome(truth=1, stream_azimuths=(0.0,), fired=(True,), target_azimuth=None)
        with pytest.raises(ValueError):
            localized_stats([out])

    def test_mismatched_lengths_raise(self):
        with pytest.raises(ValueError):
            BlockOutcome(truth=1, stream_azimuths=(0.0, 10.0), fired=(True,))

    def test_bin_edges_cover_half_circle(self):
        edges = placement_bin_edges()
        assert edges[0] == 0.0
        assert edges[-1] == 180.0
        assert len(edges) == 19


class TestCsv:
    def test_round_trip_with_none(self, tmp_path):
        rows = [
            {"scene": "s1", "metric": "bac", "value": 0.9},
            {"scene": "s2", "metric": "bac", "value": None},
        ]
        path = tmp_path / "out.csv"
        write_csv(path, rows)
        text = path.read_text().splitlines()
        assert text[0] == "scene,metric,value"
        assert text[1] == "s1,bac,0.9"
        assert text[2] == "s2,bac,"

    def test_empty_rows_raise(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "out.csv", [])

"""End-to-end tests of the experiment orchestration layer.

A module-scoped pipeline fixture trains on a small synthetic corpus
and evaluates a few test scenes; the other tests check the cheap
pieces (config handling, pool splitting, perturbation grid) without
rendering audio.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from seldkit.experiment import (
    ExperimentConfig,
    RESULT_COLUMNS,
    build_sound_pool,
    emit_report,
    run_test,
    run_train,
    split_pool,
)
from seldkit.features import feature_layout
from seldkit.scene.sounds import SoundRef
from seldkit.segregation import load_observation_model

N_CLASSES = 3
N_GRID = 7
N_TEST_SCENES = 3


def small_config(output_dir: str) -> ExperimentConfig:
    return ExperimentConfig(
        output_dir=output_dir,
        target_classes=("tonal_alarm", "noise_burst", "chirp"),
        n_files_per_class=4,
        n_train_scenes=10,
        scene_duration_s=3.0,
        glm_order=1,
        glm_fit_duration_s=0.3,
    )


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("pipeline")
    config = small_config(str(out_dir))
    manifest = run_train(config)
    test_info = run_test(config, max_scenes=N_TEST_SCENES)
    report_info = emit_report(out_dir)
    return {
        "config": config,
        "out_dir": out_dir,
        "manifest": manifest,
        "test_info": test_info,
        "report_info": report_info,
    }


class TestConfig:
    def test_round_trip_preserves_hash(self, tmp_path):
        config = small_config(str(tmp_path))
        path = tmp_path / "config.json"
        config.save(path)
        loaded = ExperimentConfig.load(path)
        assert loaded == config
        assert loaded.config_hash() == config.config_hash()

    def test_hash_changes_with_content(self, tmp_path):
        a = small_config(str(tmp_path))
        b = ExperimentConfig.from_dict({**a.to_dict(), "split_seed": 123})
        assert a.config_hash() != b.config_hash()

    def test_unknown_field_rejected(self, tmp_path):
        d = small_config(str(tmp_path)).to_dict()
        d["not_a_field"] = 1
        with pytest.raises(ValueError, match="unknown config fields"):
            ExperimentConfig.from_dict(d)

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError, match="dataset_kind"):
            ExperimentConfig(output_dir="x", dataset_kind="bogus")
        with pytest.raises(ValueError, match="wav_dir"):
            ExperimentConfig(output_dir="x", dataset_kind="wav_dir")
        with pytest.raises(ValueError, match="split ratio"):
            ExperimentConfig(output_dir="x", split_ratio=1.0)
        with pytest.raises(ValueError, match="target class"):
            ExperimentConfig(output_dir="x", target_classes=())

    def test_perturbation_grid_layout(self, tmp_path):
        config = small_config(str(tmp_path))
        grid = config.perturbation_grid()
        assert len(grid) == N_GRID
        assert grid[0].is_identity
        labels = [g.label() for g in grid]
        assert len(set(labels)) == len(labels)
        assert "sigma0_delta-2" in labels and "sigma0_delta+2" in labels
        sigmas = {g.azimuth_sigma_deg for g in grid if g.count_delta is None}
        assert sigmas == {0.0, 5.0, 10.0, 20.0, 45.0}

    def test_grid_includes_range_point_when_configured(self, tmp_path):
        config = ExperimentConfig.from_dict(
            {**small_config(str(tmp_path)).to_dict(), "count_error_range": 2}
        )
        labels = [g.label() for g in config.perturbation_grid()]
        assert "sigma0_count2" in labels


class TestSoundPool:
    def test_synthetic_pool_shape(self, tmp_path):
        config = small_config(str(tmp_path))
        pool = build_sound_pool(config)
        assert set(pool) == {"tonal_alarm", "noise_burst", "chirp", "general"}
        for refs in pool.values():
            assert len(refs) == 4
            assert all(r.kind == "synthetic" for r in refs)

    def test_unknown_class_rejected(self, tmp_path):
        config = ExperimentConfig(output_dir=str(tmp_path), target_classes=("mystery",))
        with pytest.raises(ValueError, match="unknown synthetic target classes"):
            build_sound_pool(config)

    def test_missing_wav_dir_rejected(self, tmp_path):
        config = ExperimentConfig(
            output_dir=str(tmp_path), dataset_kind="wav_dir", wav_dir=str(tmp_path / "nope")
        )
        with pytest.raises(FileNotFoundError):
            build_sound_pool(config)

    def test_split_is_disjoint_and_deterministic(self):
        pool = {
            c: [SoundRef(kind="synthetic", class_id=c, seed=i) for i in range(8)]
            for c in ("tonal_alarm", "chirp")
        }
        train_a, test_a = split_pool(pool, 0.75, seed=7)
        train_b, test_b = split_pool(pool, 0.75, seed=7)
        for c in pool:
            ids_train = {r.sound_id for r in train_a[c]}
            ids_test = {r.sound_id for r in test_a[c]}
            assert not ids_train & ids_test
            assert len(train_a[c]) == 6 and len(test_a[c]) == 2
            assert [r.sound_id for r in train_a[c]] == [r.sound_id for r in train_b[c]]
            assert [r.sound_id for r in test_a[c]] == [r.sound_id for r in test_b[c]]

    def test_split_needs_two_files(self):
        pool = {"chirp": [SoundRef(kind="synthetic", class_id="chirp", seed=0)]}
        with pytest.raises(ValueError, match="at least two files"):
            split_pool(pool, 0.75, seed=0)

    def test_split_seed_changes_assignment(self):
        pool = {
            "chirp": [SoundRef(kind="synthetic", class_id="chirp", seed=i) for i in range(8)]
        }
        picks = {
            tuple(r.sound_id for r in split_pool(pool, 0.75, seed=s)[1]["chirp"])
            for s in range(8)
        }
        assert len(picks) > 1


class TestTrainArtifacts:
    def test_manifest_contents(self, pipeline):
        manifest = pipeline["manifest"]
        config = pipeline["config"]
        assert manifest["config_hash"] == config.config_hash()
        assert manifest["feature_dimension"] == feature_layout().dimension
        assert manifest["glm_order"] == 1
        assert manifest["n_train_scenes"] == 10
        assert len(manifest["detectors"]) == 2 * N_CLASSES
        for entry in manifest["detectors"].values():
            assert (pipeline["out_dir"] / entry["file"]).exists()
            assert entry["n_active"] >= 0
            assert 0.0 <= entry["cv_score"] <= 1.0

    def test_manifest_file_matches_return(self, pipeline):
        on_disk = json.loads((pipeline["out_dir"] / "manifest.json").read_text())
        assert on_disk == json.loads(json.dumps(pipeline["manifest"]))

    def test_split_recorded_disjoint(self, pipeline):
        manifest = pipeline["manifest"]
        train_ids = {i for ids in manifest["train_files"].values() for i in ids}
        test_ids = {i for ids in manifest["test_files"].values() for i in ids}
        assert train_ids and test_ids
        assert not train_ids & test_ids

    def test_observation_model_saved(self, pipeline):
        model = load_observation_model(pipeline["out_dir"] / "observation_model.json")
        assert model.order == 1
        assert model.n_channels == 32

    def test_suites_saved(self, pipeline):
        assert (pipeline["out_dir"] / "train_suite.json").exists()
        assert (pipeline["out_dir"] / "test_suite.json").exists()


class TestTestArtifacts:
    def test_results_row_count_and_columns(self, pipeline):
        df = pd.read_csv(pipeline["out_dir"] / "results.csv")
        assert list(df.columns) == RESULT_COLUMNS
        assert len(df) == N_TEST_SCENES * N_CLASSES * N_GRID
        assert df["n_blocks_kept"].gt(0).all()

    def test_identity_row_per_scene_and_class(self, pipeline):
        df = pd.read_csv(pipeline["out_dir"] / "results.csv")
        ident = df[df["perturbation"] == "sigma0_count0"]
        assert len(ident) == N_TEST_SCENES * N_CLASSES
        assert ident.groupby(["scene_id", "detector_class"]).size().eq(1).all()

    def test_fullstream_metrics_perturbation_invariant(self, pipeline):
        df = pd.read_csv(pipeline["out_dir"] / "results.csv")
        variants = df.groupby(["scene_id", "detector_class"])[["fs_dr", "fs_spec", "fs_bac"]]
        assert variants.nunique(dropna=False).le(1).all().all()

    def test_config_hash_mismatch_rejected(self, pipeline):
        other = ExperimentConfig.from_dict(
            {**pipeline["config"].to_dict(), "split_seed": 999}
        )
        with pytest.raises(ValueError, match="config hash mismatch"):
            run_test(other, max_scenes=1)

    def test_rerun_is_byte_identical(self, pipeline):
        results = pipeline["out_dir"] / "results.csv"
        first = results.read_bytes()
        run_test(pipeline["config"], max_scenes=N_TEST_SCENES)
        assert results.read_bytes() == first

    def test_parallel_rerun_matches(self, pipeline):
        results = pipeline["out_dir"] / "results.csv"
        first = results.read_bytes()
        run_test(pipeline["config"], jobs=2, max_scenes=N_TEST_SCENES)
        assert results.read_bytes() == first


class TestReport:
    def test_summary_series_present(self, pipeline):
        summary = pd.read_csv(pipeline["out_dir"] / "summary.csv")
        assert set(summary["series"]) == {
            "scene_mode",
            "snr_db",
            "n_sources",
            "sigma_deg",
            "count_delta",
        }

    def test_quantile_bands_ordered(self, pipeline):
        summary = pd.read_csv(pipeline["out_dir"] / "summary.csv")
        defined = summary.dropna(subset=["p25", "p75"])
        assert (defined["p25"] <= defined["p75"]).all()

    def test_metrics_long_shape(self, pipeline):
        long = pd.read_csv(pipeline["out_dir"] / "metrics_long.csv")
        assert len(long) == N_TEST_SCENES * N_CLASSES * 14
        assert set(long.columns) == {"scene_id", "detector_class", "metric", "value"}

    def test_summary_mean_matches_results(self, pipeline):
        df = pd.read_csv(pipeline["out_dir"] / "results.csv")
        summary = pd.read_csv(pipeline["out_dir"] / "summary.csv")
        ident = df[
            (df["perturbation"] == "sigma0_count0")
            & (df["detector_class"] == df["target_class"])
        ]
        for mode, group in ident.groupby("scene_mode"):
            expected = group["bac_sw"].dropna()
            row = summary[
                (summary["series"] == "scene_mode")
                & (summary["group"] == mode)
                & (summary["metric"] == "bac_sw")
            ]
            assert len(row) == 1
            if len(expected):
                assert row["mean"].iloc[0] == pytest.approx(expected.mean())
                assert row["n"].iloc[0] == len(expected)
            else:
                assert pd.isna(row["mean"].iloc[0])

    def test_sigma_series_covers_grid(self, pipeline):
        summary = pd.read_csv(pipeline["out_dir"] / "summary.csv")
        sigmas = summary[summary["series"] == "sigma_deg"]["group"].astype(float)
        assert set(sigmas) == {0.0, 5.0, 10.0, 20.0, 45.0}

    def test_delta_series_includes_identity_as_zero(self, pipeline):
        summary = pd.read_csv(pipeline["out_dir"] / "summary.csv")
        deltas = summary[summary["series"] == "count_delta"]["group"].astype(float)
        assert set(deltas) == {-2.0, 0.0, 2.0}

    def test_placement_summary_proportions(self, pipeline):
        path = pipeline["out_dir"] / "placement_summary.csv"
        if not path.exists():
            pytest.skip("no localized blocks in the small fixture")
        pl = pd.read_csv(path)
        defined = pl["proportion"].dropna()
        assert ((defined >= 0) & (defined <= 1)).all()
        assert (pl["fired"] <= pl["total"]).all()

    def test_report_requires_results(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="run testing first"):
            emit_report(tmp_path)

import json

import numpy as np
import pytest

from promptforge import tensor_io
from promptforge.evaluation import (
    CaseData,
    SyntheticCase,
    ablation_grid,
    composition_grid,
    dice,
    exclusive_radius_grid,
    fraction_label,
    generate_synthetic,
    load_manifest,
    materialize_cases,
    records_to_csv,
    sparse_radius_grid,
    sweep,
    write_synthetic_dataset,
)
from promptforge.matching import correspondence_matrix
from promptforge.patching import PatchLabel, label_reference_patches
from promptforge.pipeline import PipelineConfig


class TestDice:
    def test_identical_nonempty(self):
        m = np.zeros((4, 4), dtype=np.uint8)
        m[1:3, 1:3] = 1
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        b = np.zeros((4, 4), dtype=np.uint8)
        a[0, 0] = 1
        b[3, 3] = 1
        assert dice(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        b = np.zeros((4, 4), dtype=np.uint8)
        a[0, 0:4] = 1          # |P| = 4
        b[0, 2:4] = 1
        b[1, 0:2] = 1          # |T| = 4, overlap 2
        assert dice(a, b) == 0.5

    def test_both_empty_is_one(self):
        z = np.zeros((3, 3), dtype=np.uint8)
        assert dice(z, z.copy()) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(81)
        a = (rng.random((10, 10)) < 0.3).astype(np.uint8)
        b = (rng.random((10, 10)) < 0.3).astype(np.uint8)
        assert dice(a, b) == dice(b, a)

    def test_self_is_one(self):
        rng = np.random.default_rng(82)
        a = (rng.random((10, 10)) < 0.5).astype(np.uint8)
        a[0, 0] = 1
        assert dice(a, a) == 1.0

    def test_range(self):
        rng = np.random.default_rng(83)
        for _ in range(20):
            a = (rng.random((6, 6)) < 0.4).astype(np.uint8)
            b = (rng.random((6, 6)) < 0.4).astype(np.uint8)
            assert 0.0 <= dice(a, b) <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dice(np.zeros((2, 2)), np.zeros((3, 3)))


class TestGenerateSynthetic:
    def test_deterministic_from_seed(self):
        case = SyntheticCase(seed=42, noise_sigma=1.0, cluster_separation=5.0)
        a = generate_synthetic(case)
        b = generate_synthetic(case)
        np.testing.assert_array_equal(a[0].features, b[0].features)
        np.testing.assert_array_equal(a[1], b[1])
        np.testing.assert_array_equal(a[2].features, b[2].features)
        np.testing.assert_array_equal(a[3], b[3])

    def test_different_seeds_differ(self):
        a = generate_synthetic(SyntheticCase(seed=1))
        b = generate_synthetic(SyntheticCase(seed=2))
        assert not np.array_equal(a[0].features, b[0].features)

    def test_zero_noise_exact_twin_correspondence(self):
        case = SyntheticCase(seed=7)
        ref, ref_mask, target, target_mask = generate_synthetic(case)
        m = correspondence_matrix(ref, target)
        labels = label_reference_patches(ref.grid, ref_mask)
        target_labels = label_reference_patches(target.grid, target_mask)
        n_target_obj = sum(1 for l in target_labels if l is PatchLabel.POSITIVE)
        obj_rows = [i for i, l in enumerate(labels) if l is PatchLabel.POSITIVE]
        # every object reference patch with a twin sits at distance exactly 0
        twins = 0
        for rank, i in enumerate(obj_rows):
            if rank < n_target_obj:
                assert m[i].min() == 0.0
                twins += 1
        assert twins > 0

    def test_cluster_separation_sample_check(self):
        case = SyntheticCase(seed=11, noise_sigma=0.4, feature_dim=12)
        ref, ref_mask, target, _ = generate_synthetic(case)
        labels = label_reference_patches(ref.grid, ref_mask)
        obj = ref.features[[l is PatchLabel.POSITIVE for l in labels]]
        bg = ref.features[[l is PatchLabel.NEGATIVE for l in labels]]
        intra_obj = correspondence_matrix(obj, obj).max()
        intra_bg = correspondence_matrix(bg, bg).max()
        inter = correspondence_matrix(obj, bg).min()
        assert inter > max(intra_obj, intra_bg)

    def test_object_strictly_inside(self):
        for seed in range(5):
            _, ref_mask, _, target_mask = generate_synthetic(SyntheticCase(seed=seed))
            for mask in (ref_mask, target_mask):
                assert mask.any()
                assert mask[0].sum() == 0 and mask[-1].sum() == 0
                assert mask[:, 0].sum() == 0 and mask[:, -1].sum() == 0

    def test_band_spans_short_dimension(self):
        _, ref_mask, _, _ = generate_synthetic(
            SyntheticCase(seed=3, image_width=256, image_height=96, band=True,
                          object_scale=0.9)
        )
        rows_with_object = (ref_mask.sum(axis=1) > 0).sum()
        assert rows_with_object >= 88  # nearly the full height

    def test_feature_dtype_and_shape(self):
        ref, _, target, _ = generate_synthetic(SyntheticCase(seed=5, feature_dim=9))
        assert ref.features.dtype == np.float32
        assert ref.features.shape == (ref.grid.num_patches, 9)
        assert target.features.shape == ref.features.shape


class TestSweep:
    def _cases(self, n=2, **kw):
        kw.setdefault("image_width", 96)
        kw.setdefault("image_height", 96)
        kw.setdefault("object_scale", 0.5)
        return [SyntheticCase(seed=900 + i, **kw) for i in range(n)]

    def test_single_config_single_case(self):
        records = sweep([PipelineConfig()], self._cases(1))
        assert len(records) == 1
        assert len(records[0].dsc) == 1
        assert 0.0 <= records[0].dsc[0] <= 1.0

    def test_row_order_and_labels_match_radius_grid(self):
        grid = exclusive_radius_grid([0.0, 0.125, 0.25, 0.5])
        records = sweep(grid, self._cases(1))
        csv_text = records_to_csv(records)
        rows = csv_text.strip().split("\n")
        assert len(rows) == 5  # header + 4 configs
        labels = [r.split(",")[0] for r in rows[1:]]
        assert labels == ["0", "12.50%", "25.00%", "50.00%"]

    def test_sparse_grid_row_labels(self):
        pairs = [(0, 0), (0.0625, 0), (0.125, 0), (0.25, 0),
                 (0, 0.0625), (0, 0.125), (0, 0.25)]
        grid = sparse_radius_grid(pairs)
        assert [g[0] for g in grid] == [
            "0/0", "6.25%/0", "12.50%/0", "25.00%/0",
            "0/6.25%", "0/12.50%", "0/25.00%",
        ]

    def test_deterministic_csv_bytes(self):
        grid = ablation_grid()
        cases = self._cases(3, noise_sigma=2.0, cluster_separation=4.0, feature_dim=8)
        a = records_to_csv(sweep(grid, cases))
        b = records_to_csv(sweep(grid, cases))
        assert a.encode() == b.encode()

    def test_failures_recorded_not_raised(self):
        good = materialize_cases(self._cases(1))[0]
        sabotaged = CaseData(
            case_id="broken",
            ref=good.ref,
            ref_mask=good.ref_mask[:-16],  # wrong height
            target=good.target,
            target_truth=good.target_truth,
        )
        records = sweep([PipelineConfig()], [good, sabotaged])
        assert len(records[0].dsc) == 1
        assert len(records[0].failures) == 1
        assert "broken" in records[0].failures[0]
        csv_text = records_to_csv(records)
        assert "broken" in csv_text

    def test_jobs_parallel_matches_serial(self):
        grid = ablation_grid()
        cases = self._cases(3, noise_sigma=1.0, cluster_separation=4.0, feature_dim=8)
        serial = records_to_csv(sweep(grid, cases, jobs=1))
        parallel = records_to_csv(sweep(grid, cases, jobs=4))
        assert serial == parallel

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            sweep([], self._cases(1))

    def test_dsc_formatted_to_four_decimals(self):
        records = sweep([PipelineConfig()], self._cases(1))
        csv_text = records_to_csv(records)
        value = csv_text.strip().split("\n")[1].split(",")[6]
        assert len(value.split(".")[1]) == 4


class TestGrids:
    def test_ablation_grid_is_cumulative(self):
        grid = ablation_grid()
        assert len(grid) == 5
        on_counts = [
            sum(getattr(cfg.stages, n) for n in ("forward", "backward", "exclusive", "sparse", "hard"))
            for _, cfg in grid
        ]
        assert on_counts == [1, 2, 3, 4, 5]

    def test_composition_grid_rows(self):
        grid = composition_grid()
        assert [g[0] for g in grid] == [
            "background_only", "hard_only", "background_with_hard",
        ]

    def test_fraction_label(self):
        assert fraction_label(0) == "0"
        assert fraction_label(0.125) == "12.50%"
        assert fraction_label(0.0625) == "6.25%"


class TestDatasetFiles:
    def test_write_and_reload_manifest(self, tmp_path):
        cases = [SyntheticCase(seed=30 + i, image_width=96, image_height=96) for i in range(2)]
        manifest = write_synthetic_dataset(cases, str(tmp_path / "data"))
        loaded = load_manifest(manifest)
        assert len(loaded) == 2
        direct = materialize_cases(cases)
        for a, b in zip(loaded, direct):
            np.testing.assert_array_equal(a.ref.features, b.ref.features)
            np.testing.assert_array_equal(a.target_truth, b.target_truth)
            assert a.ref.grid == b.ref.grid

    def test_rerun_is_byte_identical(self, tmp_path):
        cases = [SyntheticCase(seed=77, image_width=96, image_height=96)]
        m1 = write_synthetic_dataset(cases, str(tmp_path / "a"))
        m2 = write_synthetic_dataset(cases, str(tmp_path / "b"))
        for name in json.load(open(m1))[0].values():
            if name == "case0077":
                continue
            b1 = open(tmp_path / "a" / name, "rb").read()
            b2 = open(tmp_path / "b" / name, "rb").read()
            assert b1 == b2

    def test_manifest_missing_key(self, tmp_path):
        bad = tmp_path / "manifest.json"
        bad.write_text('[{"ref_features": "x.fpt"}]')
        with pytest.raises(ValueError):
            load_manifest(str(bad))

    def test_sweep_from_manifest(self, tmp_path):
        cases = [SyntheticCase(seed=40, image_width=96, image_height=96)]
        manifest = write_synthetic_dataset(cases, str(tmp_path / "d"))
        records = sweep([PipelineConfig()], load_manifest(manifest))
        assert len(records[0].dsc) == 1

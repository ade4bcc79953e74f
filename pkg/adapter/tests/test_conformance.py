"""Adapter conformance: everything emitted must load through the engine.

These tests import the engine package (promptforge) only to drive its
loaders and its subprocess contract against this adapter's output files.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

promptforge = pytest.importorskip("promptforge")

from promptforge_adapter import formats
from promptforge_adapter.extract import extract_features
from promptforge_adapter.segment import segment_with_prompts


@pytest.fixture
def fixture_image(tmp_path):
    """A bright band object on a dark background, 96x64."""
    rng = np.random.default_rng(123)
    img = rng.integers(10, 60, size=(64, 96), dtype=np.uint8)
    img[8:56, 16:80] = rng.integers(180, 230, size=(48, 64), dtype=np.uint8)
    path = tmp_path / "image.pgm"
    formats.write_pgm(img, str(path))
    return path


@pytest.fixture
def fixture_scheme(tmp_path):
    doc = {
        "image_size": [96, 64],
        "positive": [[40, 30], [60, 20]],
        "negative": [[4, 4], [90, 60]],
        "hard_negative": [[6, 58]],
    }
    path = tmp_path / "scheme.json"
    path.write_text(json.dumps(doc))
    return path


class TestFeatureConformance:
    def test_fpt_loads_through_engine_loader(self, tmp_path, fixture_image):
        out = tmp_path / "feats.fpt"
        extract_features(str(fixture_image), "patchstats", str(out))
        tensor = promptforge.load_tensor(str(out))
        assert tensor.dtype == np.float32
        fmap = promptforge.load_feature_map(str(out))
        assert fmap.features.shape[0] == fmap.grid.num_patches

    def test_row_count_matches_sidecar_grid(self, tmp_path, fixture_image):
        out = tmp_path / "feats.fpt"
        extract_features(str(fixture_image), "patchstats", str(out))
        meta = json.load(open(str(out) + ".json"))
        tensor = promptforge.load_tensor(str(out))
        assert tensor.shape[0] == meta["rows"] * meta["cols"]
        assert meta["rows"] == (meta["image_height"] - meta["patch_size"]) // meta["stride"] + 1

    def test_identical_bytes_across_runs(self, tmp_path, fixture_image):
        a, b = tmp_path / "a.fpt", tmp_path / "b.fpt"
        extract_features(str(fixture_image), "patchstats", str(a))
        extract_features(str(fixture_image), "patchstats", str(b))
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.fpt.json").read_bytes() == (tmp_path / "b.fpt.json").read_bytes()


class TestSegmentConformance:
    def test_mask_loads_with_scheme_dimensions(self, tmp_path, fixture_image, fixture_scheme):
        out = tmp_path / "mask.pgm"
        segment_with_prompts(str(fixture_image), str(fixture_scheme), str(out))
        mask = promptforge.load_mask(str(out))
        assert mask.shape == (64, 96)
        assert set(np.unique(mask)) <= {0, 1}

    def test_round_trip_through_subprocess_contract(self, tmp_path, fixture_image, fixture_scheme):
        """The engine's external_segment drives this adapter end to end."""
        scheme = promptforge.load_prompt_scheme(str(fixture_scheme))
        adapter = promptforge.SegmenterAdapter(
            invocation=(
                f"{sys.executable} -m promptforge_adapter.segment "
                "--image {image} --scheme {scheme} --out {out}"
            ),
            workdir=str(tmp_path),
        )
        mask = promptforge.external_segment(adapter, str(fixture_image), scheme)
        assert mask.shape == (64, 96)
        # the bright band should be segmented around the positive prompts
        assert mask[30, 40] == 1
        assert mask[4, 4] == 0

    def test_full_pipeline_with_adapter_features(self, tmp_path, fixture_image):
        """Features extracted here feed the engine's pipeline unchanged."""
        ref_feats = tmp_path / "ref.fpt"
        extract_features(str(fixture_image), "patchstats", str(ref_feats))
        ref = promptforge.load_feature_map(str(ref_feats))

        ref_mask = np.zeros((64, 96), dtype=np.uint8)
        ref_mask[8:56, 16:80] = 1
        scheme, _ = promptforge.run_pipeline(
            ref, ref_mask, ref, 96, 64, promptforge.PipelineConfig()
        )
        assert len(scheme.positives) > 0


class TestCommandLineContract:
    def test_nonzero_exit_on_empty_scheme(self, tmp_path, fixture_image):
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({
            "image_size": [96, 64], "positive": [], "negative": [], "hard_negative": [],
        }))
        proc = subprocess.run(
            [sys.executable, "-m", "promptforge_adapter.segment",
             "--image", str(fixture_image), "--scheme", str(empty),
             "--out", str(tmp_path / "m.pgm")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1
        assert "point" in proc.stderr

    def test_extract_cli_exit_codes(self, tmp_path, fixture_image):
        proc = subprocess.run(
            [sys.executable, "-m", "promptforge_adapter.extract",
             "--image", str(fixture_image), "--out", str(tmp_path / "f.fpt")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        proc = subprocess.run(
            [sys.executable, "-m", "promptforge_adapter.extract",
             "--image", str(tmp_path / "missing.pgm"), "--out", str(tmp_path / "f.fpt")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1


class TestHeavyBackends:
    def test_dinov2_conformant_or_cleanly_unavailable(self, tmp_path, fixture_image):
        proc = subprocess.run(
            [sys.executable, "-m", "promptforge_adapter.extract",
             "--image", str(fixture_image), "--out", str(tmp_path / "d.fpt"),
             "--model", "dinov2_vits14"],
            capture_output=True, text=True, timeout=300,
        )
        if proc.returncode == 0:
            fmap = promptforge.load_feature_map(str(tmp_path / "d.fpt"))
            assert fmap.features.shape[0] == fmap.grid.num_patches
        else:
            assert "torch" in proc.stderr or "hub" in proc.stderr or "weights" in proc.stderr

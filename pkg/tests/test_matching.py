import math

import numpy as np
import pytest

from promptforge.matching import (
    MEAN_OVER_ALL_EXCLUDED,
    CandidatePrompt,
    FeatureMap,
    backward_match,
    correspondence_matrix,
    forward_match,
    select_hard_negatives,
)
from promptforge.patching import PatchLabel, build_patch_grid

POS = PatchLabel.POSITIVE
NEG = PatchLabel.NEGATIVE


def brute_force_distances(a, b):
    """Independent O(n*m*d) oracle: pure Python double loop."""
    out = [[0.0] * len(b) for _ in range(len(a))]
    for i, u in enumerate(a):
        for j, v in enumerate(b):
            out[i][j] = math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(u, v)))
    return np.array(out)


class TestCorrespondenceMatrix:
    def test_identical_vectors(self):
        m = correspondence_matrix(
            np.array([[1, 0]], dtype=np.float32), np.array([[1, 0]], dtype=np.float32)
        )
        assert m.shape == (1, 1)
        assert m[0, 0] == 0.0

    def test_three_four_five(self):
        m = correspondence_matrix(
            np.array([[0, 0]], dtype=np.float32), np.array([[3, 4]], dtype=np.float32)
        )
        assert m[0, 0] == pytest.approx(5.0, abs=1e-7)

    def test_small_random_vs_brute_force(self):
        rng = np.random.default_rng(21)
        a = rng.standard_normal((3, 7)).astype(np.float32)
        b = rng.standard_normal((5, 7)).astype(np.float32)
        m = correspondence_matrix(a, b)
        np.testing.assert_allclose(m, brute_force_distances(a, b), atol=1e-5)

    def test_matrix_dimensions(self):
        rng = np.random.default_rng(22)
        a = rng.standard_normal((4, 3)).astype(np.float32)
        b = rng.standard_normal((6, 3)).astype(np.float32)
        assert correspondence_matrix(a, b).shape == (4, 6)

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(23)
        a = rng.standard_normal((9, 12)).astype(np.float32)
        b = rng.standard_normal((7, 12)).astype(np.float32)
        np.testing.assert_allclose(
            correspondence_matrix(a, b), correspondence_matrix(b, a).T, atol=1e-6
        )

    def test_identical_maps_zero_diagonal(self):
        rng = np.random.default_rng(24)
        a = rng.standard_normal((8, 4)).astype(np.float32)
        m = correspondence_matrix(a, a)
        assert np.diagonal(m).max() == 0.0

    def test_all_entries_nonnegative(self):
        rng = np.random.default_rng(25)
        a = rng.standard_normal((10, 6)).astype(np.float32)
        b = rng.standard_normal((11, 6)).astype(np.float32)
        assert correspondence_matrix(a, b).min() >= 0.0

    def test_feature_dim_mismatch(self):
        with pytest.raises(ValueError):
            correspondence_matrix(
                np.zeros((2, 3), dtype=np.float32), np.zeros((2, 4), dtype=np.float32)
            )

    def test_empty_map_rejected(self):
        with pytest.raises(ValueError):
            correspondence_matrix(
                np.zeros((0, 3), dtype=np.float32), np.zeros((2, 3), dtype=np.float32)
            )

    def test_accepts_feature_map_values(self):
        grid = build_patch_grid(32, 32, 16, 16)
        rng = np.random.default_rng(26)
        fm1 = FeatureMap(grid=grid, features=rng.standard_normal((4, 5)).astype(np.float32))
        fm2 = FeatureMap(grid=grid, features=rng.standard_normal((4, 5)).astype(np.float32))
        m = correspondence_matrix(fm1, fm2)
        np.testing.assert_allclose(
            m, brute_force_distances(fm1.features, fm2.features), atol=1e-5
        )

    def test_blocked_path_matches_unblocked(self, monkeypatch):
        import promptforge.matching as matching

        rng = np.random.default_rng(27)
        a = rng.standard_normal((37, 8)).astype(np.float32)
        b = rng.standard_normal((19, 8)).astype(np.float32)
        full = correspondence_matrix(a, b)
        monkeypatch.setattr(matching, "_BLOCK_ELEMENTS", 64)
        np.testing.assert_array_equal(matching.correspondence_matrix(a, b), full)


class TestForwardMatch:
    def test_row_argmin(self):
        m = np.array([[0.1, 0.9], [0.8, 0.2]])
        prompts = forward_match(m, [POS, NEG])
        assert [(p.target_patch, p.label, p.source_ref_patch) for p in prompts] == [
            (0, POS, 0),
            (1, NEG, 1),
        ]
        assert prompts[0].distance == pytest.approx(0.1)

    def test_single_ref_patch(self):
        prompts = forward_match(np.array([[0.4, 0.2, 0.9]]), [POS])
        assert len(prompts) == 1
        assert prompts[0].target_patch == 1

    def test_tie_breaks_to_lowest_index(self):
        row = np.array([[5.0, 9.0, 1.0, 7.0, 8.0, 1.0]])
        prompts = forward_match(row, [NEG])
        assert prompts[0].target_patch == 2

    def test_one_prompt_per_reference_patch(self):
        rng = np.random.default_rng(31)
        m = rng.random((12, 5))
        labels = [POS if rng.random() < 0.5 else NEG for _ in range(12)]
        prompts = forward_match(m, labels)
        assert len(prompts) == 12
        assert [p.source_ref_patch for p in prompts] == list(range(12))

    def test_many_to_one_allowed(self):
        m = np.array([[0.1, 0.5], [0.2, 0.5]])
        prompts = forward_match(m, [POS, POS])
        assert [p.target_patch for p in prompts] == [0, 0]

    def test_label_length_mismatch(self):
        with pytest.raises(ValueError):
            forward_match(np.zeros((2, 2)), [POS])


class TestBackwardMatch:
    def test_consistent_candidates_retained(self):
        m = np.array([[0.1, 0.2], [0.3, 0.05]])
        labels = [POS, NEG]
        cands = forward_match(m, labels)
        retained, excluded = backward_match(m, cands, labels)
        assert retained == cands
        assert excluded == []

    def test_cross_matched_but_consistent(self):
        m = np.array([[0.5, 0.1], [0.2, 0.3]])
        labels = [POS, NEG]
        cands = forward_match(m, labels)
        assert [(c.target_patch, c.label) for c in cands] == [(1, POS), (0, NEG)]
        retained, excluded = backward_match(m, cands, labels)
        assert retained == cands and excluded == []

    def test_disagreeing_candidate_excluded(self):
        # ref0 (POS) forward-matches t0, but t0's best reference is ref1 (NEG).
        m = np.array([[0.2, 0.9], [0.1, 0.05]])
        labels = [POS, NEG]
        cands = forward_match(m, labels)
        retained, excluded = backward_match(m, cands, labels)
        assert [(c.target_patch, c.label) for c in excluded] == [(0, POS)]
        assert [(c.target_patch, c.label) for c in retained] == [(1, NEG)]

    def test_excluded_records_column_minimum(self):
        m = np.array([[0.2, 0.9], [0.1, 0.05]])
        labels = [POS, NEG]
        cands = forward_match(m, labels)
        _, excluded = backward_match(m, cands, labels)
        (bad,) = excluded
        assert bad.source_ref_patch == 1  # column argmin
        assert bad.distance == pytest.approx(0.1)  # column minimum, not 0.2
        assert bad.distance == m[bad.source_ref_patch, bad.target_patch]

    def test_partition_no_drops_no_duplicates(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            n, k = int(rng.integers(1, 15)), int(rng.integers(1, 15))
            m = rng.random((n, k))
            labels = [POS if rng.random() < 0.5 else NEG for _ in range(n)]
            cands = forward_match(m, labels)
            retained, excluded = backward_match(m, cands, labels)
            assert len(retained) + len(excluded) == len(cands)
            key = lambda c: (c.target_patch, c.label.value)  # noqa: E731
            assert sorted(map(key, retained + excluded)) == sorted(map(key, cands))
            # independent re-check of the agreement rule per candidate
            for c in cands:
                i_star = min(range(n), key=lambda i: (m[i, c.target_patch], i))
                if labels[i_star] is c.label:
                    assert c in retained
                else:
                    assert all(r != c or r in retained for r in retained)


class TestSelectHardNegatives:
    def _cand(self, dist, label=POS, tp=0, src=0):
        return CandidatePrompt(tp, label, src, dist)

    def test_mean_threshold(self):
        excluded = [self._cand(0.2, tp=0), self._cand(0.4, tp=1), self._cand(0.9, tp=2)]
        hard = select_hard_negatives(excluded)
        assert [c.distance for c in hard] == [0.2, 0.4]

    def test_single_candidate_yields_empty(self):
        assert select_hard_negatives([self._cand(0.3)]) == []

    def test_empty_input(self):
        assert select_hard_negatives([]) == []

    def test_negative_labeled_exclusions_ignored(self):
        excluded = [
            self._cand(0.1, label=NEG, tp=0),
            self._cand(0.2, tp=1),
            self._cand(0.6, tp=2),
        ]
        hard = select_hard_negatives(excluded)
        assert [c.distance for c in hard] == [0.2]
        assert all(c.label is POS for c in hard)

    def test_all_excluded_mean_scope(self):
        excluded = [
            self._cand(0.1, label=NEG, tp=0),
            self._cand(0.3, tp=1),
            self._cand(0.5, tp=2),
        ]
        # mean over all three is 0.3; strict inequality drops the 0.3 one
        hard = select_hard_negatives(excluded, mean_scope=MEAN_OVER_ALL_EXCLUDED)
        assert [c.distance for c in hard] == []
        # mean over positives only is 0.4, so 0.3 passes
        hard = select_hard_negatives(excluded)
        assert [c.distance for c in hard] == [0.3]

    def test_output_is_subset_of_excluded(self):
        rng = np.random.default_rng(51)
        excluded = [
            self._cand(float(rng.random()), label=POS if rng.random() < 0.7 else NEG, tp=i)
            for i in range(30)
        ]
        hard = select_hard_negatives(excluded)
        assert all(c in excluded for c in hard)

    def test_unknown_scope_rejected(self):
        with pytest.raises(ValueError):
            select_hard_negatives([], mean_scope="bogus")


class TestFeatureMap:
    def test_row_count_must_match_grid(self):
        grid = build_patch_grid(64, 64, 16, 16)
        with pytest.raises(ValueError):
            FeatureMap(grid=grid, features=np.zeros((5, 3), dtype=np.float32))

    def test_casts_to_float32(self):
        grid = build_patch_grid(32, 32, 16, 16)
        fm = FeatureMap(grid=grid, features=np.zeros((4, 3)))
        assert fm.features.dtype == np.float32
        assert fm.feature_dim == 3

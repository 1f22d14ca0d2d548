"""Segmentation tests: DP vs exhaustive boundary search, plus contract checks."""

import numpy as np
import pytest

from videosum.segmentation import SegmentList, kts_segment, clip_values
from oracles import segmentation_brute_force


class TestSegmentList:
    def test_weights_cover(self):
        seg = SegmentList(boundaries=[0, 3, 6])
        np.testing.assert_array_equal(seg.weights, [3, 3])
        assert seg.num_frames == 6
        assert seg.num_segments == 2

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            SegmentList(boundaries=[0, 4, 2, 6])

    def test_rejects_nonzero_start(self):
        with pytest.raises(ValueError):
            SegmentList(boundaries=[1, 4])

    def test_json_shape(self):
        assert SegmentList(boundaries=[0, 2, 5]).to_json_dict() == {"boundaries": [0, 2, 5]}


class TestKTS:
    def test_constant_features_single_segment(self):
        """Zero scatter everywhere, so any positive penalty forbids splitting."""
        x = np.ones((10, 3))
        seg = kts_segment(x, max_segments=4, penalty_coeff=1.0)
        assert seg.num_segments == 1

    def test_block_signal_boundary(self):
        x = np.array([[0.0], [0.0], [0.0], [5.0], [5.0], [5.0]])
        seg = kts_segment(x, max_segments=1, penalty_coeff=0.01)
        np.testing.assert_array_equal(seg.boundaries, [0, 3, 6])
        # Exhaustive check that index 3 is the unique best single cut.
        oracle = segmentation_brute_force(x, 1)
        assert oracle[1][1] == (0, 3, 6)

    def test_dp_matches_brute_force(self):
        """DP scatter equals exhaustive enumeration for N <= 12, m <= 3."""
        rng = np.random.default_rng(42)
        for trial in range(12):
            n = int(rng.integers(4, 13))
            x = rng.normal(size=(n, 2))
            oracle = segmentation_brute_force(x, 3)
            for m in range(1, 4):
                if m >= n:
                    continue
                # Force exactly m change points by disabling the penalty and
                # capping the DP at m, then compare objective values.
                seg = kts_segment(x, max_segments=m, penalty_coeff=0.0)
                best_scatter = min(oracle[k][0] for k in range(m + 1))
                got = _total_scatter(x, seg.boundaries)
                np.testing.assert_allclose(got, best_scatter, rtol=1e-10, atol=1e-10)

    def test_scale_invariance(self):
        """Scaling features by c and penalty by c^2 keeps the same boundaries."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 4))
        c = 7.3
        a = kts_segment(x, max_segments=6, penalty_coeff=0.8)
        b = kts_segment(c * x, max_segments=6, penalty_coeff=0.8 * c * c)
        np.testing.assert_array_equal(a.boundaries, b.boundaries)

    def test_contract_errors(self):
        x = np.zeros((5, 2))
        with pytest.raises(ValueError):
            kts_segment(x, max_segments=5)  # max_segments >= N
        with pytest.raises(ValueError):
            kts_segment(np.zeros((1, 2)), max_segments=1)
        with pytest.raises(ValueError):
            kts_segment(x, max_segments=0)

    def test_determinism(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(25, 3))
        a = kts_segment(x, max_segments=5, penalty_coeff=0.5)
        b = kts_segment(x.copy(), max_segments=5, penalty_coeff=0.5)
        np.testing.assert_array_equal(a.boundaries, b.boundaries)


def _total_scatter(x, boundaries):
    total = 0.0
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        seg = x[a:b]
        total += float(((seg - seg.mean(axis=0)) ** 2).sum())
    return total


class TestClipValues:
    def test_uniform_scores(self):
        seg = SegmentList(boundaries=[0, 4, 7, 10])
        np.testing.assert_allclose(clip_values(np.full(10, 0.3), seg), [0.3, 0.3, 0.3])

    def test_two_frame_case(self):
        seg = SegmentList(boundaries=[0, 1, 2])
        np.testing.assert_array_equal(clip_values(np.array([1.0, 0.0]), seg), [1.0, 0.0])

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(5)
        scores = rng.uniform(size=40)
        bounds = [0, 7, 13, 25, 40]
        seg = SegmentList(boundaries=bounds)
        naive = [scores[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])]
        np.testing.assert_allclose(clip_values(scores, seg), naive, rtol=1e-12)

    def test_stays_in_unit_interval(self):
        rng = np.random.default_rng(6)
        scores = rng.uniform(size=20)
        seg = SegmentList(boundaries=[0, 5, 20])
        v = clip_values(scores, seg)
        assert np.all(v >= 0) and np.all(v <= 1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            clip_values(np.zeros(5), SegmentList(boundaries=[0, 3, 6]))

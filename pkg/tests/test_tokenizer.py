import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fmplanner.tokenizer import SegmentLayout, consistency_loss, reassemble, segment

PAPER = SegmentLayout(80, 20, 10)


def test_paper_layout_counts():
    assert PAPER.num_segments == 7
    assert PAPER.start(0) == 0
    assert PAPER.start(6) == 60


def test_single_segment_layout():
    lay = SegmentLayout(80, 80, 0)
    assert lay.num_segments == 1
    traj = np.arange(240.0).reshape(80, 3)
    np.testing.assert_array_equal(segment(traj, lay)[0], traj)


def test_segments_share_exact_overlap():
    traj = np.arange(240.0).reshape(80, 3)
    segs = segment(traj, PAPER)
    for k in range(6):
        np.testing.assert_array_equal(segs[k, 10:], segs[k + 1, :10])


def test_coverage_is_one_or_two():
    counts = np.zeros(80)
    for k in range(PAPER.num_segments):
        counts[PAPER.start(k):PAPER.start(k) + 20] += 1
    assert set(np.unique(counts)) == {1.0, 2.0}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_segment_reassemble_identity(seed):
    rng = np.random.default_rng(seed)
    traj = rng.standard_normal((80, 3))
    rebuilt = reassemble(segment(traj, PAPER), PAPER)
    np.testing.assert_array_equal(rebuilt, traj)


def test_reassemble_identity_batched():
    rng = np.random.default_rng(0)
    traj = rng.standard_normal((5, 80, 4))
    np.testing.assert_array_equal(reassemble(segment(traj, PAPER), PAPER), traj)


def test_overlap_mean_of_two_values():
    lay = SegmentLayout(3, 2, 1)
    segs = np.zeros((2, 2, 1))
    segs[0] = [[0.0], [1.0]]
    segs[1] = [[3.0], [5.0]]
    out = reassemble(segs, lay)
    np.testing.assert_allclose(out[:, 0], [0.0, 2.0, 5.0])


def test_reassemble_boundary_points_come_from_unique_sources():
    rng = np.random.default_rng(1)
    segs = rng.standard_normal((7, 20, 3))
    out = reassemble(segs, PAPER)
    assert out.shape == (80, 3)
    np.testing.assert_array_equal(out[:10], segs[0, :10])
    np.testing.assert_array_equal(out[70:], segs[6, 10:])


def test_consistency_loss_zero_on_ground_truth_cut():
    rng = np.random.default_rng(2)
    traj = rng.standard_normal((80, 3))
    assert consistency_loss(segment(traj, PAPER), PAPER) == 0.0


def test_consistency_loss_constant_offset():
    lay = SegmentLayout(30, 20, 10)
    segs = np.zeros((2, 20, 3))
    segs[1, :10] = 1.0  # overlap region differs by exactly 1 everywhere
    assert consistency_loss(segs, lay) == pytest.approx(1.0)


def test_consistency_loss_symmetric():
    rng = np.random.default_rng(3)
    segs = rng.standard_normal((2, 20, 3))
    lay = SegmentLayout(30, 20, 10)
    swapped = segs[::-1].copy()
    # swapping roles changes which region is compared, so rebuild explicitly
    a = ((segs[0, 10:] - segs[1, :10]) ** 2).mean()
    b = ((segs[1, :10] - segs[0, 10:]) ** 2).mean()
    assert a == b
    assert consistency_loss(segs, lay) == pytest.approx(a)
    del swapped


def test_consistency_loss_single_segment_is_zero():
    lay = SegmentLayout(20, 20, 0)
    assert consistency_loss(np.ones((1, 20, 3)), lay) == 0.0


def test_layout_validation():
    with pytest.raises(ValueError):
        SegmentLayout(80, 20, 20)
    with pytest.raises(ValueError):
        SegmentLayout(80, 20, 7)  # (80-20) % 13 != 0
    with pytest.raises(ValueError):
        segment(np.zeros((79, 3)), PAPER)


def test_matrices_match_direct_paths():
    rng = np.random.default_rng(4)
    traj = rng.standard_normal((80, 4))
    segm = PAPER.segment_matrix()
    avg = PAPER.average_matrix()
    via_matrix = (segm @ traj).reshape(7, 20, 4)
    np.testing.assert_array_equal(via_matrix, segment(traj, PAPER))
    segs = rng.standard_normal((7, 20, 4))
    np.testing.assert_allclose(avg @ segs.reshape(140, 4),
                               reassemble(segs, PAPER), atol=1e-15)

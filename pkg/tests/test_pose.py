import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from anypose.pose import (
    TABLE_GRID_SEC,
    Pose,
    PoseSequence,
    Skeleton,
    TimeGrid,
    canonicalize,
    flatten,
    unflatten,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
pose_arrays = st.integers(1, 30).flatmap(lambda m: hnp.arrays(np.float64, (m, 3), elements=finite))
pos_times = st.lists(st.floats(1e-6, 10.0, allow_nan=False), min_size=1, max_size=20)


def test_flatten_single_joint():
    assert flatten(Pose(np.array([[1.0, 2.0, 3.0]]))).tolist() == [1.0, 2.0, 3.0]


def test_flatten_humanoid_width():
    assert flatten(Pose(np.zeros((22, 3)))).shape == (66,)


@given(pose_arrays)
def test_flatten_roundtrip(a):
    p = Pose(a)
    assert unflatten(flatten(p)) == p


@given(hnp.arrays(np.float64, st.integers(1, 20).map(lambda m: 3 * m), elements=finite))
def test_unflatten_roundtrip(v):
    np.testing.assert_array_equal(flatten(unflatten(v)), v)


def test_unflatten_rejects_ragged():
    with pytest.raises(ValueError):
        unflatten(np.zeros(5))


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_pose_rejects_non_finite(bad):
    a = np.zeros((2, 3))
    a[1, 2] = bad
    with pytest.raises(ValueError):
        Pose(a)


def test_pose_is_read_only():
    p = Pose(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        p.joints[0, 0] = 1.0


@pytest.mark.parametrize(
    "raw, expected",
    [([0.4, 0.08, 0.08], [0.08, 0.4]), ([0.08], [0.08]), ([1.0, 0.56, 0.08], [0.08, 0.56, 1.0])],
)
def test_canonicalize_examples(raw, expected):
    grid, inv = canonicalize(raw)
    assert grid.times_sec.tolist() == expected
    np.testing.assert_array_equal(grid.times_sec[inv], raw)


@given(pos_times)
def test_canonicalize_idempotent(ts):
    g1, _ = canonicalize(ts)
    g2, inv2 = canonicalize(g1)
    np.testing.assert_array_equal(g1.times_sec, g2.times_sec)
    np.testing.assert_array_equal(inv2, np.arange(len(g1)))


@given(pos_times)
def test_canonicalize_restores_caller_order(ts):
    g, inv = canonicalize(ts)
    assert np.all(np.diff(g.times_sec) > 0)
    np.testing.assert_array_equal(g.times_sec[inv], ts)


@pytest.mark.parametrize("raw", [[], [0.0], [-0.1, 0.2], [0.1, np.nan], [np.inf]])
def test_canonicalize_rejects(raw):
    with pytest.raises(ValueError):
        canonicalize(raw)


@pytest.mark.parametrize("raw", [[0.2, 0.1], [0.1, 0.1], [0.0, 1.0]])
def test_time_grid_requires_canonical(raw):
    with pytest.raises(ValueError):
        TimeGrid(raw)


def test_table_grid_in_ms():
    assert [round(t * 1000) for t in TimeGrid.table().times_sec] == [80, 160, 320, 400, 560, 720, 880, 1000]
    assert len(TABLE_GRID_SEC) == 8


def test_sequence_timestamps_and_window():
    seq = PoseSequence(np.arange(5 * 2 * 3, dtype=float).reshape(5, 2, 3), 0.04, 1.0)
    np.testing.assert_allclose(seq.timestamps(), 1.0 + 0.04 * np.arange(5))
    w = seq.window(4, 2)  # ends at index 4 inclusive
    assert len(w) == 2
    np.testing.assert_array_equal(w.poses, seq.poses[3:5])
    assert w.start_time_sec == pytest.approx(1.12)
    with pytest.raises(IndexError):
        seq.window(5, 1)


@pytest.mark.parametrize(
    "kw",
    [
        {"poses": np.zeros((0, 2, 3))},
        {"poses": np.zeros((3, 2, 2))},
        {"poses": np.full((2, 1, 3), np.nan)},
        {"poses": np.zeros((2, 1, 3)), "frame_interval_sec": 0.0},
    ],
)
def test_sequence_validation(kw):
    with pytest.raises(ValueError):
        PoseSequence(**kw)


def test_skeleton_validation():
    Skeleton([-1, 0, 1], [10.0, 10.0, 10.0])
    with pytest.raises(ValueError):
        Skeleton([-1, -1], [1.0, 1.0])  # two roots
    with pytest.raises(ValueError):
        Skeleton([1, 0], [1.0, 1.0])  # cycle, no root
    with pytest.raises(ValueError):
        Skeleton([-1, 0], [1.0, 0.0])  # zero length


def test_skeleton_topological_order_parents_first():
    sk = Skeleton([2, 2, -1, 0], [1.0, 2.0, 3.0, 4.0])
    order = sk.topological_order()
    pos = {j: i for i, j in enumerate(order)}
    for j, p in enumerate(sk.parent):
        if p >= 0:
            assert pos[p] < pos[j]

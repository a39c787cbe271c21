import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import random_cluster
from tractshape.errors import InvalidInputError, MissingChannelError
from tractshape.io import FiberCluster, SubjectData
from tractshape.measures import (
    MeasureKind,
    _lengths_and_midpoints,
    cluster_diameter,
    cluster_elongation,
    cluster_measures,
    cluster_scalar_mean,
    extract_features,
    midpoint_covariance,
    missing_mask,
    stack_features,
    streamline_length,
    streamline_midpoint,
    sym3_eig_max,
)

mpmath.mp.dps = 50


def eig_max_oracle(a):
    """Largest real root of det(lambda I - A) in 50-digit arithmetic."""
    A = mpmath.matrix(a.tolist())
    tr = A[0, 0] + A[1, 1] + A[2, 2]
    c2 = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0] + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
          + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    det = mpmath.det(A)
    roots = mpmath.polyroots([1, -tr, c2, -det], maxsteps=200, extraprec=200)
    return float(max(mpmath.re(r) for r in roots))


def rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def transformed(cluster, fn):
    return FiberCluster(cluster.cluster_id, [fn(s) for s in cluster.streamlines], cluster.scalars)


def test_length_and_midpoint_of_bent_polyline():
    pts = [(0, 0, 0), (3, 0, 0), (3, 4, 0)]
    assert streamline_length(pts) == 7.0
    np.testing.assert_allclose(streamline_midpoint(pts), [3.0, 0.5, 0.0])


def test_single_point_streamline():
    assert streamline_length([(1, 2, 3)]) == 0.0
    np.testing.assert_array_equal(streamline_midpoint([(1, 2, 3)]), [1, 2, 3])


def test_midpoint_falls_on_vertex():
    np.testing.assert_allclose(streamline_midpoint([(0, 0, 0), (1, 0, 0), (2, 0, 0)]), [1, 0, 0])


def test_vectorised_helper_matches_per_streamline(rng):
    lines = [rng.normal(size=(int(rng.integers(1, 9)), 3)) for _ in range(50)]
    lines.append(np.zeros((4, 3)))  # zero-length streamline
    lengths, mids = _lengths_and_midpoints(lines)
    for s, length, mid in zip(lines, lengths, mids):
        assert length == pytest.approx(streamline_length(s), rel=1e-12, abs=1e-12)
        np.testing.assert_allclose(mid, streamline_midpoint(s), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize(
    "matrix, expected",
    [
        (np.diag([1.0, 2.0, 3.0]), 3.0),
        (np.eye(3) * 4.0, 4.0),
        (np.zeros((3, 3)), 0.0),
        (np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]]), 3.0),
        (np.ones((3, 3)), 3.0),
    ],
)
def test_eig_max_known_values(matrix, expected):
    assert sym3_eig_max(matrix) == pytest.approx(expected, rel=1e-13, abs=1e-15)


def test_eig_max_against_oracle_including_near_degenerate(rng):
    for i in range(300):
        q = rotation(rng)
        if i % 3 == 0:
            top = rng.uniform(1, 10)
            vals = [top, top * (1 - 10.0 ** -rng.uniform(4, 12)), rng.uniform(-5, 0.5)]
        else:
            vals = rng.normal(size=3) * 10.0 ** rng.uniform(-3, 3)
        a = q @ np.diag(vals) @ q.T
        a = (a + a.T) / 2
        assert sym3_eig_max(a) == pytest.approx(eig_max_oracle(a), rel=1e-9, abs=1e-12 * np.abs(a).max())


def test_eig_max_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        sym3_eig_max(np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        sym3_eig_max([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    with pytest.raises(InvalidInputError):
        sym3_eig_max(np.full((3, 3), np.nan))


def test_diameter_uses_sample_covariance():
    mids = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    c = FiberCluster(1, [np.stack([m, m + [0, 0, 1], m + [0, 0, 2]]) for m in mids - [0, 0, 1]])
    # midpoints at x = 0 and x = 2: sample variance 2, so diameter 2 * sqrt(2)
    assert cluster_diameter(c) == pytest.approx(2 * math.sqrt(2))
    np.testing.assert_allclose(midpoint_covariance(c), np.diag([2.0, 0, 0]), atol=1e-15)


def test_degenerate_clusters():
    one = FiberCluster(1, [np.array([[0, 0, 0], [1, 0, 0]])])
    assert cluster_diameter(one) == 0.0 and cluster_elongation(one) == 0.0
    same = FiberCluster(1, [np.array([[0, 0, 0], [1, 0, 0]])] * 3)
    assert cluster_diameter(same) == 0.0
    assert cluster_elongation(same) == 0.0  # diameter below the guard
    m = cluster_measures(FiberCluster(5))
    assert (m.length, m.diameter, m.elongation, m.nos, m.fa, m.md) == (0, 0, 0, 0, 0, 0)


def test_scalar_mean_is_pooled_over_points():
    c = FiberCluster(1, [np.zeros((1, 3)), np.zeros((3, 3))], {"FA": [[1.0], [0.0, 0.0, 0.0]]})
    assert cluster_scalar_mean(c, "FA") == 0.25
    with pytest.raises(MissingChannelError):
        cluster_scalar_mean(c, "MD")
    assert cluster_measures(c, channels=("FA",)).md == 0.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 100.0))
def test_rigid_and_scaling_laws(seed, scale):
    rng = np.random.default_rng(seed)
    c = random_cluster(rng, channels=False)
    base = cluster_measures(c, channels=())
    q, t = rotation(rng), rng.normal(size=3) * 50
    moved = cluster_measures(transformed(c, lambda s: s @ q.T + t), channels=())
    for name in ("length", "diameter", "elongation"):
        assert getattr(moved, name) == pytest.approx(getattr(base, name), rel=1e-9, abs=1e-12)
    scaled = cluster_measures(transformed(c, lambda s: s * scale), channels=())
    assert scaled.length == pytest.approx(base.length * scale, rel=1e-9)
    assert scaled.diameter == pytest.approx(base.diameter * scale, rel=1e-9)
    assert scaled.elongation == pytest.approx(base.elongation, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 30), st.just(3)), elements=st.floats(-1e3, 1e3)))
def test_diameter_matches_numpy_eigvalsh(mids):
    c = FiberCluster(1, [np.stack([m, m]) for m in mids])
    expected = 2 * math.sqrt(max(np.linalg.eigvalsh(np.cov(mids.T))[-1], 0.0))
    assert cluster_diameter(c) == pytest.approx(expected, rel=1e-7, abs=1e-6)


def test_streamline_order_does_not_matter(rng):
    c = random_cluster(rng, n_streamlines=25)
    perm = rng.permutation(25)
    shuffled = FiberCluster(1, [c.streamlines[i] for i in perm], {k: [v[i] for i in perm] for k, v in c.scalars.items()})
    a, b = cluster_measures(c), cluster_measures(shuffled)
    for name in ("length", "diameter", "elongation", "fa", "md"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-12)


def test_reversed_streamlines_keep_length_and_midpoint(rng):
    s = rng.normal(size=(7, 3))
    assert streamline_length(s[::-1]) == pytest.approx(streamline_length(s), rel=1e-12)
    np.testing.assert_allclose(streamline_midpoint(s[::-1]), streamline_midpoint(s), atol=1e-12)


def test_extract_and_stack(rng):
    subjects = [
        SubjectData(f"s{i}", [random_cluster(rng, cluster_id=1), FiberCluster(2)]) for i in range(3)
    ]
    vectors = [extract_features(s) for s in subjects]
    assert set(vectors[0]) == {MeasureKind.FA, MeasureKind.MD, MeasureKind.NOS, MeasureKind.LENGTH,
                               MeasureKind.DIAMETER, MeasureKind.ELONGATION}
    assert missing_mask(subjects[0]).tolist() == [False, True]
    stacked = stack_features([s.subject_id for s in subjects], vectors)
    assert stacked[MeasureKind.NOS].values.shape == (3, 2)
    assert np.all(stacked[MeasureKind.LENGTH].values[:, 1] == 0)


def test_measure_kind_parsing():
    assert MeasureKind.parse("length-n") is MeasureKind.LENGTH_N
    assert MeasureKind.LENGTH.to_normalized() is MeasureKind.LENGTH_N
    assert MeasureKind.DIAMETER_N.base is MeasureKind.DIAMETER
    assert MeasureKind.NOS.category == "Connectivity"
    with pytest.raises(InvalidInputError):
        MeasureKind.parse("curvature")
    with pytest.raises(InvalidInputError):
        MeasureKind.FA.to_normalized()

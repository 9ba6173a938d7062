import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uniembed.analysis import _pairwise, jacobi_eigh, occupancy, pca_project, silhouette
from uniembed.errors import UsageError
from uniembed.rng import Xoshiro256

from conftest import rows


def test_plane_recovery():
    # symmetric grid: the sample covariance is exactly diagonal
    u, w = np.meshgrid(np.arange(-2.0, 3.0) * 3.0, np.arange(-1.0, 2.0))
    x = np.zeros((u.size, 5))
    x[:, 1], x[:, 3] = u.ravel() + 4.0, w.ravel() - 1.0
    coords, var = pca_project(x)
    np.testing.assert_allclose(coords[:, 0], u.ravel(), atol=1e-12)
    np.testing.assert_allclose(coords[:, 1], w.ravel(), atol=1e-12)
    residual = np.sum((x - x.mean(axis=0)) ** 2) - np.sum(coords**2)
    assert abs(residual) < 1e-9
    assert var[0] > var[1]


def test_isotropic_cloud():
    x = rows(Xoshiro256(4), 4000, 3)
    _, var = pca_project(x)
    total = np.trace(np.cov(x.T))
    assert abs(var[0] / total - var[1] / total) < 0.1


def test_degenerate_points():
    coords, var = pca_project(np.ones((6, 4)) * 2.5)
    assert not coords.any()
    assert not var.any()


def test_too_few_rows():
    with pytest.raises(UsageError):
        pca_project(np.zeros((1, 3)))


@given(st.integers(0, 2**31), st.integers(2, 8))
def test_jacobi_matches_reference_eigh(seed, n):
    a = rows(Xoshiro256(seed), n, n)
    sym = a + a.T
    vals, vecs = jacobi_eigh(sym)
    ref = np.linalg.eigvalsh(sym)[::-1]
    np.testing.assert_allclose(vals, ref, atol=1e-9 * max(1.0, np.abs(ref).max()))
    np.testing.assert_allclose(sym @ vecs, vecs * vals, atol=1e-8 * max(1.0, np.abs(ref).max()))
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)


def brute_silhouette(points, labels):
    n = len(points)
    total = 0.0
    for i in range(n):
        d = lambda j: float(np.sqrt(np.sum((points[i] - points[j]) ** 2)))
        own = [d(j) for j in range(n) if j != i and labels[j] == labels[i]]
        if not own:
            continue
        a = sum(own) / len(own)
        b = min(
            sum(d(j) for j in range(n) if labels[j] == c) / sum(1 for j in range(n) if labels[j] == c)
            for c in set(labels) if c != labels[i]
        )
        total += 0.0 if max(a, b) == 0 else (b - a) / max(a, b)
    return total / n


@st.composite
def labelled_points(draw):
    seed = draw(st.integers(0, 2**31))
    n = draw(st.integers(4, 200))
    rng = Xoshiro256(seed)
    labels = [f"v{i % 2}" if i < 4 else f"v{rng.below(3)}" for i in range(n)]
    return rows(rng, n, 3), labels


@given(labelled_points())
def test_silhouette_matches_brute_force(case):
    points, labels = case
    assert silhouette(points, labels) == pytest.approx(brute_silhouette(points, labels), abs=1e-12)


def test_far_clusters_score_high():
    rng = Xoshiro256(1)
    a = rows(rng, 30, 4) * 0.1
    b = rows(rng, 30, 4) * 0.1 + [100.0, 0, 0, 0]
    report = occupancy({"a": a, "b": b})
    assert report.silhouette > 0.95
    assert report.separated


def test_same_distribution_scores_near_zero():
    rng = Xoshiro256(2)
    report = occupancy({"a": rows(rng, 200, 4), "b": rows(rng, 200, 4)})
    assert abs(report.silhouette) < 0.1
    assert not report.separated


@given(st.integers(0, 2**31))
def test_distance_matrices_symmetric(seed):
    x = rows(Xoshiro256(seed), 12, 3)
    d = _pairwise(x)
    assert np.array_equal(d, d.T) and not np.diag(d).any()
    report = occupancy({"a": x[:6], "b": x[6:]})
    assert np.array_equal(report.inter, report.inter.T) and not np.diag(report.inter).any()
    assert -1.0 <= report.silhouette <= 1.0


def test_occupancy_needs_two_verticals():
    with pytest.raises(UsageError, match="pca_project"):
        occupancy({"a": np.zeros((3, 2))})


@given(st.integers(0, 2**31))
def test_row_order_invariance(seed):
    rng = Xoshiro256(seed)
    x = rows(rng, 20, 4)
    perm = rng.shuffle(list(range(20)))
    coords, var = pca_project(x)
    coords_p, var_p = pca_project(x[perm])
    assert np.array_equal(coords[perm], coords_p)
    assert np.array_equal(var, var_p)


@given(st.integers(0, 2**31))
def test_rigid_motion(seed):
    rng = Xoshiro256(seed)
    x = rows(rng, 25, 3) * [3.0, 1.5, 0.5]
    coords, var = pca_project(x)
    shifted, var_s = pca_project(x + [7.0, -2.0, 0.25])
    np.testing.assert_allclose(shifted, coords, atol=1e-9)
    q, _ = np.linalg.qr(rows(rng, 3, 3))
    _, var_r = pca_project(x @ q)
    np.testing.assert_allclose(var_r, var, rtol=1e-9)
    np.testing.assert_allclose(var_s, var, rtol=1e-9)

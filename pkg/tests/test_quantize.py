"""Tests for point-cloud quantization (oversample, k-means++, Lloyd, weights)."""

import numpy as np
import numpy.testing as npt
import pytest

from otalign.quantize import (
    DegenerateSupportWarning,
    QuantizeConfig,
    QuantizedDistribution,
    assignments,
    kmeanspp_seed,
    lloyd_step,
    oversample_size,
    quantization_cost,
    quantize,
    repair_empty_cells,
    sample_support,
    voronoi_weights,
)
from otalign.synthetic import random_orthogonal


# ---------------------------------------------------------------- oversample


def test_oversample_size_matches_formula():
    assert oversample_size(10, 10**6) == 231  # ceil(100 ln 10)
    assert oversample_size(200, 20_000) == 20_000  # capped at n
    assert oversample_size(1, 50) == 1
    with pytest.raises(ValueError):
        oversample_size(0, 10)
    with pytest.raises(ValueError):
        oversample_size(3, 0)


def test_sample_support_full_draw_returns_input_unchanged():
    X = np.arange(12.0).reshape(6, 2)
    rng = np.random.default_rng(0)
    assert sample_support(X, 6, rng) is X


def test_sample_support_subsample_is_without_replacement():
    X = np.arange(20.0).reshape(10, 2)
    got = sample_support(X, 4, np.random.default_rng(1))
    as_rows = {tuple(r) for r in got}
    assert len(as_rows) == 4
    assert as_rows <= {tuple(r) for r in X}
    with pytest.raises(ValueError):
        sample_support(X, 11, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_support(X, 0, np.random.default_rng(0))


# --------------------------------------------------------------- assignments


def test_assignments_and_cost_hand_example():
    points = np.array([[0.0], [1.0], [9.0], [10.0]])
    centers = np.array([[0.0], [9.0]])
    npt.assert_array_equal(assignments(points, centers), [0, 0, 1, 1])
    # costs: 0 + 1 + 0 + 1
    assert quantization_cost(points, centers) == pytest.approx(2.0, abs=1e-12)


def test_assignment_ties_go_to_lowest_center_index():
    points = np.array([[0.5, 0.0]])
    centers = np.array([[0.0, 0.0], [1.0, 0.0]])
    npt.assert_array_equal(assignments(points, centers), [0])


# ----------------------------------------------------------------- seeding


def test_kmeanspp_on_k_distinct_points_selects_each_once():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    centers = kmeanspp_seed(pts, 4, np.random.default_rng(0))
    assert {tuple(r) for r in centers} == {tuple(r) for r in pts}


def test_kmeanspp_prefers_spread_centers_two_cluster_law():
    # Two tight pairs far apart: compute the exact probability that the two
    # seeds land in different pairs, directly from the D^2 sampling law,
    # then check the empirical frequency over 1000 seeds.
    pts = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
    left = {0, 1}

    def d2_to(i):
        return ((pts - pts[i]) ** 2).sum(axis=1)

    p_exact = 0.0
    for first in range(4):
        d2 = d2_to(first)
        other = [j for j in range(4) if (j in left) != (first in left)]
        p_exact += (d2[other].sum() / d2.sum()) / 4.0
    assert p_exact >= 0.99  # clusters are 100x tighter than their separation

    hits = 0
    for seed in range(1000):
        centers = kmeanspp_seed(pts, 2, np.random.default_rng(seed))
        sides = centers[:, 0] > 5.0
        hits += sides[0] != sides[1]
    assert hits / 1000 >= 0.99


def test_kmeanspp_duplicates_with_warning_on_degenerate_support():
    pts = np.zeros((3, 2))
    with pytest.warns(DegenerateSupportWarning):
        centers = kmeanspp_seed(pts, 3, np.random.default_rng(0))
    npt.assert_array_equal(centers, np.zeros((3, 2)))


def test_kmeanspp_validates_arguments():
    pts = np.zeros((2, 2))
    with pytest.raises(ValueError):
        kmeanspp_seed(pts, 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        kmeanspp_seed(pts, 0, np.random.default_rng(0))


# ------------------------------------------------------------------- lloyd


def test_lloyd_step_moves_centers_to_cell_means():
    points = np.array([[0.0], [1.0], [9.0], [10.0]])
    centers = np.array([[0.0], [9.0]])
    moved = lloyd_step(points, centers, steps=1)
    npt.assert_allclose(moved, [[0.5], [9.5]], rtol=0, atol=1e-15)
    npt.assert_array_equal(lloyd_step(points, centers, steps=0), centers)
    with pytest.raises(ValueError):
        lloyd_step(points, centers, steps=-1)


def test_lloyd_steps_never_increase_quantization_cost():
    rng = np.random.default_rng(4)
    points = rng.normal(size=(400, 3))
    centers = kmeanspp_seed(points, 12, rng)
    costs = [quantization_cost(points, centers)]
    for steps in range(1, 6):
        costs.append(quantization_cost(points, lloyd_step(points, centers, steps)))
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))


def test_lloyd_keeps_center_of_empty_cell():
    points = np.array([[0.0], [1.0]])
    centers = np.array([[0.0], [0.5], [100.0]])
    moved = lloyd_step(points, centers)
    npt.assert_allclose(moved, [[0.0], [1.0], [100.0]], rtol=0, atol=1e-15)


# ------------------------------------------------------------------ weights


def test_voronoi_weights_count_fractions():
    points = np.array([[0.0], [0.1], [0.2], [10.0]])
    centers = np.array([[0.1], [10.0]])
    npt.assert_allclose(voronoi_weights(points, centers), [0.75, 0.25], rtol=0, atol=0)


def test_voronoi_weights_uniform_when_points_equal_centers():
    pts = np.random.default_rng(0).normal(size=(8, 2))
    npt.assert_allclose(voronoi_weights(pts, pts), np.full(8, 0.125), rtol=0, atol=0)


def test_voronoi_weights_allow_empty_cells():
    points = np.array([[0.0], [1.0]])
    centers = np.array([[0.0], [1.0], [50.0]])
    npt.assert_allclose(voronoi_weights(points, centers), [0.5, 0.5, 0.0], rtol=0, atol=0)


# ------------------------------------------------------------------- repair


def test_repair_empty_cells_moves_center_to_farthest_point():
    points = np.array([[0.0], [1.0], [2.0], [3.0]])
    centers = np.array([[0.0], [0.4], [100.0]])
    weights = voronoi_weights(points, centers)
    assert weights[2] == 0.0
    fixed_centers, fixed_weights = repair_empty_cells(points, centers, weights)
    npt.assert_allclose(fixed_centers[2], [3.0], rtol=0, atol=0)
    assert (fixed_weights > 0).all()
    npt.assert_allclose(fixed_weights.sum(), 1.0, rtol=0, atol=1e-12)


def test_repair_empty_cells_fails_when_points_cannot_fill():
    points = np.array([[5.0], [5.0]])
    centers = np.array([[5.0], [9.0]])
    with pytest.raises(ValueError, match="cannot fill"):
        repair_empty_cells(points, centers, np.array([1.0, 0.0]))


# ----------------------------------------------------------------- pipeline


def test_quantize_with_k_equal_n_reproduces_the_cloud():
    X = np.random.default_rng(2).normal(size=(6, 3))
    q = quantize(X, QuantizeConfig(k=6))
    assert {tuple(r) for r in q.centers} == {tuple(r) for r in X}
    npt.assert_allclose(q.weights, np.full(6, 1 / 6), rtol=0, atol=0)


def test_quantize_is_deterministic_given_seed():
    X = np.random.default_rng(3).normal(size=(500, 4))
    a = quantize(X, QuantizeConfig(k=16, lloyd_steps=1, seed=9))
    b = quantize(X, QuantizeConfig(k=16, lloyd_steps=1, seed=9))
    npt.assert_array_equal(a.centers, b.centers)
    npt.assert_array_equal(a.weights, b.weights)


def test_quantize_oversample_cap_limits_support():
    X = np.arange(20.0).reshape(10, 2)
    q = quantize(X, QuantizeConfig(k=3, oversample_cap=3, seed=0))
    # support collapses to exactly 3 rows, so the centers are those rows
    assert len({tuple(r) for r in q.centers}) == 3
    assert {tuple(r) for r in q.centers} <= {tuple(r) for r in X}


def test_quantize_beats_random_centers_on_gaussian_clouds():
    # Paired comparison on 100 seeded clouds: the seeded-and-polished centers
    # should essentially always beat k uniformly chosen data points.
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng([5, seed])
        X = rng.normal(size=(2000, 3))
        q = quantize(X, QuantizeConfig(k=32, lloyd_steps=1), np.random.default_rng([5, seed, 1]))
        ridx = np.random.default_rng([5, seed, 2]).choice(2000, size=32, replace=False)
        wins += quantization_cost(X, q.centers) <= quantization_cost(X, X[ridx])
    assert wins >= 90


@pytest.mark.parametrize("lloyd_steps", [0, 1])
def test_quantize_commutes_with_orthogonal_maps(lloyd_steps):
    rng = np.random.default_rng(8)
    X = rng.normal(size=(800, 5))
    R = random_orthogonal(5, rng)
    cfg = QuantizeConfig(k=20, lloyd_steps=lloyd_steps)
    q_plain = quantize(X, cfg, np.random.default_rng(123))
    q_rot = quantize(X @ R, cfg, np.random.default_rng(123))
    assert np.abs(q_rot.centers - q_plain.centers @ R).max() <= 1e-9
    npt.assert_array_equal(q_rot.weights, q_plain.weights)


def test_quantize_rejects_k_larger_than_n():
    with pytest.raises(ValueError, match="exceeds"):
        quantize(np.zeros((3, 2)), QuantizeConfig(k=4))


# --------------------------------------------------------------- validation


def test_quantize_config_validation():
    with pytest.raises(ValueError):
        QuantizeConfig(k=0)
    with pytest.raises(ValueError):
        QuantizeConfig(k=2, lloyd_steps=-1)
    with pytest.raises(ValueError):
        QuantizeConfig(k=5, oversample_cap=4)


def test_quantized_distribution_validation():
    c = np.zeros((2, 3))
    QuantizedDistribution(c, np.array([0.5, 0.5]))  # valid
    with pytest.raises(ValueError, match="sum"):
        QuantizedDistribution(c, np.array([0.6, 0.5]))
    with pytest.raises(ValueError, match="negative"):
        QuantizedDistribution(c, np.array([1.2, -0.2]))
    with pytest.raises(ValueError, match="non-finite"):
        QuantizedDistribution(c, np.array([np.inf, 0.5]))
    with pytest.raises(ValueError, match="match"):
        QuantizedDistribution(c, np.array([1.0]))
    with pytest.raises(ValueError, match="2-d"):
        QuantizedDistribution(np.zeros(3), np.array([1.0]))
    q = QuantizedDistribution(np.zeros((4, 2)), np.full(4, 0.25))
    assert q.k == 4 and q.dim == 2

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.aux_utils import ConfigError, DataError, NumericError
from src.kernels_utils import (
    KnnIndex,
    PointCloud,
    RngHandle,
    add_jitter,
    count_within,
    digamma,
    integrate_1d,
    knn_radius,
    sample_standard,
)

EULER_GAMMA = 0.5772156649015329


def test_digamma_known_values():
    assert digamma(1) == pytest.approx(-EULER_GAMMA, abs=1e-12)
    assert digamma(2) == pytest.approx(1 - EULER_GAMMA, abs=1e-12)
    assert_allclose(digamma(np.array([1.0, 2.0])), [-EULER_GAMMA, 1 - EULER_GAMMA])


def test_digamma_rejects_non_positive():
    with pytest.raises(NumericError):
        digamma(0)
    with pytest.raises(NumericError):
        digamma(np.array([1.0, -2.0]))


def test_point_cloud_validation():
    cloud = PointCloud(np.arange(5.0))
    assert (cloud.n, cloud.d) == (5, 1)
    with pytest.raises(DataError):
        PointCloud(np.array([[1.0, np.nan]]))
    assert PointCloud.from_blocks(np.zeros((4, 2)), np.ones(4)).d == 3


@pytest.mark.parametrize("d", range(1, 7))
def test_tree_matches_brute_force(d):
    # 170 nubes por dimensión, 1020 en total
    for seed in range(170):
        check_tree_against_brute_force(np.random.default_rng([d, seed]), d)


def check_tree_against_brute_force(gen, d):
    n, K = int(gen.integers(70, 160)), int(gen.integers(1, 6))
    cloud = PointCloud(gen.standard_normal((n, d)))
    tree = KnnIndex(cloud, brute_force_below=0)
    brute = KnnIndex(cloud, brute_force_below=10**9)

    eps_tree = tree.kth_radius(K)
    eps_brute = brute.kth_radius(K)
    assert_allclose(eps_tree, eps_brute)
    assert_array_equal(tree.count_within(eps_brute), brute.count_within(eps_brute))
    assert_array_equal(tree.count_within(eps_brute, strict=False), brute.count_within(eps_brute, strict=False))

    i = int(gen.integers(0, n))
    assert knn_radius(cloud, i, K) == pytest.approx(eps_brute[i])
    assert count_within(cloud, i, eps_brute[i]) == brute.count_within(eps_brute)[i]


def test_strict_and_inclusive_counts_on_ties():
    # puntos enteros: muchas distancias empatan exactamente
    cloud = PointCloud(np.array([0.0, 1.0, 2.0, 3.0, 4.0]))
    index = KnnIndex(cloud)
    radii = np.full(5, 1.0)
    assert_array_equal(index.count_within(radii), [0, 0, 0, 0, 0])
    assert_array_equal(index.count_within(radii, strict=False), [1, 2, 2, 2, 1])
    assert count_within(cloud, 2, 1.0, strict=False) == 2


def test_zero_radius_counts_nothing():
    cloud = PointCloud(np.zeros((100, 1)))
    tree = KnnIndex(cloud, brute_force_below=0)
    assert_array_equal(tree.count_within(np.zeros(100)), np.zeros(100))


def test_kth_radius_bounds():
    index = KnnIndex(PointCloud(np.arange(4.0)))
    with pytest.raises(DataError):
        index.kth_radius(4)
    with pytest.raises(DataError):
        knn_radius(PointCloud(np.arange(3.0)), 0, 3)


def test_rng_handle_streams():
    a = RngHandle(5, (1, 2)).generator().standard_normal(4)
    b = RngHandle(5, (1, 2)).generator().standard_normal(4)
    c = RngHandle(5, (1, 3)).generator().standard_normal(4)
    assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert RngHandle(5, 3).stream == (3,)
    assert RngHandle(5).child(1).child(2) == RngHandle(5, (1, 2))
    with pytest.raises(ConfigError):
        RngHandle(-1)


def test_sample_standard():
    x = sample_standard(RngHandle(0), "chi_square_1", 20_000)
    assert x.min() >= 0
    assert x.mean() == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ConfigError):
        sample_standard(RngHandle(0), "cauchy", 3)


def test_jitter_amplitude():
    values = np.column_stack([np.repeat([0.0, 1.0], 50), np.zeros(100)])
    jittered = add_jitter(values, RngHandle(0), scale=1e-8)
    diff = np.abs(jittered - values)
    assert diff[:, 0].max() <= 1e-8 * values[:, 0].std() * (1 + 1e-6)
    # columna constante: amplitud relativa a 1
    assert 0 < diff[:, 1].max() <= 1e-8


def test_integrate_1d():
    assert integrate_1d(lambda x: np.exp(-x), 0, np.inf) == pytest.approx(1.0, abs=1e-10)
    assert integrate_1d(lambda x: x * x, 0, 3) == pytest.approx(9.0)


def test_integrate_1d_non_convergent():
    with pytest.raises(NumericError):
        integrate_1d(lambda x: 1.0 / x, 0, 1, limit=5)

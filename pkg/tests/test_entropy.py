import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from dlngeom.errors import CoincidentSingularValues, RankDeficient, UnsupportedDimension
from dlngeom.entropy import (
    block_det,
    chebyshev_eigen,
    chebyshev_eigenvalues,
    chebyshev_sine_matrix,
    entropy,
    entropy_gradient,
    entropy_infinite,
    entropy_of_matrix,
    entropy_sigma_gradient,
    gram_orbit,
    haar_volume_od,
    jacobi_block,
    orbit_volume_formula,
    orbit_volume_numeric,
)
from dlngeom.linalg import Spectrum, svd_descending
from dlngeom.manifold import GaugeElement, center_of_fiber, gauge_act

C2 = 4 * math.sqrt(2) * math.pi


def test_jacobi_interior_example():
    assert np.array_equal(jacobi_block(2, 1, 3).entries, [[5, -2], [-2, 5]])
    assert np.array_equal(jacobi_block(1.5, 0.5, 2).entries, [[2.5]])
    assert jacobi_block(2, 1, 1).entries.shape == (0, 0)


def test_jacobi_extended_is_neumann_at_coincidence():
    h = jacobi_block(1, 1, 4, "extended").entries
    expected = np.diag([1, 2, 2, 2, 1]) - np.eye(5, k=1) - np.eye(5, k=-1)
    assert np.array_equal(h, expected)
    assert abs(np.linalg.det(h)) < 1e-12


def test_chebyshev_examples():
    assert np.allclose(chebyshev_eigenvalues(2, 1, 3), [3, 7])
    assert np.prod(chebyshev_eigenvalues(2, 1, 3)) == pytest.approx(21)
    assert np.allclose(chebyshev_eigenvalues(1, 1, 2), [2])


@pytest.mark.parametrize("N", [2, 3, 7, 64])
def test_chebyshev_diagonalizes(N):
    block = jacobi_block(1.3, 0.4, N)
    S, sig = chebyshev_eigen(block)
    assert np.abs(S @ S.T - np.eye(N - 1)).max() < 1e-12
    assert np.abs(S @ block.entries @ S.T - np.diag(sig)).max() < 1e-10


def test_literal_sine_normalization_is_not_orthogonal():
    # sqrt(2/(N-1)) sin(2pq pi/N) fails orthogonality already at N = 3;
    # the implemented matrix uses sqrt(2/N) sin(pq pi/N).
    N = 3
    idx = np.arange(1, N)
    literal = math.sqrt(2 / (N - 1)) * np.sin(2 * np.outer(idx, idx) * math.pi / N)
    assert np.abs(np.diag(literal @ literal.T) - 1).max() > 0.4
    assert np.allclose(chebyshev_sine_matrix(N) @ chebyshev_sine_matrix(N).T, np.eye(N - 1))


def test_block_det_examples():
    assert block_det(2, 1, 3) == pytest.approx(21)
    assert np.linalg.det(jacobi_block(2, 1, 3).entries) == pytest.approx(21)
    lam, N = 1.3, 6
    assert block_det(lam, lam, N) == pytest.approx(N * lam ** (2 * (N - 1)))
    assert block_det(2.5, 0.7, 1) == pytest.approx(1)


def test_haar_volume_examples():
    assert haar_volume_od(1) == pytest.approx(2)
    assert haar_volume_od(2) == pytest.approx(C2)
    assert haar_volume_od(2) == pytest.approx(17.7715, abs=1e-4)
    assert haar_volume_od(2, "ponting") == pytest.approx(32 * math.pi)
    with pytest.raises(ValueError):
        haar_volume_od(2, "other")


def test_embedded_c3_by_euler_angle_quadrature():
    # Volume of SO(3) in the Frobenius metric from sqrt(det Gram) of the
    # ZYZ Euler chart, integrated by the midpoint rule; doubled for O(3).
    def chart(angles):
        return Rotation.from_euler("zyz", angles).as_matrix()

    h = 1e-6
    n_b = 400
    bs = (np.arange(n_b) + 0.5) * math.pi / n_b
    vol = 0.0
    for a in (0.4, 2.1):
        for c in (1.3, 5.0):
            for b in bs:
                x = np.array([a, b, c])
                J = np.array([((chart(x + e) - chart(x - e)) / (2 * h)).ravel() for e in h * np.eye(3)])
                vol += math.sqrt(np.linalg.det(J @ J.T))
    vol *= (2 * math.pi) ** 2 * (math.pi / n_b) / 4
    assert haar_volume_od(3) == pytest.approx(2 * vol, rel=1e-4)


def test_entropy_depth_one_is_zero():
    assert entropy(Spectrum.from_values([3.0, 2.0, 0.1]), 1).total == pytest.approx(0, abs=1e-14)


def test_entropy_anchor():
    S = entropy(Spectrum.from_values([2.0, 1.0]), 2)
    assert S.total == pytest.approx(math.log(C2) + 0.5 * math.log(3), rel=1e-14)
    assert S.total == pytest.approx(3.42686, abs=1e-4)
    assert S.constant_part == pytest.approx(math.log(C2))


def test_entropy_coincident_limit():
    s = 1.7
    S = entropy(Spectrum.from_values([s, s]), 2)
    assert S.total == pytest.approx(math.log(C2) + 0.5 * math.log(2 * s), rel=1e-14)


def test_entropy_ponting_shift():
    spec = Spectrum.from_values([2.0, 1.0, 0.5])
    N = 4
    diff = entropy(spec, N, "ponting").total - entropy(spec, N).total
    assert diff == pytest.approx((N - 1) * math.log(haar_volume_od(3, "ponting") / haar_volume_od(3)))


def test_entropy_rank_deficient():
    with pytest.raises(RankDeficient):
        entropy(Spectrum.from_values([1.0, 0.0]), 2)


def test_entropy_of_matrix_frame_invariant(rng):
    X = rng.standard_normal((3, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    assert entropy_of_matrix(X, 3).total == pytest.approx(entropy_of_matrix(Q @ X, 3).total, rel=1e-12)


def test_entropy_infinite_examples():
    e = math.e
    assert entropy_infinite(Spectrum.from_values([e, 1.0])) == pytest.approx(0.5 * math.log((e**2 - 1) / 2))
    assert entropy_infinite(Spectrum.from_values([3.0])) == 0.0
    s = 1.4
    assert entropy_infinite(Spectrum.from_values([s, s])) == pytest.approx(math.log(s))


def test_entropy_gradient_d1_and_coincidence():
    svd = svd_descending(np.array([[2.5]]))
    assert np.array_equal(entropy_gradient(svd, 3), np.zeros((1, 1)))
    with pytest.raises(CoincidentSingularValues):
        entropy_sigma_gradient([2.0, 2.0], 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_entropy_sigma_gradient_matches_fd(d, N, seed):
    rng = np.random.default_rng(seed)
    s = np.sort(rng.uniform(0.5, 3.0, d))[::-1]
    s += np.arange(d)[::-1] * 0.05

    def S(x):
        return entropy(Spectrum.from_values(x), N).total

    h = 1e-5
    fd = np.array([(S(s + h * e) - S(s - h * e)) / (2 * h) for e in np.eye(d)])
    g = entropy_sigma_gradient(s, N)
    assert np.abs(g - fd).max() < 1e-6 * max(1.0, np.abs(g).max())


def test_orbit_volume_formula_examples():
    lam = np.array([1.7, 0.6])
    spec = Spectrum.from_depth_root(lam, 2)
    assert orbit_volume_formula(spec, 2) == pytest.approx(C2 * math.sqrt(np.sum(lam**2)))
    assert orbit_volume_formula(spec, 1) == pytest.approx(1)
    for N in (1, 3, 6):
        assert orbit_volume_formula(Spectrum.from_values([2.0]), N) == pytest.approx(2 ** (N - 1))


def test_orbit_volume_numeric_n2():
    numeric = orbit_volume_numeric(np.diag([4.0, 1.0]), 2, grid=10_000)
    assert numeric == pytest.approx(C2 * math.sqrt(5), rel=1e-6)
    assert numeric == pytest.approx(39.7384, abs=1e-4)


def test_orbit_volume_numeric_n3_coarse():
    numeric = orbit_volume_numeric(np.diag([8.0, 1.0]), 3, grid=120)
    assert numeric == pytest.approx(32 * math.pi**2 * math.sqrt(21), rel=1e-3)


def test_orbit_volume_numeric_unsupported():
    with pytest.raises(UnsupportedDimension):
        orbit_volume_numeric(np.eye(3), 2)


def test_gram_orbit_center():
    G, labels = gram_orbit(center_of_fiber(np.diag([8.0, 1.0]), 3))
    assert labels == [(1, 2, 1), (1, 2, 2)]
    assert np.allclose(G, [[5, -2], [-2, 5]], atol=1e-12)


def test_gram_orbit_gauge_invariant_and_banded():
    W = center_of_fiber(np.diag([27.0, 8.0, 1.0]), 5)
    G, _ = gram_orbit(W)
    moved = gauge_act(GaugeElement.random(5, 3, seed=2), W)
    assert np.allclose(gram_orbit(moved)[0], G, atol=1e-10)
    # Within one (k, l) block, entries two or more steps apart vanish.
    block = G[:4, :4]
    assert np.all(np.abs(block[np.abs(np.subtract.outer(range(4), range(4))) >= 2]) < 1e-12)
    assert np.prod(np.linalg.eigvalsh(block)) == pytest.approx(block_det(3.0 ** (3 / 5), 2.0 ** (3 / 5), 5))

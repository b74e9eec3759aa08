import numpy as np
import pytest

from conftest import triple
from specmap.direct import CauchyData, cauchy_data, forward, model_weyl
from specmap.inverse_contour import (
    ContourGrid, NotInSN, PoleOnContour, build_block_system, check_SN, choose_contour_index,
    inverse_from_cauchy, inverse_solve_multiple, rational_weyl, shift_normalize,
    weyl_hat_on_contour,
)
from specmap.inverse_simple import InverseConfig, epsilon_and_reconstruct
from specmap.spectral_core import GridFunction, SpectralData, model_alpha, model_spectral_data
from specmap.stability import PerturbationScheme, perturb, solution_difference

# q = 0, H = 0 and this h give a double eigenvalue (see test_direct)
RHO_DOUBLE = (4.212392230490661 + 2.2507286116018608j) / (2 * np.pi)
H_DOUBLE = RHO_DOUBLE * np.tan(RHO_DOUBLE * np.pi)


def test_contour_grid():
    g = ContourGrid(3, 64)
    assert np.allclose(np.abs(g.nodes), 2.5, rtol=1e-14, atol=0)
    assert abs(np.sum(g.weights / g.nodes) - 2j * np.pi) < 1e-13     # oint d(theta)/theta
    assert abs(np.sum(g.weights)) < 1e-13
    assert np.sum(np.abs(g.weights)) == pytest.approx(2 * np.pi * 2.5)


def test_weyl_hat_examples():
    g = ContourGrid(2, 64)
    assert np.max(np.abs(weyl_hat_on_contour(model_spectral_data(6), g))) == 0
    g1 = ContourGrid(1, 64)
    S1 = SpectralData(np.array([0.2, 1.0, 2.0]), model_alpha(3))
    lam1 = g1.nodes ** 2
    expect = (1 / np.pi) * (1 / (lam1 - 0.04) - 1 / lam1)
    np.testing.assert_allclose(weyl_hat_on_contour(S1, g1), expect, rtol=1e-13)
    samples = model_weyl(g.nodes) + 0.25
    np.testing.assert_allclose(weyl_hat_on_contour(samples, g), 0.25, atol=1e-12)


def test_rational_remark():
    # full Weyl function of data whose tail is model data, sampled and reduced, equals
    # the rational Laurent-sum difference
    g = ContourGrid(3, 64)
    S = model_spectral_data(10)
    S = S.replace(rho=np.r_[0.3, 1.2 + 0.1j, 1.9, S.rho[3:]], alpha=np.r_[0.4, 0.5j + 0.6, 0.7, S.alpha[3:]])
    lam = g.nodes ** 2
    full = model_weyl(g.nodes) + rational_weyl(S, lam, 3) - rational_weyl(model_spectral_data(3), lam)
    A = build_block_system(S, np.array([1.1]), g, 6, weyl_hat_on_contour(S, g))
    B = build_block_system(S, np.array([1.1]), g, 6, weyl_hat_on_contour(full, g))
    assert np.max(np.abs(A.CC - B.CC)) <= 1e-8


def test_pair_split_weyl_rate():
    P = triple(0.0, H_DOUBLE, 0.0, M=512)
    D = forward(P, 8)
    g = ContourGrid(2, 64)
    diffs = []
    for d in (1e-1, 1e-2):
        S = perturb(D, PerturbationScheme("pair_split", d))
        diffs.append(np.max(np.abs(weyl_hat_on_contour(S, g) - weyl_hat_on_contour(D, g))))
    assert 50 < diffs[0] / diffs[1] < 200          # O(delta^2)


def test_check_SN():
    S = model_spectral_data(6)
    check_SN(S, 3)
    with pytest.raises(PoleOnContour):
        check_SN(S.replace(rho=np.r_[0, 1, 2.5005, S.rho[3:]]), 3)
    with pytest.raises(NotInSN):
        check_SN(S.replace(rho=np.r_[0, 1, 2.6, 2.7, S.rho[4:]]), 3)
    D = SpectralData(np.array([1.0, 1.0, 2.0, 3.0]), np.ones(4), [1, 3, 4], [2, 1, 1])
    with pytest.raises(NotInSN):
        check_SN(D, 1)
    assert choose_contour_index(D) == 2


def test_block_system_trivial_cases():
    g = ContourGrid(2, 32)
    S = model_spectral_data(8)
    bs = build_block_system(S, np.array([0.0, 1.3]), g, 6)
    assert bs.matrix.shape == (2, 32 + 8, 32 + 8)
    eye = np.eye(40)
    np.testing.assert_allclose(bs.matrix[0], eye, atol=0)
    np.testing.assert_allclose(bs.matrix[1], eye, atol=1e-15)
    S2 = S.replace(rho=np.r_[0.2, S.rho[1:]], alpha=np.r_[0.5, S.alpha[1:]])
    bs = build_block_system(S2, np.array([0.0]), g, 6)
    np.testing.assert_allclose(bs.matrix[0], eye, atol=0)
    assert bs.CC.shape == (1, 32, 32) and bs.DD.shape == (1, 8, 8)


def test_model_through_contour():
    r = inverse_solve_multiple(model_spectral_data(12), InverseConfig(n_trunc=12, grid_nodes=64,
                                                                      contour_index=3))
    assert np.max(np.abs(r.q.values)) < 1e-10 and abs(r.h) < 1e-12 and abs(r.H) < 1e-12


@pytest.fixture(scope="module")
def constant_data():
    P = triple(0.5, M=1024)
    return P, forward(P, 30)


def test_pipeline_equivalence(constant_data):
    P, S = constant_data
    cfg = dict(n_trunc=30, grid_nodes=256)
    a = epsilon_and_reconstruct(S, InverseConfig(**cfg))
    b = inverse_solve_multiple(S, InverseConfig(contour_index=2, **cfg))
    assert solution_difference(a, b) <= 1e-3


def test_quadrature_convergence():
    S = model_spectral_data(12)
    S = S.replace(rho=np.r_[0.3 + 0.1j, 1.1, S.rho[2:]], alpha=np.r_[0.35, 0.6 + 0.05j, S.alpha[2:]])
    cfg = dict(n_trunc=12, grid_nodes=64, contour_index=2)
    a = inverse_solve_multiple(S, InverseConfig(contour_nodes=64, **cfg))
    b = inverse_solve_multiple(S, InverseConfig(contour_nodes=128, **cfg))
    assert np.max(np.abs(a.epsilon.values - b.epsilon.values)) <= 1e-6


def test_shift_normalize():
    S = model_spectral_data(5)
    same, c = shift_normalize(S, 0)
    assert same is S and c == 0
    moved, c = shift_normalize(S.replace(rho=np.sqrt(np.arange(5) ** 2 + 1.0)), np.pi / 2)
    assert c == pytest.approx(1)
    np.testing.assert_allclose(moved.rho ** 2, np.arange(5) ** 2, atol=1e-12)
    np.testing.assert_array_equal(moved.alpha, S.alpha)


def test_constant_one_recovered():
    P = triple(1.0, M=1024)
    r = inverse_solve_multiple(forward(P, 20), InverseConfig(n_trunc=20, grid_nodes=128,
                                                             contour_index=2))
    assert r.error_to(P.q, 0, 0) < 1e-8


def test_double_eigenvalue_roundtrip():
    P = triple(0.0, H_DOUBLE, 0.0, M=1024)
    S = forward(P, 30)
    assert not S.is_simple
    r = inverse_solve_multiple(S, InverseConfig(n_trunc=30, grid_nodes=512, contour_index=2))
    assert abs(r.h - H_DOUBLE) < 0.02 and abs(r.H) < 0.02
    # same truncation-limited accuracy as simple data with comparable boundary constants
    assert r.error_to(P.q, P.h, P.H) < 0.25


def test_pair_split_reconstructions_converge():
    P = triple(0.0, H_DOUBLE, 0.0, M=512)
    D = forward(P, 16)
    cfg = InverseConfig(n_trunc=16, grid_nodes=128, contour_index=2)
    base = inverse_solve_multiple(D, cfg)
    d2 = solution_difference(base, inverse_solve_multiple(perturb(D, PerturbationScheme("pair_split", 1e-2)), cfg))
    d3 = solution_difference(base, inverse_solve_multiple(perturb(D, PerturbationScheme("pair_split", 1e-3)), cfg))
    assert 30 < d2 / d3 < 300


# -- Cauchy pipeline -----------------------------------------------------------------

def test_cauchy_zero():
    z = GridFunction.constant(0, 256)
    r = inverse_from_cauchy(CauchyData(z, z, 0, 0), InverseConfig(n_trunc=12, grid_nodes=64))
    assert np.max(np.abs(r.q.values)) < 1e-8 and abs(r.h) < 1e-10 and abs(r.H) < 1e-10


def test_cauchy_matches_spectral_route():
    # h = 1 alone: both routes share the same truncation error
    P = triple(0.0, 1.0, 0.0, M=1024)
    cfg = InverseConfig(n_trunc=30, grid_nodes=256)
    a = inverse_from_cauchy(cauchy_data(P, 64), cfg)
    b = epsilon_and_reconstruct(forward(P, 30), cfg)
    assert solution_difference(a, b) < 1e-3


def test_cauchy_roundtrip():
    P = triple(lambda x: 0.4 * np.cos(x), 0.1, 0.2, M=1024)
    r = inverse_from_cauchy(cauchy_data(P, 64), InverseConfig(n_trunc=30, grid_nodes=512))
    assert r.error_to(P.q, P.h, P.H) <= 5e-2

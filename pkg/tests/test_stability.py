import json

import numpy as np
import pytest

from conftest import triple
from specmap.direct import forward
from specmap.spectral_core import SetSpec, SpectralData, model_spectral_data
from specmap.stability import (
    MIN_DISTANCE, NoDoubleEigenvalue, PerturbationScheme, StabilityReport, StabilityRow,
    SweepConfig, lipschitz_sweep, perturb, residual_check,
)
from specmap.spectral_core import InvalidArgument

DOUBLE = SpectralData(np.array([1.0, 1.0, 2.0, 3.0]), np.array([1.0, 2.0, 2 / np.pi, 2 / np.pi]),
                      [1, 3, 4], [2, 1, 1])


@pytest.mark.parametrize("kind", ["gaussian_tail", "single_entry", "alpha_degenerate"])
def test_zero_magnitude_is_identity(kind):
    S = model_spectral_data(8)
    assert perturb(S, PerturbationScheme(kind, 0.0)) is S


def test_pair_split_values():
    # lambda_1 = lambda_2 = 1, alpha = (1, 2): a = 1, c = 1
    lit = perturb(DOUBLE, PerturbationScheme("pair_split", 0.1, printed=True))
    np.testing.assert_allclose((lit.rho[:2] ** 2).real, [1.1, 0.91], rtol=1e-14)
    np.testing.assert_allclose(lit.alpha[:2], [10, -10], rtol=1e-14)
    assert lit.is_simple
    cor = perturb(DOUBLE, PerturbationScheme("pair_split", 0.1))
    np.testing.assert_allclose(cor.alpha[:2], [11, -10], rtol=1e-14)
    # residue sum at the pair stays alpha_1
    assert cor.alpha[0] + cor.alpha[1] == pytest.approx(DOUBLE.alpha[0])


def test_pair_split_needs_double():
    with pytest.raises(NoDoubleEigenvalue):
        perturb(model_spectral_data(5), PerturbationScheme("pair_split", 0.1))


def test_single_entry_touches_one():
    S = model_spectral_data(8)
    T = perturb(S, PerturbationScheme("single_entry", 1e-3, index=5))
    d = np.flatnonzero(T.rho != S.rho)
    assert d.tolist() == [4] and T.rho[4] == pytest.approx(4.001)
    np.testing.assert_array_equal(T.alpha, S.alpha)
    with pytest.raises(InvalidArgument):
        perturb(S, PerturbationScheme("single_entry", 1e-3, index=9))


def test_alpha_degenerate():
    S = model_spectral_data(6)
    T = perturb(S, PerturbationScheme("alpha_degenerate", 1.0, index=3))
    assert T.alpha[2] == 0


def test_gaussian_seed_determinism():
    S = model_spectral_data(10)
    a = perturb(S, PerturbationScheme("gaussian_tail", 1e-2, seed=3))
    b = perturb(S, PerturbationScheme("gaussian_tail", 1e-2, seed=3))
    c = perturb(S, PerturbationScheme("gaussian_tail", 1e-2, seed=4))
    np.testing.assert_array_equal(a.rho, b.rho)
    np.testing.assert_array_equal(a.alpha, b.alpha)
    assert np.any(a.rho != c.rho)
    assert np.all(a.rho.imag == 0)     # real rho stays real


def test_bad_scheme():
    with pytest.raises(InvalidArgument):
        PerturbationScheme("nope", 0.1)
    with pytest.raises(InvalidArgument):
        PerturbationScheme("gaussian_tail", -1.0)


def test_residual_of_model_is_zero():
    P = triple(0.0, M=256)
    S = model_spectral_data(10)
    # only the central difference in rho (step 1e-5) is left
    assert residual_check(P, S, 10, [0.0, np.pi / 2, np.pi]) < 1e-8


def test_residual_of_forward_data():
    P = triple(lambda x: 0.4 * np.cos(x), 0.1, 0.2, M=1024)
    S = forward(P, 60)
    assert residual_check(P, S, 20, np.linspace(0, np.pi, 9)) < 1e-4


def test_residual_nodes_must_be_on_grid():
    with pytest.raises(InvalidArgument):
        residual_check(triple(0.0, M=64), model_spectral_data(10), 5, [0.1234])


@pytest.fixture(scope="module")
def small_sweep():
    P = triple(lambda x: 0.3 * np.cos(2 * x) + 0.1, 0.1, -0.1, M=512)
    cfg = SweepConfig(n_trunc=12, grid_nodes=128, seeds=(0, 1),
                      sets=[SetSpec("V_Omega_delta", Omega=1.0, delta=0.2)])
    return lipschitz_sweep(P, PerturbationScheme("gaussian_tail", 0.0), [1e-3, 1e-2], cfg)


def test_sweep_ratios(small_sweep):
    assert len(small_sweep.rows) == 4 and small_sweep.distance_kind == "d"
    assert small_sweep.spread() < 10
    d = [r.distance for r in small_sweep.rows]
    assert d == sorted(d)


def test_sweep_csv_json(small_sweep):
    lines = small_sweep.to_csv().splitlines()
    assert lines[0] == "magnitude,distance,difference,ratio,member_flags,inv_norm"
    assert len(lines) == 5
    assert all(r.member_flags.startswith("V_Omega_delta:") for r in small_sweep.rows)
    back = json.loads(json.dumps(small_sweep.to_json()))
    assert back["rows"][0]["ratio"] == small_sweep.rows[0].ratio


def test_ratio_guard():
    rep = StabilityReport([StabilityRow(1e-3, 0, 1e-12, 1e-9, None, "", 1.0),
                           StabilityRow(1e-3, 1, 1e-3, 2e-3, 2.0, "", 1.0)])
    assert rep.ratios().tolist() == [2.0] and rep.spread() == 1.0
    assert MIN_DISTANCE == 1e-10
    assert ",,\n" in rep.to_csv() or rep.to_csv().splitlines()[1].split(",")[3] == ""


def test_sweep_records_failures():
    # a zero weight makes the main equation singular; the row carries the error
    S = model_spectral_data(8)
    rep = lipschitz_sweep(S, PerturbationScheme("alpha_degenerate", 0.0, index=3), [1.0],
                          SweepConfig(n_trunc=8, grid_nodes=32))
    assert rep.rows[0].ratio is None and rep.rows[0].error.startswith("SingularSystem")

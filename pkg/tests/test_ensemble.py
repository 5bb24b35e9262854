"""Wave functions, log-permanents, and the N-particle Hamiltonian."""

import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from torus_ma import (
    EnsembleSpec,
    c_potential,
    cost,
    hamiltonian,
    lattice_points,
    log_permanent,
    wave_function,
)
from torus_ma.ensemble import _perm_subset_dp, _popcount_table, log_wave_matrix
from torus_ma.errors import InvalidInput, NonFinite, OversizeMatrix, SizeMismatch


def _wave_oracle(k, p, x, M=30):
    """Brute-force lattice sum, independent of the library's truncation."""
    m = np.arange(-M, M + 1)
    return float(np.sum(np.exp(-0.5 * k * (x - p - m) ** 2)))


def _perm_oracle_log(L):
    """Naive permanent over all N! permutations, in log domain."""
    N = L.shape[0]
    terms = [sum(L[i, s[i]] for i in range(N)) for s in itertools.permutations(range(N))]
    return float(logsumexp(terms))


def test_wave_function_values():
    assert wave_function(1, [0.0], [0.0]) == pytest.approx(_wave_oracle(1, 0, 0), rel=1e-14)
    assert wave_function(1, [0.0], [0.0]) == pytest.approx(2.5066282879, rel=1e-9)
    # two nearest lattice points dominate at the antipode
    assert wave_function(16, [0.0], [0.5]) == pytest.approx(
        _wave_oracle(16, 0, 0.5), rel=1e-14
    )
    assert wave_function(16, [0.0], [0.5]) == pytest.approx(0.2706705969, rel=1e-9)


def test_wave_function_against_oracle_sweep():
    rng = np.random.default_rng(0)
    for k in (1, 2, 7, 16, 64):
        for _ in range(20):
            p = rng.random()
            x = rng.uniform(-2, 3)
            assert wave_function(k, [p], [x]) == pytest.approx(
                _wave_oracle(k, p, x), rel=1e-13
            )


def test_wave_function_translation_covariance():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p, x = rng.random(2)
        assert wave_function(4, [p], [x]) == pytest.approx(
            wave_function(4, [0.0], [x - p]), rel=1e-14
        )


def test_wave_function_separable_2d():
    v = wave_function(4, [0.2, 0.7], np.array([0.5, 0.1]))
    assert v == pytest.approx(_wave_oracle(4, 0.2, 0.5) * _wave_oracle(4, 0.7, 0.1), rel=1e-13)


def test_wave_function_validation():
    with pytest.raises(InvalidInput):
        wave_function(0, [0.0], [0.0])
    with pytest.raises(InvalidInput):
        wave_function(1, [0.0, 0.0], [0.0])


def test_c_potential_bounds():
    rng = np.random.default_rng(2)
    for _ in range(200):
        k = int(rng.integers(1, 33))
        p, x = rng.random(2)
        assert c_potential(k, [p], [x]) <= cost(np.array([x]), np.array([p])) + 1e-14
    assert c_potential(1, [0.0], [0.0]) == pytest.approx(-math.log(2.5066282879), rel=1e-9)


def test_c_potential_uniform_convergence():
    G = 256
    x = (np.arange(G) / G)[:, None]
    exact = 0.5 * np.minimum(np.abs(x[:, 0] - 0.3), 1 - np.abs(x[:, 0] - 0.3)) ** 2
    prev = np.inf
    for k in (2, 4, 8, 16, 32):
        err = float(np.max(np.abs(c_potential(k, [0.3], x) - exact)))
        assert err <= 2.0 / k
        assert err <= prev + 1e-12
        prev = err
    assert prev <= 0.07  # k=32 bound


def test_log_permanent_small_cases():
    assert log_permanent(np.log([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(math.log(10))
    assert log_permanent(np.zeros((4, 4))) == pytest.approx(math.log(24))
    assert log_permanent(np.zeros((1, 1))) == pytest.approx(0.0)


def test_log_permanent_wide_dynamic_range():
    rng = np.random.default_rng(3)
    for _ in range(20):
        L = rng.uniform(-50, 50, (6, 6))
        assert abs(log_permanent(L) - _perm_oracle_log(L)) <= 1e-10


def test_log_permanent_large_n_paths_agree():
    # the Gray-code path (N > 12) against the cancellation-free recursion
    rng = np.random.default_rng(4)
    L = rng.uniform(-3, 3, (13, 13))
    direct = log_permanent(L)
    r = L.max(axis=1)
    dp = math.log(_perm_subset_dp(np.exp(L - r[:, None]), _popcount_table(13))) + r.sum()
    assert direct == pytest.approx(dp, rel=1e-11)


def test_log_permanent_validation():
    with pytest.raises(OversizeMatrix):
        log_permanent(np.zeros((23, 23)))
    with pytest.raises(NonFinite):
        log_permanent(np.array([[0.0, -np.inf], [0.0, 0.0]]))
    with pytest.raises(InvalidInput):
        log_permanent(np.zeros((2, 3)))


def test_lattice_points_layout():
    pts = lattice_points(4, 1)
    assert np.array_equal(pts[:, 0], np.arange(4) / 4)
    pts2 = lattice_points(3, 2)
    assert pts2.shape == (9, 2)
    assert np.array_equal(np.unique(pts2[:, 0]), np.arange(3) / 3)


def test_ensemble_spec_lattice_and_json():
    spec = EnsembleSpec.lattice(4, 1, beta=1.5)
    assert spec.N == 4
    spec2d = EnsembleSpec.lattice(3, 2)
    assert spec2d.N == 9
    back = EnsembleSpec.from_json(spec.to_json())
    assert back.k == spec.k and back.beta == spec.beta
    assert np.array_equal(back.points, spec.points)


def test_hamiltonian_values_and_symmetry():
    spec1 = EnsembleSpec(1, 1, 1.0, np.array([[0.0]]))
    assert hamiltonian(np.array([[0.0]]), spec1) == pytest.approx(
        -math.log(_wave_oracle(1, 0, 0)), rel=1e-12
    )
    rng = np.random.default_rng(5)
    spec = EnsembleSpec.lattice(4, 1)
    cfg = rng.random((4, 1))
    h = hamiltonian(cfg, spec)
    for perm in itertools.permutations(range(4)):
        assert hamiltonian(cfg[list(perm)], spec) == pytest.approx(h, rel=1e-13)


def test_hamiltonian_normalized_boundedness():
    rng = np.random.default_rng(6)
    for k in (2, 4):
        spec = EnsembleSpec.lattice(k, 1)
        for _ in range(50):
            h = hamiltonian(rng.random((k, 1)), spec) / k
            assert -1.0 <= h <= 1.0


def test_log_wave_matrix_shape_mismatch():
    spec = EnsembleSpec.lattice(4, 1)
    with pytest.raises(SizeMismatch):
        log_wave_matrix(spec, np.zeros((3, 1)))

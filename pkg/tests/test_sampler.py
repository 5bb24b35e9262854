"""Metropolis sampling, exact marginals, and the zero-temperature MGF."""

import math
import warnings

import numpy as np
import pytest
from scipy.stats import chi2

from torus_ma import (
    ChainParams,
    DiscreteMeasure,
    EnsembleSpec,
    GridField,
    empirical_measure,
    log_density_unnormalized,
    marginal_phi_exact,
    mcmc_sample,
    mean_empirical,
    mgf_zero_temp,
    project_cconvex,
    transport_potential_estimate,
    wave_function,
    xi,
)
from torus_ma.errors import (
    BetaZero,
    EmptySampleSet,
    InvalidInput,
    NonErgodicWarning,
    UnsupportedSize,
)
from torus_ma.sampler import SampleSet


def _cosine_mu0(G):
    x = np.arange(G) / G
    return DiscreteMeasure.from_grid_density(GridField(1, G, 1.0 + 0.5 * np.cos(2 * np.pi * x)))


def test_chain_params_validation():
    with pytest.raises(InvalidInput):
        ChainParams(n_steps=10, burn_in=10)
    with pytest.raises(InvalidInput):
        ChainParams(n_steps=10, thin=0)
    with pytest.raises(InvalidInput):
        ChainParams(n_steps=10, proposal_sigma=0.7)
    with pytest.raises(InvalidInput):
        ChainParams(n_steps=10, n_chains=0)


def test_log_density_examples():
    spec0 = EnsembleSpec.lattice(4, 1, beta=0.0)
    cfg = np.random.default_rng(0).random((4, 1))
    assert log_density_unnormalized(cfg, spec0) == 0.0  # uniform mu0, beta=0
    spec1 = EnsembleSpec(1, 1, 1.0, np.array([[0.0]]))
    assert log_density_unnormalized(np.array([[0.0]]), spec1) == pytest.approx(
        math.log(wave_function(1, [0.0], [0.0])), rel=1e-12
    )


def test_log_density_exchange_symmetry():
    rng = np.random.default_rng(1)
    spec = EnsembleSpec.lattice(4, 1, beta=1.3, mu0=_cosine_mu0(64))
    cfg = rng.random((4, 1))
    base = log_density_unnormalized(cfg, spec)
    for _ in range(10):
        perm = rng.permutation(4)
        assert log_density_unnormalized(cfg[perm], spec) == base


def test_mcmc_deterministic_given_seed():
    spec = EnsembleSpec.lattice(4, 1, beta=1.0)
    params = ChainParams(n_steps=4000, burn_in=1000, thin=5, seed=11, n_chains=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonErgodicWarning)
        a = mcmc_sample(spec, params)
        b = mcmc_sample(spec, params)
    assert np.array_equal(a.configurations, b.configurations)
    assert a.acceptance_rate == b.acceptance_rate


def test_mcmc_uniform_ensemble_warns_high_acceptance():
    # the beta-deformation is very weak at small k: acceptance ~ 1 by design
    spec = EnsembleSpec.lattice(4, 1, beta=1.0)
    params = ChainParams(n_steps=4000, burn_in=1000, seed=0)
    with pytest.warns(NonErgodicWarning):
        mcmc_sample(spec, params)


def test_mcmc_beta_zero_uniformity_chi2():
    spec = EnsembleSpec.lattice(4, 1, beta=0.0)
    params = ChainParams(n_steps=25_050_000, burn_in=50_000, thin=1000, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonErgodicWarning)
        samples = mcmc_sample(spec, params)
    pts = samples.configurations.reshape(-1)
    assert len(pts) == 100_000
    counts = np.bincount((pts * 32).astype(int) % 32, minlength=32)
    expected = len(pts) / 32
    stat = float(np.sum((counts - expected) ** 2 / expected))
    assert stat < chi2.ppf(0.999, 31)


def test_mcmc_nonuniform_mu0_targets_density():
    G = 16
    mu0 = _cosine_mu0(64)
    spec = EnsembleSpec.lattice(4, 1, beta=0.0, mu0=mu0)
    params = ChainParams(n_steps=2_050_000, burn_in=50_000, thin=100, seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonErgodicWarning)
        samples = mcmc_sample(spec, params)
    mean = mean_empirical(samples, G)
    x = np.arange(G) / G
    target = 1.0 + 0.5 * np.cos(2 * np.pi * x)
    target /= target.sum()
    assert np.max(np.abs(mean.cell_masses() - target)) <= 0.015


def test_mcmc_rejects_mu0_in_2d():
    mu0 = DiscreteMeasure.uniform(2, 16)
    spec = EnsembleSpec.lattice(2, 2, beta=1.0, mu0=mu0)
    with pytest.raises(UnsupportedSize):
        mcmc_sample(spec, ChainParams(n_steps=100))


def test_empirical_measure():
    mu = empirical_measure(np.array([[0.2], [0.7]]))
    assert np.array_equal(mu.atom_points, [[0.2], [0.7]])
    assert np.allclose(mu.atom_weights, 0.5)
    single = empirical_measure(np.array([[0.4]]))
    assert single.total_mass() == 1.0


def test_mean_empirical_binning():
    spec = EnsembleSpec.lattice(2, 1, beta=0.0)
    cfgs = np.array([[[0.2], [0.7]]])
    samples = SampleSet(cfgs, 0.5, spec)
    mean = mean_empirical(samples, 10)
    masses = mean.cell_masses()
    assert masses[2] == pytest.approx(0.5) and masses[7] == pytest.approx(0.5)
    with pytest.raises(EmptySampleSet):
        mean_empirical(SampleSet(np.empty((0, 2, 1)), 0.0, spec), 10)


def test_marginal_phi_exact_n1_closed_form():
    G = 64
    spec = EnsembleSpec(1, 1, 1.0, np.array([[0.0]]))
    phi = marginal_phi_exact(spec, G)
    nodes = (np.arange(G) / G)[:, None]
    psi = wave_function(1, [0.0], nodes)
    expected = np.log(psi) - np.log(np.mean(psi))
    assert np.max(np.abs(phi.values - expected)) <= 1e-12


def test_marginal_phi_exact_is_probability_density():
    G = 48
    spec = EnsembleSpec.lattice(3, 1, beta=1.0, mu0=_cosine_mu0(48))
    phi = marginal_phi_exact(spec, G)
    dens = spec.mu0.grid.values
    assert np.mean(np.exp(spec.beta * phi.values) * dens) / np.mean(dens) == pytest.approx(
        1.0, abs=1e-10
    )


def test_marginal_phi_exact_cconvex_and_lipschitz():
    G = 48
    spec = EnsembleSpec.lattice(3, 1, beta=1.0, mu0=_cosine_mu0(48))
    phi = marginal_phi_exact(spec, G)
    centered = phi.values - phi.values.mean()
    proj = project_cconvex(phi.with_values(centered))
    assert np.max(np.abs(proj.values - centered)) <= 1e-6
    x = np.arange(G) / G
    d = np.abs(x[:, None] - x[None, :])
    d = np.minimum(d, 1 - d)
    assert np.max(np.abs(phi.values[:, None] - phi.values[None, :]) - d - 2.0 / G) <= 0


def test_marginal_phi_uniform_lattice_vanishes():
    # translation symmetry: the marginal of the lattice ensemble w.r.t. dx is flat
    spec = EnsembleSpec.lattice(3, 1, beta=1.0)
    phi = marginal_phi_exact(spec, 48)
    assert np.max(np.abs(phi.values - phi.values.mean())) <= 1e-10


def test_marginal_phi_validation():
    with pytest.raises(BetaZero):
        marginal_phi_exact(EnsembleSpec.lattice(2, 1, beta=0.0), 32)
    with pytest.raises(UnsupportedSize):
        marginal_phi_exact(EnsembleSpec.lattice(5, 1, beta=1.0), 32)
    with pytest.raises(UnsupportedSize):
        marginal_phi_exact(EnsembleSpec.lattice(2, 2, beta=1.0), 32)


def test_transport_potential_lattice_vanishes():
    spec = EnsembleSpec.lattice(4, 1, beta=1.0)
    phi_k, phi_n = transport_potential_estimate(spec, 48)
    assert np.max(np.abs(phi_k.values)) <= 1e-8
    assert np.max(np.abs(phi_n.values)) <= 1e-8


def test_transport_potential_n1_cconvex():
    spec = EnsembleSpec(1, 2, 1.0, np.array([[0.3]]))
    phi_k, _ = transport_potential_estimate(spec, 128)
    proj = project_cconvex(phi_k)
    assert np.max(np.abs(proj.values - phi_k.values)) <= 1e-6


def test_mgf_zero_temp_closed_form():
    G = 512
    phi0 = GridField.zeros(1, G)
    closed = math.log(math.factorial(8)) / 64 + math.log(2 * math.pi / 8) / 16
    assert mgf_zero_temp(8, phi0) == pytest.approx(closed, abs=1e-9)
    # constants shift the value exactly
    a = 0.37
    shifted = mgf_zero_temp(8, phi0.with_values(np.full(G, a)))
    assert shifted == pytest.approx(mgf_zero_temp(8, phi0) + a, abs=1e-12)


def test_mgf_gap_monotone_three_potentials():
    G = 512
    x = np.arange(G) / G
    for v in (
        np.zeros(G),
        0.2 * np.cos(2 * np.pi * x),
        0.1 * np.sin(2 * np.pi * x) + 0.05 * np.cos(4 * np.pi * x),
    ):
        phi = GridField(1, G, v)
        target = xi(phi.with_values(-v))
        gaps = [abs(mgf_zero_temp(k, phi) - target) for k in (8, 16, 32, 64)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_mgf_validation():
    with pytest.raises(UnsupportedSize):
        mgf_zero_temp(128, GridField.zeros(1, 1024))
    with pytest.raises(InvalidInput):
        mgf_zero_temp(32, GridField.zeros(1, 128))
    with pytest.raises(UnsupportedSize):
        mgf_zero_temp(2, GridField.zeros(2, 64))

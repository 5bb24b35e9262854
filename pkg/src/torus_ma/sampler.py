"""Sampling the beta-deformed permanental ensembles.

Single-site Metropolis chains over configurations (x_1..x_N) with density
proportional to perm(Psi_{p_i}(x_j))^{beta/k} times prod_j mu0(x_j), plus
exact small-N marginal potentials by nested quadrature and the
zero-temperature moment generating function, which factorizes over the
wave-function centers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import (
    BetaZero,
    EmptySampleSet,
    InvalidInput,
    NonErgodicWarning,
    UnsupportedSize,
)
from .ensemble import (
    EnsembleSpec,
    _gray_schedule,
    _lattice_log_sum,
    _ryser,
    _trunc_terms,
    log_permanent,
    log_wave_matrix,
)
from .torus_core import DiscreteMeasure, GridField

__all__ = [
    "ChainParams",
    "SampleSet",
    "log_density_unnormalized",
    "mcmc_sample",
    "empirical_measure",
    "mean_empirical",
    "marginal_phi_exact",
    "transport_potential_estimate",
    "mgf_zero_temp",
]


@dataclass
class ChainParams:
    """Metropolis chain schedule; proposal_sigma defaults to 1/(2k)."""

    n_steps: int
    burn_in: int = 0
    thin: int = 1
    proposal_sigma: float | None = None
    seed: int = 0
    n_chains: int = 1

    def __post_init__(self):
        if not (self.n_steps > self.burn_in >= 0):
            raise InvalidInput("need n_steps > burn_in >= 0")
        if self.thin < 1 or self.n_chains < 1:
            raise InvalidInput("thin and n_chains must be >= 1")
        if self.proposal_sigma is not None and not (0 < self.proposal_sigma <= 0.5):
            raise InvalidInput("proposal_sigma must lie in (0, 0.5]")


@dataclass
class SampleSet:
    """Post-burn-in, thinned states pooled over chains (chain-major order)."""

    configurations: np.ndarray = field(repr=False)  # (n_samples, N, n)
    acceptance_rate: float
    spec: EnsembleSpec
    seed: int = 0

    def __len__(self):
        return len(self.configurations)


def log_density_unnormalized(config, spec: EnsembleSpec) -> float:
    """(beta/k) log perm(Psi_{p_i}(x_j)) + sum_j log mu0-density(x_j)."""
    config = np.atleast_2d(np.asarray(config, dtype=float))
    base = float(np.sum(spec.log_mu0_density(config)))
    if spec.beta == 0:
        return base
    return spec.beta / spec.k * log_permanent(log_wave_matrix(spec, config)) + base


# ---------------------------------------------------------------------------
# Metropolis kernel (numba)


@numba.njit(cache=True)
def _logpsi_point(k, p, x, M):
    v = 0.0
    for a in range(p.shape[0]):
        t = x[a] - p[a]
        t -= round(t)
        v += _lattice_log_sum(k, t, M)
    return v


@numba.njit(cache=True)
def _log_perm_nb(L, jseq, sseq, AT):
    N = L.shape[0]
    rtot = 0.0
    for i in range(N):
        r = L[i, 0]
        for j in range(1, N):
            if L[i, j] > r:
                r = L[i, j]
        for j in range(N):
            AT[j, i] = math.exp(L[i, j] - r)
        rtot += r
    return rtot + math.log(_ryser(AT, jseq, sseq))


@numba.njit(cache=True)
def _chain_kernel(
    points, x, k, beta, M, jseq, sseq, sites, prop, logu, mu0_logvals, burn_in, thin, out
):
    """One Metropolis chain; returns the number of accepted moves.

    mu0_logvals is the log-density on a uniform grid (linear interpolation),
    or an empty array for the uniform background measure.
    """
    N, n = x.shape
    n_steps = sites.shape[0]
    use_perm = beta != 0.0
    use_mu0 = mu0_logvals.shape[0] > 0
    G0 = mu0_logvals.shape[0]

    L = np.empty((N, N))
    AT = np.empty((N, N))
    if use_perm:
        for i in range(N):
            for j in range(N):
                L[i, j] = _logpsi_point(k, points[i], x[j], M)
        lp = _log_perm_nb(L, jseq, sseq, AT)
    else:
        lp = 0.0

    logmu = np.zeros(N)
    if use_mu0:
        for j in range(N):
            t = x[j, 0] * G0
            i0 = int(t) % G0
            f = t - int(t)
            logmu[j] = (1 - f) * mu0_logvals[i0] + f * mu0_logvals[(i0 + 1) % G0]

    newcol = np.empty(N)
    oldcol = np.empty(N)
    xnew = np.empty(n)
    accepted = 0
    kept = 0
    for t in range(n_steps):
        j = sites[t]
        for a in range(n):
            v = x[j, a] + prop[t, a]
            xnew[a] = v - math.floor(v)
        dlog = 0.0
        newmu = 0.0
        if use_mu0:
            tt = xnew[0] * G0
            i0 = int(tt) % G0
            f = tt - int(tt)
            newmu = (1 - f) * mu0_logvals[i0] + f * mu0_logvals[(i0 + 1) % G0]
            dlog += newmu - logmu[j]
        if use_perm:
            for i in range(N):
                oldcol[i] = L[i, j]
                newcol[i] = _logpsi_point(k, points[i], xnew, M)
                L[i, j] = newcol[i]
            lp_new = _log_perm_nb(L, jseq, sseq, AT)
            dlog += beta / k * (lp_new - lp)
        if logu[t] < dlog:
            accepted += 1
            for a in range(n):
                x[j, a] = xnew[a]
            if use_mu0:
                logmu[j] = newmu
            if use_perm:
                lp = lp_new
        elif use_perm:
            for i in range(N):
                L[i, j] = oldcol[i]
        if t >= burn_in and (t - burn_in) % thin == 0:
            for jj in range(N):
                for a in range(n):
                    out[kept, jj, a] = x[jj, a]
            kept += 1
    return accepted


def mcmc_sample(spec: EnsembleSpec, params: ChainParams) -> SampleSet:
    """Single-site Metropolis with wrapped-Gaussian proposals.

    Deterministic given the seed: chain c uses a counter-based Philox stream
    keyed by (seed, c), and all chain outputs are concatenated in chain
    order, so results do not depend on scheduling.
    """
    if spec.mu0 is not None and spec.n != 1:
        raise UnsupportedSize("non-uniform mu0 sampling is implemented for n=1 only")
    sigma = params.proposal_sigma if params.proposal_sigma is not None else 1.0 / (2 * spec.k)
    M = _trunc_terms(spec.k)
    jseq, sseq = _gray_schedule(spec.N)
    mu0_logvals = (
        np.log(spec.mu0.grid.values) if spec.mu0 is not None else np.empty(0)
    )
    n_kept = (params.n_steps - params.burn_in + params.thin - 1) // params.thin
    all_out = []
    total_accept = 0
    for c in range(params.n_chains):
        rng = np.random.Generator(np.random.Philox(key=np.array(
            [params.seed, c], dtype=np.uint64)))
        x = rng.random((spec.N, spec.n))
        sites = rng.integers(0, spec.N, params.n_steps)
        prop = rng.normal(0.0, sigma, (params.n_steps, spec.n))
        logu = np.log(rng.random(params.n_steps))
        out = np.empty((n_kept, spec.N, spec.n))
        total_accept += _chain_kernel(
            spec.points,
            x,
            spec.k,
            float(spec.beta),
            M,
            jseq,
            sseq,
            sites,
            prop,
            logu,
            mu0_logvals,
            params.burn_in,
            params.thin,
            out,
        )
        all_out.append(out)
    rate = total_accept / (params.n_steps * params.n_chains)
    if rate < 0.01 or rate > 0.99:
        warnings.warn(
            "acceptance rate %.4f outside [0.01, 0.99]; chain may mix poorly" % rate,
            NonErgodicWarning,
        )
    return SampleSet(np.concatenate(all_out), rate, spec, params.seed)


def empirical_measure(config) -> DiscreteMeasure:
    """delta^(N): N atoms of weight 1/N at the configuration's points."""
    return DiscreteMeasure.from_atoms(np.atleast_2d(np.asarray(config, dtype=float)))


def mean_empirical(samples: SampleSet, resolution: int = 64) -> DiscreteMeasure:
    """Average of the empirical measures, binned to a grid density.

    Points are assigned to the cell of the nearest grid node, matching the
    binning convention of the Monge-Ampere pushforward.
    """
    if len(samples) == 0:
        raise EmptySampleSet("no configurations to average")
    G = resolution
    n = samples.spec.n
    pts = samples.configurations.reshape(-1, n)
    idx = np.round(pts * G).astype(np.int64) % G
    flat = idx[:, 0] if n == 1 else idx[:, 0] * G + idx[:, 1]
    counts = np.bincount(flat, minlength=G**n).astype(float)
    density = counts / counts.sum() * G**n
    return DiscreteMeasure.from_grid_density(GridField(n, G, density.reshape((G,) * n)))


# ---------------------------------------------------------------------------
# exact small-N marginals


@numba.njit(cache=True)
def _perm_small(A, N):
    if N == 1:
        return A[0, 0]
    if N == 2:
        return A[0, 0] * A[1, 1] + A[0, 1] * A[1, 0]
    if N == 3:
        return (
            A[0, 0] * (A[1, 1] * A[2, 2] + A[1, 2] * A[2, 1])
            + A[0, 1] * (A[1, 0] * A[2, 2] + A[1, 2] * A[2, 0])
            + A[0, 2] * (A[1, 0] * A[2, 1] + A[1, 1] * A[2, 0])
        )
    # N == 4: expansion along the first row into 3x3 permanental minors
    total = 0.0
    B = np.empty((3, 3))
    for c in range(4):
        r = 0
        for i in range(1, 4):
            s = 0
            for j in range(4):
                if j != c:
                    B[i - 1, s] = A[i, j]
                    s += 1
        r = (
            B[0, 0] * (B[1, 1] * B[2, 2] + B[1, 2] * B[2, 1])
            + B[0, 1] * (B[1, 0] * B[2, 2] + B[1, 2] * B[2, 0])
            + B[0, 2] * (B[1, 0] * B[2, 1] + B[1, 1] * B[2, 0])
        )
        total += A[0, c] * r
    return total


@numba.njit(cache=True)
def _marginal_kernel(W, mu0w, expo, out):
    """out[g1] = sum over (g2..gN) of perm(W[:, g_j])^expo * prod_{j>=2} mu0w[g_j].

    W has shape (N, G) with W[i, g] = Psi_{p_i}(g/G); mu0w[g] is the
    quadrature weight density(g)/G of node g.
    """
    N, G = W.shape
    A = np.empty((N, N))
    total = G ** (N - 1)
    for flat in range(total):
        rem = flat
        w = 1.0
        for j in range(1, N):
            g = rem % G
            rem //= G
            w *= mu0w[g]
            for i in range(N):
                A[i, j] = W[i, g]
        for g1 in range(G):
            for i in range(N):
                A[i, 0] = W[i, g1]
            p = _perm_small(A, N)
            out[g1] += p**expo * w


def _log_wave_nodes(k, p, nodes):
    from .ensemble import log_wave_function

    return log_wave_function(k, np.array([p]), nodes)


def _marginal_setup(spec: EnsembleSpec, G: int):
    if spec.n != 1 or spec.N > 4:
        raise UnsupportedSize("exact marginals require n=1 and N <= 4")
    nodes = (np.arange(G) / G)[:, None]
    W = np.empty((spec.N, G))
    for i in range(spec.N):
        W[i] = np.exp(_log_wave_nodes(spec.k, spec.points[i, 0], nodes))
    dens = spec.mu0.grid.interpolate(nodes) if spec.mu0 is not None else np.ones(G)
    mu0w = dens / G
    return W, mu0w, dens


def marginal_phi_exact(spec: EnsembleSpec, G: int) -> GridField:
    """phi_N = (1/beta) log of the first-marginal density w.r.t. mu0.

    Exact up to quadrature: all N-1 inner integrals and the normalizer use
    the same G-node product rule, so quadrature bias cancels in the ratio.
    """
    if spec.beta == 0:
        raise BetaZero("marginal potential undefined at beta = 0")
    W, mu0w, _ = _marginal_setup(spec, G)
    out = np.zeros(G)
    _marginal_kernel(W, mu0w, spec.beta / spec.k, out)
    Z = float(np.sum(out * mu0w))
    return GridField(1, G, np.log(out / Z) / spec.beta)


def transport_potential_estimate(spec: EnsembleSpec, G: int):
    """Finite-N transport potentials from the pure permanental ensemble.

    Returns a pair of zero-mean fields: the (1/k)-scaled log of the partial
    permanent integral, and the companion (1/N)-scaled reading; the two only
    differ by an overall factor when N != k.
    """
    W, mu0w, _ = _marginal_setup(spec, G)
    out = np.zeros(G)
    _marginal_kernel(W, mu0w, 1.0, out)
    logm = np.log(out)
    phi_k = logm / spec.k
    phi_n = logm / spec.N
    return (
        GridField(1, G, phi_k - np.mean(phi_k)),
        GridField(1, G, phi_n - np.mean(phi_n)),
    )


# ---------------------------------------------------------------------------
# zero-temperature moment generating function


def mgf_zero_temp(k: int, phi: GridField, mu0: DiscreteMeasure | None = None) -> float:
    """(1/kN) [log N! + sum_p log int exp(k(-c_p + phi)) dmu0] with N = k (n=1).

    Since exp(-k c_p) = Psi_p, each factor is the mu0-integral of
    Psi_p e^{k phi}.  Converges to xi(-phi) as k grows.
    """
    if phi.dim != 1:
        raise UnsupportedSize("the factorized MGF is implemented for n=1")
    if k > 64:
        raise UnsupportedSize("k capped at 64")
    G = phi.resolution
    if G < 8 * k:
        raise InvalidInput("grid too coarse: need G >= 8k to resolve the wave functions")
    nodes = (np.arange(G) / G)[:, None]
    dens = mu0.grid.interpolate(nodes) if mu0 is not None else np.ones(G)
    N = k
    total = math.lgamma(N + 1)
    boost = k * phi.values
    for p in range(k):
        logpsi = _log_wave_nodes(k, p / k, nodes)
        total += float(np.log(np.mean(np.exp(logpsi + boost) * dens)))
    return total / (k * N)

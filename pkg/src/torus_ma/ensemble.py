"""Periodized Gaussian wave functions, their log-potentials, stable
log-permanents (Ryser, Gray-code order, row scaling) and the N-particle
energy H = -(1/k) log perm(Psi_{p_i}(x_j)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidInput, NonFinite, OversizeMatrix, SizeMismatch
from .torus_core import DiscreteMeasure, GridField, wrap

__all__ = [
    "EnsembleSpec",
    "wave_function",
    "log_wave_function",
    "c_potential",
    "log_permanent",
    "hamiltonian",
]

#: hard cap on exact permanents: 2^22 * 22 ops keeps a call near 0.1 s
RYSER_N_CAP = 22


# ---------------------------------------------------------------------------
# wave functions


def _trunc_terms(k: int) -> int:
    # include all m with |t - m| <= R, e^{-kR^2/2} < 1e-17 * leading term;
    # leading term is at distance <= 1/2, so R^2 = 1/4 + 2*39.2/k suffices
    R = 0.5 + math.sqrt(78.4 / k)
    return int(math.ceil(R)) + 1


@numba.njit(cache=True)
def _lattice_log_sum(k, t, M):
    """log sum_{m=-M..M} exp(-k (t - m)^2 / 2) for t in [-1/2, 1/2)."""
    # largest term is m = 0; factor it out for stability at large k
    lead = -0.5 * k * t * t
    s = 0.0
    for m in range(-M, M + 1):
        d = t - m
        s += math.exp(-0.5 * k * d * d - lead)
    return lead + math.log(s)


def log_wave_function(k: int, p, x) -> np.ndarray:
    """log Psi_p(x) for points x of shape (..., n); separable over axes."""
    if k < 1:
        raise InvalidInput("k must be a positive integer, got %r" % (k,))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != p.shape[-1]:
        raise InvalidInput("dimension mismatch between p and x")
    t = x - p
    t = t - np.round(t)  # per-axis representative in [-1/2, 1/2]
    M = _trunc_terms(k)
    m = np.arange(-M, M + 1)
    lead = -0.5 * k * t**2
    terms = np.exp(-0.5 * k * (t[..., None] - m) ** 2 - lead[..., None])
    return np.sum(lead + np.log(np.sum(terms, axis=-1)), axis=-1)


def wave_function(k: int, p, x):
    """Psi_p(x) = sum over the shifted lattice Z^n + p of exp(-k|x-m|^2/2)."""
    out = np.exp(log_wave_function(k, p, x))
    return float(out) if out.ndim == 0 else out


def c_potential(k: int, p, x):
    """-(1/k) log Psi_p(x); a smoothed copy of the cost x -> c(x, p)."""
    out = -log_wave_function(k, p, x) / k
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# permanents

_GRAY_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gray_schedule(N: int):
    """Flip sequence of the N-bit Gray code: (column index, +1/-1 per step)."""
    sched = _GRAY_CACHE.get(N)
    if sched is None:
        steps = (1 << N) - 1
        jseq = np.empty(steps, dtype=np.int64)
        sseq = np.empty(steps, dtype=np.int8)
        state = 0
        for t in range(1, steps + 1):
            j = (t & -t).bit_length() - 1
            bit = 1 << j
            state ^= bit
            jseq[t - 1] = j
            sseq[t - 1] = 1 if state & bit else -1
        sched = (jseq, sseq)
        _GRAY_CACHE[N] = sched
    return sched


_POPCOUNT_CACHE: dict[int, np.ndarray] = {}


def _popcount_table(N: int) -> np.ndarray:
    tbl = _POPCOUNT_CACHE.get(N)
    if tbl is None:
        size = 1 << N
        tbl = np.zeros(size, dtype=np.int8)
        for s in range(1, size):
            tbl[s] = tbl[s >> 1] + (s & 1)
        _POPCOUNT_CACHE[N] = tbl
    return tbl


@numba.njit(cache=True)
def _perm_subset_dp(A, pc):
    """perm(A) by the subset recursion f(S) = sum_j A[|S|-1, j] f(S \\ j).

    Every partial value is a nonnegative sum, so the result carries full
    relative precision even when the permanent is tiny.
    """
    N = A.shape[0]
    size = 1 << N
    f = np.empty(size)
    f[0] = 1.0
    for S in range(1, size):
        row = pc[S] - 1
        tot = 0.0
        for j in range(N):
            bit = 1 << j
            if S & bit:
                tot += A[row, j] * f[S ^ bit]
        f[S] = tot
    return f[size - 1]


@numba.njit(cache=True, fastmath=True)
def _ryser(AT, jseq, sseq):
    """Permanent of A given column-contiguous AT (AT[j] = column j of A).

    Gray-code subset enumeration: each step updates the running row sums by
    one column and accumulates (-1)^{N-|S|} prod_i rowsum_i.  The parity of
    |S| equals the parity of the step counter.
    """
    N = AT.shape[0]
    rowsum = np.zeros(N)
    total = 0.0
    s = 1.0
    for t in range(jseq.shape[0]):
        col = AT[jseq[t]]
        if sseq[t] > 0:
            for i in range(N):
                rowsum[i] += col[i]
        else:
            for i in range(N):
                rowsum[i] -= col[i]
        prod = 1.0
        for i in range(N):
            prod *= rowsum[i]
        s = -s
        total += s * prod
    if N % 2:
        total = -total
    return total


def log_permanent(L: np.ndarray) -> float:
    """log perm(exp(L)) for an N x N matrix of log-entries, N <= 22.

    Row maxima are subtracted before exponentiation so that entries as small
    as e^{-700} per row survive; the permanent of the scaled matrix is
    computed exactly by Ryser's formula in Gray-code order.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidInput("expected a square matrix, got shape %s" % (L.shape,))
    N = L.shape[0]
    if N > RYSER_N_CAP:
        raise OversizeMatrix("N=%d exceeds the exact-permanent cap %d" % (N, RYSER_N_CAP))
    if not np.all(np.isfinite(L)):
        raise NonFinite("log-entries must be finite")
    r = L.max(axis=1)
    A = np.exp(L - r[:, None])
    if N <= 12:
        # positive-sum subset recursion: same 2^N N cost as Ryser but free of
        # the alternating-sum cancellation, which at wide dynamic range
        # (log-entries spanning ~100) destroys all but a few digits
        perm = _perm_subset_dp(A, _popcount_table(N))
    else:
        jseq, sseq = _gray_schedule(N)
        perm = _ryser(np.ascontiguousarray(A.T), jseq, sseq)
    if not perm > 0:
        raise NonFinite("scaled permanent underflowed to %r" % (perm,))
    return float(np.sum(r) + np.log(perm))


# ---------------------------------------------------------------------------
# ensembles


def lattice_points(k: int, n: int) -> np.ndarray:
    """The N = k^n centers (1/k)Z^n / Z^n, ordered row-major."""
    axes = [np.arange(k) / k] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)


@dataclass
class EnsembleSpec:
    """One Gibbs ensemble: dimension, width parameter k, centers, beta, mu0."""

    n: int
    k: int
    beta: float
    points: np.ndarray = field(repr=False)  # (N, n) wave-function centers
    mu0: DiscreteMeasure | None = None  # None means the uniform measure

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[1] != self.n:
            raise InvalidInput("points have dimension %d, expected %d" % (pts.shape[1], self.n))
        self.points = wrap(pts)
        if self.mu0 is not None and not self.mu0.is_grid:
            raise InvalidInput("mu0 must be a grid-density measure")
        if self.mu0 is not None and np.any(self.mu0.grid.values <= 0):
            raise InvalidInput("mu0 density must be strictly positive")

    @property
    def N(self) -> int:
        return len(self.points)

    @classmethod
    def lattice(cls, k: int, n: int = 1, beta: float = 1.0, mu0=None) -> "EnsembleSpec":
        return cls(n, k, beta, lattice_points(k, n), mu0)

    def log_mu0_density(self, x) -> np.ndarray:
        """log of the mu0 density at points x (0 for the uniform measure)."""
        if self.mu0 is None:
            return np.zeros(np.asarray(x, dtype=float).shape[:-1])
        return np.log(self.mu0.density_at(x))

    def to_json(self) -> str:
        mu0 = "uniform" if self.mu0 is None else {"grid_csv": None}
        return json.dumps(
            {
                "n": self.n,
                "k": self.k,
                "beta": self.beta,
                "points": self.points.tolist(),
                "mu0": mu0,
            }
        )

    @classmethod
    def from_json(cls, text: str, mu0: DiscreteMeasure | None = None) -> "EnsembleSpec":
        d = json.loads(text)
        if mu0 is None and d.get("mu0") not in (None, "uniform"):
            path = d["mu0"].get("grid_csv")
            if path:
                with open(path) as fh:
                    mu0 = DiscreteMeasure.from_grid_density(GridField.from_csv(fh.read()))
        return cls(int(d["n"]), int(d["k"]), float(d["beta"]), np.array(d["points"]), mu0)


def log_wave_matrix(spec: EnsembleSpec, config: np.ndarray) -> np.ndarray:
    """L[i, j] = log Psi_{p_i}(x_j) for a configuration of shape (N, n)."""
    config = np.atleast_2d(np.asarray(config, dtype=float))
    if config.shape != spec.points.shape:
        raise SizeMismatch(
            "configuration shape %s does not match spec %s" % (config.shape, spec.points.shape)
        )
    L = np.empty((spec.N, spec.N))
    for i in range(spec.N):
        L[i] = log_wave_function(spec.k, spec.points[i], config)
    return L


def hamiltonian(config, spec: EnsembleSpec) -> float:
    """H(x_1..x_N) = -(1/k) log perm(Psi_{p_i}(x_j)); permutation symmetric."""
    return -log_permanent(log_wave_matrix(spec, config)) / spec.k

"""Theta functions and the determinant-permanent identities.

Everything here is verification machinery: truncated theta series, the
permanent-as-Fourier-integral identities, Gram determinant identities, and
the fiberwise pushforward integrals that reproduce the periodized Gaussian
wave functions up to the measured constant (4 pi)^N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as iter_product

import numpy as np

from .ensemble import log_permanent, log_wave_function
from .errors import InvalidInput, NegativeEntry, OutOfWindow, UnsupportedSize

__all__ = [
    "ThetaSpec",
    "theta_eval",
    "verify_detperm",
    "fourier_permanent",
    "gram_identity",
    "theta_pushforward_check",
    "theta_constant_fit",
]

#: validity window for the imaginary part under the default truncation
IM_WINDOW = 4.0


def _theta_terms(k: int) -> int:
    # tail below 1e-16 relative for |Im z| <= IM_WINDOW
    return int(math.ceil(IM_WINDOW + math.sqrt(IM_WINDOW**2 + 160.0 / k))) + 2


@dataclass(frozen=True)
class ThetaSpec:
    """Level-k theta family member: theta_p(z) = sum e^{-km^2/4 + izkm/2}."""

    k: int
    p: tuple = (0.0,)

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInput("k must be a positive integer")


def _theta_axis(k: int, p: float, z) -> np.ndarray:
    """One axis factor of the theta sum, vectorized over complex z."""
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z.imag) > IM_WINDOW):
        raise OutOfWindow("|Im z| exceeds the truncation window %g" % IM_WINDOW)
    M = _theta_terms(k)
    m = np.arange(-M, M + 1) + (p - round(p))
    return np.sum(np.exp(-k * m**2 / 4.0 + 1j * z[..., None] * k * m / 2.0), axis=-1)


def theta_eval(spec: ThetaSpec, z) -> complex:
    """theta_p^(k) at a point z in C^n (product of the axis series)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.shape[-1] != len(spec.p):
        raise InvalidInput("z has dimension %d, expected %d" % (z.shape[-1], len(spec.p)))
    out = np.ones(z.shape[:-1], dtype=complex)
    for a, pa in enumerate(spec.p):
        out = out * _theta_axis(spec.k, pa, z[..., a])
    return complex(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# determinant-permanent identities on E = [0, 2 pi]


def _det_grid(build_matrix, N: int, Q: int) -> float:
    """sum over the Q^N product grid of |det M(x_1..x_N)|^2, trapezoid weights.

    build_matrix(xs) must return the stack of N x N matrices for node tuples
    xs of shape (batch, N).
    """
    nodes = 2 * np.pi * np.arange(Q) / Q
    total = 0.0
    # batch over the leading index to bound memory
    combos = np.array(list(iter_product(range(Q), repeat=N)))
    xs = nodes[combos]  # (Q^N, N)
    mats = build_matrix(xs)
    dets = np.linalg.det(mats)
    total = float(np.sum(np.abs(dets) ** 2))
    return total * (2 * np.pi / Q) ** N


def verify_detperm(N: int, quad_nodes: int | None = None, seed: int = 0) -> dict:
    """Check perm(int |F_jk|^2 dx) = int |det F_jk(x_j)|^2 dx^N.

    Test family F_jk(x) = c_jk e^{ikx} with random complex c: the functions
    in each row are orthogonal, making the left side a permanent of the
    squared norms.
    """
    if N > 4:
        raise UnsupportedSize("nested quadrature supports N <= 4")
    Q = quad_nodes or 4 * N + 2
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    lhs = math.exp(log_permanent(np.log(2 * np.pi * np.abs(c) ** 2)))
    freqs = np.arange(N)

    def build(xs):
        phase = np.exp(1j * xs[:, :, None] * freqs[None, None, :])  # (B, j, k)
        return c[None, :, :] * phase

    rhs = _det_grid(build, N, Q)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs))
    return {"lhs": lhs, "rhs": rhs, "rel_error": rel}


def fourier_permanent(a: np.ndarray, quad_nodes: int | None = None) -> float:
    """perm(a) = (2 pi)^-N int |det(sqrt(a_jk) e^{ikx_j})|^2 dx for a >= 0."""
    a = np.asarray(a, dtype=float)
    N = a.shape[0]
    if a.shape != (N, N):
        raise InvalidInput("expected a square matrix")
    if N > 4:
        raise UnsupportedSize("nested quadrature supports N <= 4")
    if np.any(a < 0):
        raise NegativeEntry("matrix entries must be nonnegative")
    Q = quad_nodes or 4 * N + 2
    root = np.sqrt(a)
    freqs = np.arange(N)

    def build(xs):
        phase = np.exp(1j * xs[:, :, None] * freqs[None, None, :])
        return root[None, :, :] * phase

    return _det_grid(build, N, Q) / (2 * np.pi) ** N


def gram_identity(N: int, seed: int = 0, quad_nodes: int | None = None, coeffs=None) -> dict:
    """Check det(int f_j conj(f_k) dx) = (1/N!) int |det f_k(x_j)|^2 dx^N.

    f_k are random trigonometric polynomials of degree <= N on [0, 2 pi];
    optional explicit Fourier coefficients (N, 2N+1) override the seed.
    """
    if N > 3:
        raise UnsupportedSize("nested quadrature supports N <= 3")
    Q = quad_nodes or 4 * N + 2
    if coeffs is None:
        rng = np.random.default_rng(seed)
        coeffs = rng.normal(size=(N, 2 * N + 1)) + 1j * rng.normal(size=(N, 2 * N + 1))
    coeffs = np.asarray(coeffs, dtype=complex)
    degrees = np.arange(-N, N + 1)
    gram = 2 * np.pi * coeffs @ coeffs.conj().T
    lhs = float(np.linalg.det(gram).real)

    def build(xs):
        phase = np.exp(1j * xs[:, :, None] * degrees[None, None, :])  # (B, j, d)
        return np.einsum("bjd,kd->bjk", phase, coeffs)

    rhs = _det_grid(build, N, Q) / math.factorial(N)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs))
    return {"lhs": lhs, "rhs": rhs, "rel_error": rel}


# ---------------------------------------------------------------------------
# theta pushforward


def _fiber_integral(k: int, y: np.ndarray, Q: int) -> float:
    """int over the torus of circumference 4 pi per axis of
    |det(theta_{p_l}(x_j + i y_j) e^{-k y_j^2 / 4})|^2 dx, N = k points x_j.
    """
    N = len(y)
    nodes = 4 * np.pi * np.arange(Q) / Q
    ps = np.arange(N) / k
    # T[l, j, q] = theta_{p_l}(nodes[q] + i y_j) e^{-k y_j^2/4}
    T = np.empty((N, N, Q), dtype=complex)
    for l in range(N):
        for j in range(N):
            T[l, j] = _theta_axis(k, ps[l], nodes + 1j * y[j]) * math.exp(-k * y[j] ** 2 / 4.0)
    total = 0.0
    for combo in iter_product(range(Q), repeat=N):
        M = T[:, np.arange(N), combo]
        total += abs(np.linalg.det(M)) ** 2
    return total * (4 * np.pi / Q) ** N


def _perm_side(k: int, y: np.ndarray) -> float:
    N = len(y)
    ps = np.arange(N) / k
    L = np.empty((N, N))
    for l in range(N):
        L[l] = log_wave_function(k, [ps[l]], y[:, None])
    return math.exp(log_permanent(L))


def theta_pushforward_check(k: int, N: int, y, quad_nodes: int | None = None) -> dict:
    """Fiber integral of the theta determinant vs the wave-function permanent.

    Reports both sides and the measured proportionality constant together
    with its relative deviation from (4 pi)^N.
    """
    if N != k or N > 2:
        raise UnsupportedSize("supported cases: N = k in {1, 2}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(y) != N:
        raise InvalidInput("y must supply %d coordinates" % N)
    Q = quad_nodes or max(64, 8 * k * _theta_terms(k))
    fiber = _fiber_integral(k, y, Q)
    perm = _perm_side(k, y)
    const = fiber / perm
    expected = (4 * np.pi) ** N
    return {
        "fiber_integral": fiber,
        "permanent": perm,
        "fitted_constant": const,
        "rel_deviation": abs(const - expected) / expected,
    }


def theta_constant_fit(k: int, N: int, n_samples: int = 10, seed: int = 0,
                       quad_nodes: int | None = None) -> dict:
    """Least-squares fit of fiber = const * perm over random base points."""
    rng = np.random.default_rng(seed)
    fibers = np.empty(n_samples)
    perms = np.empty(n_samples)
    for s in range(n_samples):
        y = rng.random(N)
        rep = theta_pushforward_check(k, N, y, quad_nodes)
        fibers[s] = rep["fiber_integral"]
        perms[s] = rep["permanent"]
    const = float(np.dot(fibers, perms) / np.dot(perms, perms))
    expected = (4 * np.pi) ** N
    return {
        "fitted_constant": const,
        "rel_deviation": abs(const - expected) / expected,
        "max_pointwise_rel": float(np.max(np.abs(fibers / perms - expected) / expected)),
    }

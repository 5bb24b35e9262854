"""Variational solving of MA(phi) = e^{beta phi} mu0 / int e^{beta phi} dmu0.

The energy F(phi) = xi(phi) + (1/beta) log int e^{beta phi} dmu0 is minimized
by projected subgradient descent over the c-convex cone; the exact
subgradient of the discrete xi is read off the argmax structure of the
c-transform.  A 1-D periodic finite-difference Newton solve provides an
independent oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ctransform import c_transform, c_transform_argmax_counts, ma_measure, project_cconvex, xi
from .ensemble import log_wave_function
from .errors import BetaZero, GridMismatch, InvalidInput, NewtonDivergence
from .torus_core import DiscreteMeasure, GridField

__all__ = [
    "gamma_density",
    "I_functional",
    "F_functional",
    "SolveResult",
    "minimize_F",
    "ode_oracle_1d",
    "geodesic",
    "uniqueness_probe",
    "UniquenessReport",
]


def gamma_density(G: int, dim: int = 1) -> DiscreteMeasure:
    """The periodized unit Gaussian background measure, normalized to mass 1."""
    f = GridField.from_function(dim, G, lambda x: np.exp(log_wave_function(1, [0.0] * dim, x)))
    return DiscreteMeasure.from_grid_density(f, normalize=True)


def _density_of(mu0: DiscreteMeasure | None, phi: GridField) -> np.ndarray:
    if mu0 is None:
        return np.ones_like(phi.values)
    return mu0.require_grid(phi.dim, phi.resolution).values


def I_functional(phi: GridField, mu0: DiscreteMeasure | None = None) -> float:
    """I(phi) = log int e^phi dmu0; satisfies I(phi + a) = I(phi) + a."""
    dens = _density_of(mu0, phi)
    m = phi.values.max()
    return float(m + np.log(np.mean(np.exp(phi.values - m) * dens)))


def F_functional(phi: GridField, beta: float, mu0: DiscreteMeasure | None = None) -> float:
    """F(phi) = xi(phi) + (1/beta) I(beta phi); invariant under constants."""
    if beta == 0:
        raise BetaZero("F is undefined at beta = 0")
    return xi(phi) + I_functional(phi.with_values(beta * phi.values), mu0) / beta


def _gibbs_masses(phi: GridField, beta: float, dens: np.ndarray) -> np.ndarray:
    """Cell masses of e^{beta phi} mu0 / int e^{beta phi} dmu0, flattened."""
    w = np.exp(beta * (phi.values - phi.values.max())) * dens
    return (w / w.sum()).ravel()


def gibbs_measure(phi: GridField, beta: float, mu0: DiscreteMeasure | None = None) -> DiscreteMeasure:
    """The normalized measure e^{beta phi} mu0 / int e^{beta phi} dmu0.

    At a minimizer of F this equals MA(phi) but, unlike the binned
    pushforward, it has a smooth density, which matters for entropy
    computations (the binned density is integer-granular per cell).
    """
    dens = _density_of(mu0, phi)
    masses = _gibbs_masses(phi, beta, dens)
    Gn = phi.resolution**phi.dim
    return DiscreteMeasure.from_grid_density(phi.with_values((masses * Gn).reshape(phi.values.shape)))


@dataclass
class SolveResult:
    phi_star: GridField = field(repr=False)
    F_value: float
    residual: float
    iterations: int
    converged: bool
    F_history: list = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "F_value": self.F_value,
                "residual": self.residual,
                "iterations": self.iterations,
                "converged": self.converged,
            }
        )


def _residual(phi: GridField, beta: float, dens: np.ndarray) -> float:
    """sup-cell |MA(phi) - normalized e^{beta phi} mu0| in density units."""
    Gn = phi.resolution**phi.dim
    ma = ma_measure(phi).cell_masses()
    return float(np.max(np.abs(ma - _gibbs_masses(phi, beta, dens))) * Gn)


def minimize_F(
    beta: float,
    mu0: DiscreteMeasure | None,
    G: int,
    tol: float = 1e-4,
    max_iter: int = 2000,
    init: GridField | None = None,
    dim: int = 1,
) -> SolveResult:
    """Projected subgradient descent phi <- ((phi - eta g)^c)^c with Armijo.

    g is the grid-density representation of dF = -MA(phi) + Gibbs(phi); the
    -MA part is the exact subgradient of the discrete xi (argmax counts of
    the c-transform).  The returned minimizer is zero-mean normalized.
    """
    if beta == 0:
        raise BetaZero("beta must be nonzero")
    phi = project_cconvex(init) if init is not None else GridField.zeros(dim, G)
    if phi.resolution != G or (init is not None and phi.dim != dim):
        raise GridMismatch("init grid does not match requested resolution")
    dens = _density_of(mu0, phi)
    Gn = G**phi.dim

    def grad_masses(p: GridField) -> np.ndarray:
        # cell-measure representation of dF: -MA + Gibbs; the MA part is the
        # exact subgradient of the discrete xi (c-transform argmax counts)
        counts = c_transform_argmax_counts(p) / Gn
        return -counts + _gibbs_masses(p, beta, dens)

    F = F_functional(phi, beta, mu0)
    res = _residual(phi, beta, dens)
    history = [F]
    it = 0
    eta = 0.5
    warmup = min(max_iter, 50)
    for it in range(1, warmup + 1):
        if res <= tol:
            break
        g_field = (grad_masses(phi) * Gn).reshape(phi.values.shape)
        gnorm2 = float(np.mean(g_field**2))
        if gnorm2 == 0.0:
            break
        eta = min(eta * 2.0, 0.5)
        moved = False
        while eta > 1e-12:
            cand = project_cconvex(phi.with_values(phi.values - eta * g_field))
            F_cand = F_functional(cand, beta, mu0)
            if F_cand <= F - 1e-4 * eta * gnorm2:
                phi, F = cand, F_cand
                moved = True
                break
            eta *= 0.5
        if not moved:
            break
        history.append(F)
        res = _residual(phi, beta, dens)

    if res > tol and it < max_iter:
        # quasi-Newton polish on the same discrete objective; the projected
        # subgradient steps above alone close the last decades of accuracy
        # far too slowly (the xi part is piecewise linear in phi)
        from scipy.optimize import minimize as _scipy_minimize

        mu0_field = None if mu0 is None else mu0

        def fun(v):
            p = phi.with_values(v.reshape(phi.values.shape))
            return F_functional(p, beta, mu0_field), grad_masses(p).ravel()

        r = _scipy_minimize(
            fun,
            phi.values.ravel(),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter - it, "ftol": 1e-18, "gtol": 1e-14},
        )
        it += r.nit
        cand = project_cconvex(phi.with_values(r.x.reshape(phi.values.shape)))
        F_cand = F_functional(cand, beta, mu0)
        if F_cand <= F:
            phi, F = cand, F_cand
            res = _residual(phi, beta, dens)
            history.append(F)

    phi = phi.with_values(phi.values - np.mean(phi.values))
    return SolveResult(phi, F_functional(phi, beta, mu0), res, it, res <= tol, history)


def ode_oracle_1d(beta: float, f: GridField, G: int | None = None) -> GridField:
    """Newton solve of the periodic 1-D problem phi'' + 1 = rho e^{beta phi} f.

    f is the mu0 density (normalized internally to mass 1); rho is the free
    normalizer fixed by integrating the equation, and the zero-mean condition
    pins down the additive constant.  Converges to residual <= 1e-10.
    """
    if f.dim != 1:
        raise InvalidInput("the ODE oracle is one-dimensional")
    if G is not None and G != f.resolution:
        raise GridMismatch("requested G=%d but density has G=%d" % (G, f.resolution))
    G = f.resolution
    dens = f.values / np.mean(f.values)
    if np.any(dens <= 0):
        raise InvalidInput("density must be strictly positive")

    h2 = float(G) ** 2
    D2 = (np.diag(np.full(G, -2.0)) + np.eye(G, k=1) + np.eye(G, k=-1)) * h2
    D2[0, -1] += h2
    D2[-1, 0] += h2

    phi = np.zeros(G)
    lam = 0.0  # log rho
    for _ in range(100):
        w = np.exp(lam + beta * phi) * dens
        R = np.empty(G + 1)
        R[:G] = D2 @ phi + 1.0 - w
        R[G] = phi.sum()
        if np.max(np.abs(R)) <= 1e-10:
            d2phi = D2 @ phi
            if np.any(d2phi + 1.0 <= 0):
                raise NewtonDivergence("converged to a non-quasi-convex profile")
            return GridField(1, G, phi)
        J = np.zeros((G + 1, G + 1))
        J[:G, :G] = D2 - np.diag(beta * w)
        J[:G, G] = -w
        J[G, :G] = 1.0
        try:
            step = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence("singular Jacobian") from exc
        # damping guard for strongly nonlinear starts
        scale = 1.0
        if np.max(np.abs(step)) > 1.0:
            scale = 1.0 / np.max(np.abs(step))
        phi += scale * step[:G]
        lam += scale * step[G]
    raise NewtonDivergence("no convergence within 100 Newton iterations")


def geodesic(phi0: GridField, phi1: GridField, t: float) -> GridField:
    """phi_t = (t phi1^c + (1-t) phi0^c)^c; endpoints reproduce c-convex inputs."""
    if not 0 <= t <= 1:
        raise InvalidInput("t must lie in [0, 1]")
    psi0 = c_transform(phi0)
    psi1 = c_transform(phi1)
    return c_transform(psi0.with_values(t * psi1.values + (1 - t) * psi0.values))


@dataclass
class UniquenessReport:
    spread: float
    F_spread: float
    results: list = field(repr=False)

    def to_json(self) -> str:
        return json.dumps({"spread": self.spread, "F_spread": self.F_spread})


def uniqueness_probe(
    beta: float,
    mu0: DiscreteMeasure | None,
    G: int,
    n_starts: int = 10,
    seed: int = 0,
    tol: float = 1e-4,
    max_iter: int = 2000,
) -> UniquenessReport:
    """Minimize F from random c-convex starts; report minimizer scatter."""
    rng = np.random.default_rng(seed)
    x = np.arange(G) / G
    results = []
    for _ in range(n_starts):
        v = np.zeros(G)
        for freq in (1, 2, 3):
            v += rng.uniform(-0.2, 0.2) / freq * np.cos(2 * np.pi * freq * x + rng.uniform(0, 2 * np.pi))
        init = project_cconvex(GridField(1, G, v))
        results.append(minimize_F(beta, mu0, G, tol=tol, max_iter=max_iter, init=init))
    spread = 0.0
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            spread = max(
                spread,
                float(np.max(np.abs(results[i].phi_star.values - results[j].phi_star.values))),
            )
    Fvals = [r.F_value for r in results]
    return UniquenessReport(spread, float(max(Fvals) - min(Fvals)), results)

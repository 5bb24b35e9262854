"""Command-line front end.

Subcommands: solve, sample, potential, transport-map, verify, rate.
Exit codes: 0 ok, 2 config error, 3 non-convergence, 4 sampler warning
(with --strict), 5 verification failure.  All floats are printed with 17
significant digits so outputs round-trip losslessly.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from . import ctransform, ensemble, ma_solver, sampler, theta_bridge, transport
from .errors import NonErgodicWarning, TorusMAError
from .torus_core import DiscreteMeasure, GridField


def _fmt(x) -> str:
    return "%.17g" % x


def _json_dump(obj, path):
    def default(o):
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=default)
        fh.write("\n")


def _load_mu0(name: str | None, G: int, dim: int = 1):
    """Background measure from a preset name or a grid CSV path."""
    if name is None or name == "uniform":
        return None
    if name == "gamma":
        return ma_solver.gamma_density(G, dim)
    if name == "cosine":
        f = GridField.from_function(dim, G, lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x[..., 0]))
        return DiscreteMeasure.from_grid_density(f)
    if not os.path.exists(name):
        raise TorusMAError("mu0 source %r is not a preset or an existing file" % name)
    with open(name) as fh:
        return DiscreteMeasure.from_grid_density(GridField.from_csv(fh.read()), normalize=True)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _threads():
    return int(os.environ.get("TORUS_MA_THREADS", "0")) or None


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    mu0 = _load_mu0(args.mu0, args.grid)
    init = None
    if args.init:
        with open(args.init) as fh:
            init = GridField.from_csv(fh.read())
    result = ma_solver.minimize_F(
        args.beta, mu0, args.grid, tol=args.tol, max_iter=args.max_iter, init=init
    )
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "phi_star.csv"), result.phi_star.to_csv())
    _json_dump(
        {
            "F_value": result.F_value,
            "residual": result.residual,
            "iterations": result.iterations,
            "converged": result.converged,
        },
        os.path.join(args.out, "solve_result.json"),
    )
    print("F=%s residual=%s converged=%s" % (_fmt(result.F_value), _fmt(result.residual), result.converged))
    return 0 if result.converged else 3


def cmd_sample(args) -> int:
    mu0 = _load_mu0(args.mu0, args.grid)
    spec = ensemble.EnsembleSpec.lattice(args.k, args.n, args.beta, mu0)
    params = sampler.ChainParams(
        n_steps=args.steps,
        burn_in=args.burn_in if args.burn_in is not None else args.steps // 4,
        thin=args.thin,
        proposal_sigma=args.sigma,
        seed=args.seed,
        n_chains=args.chains,
    )
    warned = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        samples = sampler.mcmc_sample(spec, params)
        warned = any(issubclass(w.category, NonErgodicWarning) for w in caught)
    mean = sampler.mean_empirical(samples, args.grid)
    os.makedirs(args.out, exist_ok=True)
    lines = ["# sample,particle," + ",".join("x%d" % a for a in range(spec.n))]
    for s, cfg in enumerate(samples.configurations):
        for j, pt in enumerate(cfg):
            lines.append("%d,%d,%s" % (s, j, ",".join(_fmt(v) for v in pt)))
    _write(os.path.join(args.out, "samples.csv"), "\n".join(lines) + "\n")
    _write(os.path.join(args.out, "mean_empirical.csv"), mean.grid.to_csv())
    _json_dump(
        {
            "acceptance_rate": samples.acceptance_rate,
            "n_samples": len(samples),
            "seed": args.seed,
        },
        os.path.join(args.out, "summary.json"),
    )
    print("acceptance_rate=%s n_samples=%d" % (_fmt(samples.acceptance_rate), len(samples)))
    if warned:
        print("warning: chain acceptance rate outside [0.01, 0.99]", file=sys.stderr)
        if args.strict:
            return 4
    return 0


def cmd_potential(args) -> int:
    mu0 = _load_mu0(args.mu0, args.grid)
    spec = ensemble.EnsembleSpec.lattice(args.k, 1, args.beta, mu0)
    os.makedirs(args.out, exist_ok=True)
    if args.pure:
        phi_k, phi_n = sampler.transport_potential_estimate(spec, args.grid)
        _write(os.path.join(args.out, "phi_N.csv"), phi_k.to_csv())
        _write(os.path.join(args.out, "phi_N_alt.csv"), phi_n.to_csv())
        print("sup|phi_N|=%s" % _fmt(float(np.max(np.abs(phi_k.values)))))
    else:
        phi = sampler.marginal_phi_exact(spec, args.grid)
        _write(os.path.join(args.out, "phi_N.csv"), phi.to_csv())
        print("sup|phi_N|=%s" % _fmt(float(np.max(np.abs(phi.values)))))
    return 0


def cmd_transport_map(args) -> int:
    with open(args.phi) as fh:
        phi = GridField.from_csv(fh.read())
    grad = ctransform.c_gradient(ctransform.c_transform(phi))
    nodes = phi.nodes().reshape(-1, phi.dim)
    coords = grad.map_coords.reshape(-1, phi.dim)
    mask = grad.defined_mask.ravel()
    os.makedirs(args.out, exist_ok=True)
    lines = ["# x,T(x),defined"]
    for i in range(len(nodes)):
        lines.append(
            ",".join(_fmt(v) for v in nodes[i])
            + ","
            + ",".join(_fmt(v) for v in coords[i])
            + ",%d" % int(mask[i])
        )
    _write(os.path.join(args.out, "transport_map.csv"), "\n".join(lines) + "\n")
    print("defined_fraction=%s" % _fmt(grad.fraction_defined()))
    return 0


def cmd_rate(args) -> int:
    mu0 = _load_mu0(args.mu0, args.grid)
    with open(args.mu) as fh:
        mu = DiscreteMeasure.from_grid_density(GridField.from_csv(fh.read()), normalize=True)
    solve = ma_solver.minimize_F(args.beta, mu0, args.grid, max_iter=args.max_iter)
    mu_star = ma_solver.gibbs_measure(solve.phi_star, args.beta, mu0)
    mu0_eff = mu0 if mu0 is not None else DiscreteMeasure.uniform(1, args.grid)
    report = transport.rate_function(mu, args.beta, mu0_eff, mu_star)
    os.makedirs(args.out, exist_ok=True)
    _json_dump(
        {
            "w2": report.w2,
            "entropy": report.entropy,
            "constant_C": report.constant_C,
            "G_value": report.G_value,
        },
        os.path.join(args.out, "rate_report.json"),
    )
    print("G=%s" % _fmt(report.G_value))
    return 0


# ---------------------------------------------------------------------------
# verify suites


def _suite_ctransform(seed):
    rng = np.random.default_rng(seed)
    G = 64
    checks = {}
    x = np.arange(G) / G
    phis = []
    for _ in range(10):
        v = sum(
            rng.uniform(-0.3, 0.3) / f * np.cos(2 * np.pi * f * x + rng.uniform(0, 2 * np.pi))
            for f in (1, 2, 3)
        )
        phis.append(GridField(1, G, v))
    closure = max(
        float(
            np.max(
                np.abs(
                    ctransform.c_transform(ctransform.project_cconvex(p)).values
                    - ctransform.c_transform(p).values
                )
            )
        )
        for p in phis
    )
    checks["closure"] = {"max_defect": closure, "passed": closure <= 1e-12}
    mono = max(
        float(np.max(ctransform.project_cconvex(p).values - p.values)) for p in phis
    )
    checks["monotone_projection"] = {"max_excess": mono, "passed": mono <= 1e-12}
    contr = 0.0
    for p, q in zip(phis[:5], phis[5:]):
        lhs = float(
            np.max(np.abs(ctransform.c_transform(p).values - ctransform.c_transform(q).values))
        )
        contr = max(contr, lhs - float(np.max(np.abs(p.values - q.values))))
    checks["contraction"] = {"max_excess": contr, "passed": contr <= 1e-12}
    return checks


def _suite_detperm(seed):
    checks = {}
    worst = 0.0
    for s in range(5):
        for N in (2, 3):
            worst = max(worst, theta_bridge.verify_detperm(N, seed=seed + s)["rel_error"])
    checks["detperm"] = {"max_rel_error": worst, "passed": worst <= 1e-9}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for N in (2, 3, 4):
        a = rng.uniform(0.1, 2.0, (N, N))
        est = theta_bridge.fourier_permanent(a)
        exact = math.exp(ensemble.log_permanent(np.log(a)))
        worst = max(worst, abs(est - exact) / exact)
    checks["fourier_permanent"] = {"max_rel_error": worst, "passed": worst <= 1e-9}
    worst = max(
        theta_bridge.gram_identity(N, seed=seed + N)["rel_error"] for N in (2, 3)
    )
    checks["gram"] = {"max_rel_error": worst, "passed": worst <= 1e-9}
    return checks


def _suite_mgf(kmax):
    ks = [k for k in (8, 16, 32, 64) if k <= kmax]
    G = max(512, 8 * ks[-1])
    phi = GridField(1, G, 0.2 * np.cos(2 * np.pi * np.arange(G) / G))
    rows = []
    ok = True
    for phi_case, label in ((GridField.zeros(1, G), "zero"), (phi, "cosine")):
        target = ctransform.xi(phi_case.with_values(-phi_case.values))
        gaps = [abs(sampler.mgf_zero_temp(k, phi_case) - target) for k in ks]
        rows.append({"phi": label, "k": ks, "gap": gaps})
        ok = ok and all(b < a for a, b in zip(gaps, gaps[1:]))
    return {"mgf": {"table": rows, "passed": ok}}


def _suite_lipschitz(seed):
    rng = np.random.default_rng(seed)
    G = 128
    x = np.arange(G) / G
    worst = 0.0
    for _ in range(10):
        v = sum(
            rng.uniform(-0.5, 0.5) / f * np.cos(2 * np.pi * f * x + rng.uniform(0, 2 * np.pi))
            for f in (1, 2)
        )
        p = ctransform.project_cconvex(GridField(1, G, v)).values
        d = np.abs(x[:, None] - x[None, :])
        d = np.minimum(d, 1 - d)
        worst = max(worst, float(np.max(np.abs(p[:, None] - p[None, :]) - d - 2.0 / G)))
    return {"lipschitz": {"max_excess": worst, "passed": worst <= 0}}


def _suite_duality(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        mu = DiscreteMeasure.from_atoms(rng.random((8, 1)))
        worst = max(worst, transport.duality_gap(mu, iterations=50))
    return {"duality": {"max_gap": worst, "passed": worst <= 1e-6}}


def cmd_verify(args) -> int:
    suites = {}
    want = args.suite
    if want in ("ctransform", "all"):
        suites.update(_suite_ctransform(args.seed))
    if want in ("detperm", "all"):
        suites.update(_suite_detperm(args.seed))
    if want in ("mgf", "all"):
        suites.update(_suite_mgf(args.kmax))
    if want in ("lipschitz", "all"):
        suites.update(_suite_lipschitz(args.seed))
    if want in ("duality", "all"):
        suites.update(_suite_duality(args.seed))
    os.makedirs(args.out, exist_ok=True)
    _json_dump(suites, os.path.join(args.out, "verify_report.json"))
    all_ok = all(v["passed"] for v in suites.values())
    for name, v in suites.items():
        print("%s: %s" % (name, "pass" if v["passed"] else "FAIL"))
    return 0 if all_ok else 5


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="torus-ma",
        description="Monge-Ampere equations on flat tori: solver, sampler, transport checks",
    )
    p.add_argument("--config", help="JSON file with default parameter values (flags win)")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="minimize the energy F and emit phi*")
    ps.add_argument("--beta", type=float, required=True)
    ps.add_argument("--mu0", default="uniform", help="uniform | gamma | cosine | grid CSV path")
    ps.add_argument("--grid", type=int, default=256)
    ps.add_argument("--tol", type=float, default=1e-4)
    ps.add_argument("--max-iter", type=int, default=2000)
    ps.add_argument("--init", help="grid CSV with the starting potential")
    ps.add_argument("--out", default=".")
    ps.set_defaults(func=cmd_solve)

    pm = sub.add_parser("sample", help="run Metropolis chains for the deformed ensemble")
    pm.add_argument("--n", type=int, default=1)
    pm.add_argument("--k", type=int, required=True)
    pm.add_argument("--beta", type=float, default=1.0)
    pm.add_argument("--steps", type=int, default=100000)
    pm.add_argument("--burn-in", type=int, default=None)
    pm.add_argument("--thin", type=int, default=20)
    pm.add_argument("--chains", type=int, default=2)
    pm.add_argument("--sigma", type=float, default=None)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--mu0", default="uniform")
    pm.add_argument("--grid", type=int, default=64)
    pm.add_argument("--strict", action="store_true")
    pm.add_argument("--out", default=".")
    pm.set_defaults(func=cmd_sample)

    pp = sub.add_parser("potential", help="exact small-N marginal potential phi_N")
    pp.add_argument("--k", type=int, required=True)
    pp.add_argument("--beta", type=float, default=1.0)
    pp.add_argument("--mu0", default="uniform")
    pp.add_argument("--grid", type=int, default=48)
    pp.add_argument("--pure", action="store_true", help="pure permanental transport potential")
    pp.add_argument("--out", default=".")
    pp.set_defaults(func=cmd_potential)

    pt = sub.add_parser("transport-map", help="c-gradient map of a stored potential")
    pt.add_argument("--phi", required=True)
    pt.add_argument("--out", default=".")
    pt.set_defaults(func=cmd_transport_map)

    pv = sub.add_parser("verify", help="run identity/property verification suites")
    pv.add_argument(
        "--suite",
        default="all",
        choices=["ctransform", "detperm", "mgf", "lipschitz", "duality", "all"],
    )
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--kmax", type=int, default=32)
    pv.add_argument("--out", default=".")
    pv.set_defaults(func=cmd_verify)

    pr = sub.add_parser("rate", help="rate function of a stored measure")
    pr.add_argument("--mu", required=True, help="grid CSV of the measure density")
    pr.add_argument("--beta", type=float, required=True)
    pr.add_argument("--mu0", default="uniform")
    pr.add_argument("--grid", type=int, default=256)
    pr.add_argument("--max-iter", type=int, default=2000)
    pr.add_argument("--out", default=".")
    pr.set_defaults(func=cmd_rate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # config-file defaults are injected as flags right after the subcommand,
    # so explicit flags (parsed later) win
    if "--config" in argv:
        i = argv.index("--config")
        try:
            with open(argv[i + 1]) as fh:
                conf = json.load(fh)
        except (OSError, IndexError, json.JSONDecodeError) as exc:
            print("config error: %s" % exc, file=sys.stderr)
            return 2
        del argv[i : i + 2]
        injected = []
        for key, val in conf.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(val, bool):
                if val:
                    injected.append(flag)
            else:
                injected.extend([flag, str(val)])
        pos = next((j + 1 for j, a in enumerate(argv) if not a.startswith("-")), len(argv))
        argv[pos:pos] = injected
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TorusMAError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run alone with ``pytest -v -s tests/test_acceptance.py`` (or
``python tests/test_acceptance.py``).  Each test asserts its criterion at
the stated tolerance; the summary line is printed even when it fails.
"""
import sys
import time

import numpy as np
import pytest
from scipy.stats import kendalltau

from passivnet.certification import (check_dissipation_inequality, dissipation_matrix, min_dissipation_eigenvalue,
                                     min_eig, spectral_radius, stability_matrices)
from passivnet.discretization import InputClass, Method, frobenius_truncate, matrix_exponential_pair, rmse_compare
from passivnet.errors import InfeasibleError, SolverNumericalFailure
from passivnet.lqr import solve_dare
from passivnet.microgrid import compute_equilibrium, global_gain, alternating_references
from passivnet.network import (CouplingGraph, DiscreteSubsystem, NetworkModel, assemble_global, build_laplacian,
                               compute_UW)
from passivnet.simulation import DEFAULT_STEPS, eps0_sweep, monte_carlo, simulate
from passivnet.synthesis import (CostSpec, bound_vectors, build_local_sdp, constraint_residuals, solve_local_sdp,
                                 synthesize)

EPS0_GRID = (1e-4, 1e-3, 1e-2)
SWEEP = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e6)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            sys.stdout.write(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}\n")
        assert ok, detail
    return emit


def test_criterion_1_discretization_ordering(grid, report):
    t0 = time.perf_counter()
    net = grid.network
    rep = rmse_compare(net.subsystems, net.graph, grid.config.Ts, horizon=1000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 30
    parts = []
    for ic in InputClass:
        row = rep.table[ic]
        others = min(row[Method.SN], row[Method.FN], row[Method.AM])
        ok &= row[Method.LM] < others
        parts.append(f"{ic.value}: LM={row[Method.LM]:.3g} < min(SN,FN,AM)={others:.3g}")
    report(1, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_2_feasibility_and_residuals(grid, lqr, report):
    net = grid.lm_network()
    _, _, U_i, W_i = compute_UW(net)
    worst, failures = np.inf, []
    for eps_0 in EPS0_GRID:
        for kind in "abc":
            res = synthesize(net, kind, eps_0=eps_0, P_c=lqr.P_c)
            if not res.ok:
                failures.append((eps_0, kind, sorted(res.failures)))
                continue
            for i, c in enumerate(res.certificates):
                h_up, s_up = bound_vectors(U_i[i], W_i[i], eps_0)
                r = constraint_residuals(net.subsystems[i], c.E, c.G, c.H, c.S, h_up, s_up, c.eps_i)
                worst = min(worst, min(r.values()))
    ok = not failures and worst >= -1e-7
    report(2, ok, f"eps0 in {EPS0_GRID} x costs a,b,c; infeasible={failures}; worst residual={worst:.3g}")


def test_criterion_3_certificate_validity(grid, exact, lm_net, syntheses, report):
    worst_diss, worst_dom, worst_full, rho_lm, rho_ex = np.inf, np.inf, np.inf, 0.0, 0.0
    for kind, res in syntheses.items():
        assert res.ok, kind
        for i, (sub, c) in enumerate(zip(lm_net.subsystems, res.certificates)):
            chk = check_dissipation_inequality(sub, c, 10_000, seed=100 + i)
            worst_diss = min(worst_diss, chk.checks[0].worst)
        full, dom = stability_matrices(lm_net, res.certificates, res.certificates[0].eps_0)
        worst_full, worst_dom = min(worst_full, min_eig(full)), min(worst_dom, min_eig(dom))
        _, _, _, Acl = assemble_global(lm_net, res.gains)
        rho_lm = max(rho_lm, spectral_radius(Acl))
        rho_ex = max(rho_ex, spectral_radius(exact.A + exact.B @ global_gain(res.gains)))
    ok = worst_diss >= -1e-9 and worst_dom >= -1e-7 and worst_full >= -1e-7 and rho_lm < 1 and rho_ex < 1
    report(3, ok, f"dissipation worst margin={worst_diss:.3g} (1e4 samples x 6 x 3); "
                  f"dominance min eig={worst_dom:.3g}; full min eig={worst_full:.3g}; "
                  f"rho(LM)={rho_lm:.6f}; rho(exact)={rho_ex:.6f}")


def random_instance(rng):
    n = int(rng.integers(2, 4))
    A = rng.normal(size=(n, n))
    A *= rng.uniform(0.3, 1.4) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    subs = [DiscreteSubsystem(A, rng.normal(size=(n, 1)), 0.3 * rng.normal(size=(n, 1)),
                              rng.normal(size=(1, n))) for _ in range(3)]
    w = rng.uniform(0.05, 0.5, 2)
    return NetworkModel(tuple(subs), CouplingGraph.undirected(3, [(0, 1, w[0]), (1, 2, w[1])]))


def test_criterion_4_congruence_chain(report):
    rng = np.random.default_rng(2024)
    feasible, worst, tried = 0, np.inf, 0
    while feasible < 25 and tried < 300:
        tried += 1
        net = random_instance(rng)
        _, _, U_i, W_i = compute_UW(net)
        sdp = build_local_sdp(net.subsystems[1], U_i[1], W_i[1], cost=CostSpec("a"), index=1)
        try:
            cert = solve_local_sdp(sdp)
        except (InfeasibleError, SolverNumericalFailure):
            continue
        feasible += 1
        worst = min(worst, min_eig(dissipation_matrix(net.subsystems[1], cert)))
    ok = feasible >= 20 and worst >= -1e-6
    report(4, ok, f"{feasible} feasible of {tried} random instances; worst min eig={worst:.3g}")


def test_criterion_5_riccati(exact, lqr, report):
    a, b, q, r = 0.5, 1.0, 1.0, 1.0
    oracle = (0.25 + np.sqrt(0.0625 + 4)) / 2
    scalar = solve_dare(np.array([[a]]), np.array([[b]]), np.array([[q]]), np.array([[r]])).P_c[0, 0]
    rho = spectral_radius(exact.A + exact.B @ lqr.K_c)
    ok = abs(scalar - oracle) <= 1e-8 and lqr.residual <= 1e-10 and rho < 1
    report(5, ok, f"scalar |P-oracle|={abs(scalar - oracle):.2g}; microgrid residual={lqr.residual:.3g}; "
                  f"rho={rho:.6f}")


def test_criterion_6_convergence(grid, exact, lqr, syntheses, report):
    refs = alternating_references(grid.M)
    parts, ok = [], True
    for kind, res in syntheses.items():
        K = global_gain(res.gains)
        x0 = compute_equilibrium(grid.config, K, np.full(grid.M, 50.0), model=exact).x
        traj = simulate(grid, exact, K, x0, refs, steps=DEFAULT_STEPS)
        err = float(np.abs(traj.V[-1] - refs).max())
        ok &= err <= 1e-3
        parts.append(f"f_{kind}: max|V-Vr|={err:.3g} V")
    report(6, ok, f"t={DEFAULT_STEPS * grid.config.Ts:g}s on exact model; " + "; ".join(parts))


def test_criterion_7_monte_carlo(grid, lqr, syntheses, report):
    ctrl = {k: r.gains for k, r in syntheses.items()}
    certs = {k: r.certificates for k, r in syntheses.items()}
    t0 = time.perf_counter()
    rep = monte_carlo(grid, ctrl, lqr.K_c, n_runs=100, seed=0, certificates=certs)
    elapsed = time.perf_counter() - t0
    again = monte_carlo(grid, ctrl, lqr.K_c, n_runs=100, seed=0, certificates=certs)
    mu, lam = rep.mu_J, rep.lambda_min
    deterministic = rep.to_csv() == again.to_csv()
    ordering = mu["c"] < mu["a"] < mu["b"]
    lam_ok = lam["b"] >= lam["c"]
    ok = ordering and lam_ok and deterministic and elapsed < 600 and not rep.failures
    report(7, ok, f"mu_J a={mu['a']:.4g} b={mu['b']:.4g} c={mu['c']:.4g} (c<a<b: {ordering}); "
                  f"lambda b={lam['b']:.4g} >= c={lam['c']:.4g}: {lam_ok}; deterministic={deterministic}; "
                  f"{elapsed:.1f}s")


def test_criterion_8_eps0_sweep(grid, report):
    rows = eps0_sweep(grid, SWEEP, cost_kinds=("a",))
    feas = [r for r in rows if r.feasible]
    lost = not rows[-1].feasible
    eps = [r.eps_0 for r in feas]
    over = [r.overshoot for r in feas]
    tau = kendalltau(np.log10(eps), over).statistic if len(feas) >= 3 else np.nan
    trending = len(feas) >= 3 and tau < 0
    table = ", ".join(f"{r.eps_0:g}:{'%.3g' % r.overshoot if r.feasible else 'infeasible'}" for r in rows)
    report(8, lost and trending, f"feasibility lost at large eps0: {lost}; overshoot by eps0 [{table}]; "
                                 f"Kendall tau(log eps0, overshoot)={tau:.3g} (need < 0)")


def test_criterion_9_kernels(grid, report):
    sub = grid.network.subsystems[0]
    Ts = grid.config.Ts
    A1, _ = matrix_exponential_pair(sub.A_c, sub.B_c, Ts)
    A2, _ = matrix_exponential_pair(sub.A_c, sub.B_c, 2 * Ts)
    semigroup = float(np.abs(A1 @ A1 - A2).max() / max(1.0, np.abs(A2).max()))
    rng = np.random.default_rng(9)
    rowsum = 0.0
    for _ in range(50):
        M = int(rng.integers(2, 10))
        pairs = [(i, j, rng.uniform(0.01, 100)) for i in range(M) for j in range(i + 1, M) if rng.random() < 0.5]
        L = build_laplacian(CouplingGraph.undirected(M, pairs))
        rowsum = max(rowsum, float(np.abs(L.sum(axis=1)).max() / max(1.0, np.abs(L).max())))
    rowsum = max(rowsum, float(np.abs(grid.lm_network().laplacian.sum(axis=1)).max()))
    X = rng.normal(size=(12, 12))
    pat = rng.random((12, 12)) < 0.4
    once = frobenius_truncate(X, pat)
    idem = np.array_equal(frobenius_truncate(once, pat), once)
    ok = semigroup <= 1e-10 and rowsum <= 1e-12 and idem
    report(9, ok, f"semigroup err={semigroup:.2g}; Laplacian row sum={rowsum:.2g}; truncation idempotent={idem}")


if __name__ == "__main__":
    sys.exit(pytest.main(["-v", __file__]))

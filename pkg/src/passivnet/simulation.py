"""Closed-loop simulation, tracking error, Monte Carlo and eps_0 sweep."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .certification import min_dissipation_eigenvalue, spectral_radius
from .errors import DivergenceError
from .microgrid import Microgrid, compute_equilibrium, feedforward, global_gain

DEFAULT_STEPS = 50_000


@dataclass
class Trajectory:
    """States and inputs for ``k = 0..T`` plus physical signals."""

    states: np.ndarray
    inputs: np.ndarray
    V: np.ndarray
    I: np.ndarray
    s: np.ndarray
    d: np.ndarray
    Ts: float

    @property
    def steps(self):
        return len(self.states) - 1

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        M = self.V.shape[1]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time"] + [f"V_{i + 1}" for i in range(M)] + [f"I_{i + 1}" for i in range(M)]
                   + [f"d_{i + 1}" for i in range(M)])
        for k in range(len(self.V)):
            w.writerow([k, repr(k * self.Ts)] + [repr(float(v)) for v in
                                                 np.concatenate([self.V[k], self.I[k], self.d[k]])])
        return buf.getvalue()


def simulate_affine(A, B, K, x0, steps, offset=None):
    """Iterate ``x+ = (A + B K) x + offset``; states and ``K x`` for ``k = 0..T``.

    ``x0`` may be a matrix whose columns are independent runs.
    """
    Acl = A + B @ K
    x = np.array(x0, dtype=float)
    c = 0.0 if offset is None else offset
    states = np.empty((steps + 1,) + x.shape)
    states[0] = x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            x = Acl @ x + c
            states[k + 1] = x
            if k % 256 == 0 and not np.all(np.isfinite(x)):
                bad = int(np.argmax(~np.all(np.isfinite(states[: k + 2].reshape(k + 2, -1)), axis=1)))
                raise DivergenceError(f"state became non-finite at step {bad}", step=bad)
    if not np.all(np.isfinite(states)):
        bad = int(np.argmax(~np.all(np.isfinite(states.reshape(steps + 1, -1)), axis=1)))
        raise DivergenceError(f"state became non-finite at step {bad}", step=bad)
    return states


def simulate(grid: Microgrid, model, gains, x0, refs=None, loads=None, steps=DEFAULT_STEPS) -> Trajectory:
    """Closed loop in shifted coordinates with the reference feedforward.

    ``u = K x + u_f`` (duty ``d = u + R I_l / V_in``); the integrator sees
    ``Bw s_f``.  ``gains`` is either the list of local gains or a global
    (e.g. LQR) gain.
    """
    cfg = grid.config
    refs = np.asarray(cfg.references if refs is None else refs, dtype=float)
    loads = np.asarray(cfg.loads if loads is None else loads, dtype=float)
    K = global_gain(gains, model.A.shape[0])
    u_f, s_f = feedforward(cfg, K, refs)
    offset = model.B @ u_f + model.Bw @ s_f
    X = simulate_affine(model.A, model.B, K, x0, steps, offset)
    U = X @ K.T + u_f
    return Trajectory(states=X, inputs=U, V=X[:, 0::3], I=X[:, 1::3] + loads, s=X[:, 2::3],
                      d=U + cfg.R * loads / cfg.V_in, Ts=cfg.Ts)


def tracking_error(traj: Trajectory, eq) -> float:
    """``sqrt(sum_k sum_i dV^2 + dI^2 + ds^2 + du^2)`` against the steady state."""
    dV = traj.V - eq.V_r
    dI = traj.I - eq.I_r
    ds = traj.s - eq.s_r
    du = traj.inputs - eq.u_r
    return float(np.sqrt(np.sum(dV ** 2) + np.sum(dI ** 2) + np.sum(ds ** 2) + np.sum(du ** 2)))


def suboptimality(e_pbc, e_lqr):
    """``J = (e_pbc - e_lqr) / e_lqr``."""
    e_lqr = np.asarray(e_lqr, dtype=float)
    if np.any(e_lqr == 0):
        raise ZeroDivisionError("LQR tracking error is zero; suboptimality undefined")
    return (np.asarray(e_pbc, dtype=float) - e_lqr) / e_lqr


def nominal_state(grid, model, K, refs, loads_old, loads_new):
    """Previous equilibrium expressed in coordinates shifted by the new loads."""
    eq = compute_equilibrium(grid.config, K, refs, loads_old, model)
    x0 = eq.x.copy()
    x0[1::3] += np.asarray(loads_old) - np.asarray(loads_new)
    return x0


@dataclass
class MonteCarloReport:
    """Per-run tracking errors and aggregated suboptimality statistics."""

    e: dict
    J: dict
    mu_J: dict
    sigma_J: dict
    lambda_min: dict
    n_runs: int
    seed: int
    failures: dict = field(default_factory=dict)
    steps: int = DEFAULT_STEPS

    def to_dict(self):
        return {
            "n_runs": self.n_runs, "seed": self.seed, "steps": self.steps,
            "mu_J": self.mu_J, "sigma_J": self.sigma_J, "lambda_min": self.lambda_min,
            "failures": {k: list(map(int, v)) for k, v in self.failures.items()},
            "e": {k: list(map(float, v)) for k, v in self.e.items()},
        }

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        kinds = list(self.mu_J)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity"] + [f"f_{k}" for k in kinds])
        for name, row in (("mu_J", self.mu_J), ("sigma_J", self.sigma_J), ("lambda_min", self.lambda_min)):
            w.writerow([name] + [repr(float(row[k])) for k in kinds])
        return buf.getvalue()


def _batched_errors(model, K, X0, U_f, S_f, eqX, eqU, steps):
    """Tracking errors of all runs at once; columns are runs.

    Since every variable but the load-shifted current is a state or input
    deviation, ``e^2 = sum_k |x_k - x*|^2 + |u_k - u*|^2``.
    """
    Acl = model.A + model.B @ K
    offset = model.B @ U_f + model.Bw @ S_f
    X = X0.copy()
    total = np.zeros(X.shape[1])
    finite = np.ones(X.shape[1], dtype=bool)
    for k in range(steps + 1):
        dX = X - eqX
        dU = K @ X + U_f - eqU
        total += np.einsum("ij,ij->j", dX, dX) + np.einsum("ij,ij->j", dU, dU)
        if k == steps:
            break
        X = Acl @ X + offset
        if k % 512 == 0:
            finite &= np.all(np.isfinite(X), axis=0)
    finite &= np.all(np.isfinite(X), axis=0) & np.isfinite(total)
    return np.sqrt(total), finite


def draw_scenarios(M, n_runs, seed, ref_range=(49.95, 50.05), load_range=(2.5, 7.5)):
    """Per-run references and loads from independent child generators."""
    children = np.random.SeedSequence(seed).spawn(n_runs)
    refs, loads = np.empty((n_runs, M)), np.empty((n_runs, M))
    for r, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        refs[r] = rng.uniform(*ref_range, M)
        loads[r] = rng.uniform(*load_range, M)
    return refs, loads


def monte_carlo(grid: Microgrid, controllers: dict, lqr_gain, n_runs=100, seed=0, steps=DEFAULT_STEPS,
                certificates=None, nominal_ref=50.0, nominal_load=None, ref_range=(49.95, 50.05),
                load_range=(2.5, 7.5), model=None) -> MonteCarloReport:
    """Monte Carlo comparison of decentralized controllers against LQR.

    Each run starts at the nominal equilibrium (``nominal_ref`` volts,
    ``nominal_load`` amps) of the controller under test and then switches to
    sampled references and loads.  ``controllers`` maps cost kind to gains;
    the controllers are synthesized once and reused for every run.
    """
    cfg = grid.config
    model = model or grid.exact_model()
    n, M = model.A.shape[0], cfg.M
    refs, loads = draw_scenarios(M, n_runs, seed, ref_range, load_range)
    loads0 = cfg.loads if nominal_load is None else np.full(M, float(nominal_load))
    refs0 = np.full(M, float(nominal_ref))

    def run(K):
        K = global_gain(K, n)
        Acl = model.A + model.B @ K
        lhs = np.eye(n) - Acl
        x_old = nominal_state(grid, model, K, refs0, loads0, loads0)
        U_f, S_f = np.empty((M, n_runs)), np.empty((M, n_runs))
        for r in range(n_runs):
            U_f[:, r], S_f[:, r] = feedforward(cfg, K, refs[r])
        eqX = np.linalg.solve(lhs, model.B @ U_f + model.Bw @ S_f)
        eqU = K @ eqX + U_f
        X0 = np.repeat(x_old[:, None], n_runs, axis=1)
        X0[1::3] += (loads0[:, None] - loads.T)
        return _batched_errors(model, K, X0, U_f, S_f, eqX, eqU, steps)

    e_lqr, ok_lqr = run(lqr_gain)
    e, J, mu, sigma, lam, failures = {"lqr": e_lqr}, {}, {}, {}, {}, {}
    if not ok_lqr.all():
        failures["lqr"] = np.flatnonzero(~ok_lqr)
    for kind, gains in controllers.items():
        e_k, ok = run(gains)
        e[kind] = e_k
        good = ok & ok_lqr
        if not good.all():
            failures[kind] = np.flatnonzero(~good)
        J[kind] = suboptimality(e_k[good], e_lqr[good])
        mu[kind] = float(np.mean(J[kind])) if good.any() else float("nan")
        sigma[kind] = float(np.std(J[kind])) if good.any() else float("nan")
        lam[kind] = (min_dissipation_eigenvalue(certificates[kind])
                     if certificates and kind in certificates else float("nan"))
    return MonteCarloReport(e, J, mu, sigma, lam, n_runs, seed, failures, steps)


def step_metrics(V, refs_new, refs_old, tol_frac=0.02):
    """Overshoot (fraction of the step) and settling step of a reference step."""
    V = np.asarray(V)
    delta = np.asarray(refs_new) - np.asarray(refs_old)
    over, settle = 0.0, 0
    for i in range(V.shape[1]):
        if delta[i] == 0:
            continue
        sgn = np.sign(delta[i])
        over = max(over, float(max(0.0, np.max(sgn * (V[:, i] - refs_new[i]))) / abs(delta[i])))
        outside = np.flatnonzero(np.abs(V[:, i] - refs_new[i]) > tol_frac * abs(delta[i]))
        settle = max(settle, int(outside[-1]) + 1 if outside.size else 0)
    return over, settle


@dataclass
class SweepRow:
    eps_0: float
    cost: str
    feasible: bool
    overshoot: float | None = None
    settling_steps: int | None = None
    lambda_min: float | None = None
    spectral_radius: float | None = None
    failed_subsystems: list = field(default_factory=list)


def eps0_sweep(grid: Microgrid, eps0_values, cost_kinds=("a",), steps=20_000, step_size=0.05,
               eps_i=1e-6, backend=None, P_c=None):
    """Feasibility and reference-step metrics for each ``eps_0``.

    The step raises every reference by ``step_size`` volts from the
    configured references, starting at the old equilibrium on the exact
    model.
    """
    from .synthesis import synthesize

    net = grid.lm_network()
    model = grid.exact_model()
    cfg = grid.config
    refs_old = np.asarray(cfg.references)
    refs_new = refs_old + step_size
    rows = []
    for eps_0 in eps0_values:
        for kind in cost_kinds:
            res = synthesize(net, kind, eps_i=eps_i, eps_0=eps_0, P_c=P_c, backend=backend)
            if not res.ok:
                rows.append(SweepRow(float(eps_0), kind, False, failed_subsystems=sorted(res.failures)))
                continue
            K = global_gain(res.gains)
            x0 = compute_equilibrium(cfg, K, refs_old, model=model).x
            traj = simulate(grid, model, K, x0, refs_new, steps=steps)
            over, settle = step_metrics(traj.V, refs_new, refs_old)
            rows.append(SweepRow(float(eps_0), kind, True, over, settle,
                                 min_dissipation_eigenvalue(res.certificates),
                                 spectral_radius(model.A + model.B @ K)))
    return rows


def sweep_to_csv(rows, header_lines=()):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["eps_0", "cost", "feasible", "overshoot", "settling_steps", "lambda_min", "spectral_radius"])
    for r in rows:
        w.writerow([repr(r.eps_0), r.cost, int(r.feasible), "" if r.overshoot is None else repr(r.overshoot),
                    "" if r.settling_steps is None else r.settling_steps,
                    "" if r.lambda_min is None else repr(r.lambda_min),
                    "" if r.spectral_radius is None else repr(r.spectral_radius)])
    return buf.getvalue()

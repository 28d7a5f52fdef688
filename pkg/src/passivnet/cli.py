"""Command-line interface.

Subcommands::

    passivnet synthesize CONFIG [--cost a|b|c] [--eps0 E] [--epsi E] [--out certs.json]
    passivnet verify CERTS CONFIG [--eps0 E] [--out report.json]
    passivnet compare-discretizations CONFIG [--horizon T] [--seed S] [--out table.csv]
    passivnet montecarlo CONFIG [--runs N] [--seed S] [--steps T] [--out table.csv]
    passivnet sweep-eps0 CONFIG [--values v1 v2 ...] [--out sweep.csv]
    passivnet simulate CONFIG [--controller a|b|c|lqr] [--steps T] [--out traj.csv]

CONFIG is either a microgrid file (``dgus``, ``lines``, ``Ts``,
``references``) or a generic network file (``subsystems`` with matrices
``A``, ``B``, ``F``, ``C`` and ``edges`` as 1-based ``[i, j, weight]``
triples meaning output ``i`` drives subsystem ``j``).  Continuous
networks (``"time": "continuous"`` plus ``Ts``) are discretized locally
before synthesis.  The literal ``default`` selects the bundled microgrid.

Every output embeds a run manifest: a ``manifest`` key in JSON, ``#``
comment lines in CSV.  Exit codes: 0 success, 2 infeasible synthesis,
3 verification failure, 4 input error, 5 solver numerical failure.
``PASSIVNET_THREADS`` caps the number of parallel local solves.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .certification import verify_certificates
from .discretization import rmse_compare
from .documents import load_any, manifest, manifest_lines, read_certificates
from .errors import (ConfigError, DimensionError, DivergenceError, GraphError, InfeasibleError, PassivnetError,
                     SingularSystemError, SolverNumericalFailure)
from .lqr import solve_dare
from .microgrid import DEFAULT_CONFIG, compute_equilibrium, global_gain
from .network import assemble_global
from .simulation import DEFAULT_STEPS, eps0_sweep, monte_carlo, simulate, sweep_to_csv
from .solver import ConicBackend
from .synthesis import DEFAULT_EPS_0, DEFAULT_EPS_I, CostKind, certificates_document, synthesize

EXIT_OK, EXIT_INFEASIBLE, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4, 5

DEFAULT_SWEEP = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e6)


def _config_path(arg):
    if arg == "default":
        return resources.files("passivnet.data").joinpath(DEFAULT_CONFIG)
    return Path(arg)


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_json(doc, out):
    _emit(json.dumps(doc, indent=2) + "\n", out)


def _backend(args):
    return ConicBackend(solver=args.solver, tol=args.tol)


def _lqr(loaded):
    """Centralized LQR on the best available global model (Q = I, R = I)."""
    if loaded.grid is not None:
        model = loaded.grid.exact_model()
        A, B = model.A, model.B
    elif loaded.continuous is not None:
        from .discretization import discretize_exact
        model = discretize_exact(loaded.continuous.subsystems, loaded.continuous.graph, loaded.Ts)
        A, B = model.A, model.B
    else:
        A, B, _, _ = assemble_global(loaded.network)
    return solve_dare(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))


def _report_failures(failures, out=None):
    out = out or sys.stderr
    for i, exc in sorted(failures.items()):
        kind = "infeasible" if isinstance(exc, InfeasibleError) else "numerical failure"
        print(f"subsystem {i + 1}: {kind} ({exc.status or exc})", file=out)


def _failure_code(failures):
    if any(isinstance(e, InfeasibleError) for e in failures.values()):
        return EXIT_INFEASIBLE
    return EXIT_NUMERICAL


def _common_params(args):
    return {"solver": args.solver, "tol": args.tol}


def cmd_synthesize(args):
    loaded = load_any(_config_path(args.config))
    kind = CostKind.parse(args.cost)
    P_c = _lqr(loaded).P_c if kind is CostKind.MIMIC_LQR else None
    res = synthesize(loaded.network, kind, eps_i=args.epsi, eps_0=args.eps0, P_c=P_c, backend=_backend(args))
    man = manifest("synthesize", args.config, cost=kind.value, eps_0=args.eps0, eps_i=args.epsi,
                   samples=args.samples, seed=args.seed, **_common_params(args))
    if not res.ok:
        _report_failures(res.failures)
        doc = certificates_document(res.certificates, man)
        doc["failures"] = {str(i + 1): str(e) for i, e in sorted(res.failures.items())}
        _emit_json(doc, args.out)
        return _failure_code(res.failures)
    report = verify_certificates(loaded.network, res.certificates, args.eps0, args.samples, args.seed)
    _emit_json(certificates_document(res.certificates, man), args.out)
    rep = report.to_dict()
    rep["manifest"] = man
    if args.report:
        _emit_json(rep, args.report)
    print(report.to_text(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_verify(args):
    certs, doc = read_certificates(args.certs)
    loaded = load_any(_config_path(args.config))
    if len(certs) != loaded.network.M:
        raise ConfigError(f"{len(certs)} certificates for {loaded.network.M} subsystems", "$.certificates")
    eps_0 = args.eps0
    if eps_0 is None:
        eps_0 = (doc.get("manifest") or {}).get("parameters", {}).get("eps_0", DEFAULT_EPS_0)
    try:
        report = verify_certificates(loaded.network, certs, eps_0, args.samples, args.seed)
    except (SingularSystemError, DimensionError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    rep = report.to_dict()
    rep["manifest"] = manifest("verify", args.config, certificates=str(args.certs), eps_0=eps_0,
                               samples=args.samples, seed=args.seed)
    _emit_json(rep, args.out)
    print(report.to_text(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERIFY


def _require_continuous(loaded, what):
    if loaded.continuous is None:
        raise ConfigError(f"{what} needs a continuous-time config", "$.time")


def _require_grid(loaded, what):
    if loaded.grid is None:
        raise ConfigError(f"{what} needs a microgrid config", "$.dgus")


def cmd_compare(args):
    loaded = load_any(_config_path(args.config))
    _require_continuous(loaded, "compare-discretizations")
    cont = loaded.continuous
    report = rmse_compare(cont.subsystems, cont.graph, loaded.Ts, horizon=args.horizon, seed=args.seed)
    man = manifest("compare-discretizations", args.config, horizon=args.horizon, seed=args.seed)
    _emit(report.to_csv(manifest_lines(man)), args.out)
    return EXIT_OK


def _synthesize_all(loaded, args, kinds=("a", "b", "c")):
    lq = _lqr(loaded)
    controllers, certs = {}, {}
    for k in kinds:
        res = synthesize(loaded.network, k, eps_i=args.epsi, eps_0=args.eps0, P_c=lq.P_c, backend=_backend(args))
        if not res.ok:
            _report_failures(res.failures)
            return None, None, lq, _failure_code(res.failures)
        controllers[k], certs[k] = res.gains, res.certificates
    return controllers, certs, lq, EXIT_OK


def cmd_montecarlo(args):
    loaded = load_any(_config_path(args.config))
    _require_grid(loaded, "montecarlo")
    controllers, certs, lq, code = _synthesize_all(loaded, args)
    if code:
        return code
    report = monte_carlo(loaded.grid, controllers, lq.K_c, n_runs=args.runs, seed=args.seed, steps=args.steps,
                         certificates=certs)
    man = manifest("montecarlo", args.config, runs=args.runs, seed=args.seed, steps=args.steps, eps_0=args.eps0,
                   eps_i=args.epsi, **_common_params(args))
    _emit(report.to_csv(manifest_lines(man)), args.out)
    if args.json:
        doc = report.to_dict()
        doc["manifest"] = man
        _emit_json(doc, args.json)
    for k, idx in report.failures.items():
        print(f"{k}: {len(idx)} divergent runs excluded", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args):
    loaded = load_any(_config_path(args.config))
    _require_grid(loaded, "sweep-eps0")
    rows = eps0_sweep(loaded.grid, args.values, cost_kinds=tuple(args.costs), steps=args.steps,
                      step_size=args.step_size, eps_i=args.epsi, backend=_backend(args))
    man = manifest("sweep-eps0", args.config, values=list(args.values), costs=list(args.costs), steps=args.steps,
                   step_size=args.step_size, eps_i=args.epsi, **_common_params(args))
    _emit(sweep_to_csv(rows, manifest_lines(man)), args.out)
    return EXIT_OK


def cmd_simulate(args):
    loaded = load_any(_config_path(args.config))
    _require_grid(loaded, "simulate")
    grid = loaded.grid
    model = grid.exact_model()
    if args.controller == "lqr":
        K = _lqr(loaded).K_c
    else:
        kind = CostKind.parse(args.controller)
        P_c = _lqr(loaded).P_c if kind is CostKind.MIMIC_LQR else None
        res = synthesize(loaded.network, kind, eps_i=args.epsi, eps_0=args.eps0, P_c=P_c, backend=_backend(args))
        if not res.ok:
            _report_failures(res.failures)
            return _failure_code(res.failures)
        K = global_gain(res.gains)
    start = np.full(grid.M, args.start)
    x0 = compute_equilibrium(grid.config, K, start, model=model).x
    traj = simulate(grid, model, K, x0, steps=args.steps)
    man = manifest("simulate", args.config, controller=args.controller, steps=args.steps, start=args.start,
                   eps_0=args.eps0, eps_i=args.epsi, **_common_params(args))
    _emit(traj.to_csv(manifest_lines(man)), args.out)
    return EXIT_OK


def _add_solver_flags(p):
    p.add_argument("--eps0", type=float, default=DEFAULT_EPS_0, help="diagonal dominance margin (default 1e-3)")
    p.add_argument("--epsi", type=float, default=DEFAULT_EPS_I, help="lower bound on E_i (default 1e-6)")
    p.add_argument("--solver", default="CLARABEL", help="cvxpy conic solver name")
    p.add_argument("--tol", type=float, default=1e-8, help="solver feasibility/gap tolerance")


def build_parser():
    parser = argparse.ArgumentParser(prog="passivnet", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="per-subsystem passivity-based controller synthesis")
    p.add_argument("config")
    p.add_argument("--cost", default="a", choices=["a", "b", "c"])
    _add_solver_flags(p)
    p.add_argument("--out", help="certificates JSON (default stdout)")
    p.add_argument("--report", help="verification report JSON")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("verify", help="re-check a certificate file")
    p.add_argument("certs")
    p.add_argument("config")
    p.add_argument("--eps0", type=float, default=None, help="default: value recorded in the certificate manifest")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare-discretizations", help="RMSE of structured discretizations")
    p.add_argument("config")
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV (default stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("montecarlo", help="suboptimality against centralized LQR")
    p.add_argument("config")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    _add_solver_flags(p)
    p.add_argument("--out", help="CSV (default stdout)")
    p.add_argument("--json", help="also write the full report as JSON")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("sweep-eps0", help="feasibility and step response versus eps0")
    p.add_argument("config")
    p.add_argument("--values", type=float, nargs="+", default=list(DEFAULT_SWEEP))
    p.add_argument("--costs", nargs="+", default=["a"], choices=["a", "b", "c"])
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--step-size", type=float, default=0.05, help="reference step in volts")
    p.add_argument("--epsi", type=float, default=DEFAULT_EPS_I)
    p.add_argument("--solver", default="CLARABEL")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", help="CSV (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="closed-loop trajectory on the exact model")
    p.add_argument("config")
    p.add_argument("--controller", default="c", choices=["a", "b", "c", "lqr"])
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--start", type=float, default=50.0, help="initial equilibrium voltage")
    _add_solver_flags(p)
    p.add_argument("--out", help="CSV (default stdout)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, GraphError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverNumericalFailure as exc:
        print(f"solver numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DivergenceError, SingularSystemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except PassivnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

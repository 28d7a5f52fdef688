"""Thin conic-solver backend over cvxpy.

Any interior-point solver that handles PSD and second-order cones fits;
Clarabel is the default.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp

from .errors import InfeasibleError, SolverNumericalFailure

_TOLERANCE_KEYS = {
    "CLARABEL": ("tol_feas", "tol_gap_abs", "tol_gap_rel"),
    "SCS": ("eps_abs", "eps_rel"),
    "CVXOPT": ("feastol", "abstol", "reltol"),
}

_INFEASIBLE = {cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE, cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE}


@dataclass(frozen=True)
class ConicBackend:
    """Solver name plus tolerance; holds no mutable state, so it is reentrant."""

    solver: str = "CLARABEL"
    tol: float = 1e-8
    max_iters: int | None = None
    extra: dict = field(default_factory=dict, hash=False, compare=False)

    def options(self):
        opts = {k: self.tol for k in _TOLERANCE_KEYS.get(self.solver.upper(), ())}
        opts.update(self.extra)
        if self.max_iters is not None:
            opts["max_iter" if self.solver.upper() == "CLARABEL" else "max_iters"] = self.max_iters
        return opts

    def solve(self, problem: cp.Problem, subsystem=None) -> str:
        """Solve in place; return the cvxpy status or raise a typed error."""
        try:
            problem.solve(solver=self.solver, **self.options())
        except cp.SolverError as exc:
            raise SolverNumericalFailure(str(exc), status="solver_error", subsystem=subsystem) from exc
        status = problem.status
        if status in _INFEASIBLE:
            raise InfeasibleError(f"problem reported {status}", status=status, subsystem=subsystem)
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverNumericalFailure(f"solver returned {status}", status=status, subsystem=subsystem)
        return status


# retry ladder for SolverNumericalFailure, tried in order
FALLBACKS = (
    ConicBackend("CLARABEL", extra={"static_regularization_constant": 1e-7}),
    ConicBackend("CLARABEL", extra={"equilibrate_enable": False}),
    ConicBackend("CVXOPT"),
)

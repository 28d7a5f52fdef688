"""Centralized discrete-time LQR baseline."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .errors import ConvergenceError


@dataclass(frozen=True)
class LqrSolution:
    P_c: np.ndarray
    K_c: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    def to_json(self, **kw):
        return json.dumps({k: getattr(self, k).tolist() for k in ("P_c", "K_c", "Q", "R")}
                          | {"iterations": self.iterations, "residual": self.residual}, **kw)


def lqr_gain(A, B, P, R):
    """``K_c = -(B' P B + R)^-1 B' P A``."""
    return -np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)


def riccati_residual(A, B, Q, R, P):
    """Frobenius norm of ``A'PA + Q - A'PB (B'PB + R)^-1 B'PA - P``."""
    PA = P @ A
    PB = P @ B
    res = A.T @ PA + Q - (A.T @ PB) @ np.linalg.solve(B.T @ PB + R, PB.T @ A) - P
    return float(np.linalg.norm(res, "fro"))


def _sym(M):
    return 0.5 * (M + M.T)


def _doubling(A, B, Q, R, tol, max_iter):
    # structure-preserving doubling; H_k -> P quadratically
    n = A.shape[0]
    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Hk = Q.copy()
    I = np.eye(n)
    for k in range(1, max_iter + 1):
        W = I + Gk @ Hk
        WA = np.linalg.solve(W, Ak)
        WG = np.linalg.solve(W, Gk)
        H_next = _sym(Hk + Ak.T @ Hk @ WA)
        Gk = _sym(Gk + Ak @ WG @ Ak.T)
        Ak = Ak @ WA
        step = np.linalg.norm(H_next - Hk, "fro")
        Hk = H_next
        if step <= tol * max(1.0, np.linalg.norm(Hk, "fro")):
            return Hk, k
    raise ConvergenceError(f"doubling did not converge in {max_iter} iterations")


def _value_iteration(A, B, Q, R, tol, max_iter):
    P = Q.copy()
    for k in range(1, max_iter + 1):
        PA, PB = P @ A, P @ B
        P_next = _sym(A.T @ PA + Q - (A.T @ PB) @ np.linalg.solve(B.T @ PB + R, PB.T @ A))
        if np.linalg.norm(P_next - P, "fro") <= tol:
            return P_next, k
        P = P_next
    raise ConvergenceError(f"value iteration did not converge in {max_iter} iterations")


def _newton_polish(A, B, Q, R, P, steps=2):
    # Hewer step: P <- solution of Acl' P Acl - P + Q + K'RK = 0
    best, best_res = P, riccati_residual(A, B, Q, R, P)
    for _ in range(steps):
        K = lqr_gain(A, B, best, R)
        Acl = A + B @ K
        cand = _sym(solve_discrete_lyapunov(Acl.T, Q + K.T @ R @ K))
        res = riccati_residual(A, B, Q, R, cand)
        if not res < best_res:
            break
        best, best_res = cand, res
    return best


def solve_dare(A, B, Q, R, tol=1e-10, max_iter=None, method="doubling", polish=True) -> LqrSolution:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Parameters
    ----------
    method : {"doubling", "fixed_point"}
        ``fixed_point`` iterates the Riccati map from ``P = Q`` until
        successive iterates differ by at most ``tol`` (Frobenius);
        ``doubling`` squares the horizon each step, which matters when the
        plant is close to the identity.
    polish : bool
        Apply Newton (Hewer) refinement steps when they lower the residual.

    Raises
    ------
    ValueError
        ``R`` not positive definite or ``Q`` not PSD.
    ConvergenceError
        Iteration budget exhausted, or the result is not stabilizing.
    """
    A, B = np.atleast_2d(np.asarray(A, float)), np.atleast_2d(np.asarray(B, float))
    Q, R = np.atleast_2d(np.asarray(Q, float)), np.atleast_2d(np.asarray(R, float))
    if np.linalg.eigvalsh(_sym(R)).min() <= 0:
        raise ValueError("R must be positive definite")
    if np.linalg.eigvalsh(_sym(Q)).min() < -1e-12:
        raise ValueError("Q must be positive semidefinite")
    if method == "doubling":
        P, its = _doubling(A, B, Q, R, 1e-15, max_iter or 200)
    elif method == "fixed_point":
        P, its = _value_iteration(A, B, Q, R, tol, max_iter or 1_000_000)
    else:
        raise ValueError(f"unknown method {method!r}")
    if polish:
        P = _newton_polish(A, B, Q, R, P)
    K = lqr_gain(A, B, P, R)
    if np.max(np.abs(np.linalg.eigvals(A + B @ K))) >= 1:
        raise ConvergenceError("Riccati iterate is not stabilizing; is (A, B) stabilizable?")
    return LqrSolution(P, K, Q, R, its, riccati_residual(A, B, Q, R, P))

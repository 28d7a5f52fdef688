"""Solver-free verification of passivity and stability certificates."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import SingularSystemError
from .network import DiscreteSubsystem, NetworkModel, assemble_global

EIG_TOL = 1e-7
SAMPLE_SCALE = 10.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    samples: int = 1
    detail: str = ""


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, other):
        self.checks.extend(other.checks)
        return self

    def to_dict(self):
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_text(self):
        lines = []
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"[{flag}] {c.name}: worst={c.worst:.3e} tol={c.tolerance:g} n={c.samples}"
                         + (f" ({c.detail})" if c.detail else ""))
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _single(name, passed, worst, tol, samples=1, detail=""):
    return VerificationReport([CheckResult(name, bool(passed), float(worst), tol, samples, detail)])


def min_eig(M):
    M = np.asarray(M, dtype=float)
    return float(np.linalg.eigvalsh((M + M.T) / 2).min())


def dissipation_margins(sub: DiscreteSubsystem, cert, x, v):
    """``v'z - gamma(x) - (V(x+) - V(x))`` per column of ``x``/``v``.

    Nonnegative means the dissipation inequality holds for that sample.
    """
    Acl = sub.A + sub.B @ cert.K
    xp = Acl @ x + sub.F @ v
    z = sub.C @ x + cert.D @ v
    dV = np.einsum("ik,ij,jk->k", xp, cert.P, xp) - np.einsum("ik,ij,jk->k", x, cert.P, x)
    gamma = np.einsum("ik,ij,jk->k", x, cert.Gamma, x)
    return np.einsum("ik,ik->k", v, z) - gamma - dV


def check_dissipation_inequality(sub, cert, sample_count=10_000, seed=0, tol=1e-9, scale=SAMPLE_SCALE,
                                 label=None):
    """Sampled check of ``V(x+) - V(x) <= v'z - gamma(x)``.

    Samples are standard normal scaled by ``scale``; the inequality must hold
    up to ``tol`` absolute on every sample.
    """
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((sub.n, sample_count))
    v = scale * rng.standard_normal((sub.m, sample_count))
    margins = dissipation_margins(sub, cert, x, v)
    worst = float(margins.min())
    name = "dissipation_inequality" + (f"[{label}]" if label is not None else "")
    return _single(name, worst >= -tol, worst, tol, sample_count)


def dissipation_matrix(sub, cert):
    """Quadratic form of the dissipation inequality in ``(P, K, Gamma, D)``.

    PSD exactly when the inequality holds for all ``(x, v)``.
    """
    Acl = sub.A + sub.B @ cert.K
    P, F, C, D = cert.P, sub.F, sub.C, cert.D
    top_left = P - Acl.T @ P @ Acl - cert.Gamma
    off = 0.5 * C.T - Acl.T @ P @ F
    bottom = 0.5 * (D + D.T) - F.T @ P @ F
    return np.block([[top_left, off], [off.T, bottom]])


def check_dissipation_matrix(sub, cert, tol=1e-6, label=None):
    """Congruence chain check: the ``(P, K, Gamma, D)`` form must be PSD."""
    worst = min_eig(dissipation_matrix(sub, cert))
    name = "dissipation_matrix" + (f"[{label}]" if label is not None else "")
    return _single(name, worst >= -tol, worst, tol)


def _stacked(certs):
    Gamma = block_diag(*[c.Gamma for c in certs])
    D = block_diag(*[c.D for c in certs])
    return Gamma, D


def stability_matrices(network: NetworkModel, certs, eps_0):
    """Full-coupling and diagonal-dominance stability matrices.

    Returns ``(with_laplacian_term, dominance_form)``.
    """
    Gamma, D = _stacked(certs)
    Dsym = 0.5 * (D + D.T)
    try:
        Dinv = np.linalg.inv(Dsym)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("virtual-output feedthrough D is singular") from exc
    if not np.all(np.isfinite(Dinv)) or np.linalg.cond(Dsym) > 1e15:
        raise SingularSystemError("virtual-output feedthrough D is singular")
    Cg, Lt = network.C_global, network.expanded_laplacian
    n = Gamma.shape[0]
    top = Gamma - eps_0 * np.eye(n)
    full = np.block([[top + Cg.T @ Lt @ Cg, Cg.T @ Lt.T], [Lt @ Cg, Dinv]])
    dominance = np.block([[top, Cg.T @ Lt.T], [Lt @ Cg, Dinv]])
    return full, dominance


def check_global_stability_lmi(network, certs, eps_0, tol=EIG_TOL):
    """Both global stability matrices must be PSD to ``-tol``."""
    try:
        full, dominance = stability_matrices(network, certs, eps_0)
    except SingularSystemError as exc:
        return _single("global_stability_lmi", False, float("-inf"), tol, detail=str(exc))
    rep = _single("diagonal_dominance_lmi", min_eig(dominance) >= -tol, min_eig(dominance), tol)
    return rep.add(_single("global_stability_lmi", min_eig(full) >= -tol, min_eig(full), tol))


def spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if np.size(A) else 0.0


def check_spectral_radius(A_closed, margin=1e-9):
    rho = spectral_radius(A_closed)
    return _single("spectral_radius", rho < 1 - margin, rho, margin, detail="radius must be < 1")


def check_network_spectral_radius(network, gains, margin=1e-9):
    _, _, _, Acl = assemble_global(network, gains)
    return check_spectral_radius(Acl, margin)


def lyapunov_differences(states, certs, state_slices):
    """``V(x_k+1) - V(x_k)`` along a trajectory with ``V = sum x_i' P_i x_i``."""
    P = block_diag(*[c.P for c in certs])
    X = np.asarray(states, dtype=float)
    V = np.einsum("ki,ij,kj->k", X, P, X)
    return np.diff(V), X


def check_lyapunov_decrease_on_trajectory(states, certs, eps_0, state_slices=None, tol=1e-9):
    """``V(x_k+1) - V(x_k) <= -eps_0 ||x_k||^2`` at every step (rows of ``states``)."""
    dV, X = lyapunov_differences(states, certs, state_slices)
    bound = -eps_0 * np.einsum("ki,ki->k", X[:-1], X[:-1])
    slack = bound - dV
    worst = float(slack.min()) if slack.size else 0.0
    return _single("lyapunov_decrease", worst >= -tol, worst, tol, len(dV))


def min_dissipation_eigenvalue(certs):
    """Smallest diagonal entry over all (diagonal) ``Gamma_i``."""
    return float(min(np.diag(c.Gamma).min() for c in certs))


def verify_certificates(network: NetworkModel, certs, eps_0, sample_count=10_000, seed=0):
    """Run all static checks on a certificate set."""
    rep = VerificationReport()
    for i, (sub, cert) in enumerate(zip(network.subsystems, certs)):
        rep.add(check_dissipation_inequality(sub, cert, sample_count, seed + i, label=i))
        rep.add(check_dissipation_matrix(sub, cert, label=i))
    rep.add(check_global_stability_lmi(network, certs, eps_0))
    rep.add(check_network_spectral_radius(network, [c.K for c in certs]))
    return rep

"""Per-subsystem passivity SDPs and certificate recovery.

Each subsystem solves, independently of all others, an SDP in
``(E, G, H, S)``: the passivity LMI, ``E >= eps_i I``, diagonal positive
``H`` and ``S``, and the row-norm bounds on ``H`` and ``S`` that make the
global stability condition hold by diagonal dominance.  The controller and
certificate follow from ``P = E^-1``, ``K = G E^-1``, ``Gamma = H^-1``,
``D = S``.
"""
from __future__ import annotations

import enum
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .errors import DimensionError, GraphError, InfeasibleError, PassivnetError, SolverNumericalFailure
from .network import DiscreteSubsystem, NetworkModel, compute_UW
from .solver import FALLBACKS, ConicBackend

DEFAULT_EPS_I = 1e-6
DEFAULT_EPS_0 = 1e-3
DEFAULT_MARGIN = 1e-7
DEFAULT_BOUND_MARGIN = 1e-5
RESIDUAL_TOL = 1e-7


class CostKind(str, enum.Enum):
    FEASIBILITY = "a"
    MAX_DISSIPATION = "b"
    MIMIC_LQR = "c"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"feasibility": "a", "maxdissipation": "b", "mimiclqr": "c"}
        return cls(aliases.get(str(value).lower().replace("_", ""), str(value).lower()))


@dataclass(frozen=True)
class CostSpec:
    kind: CostKind = CostKind.FEASIBILITY
    target_E: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind.parse(self.kind))
        if self.kind is CostKind.MIMIC_LQR and self.target_E is None:
            raise ValueError("the LQR-mimicking cost needs a target E block")


def lqr_target_block(P_c, state_slice):
    """Diagonal block of ``P_c^-1`` belonging to one subsystem."""
    return np.linalg.inv(P_c)[state_slice, state_slice]


def cost_specs(kind, network: NetworkModel, P_c=None):
    """One :class:`CostSpec` per subsystem; ``P_c`` required for kind ``c``."""
    kind = CostKind.parse(kind)
    if kind is not CostKind.MIMIC_LQR:
        return [CostSpec(kind)] * network.M
    if P_c is None:
        raise ValueError("cost 'c' needs the centralized Riccati solution P_c")
    Pinv = np.linalg.inv(P_c)
    return [CostSpec(kind, Pinv[sl, sl]) for sl in network.state_slices]


def _zeros(r, c):
    return np.zeros((r, c))


def build_passivity_lmi(sub: DiscreteSubsystem, E, G, S, H):
    """Four-block passivity matrix, affine in ``(E, G, S, H)``.

    Works with numpy arrays (numeric evaluation) or cvxpy expressions.  The
    returned matrix must be PSD; its size is ``3 n_i + m_i``.
    """
    A, B, F, C = sub.A, sub.B, sub.F, sub.C
    n, m = sub.n, sub.m
    symbolic = any(isinstance(v, cp.Expression) for v in (E, G, S, H))
    if not symbolic:
        E, G, S, H = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (E, G, S, H))
        for name, v, shape in (("E", E, (n, n)), ("G", G, (m, n)), ("S", S, (m, m)), ("H", H, (n, n))):
            if v.shape != shape:
                raise DimensionError(f"{name} must be {shape}, got {v.shape}")
    AEBG = A @ E + B @ G
    rows = [
        [E, 0.5 * E @ C.T, AEBG.T, E],
        [0.5 * C @ E, 0.5 * (S + S.T), F.T, _zeros(m, n)],
        [AEBG, F, E, _zeros(n, n)],
        [E, _zeros(n, m), _zeros(n, n), H],
    ]
    return cp.bmat(rows) if symbolic else np.block(rows)


def bound_vectors(U_i, W_i, eps_0):
    """Upper bounds on diag(H) and diag(S); ``inf`` where no bound applies."""
    w = np.abs(np.atleast_2d(W_i)).sum(axis=1)
    u = np.abs(np.atleast_2d(U_i)).sum(axis=1)
    h_upper = 1.0 / (w + eps_0)
    with np.errstate(divide="ignore"):
        s_upper = np.where(u > 0, 1.0 / np.where(u > 0, u, 1.0), np.inf)
    return h_upper, s_upper


def cost_value(spec: CostSpec, E, G=None, H=None, S=None):
    """Numeric value of a cost at a given point."""
    if spec.kind is CostKind.FEASIBILITY:
        return 0.0
    if spec.kind is CostKind.MAX_DISSIPATION:
        return float(np.trace(np.atleast_2d(H)))
    return float(np.linalg.norm(np.asarray(E) - spec.target_E, "fro"))


def build_cost(spec: CostSpec, E, h):
    """cvxpy objective expression and any extra epigraph constraints."""
    if spec.kind is CostKind.FEASIBILITY:
        return cp.Constant(0.0), []
    if spec.kind is CostKind.MAX_DISSIPATION:
        return cp.sum(h), []
    t = cp.Variable(name="t")
    return t, [cp.SOC(t, cp.vec(E - spec.target_E, order="C"))]


@dataclass
class LocalSDP:
    """The semidefinite program of one subsystem, ready to solve."""

    subsystem: DiscreteSubsystem
    U_i: np.ndarray
    W_i: np.ndarray
    eps_i: float
    eps_0: float
    cost: CostSpec
    h_upper: np.ndarray
    s_upper: np.ndarray
    margin: float
    problem: cp.Problem = field(repr=False)
    variables: dict = field(repr=False)
    index: int | None = None

    @property
    def lmi_size(self):
        return 3 * self.subsystem.n + self.subsystem.m


def build_local_sdp(sub: DiscreteSubsystem, U_i, W_i, eps_i=DEFAULT_EPS_I, eps_0=DEFAULT_EPS_0,
                    cost: CostSpec | None = None, margin=DEFAULT_MARGIN, index=None,
                    equilibrate=False, bound_margin=DEFAULT_BOUND_MARGIN) -> LocalSDP:
    """Assemble the local SDP.

    ``margin`` turns the non-strict constraints into ``>= margin`` ones and
    ``bound_margin`` shrinks the diagonal bounds by that relative amount, so
    the recovered certificate survives solver round-off.  The stored
    ``h_upper``/``s_upper`` are the untightened bounds.  ``equilibrate``
    applies a diagonal congruence to the LMI (feasible set unchanged).
    """
    if not (eps_i > 0 and eps_0 > 0):
        raise ValueError("eps_i and eps_0 must be positive")
    cost = cost or CostSpec()
    n, m = sub.n, sub.m
    E = cp.Variable((n, n), symmetric=True, name="E")
    G = cp.Variable((m, n), name="G")
    h = cp.Variable(n, name="h")
    s = cp.Variable(m, name="s")
    H, S = cp.diag(h), cp.diag(s)
    lmi = build_passivity_lmi(sub, E, G, S, H)
    lmi = (lmi + lmi.T) / 2
    size = 3 * n + m
    if equilibrate:
        d = _equilibration(sub)
        lmi = np.diag(d) @ lmi @ np.diag(d)
        lmi_rhs = margin * np.diag(d ** 2)
    else:
        lmi_rhs = margin * np.eye(size)
    h_upper, s_upper = bound_vectors(U_i, W_i, eps_0)
    cons = [lmi >> lmi_rhs, E >> (eps_i + margin) * np.eye(n), h >= margin, s >= margin,
            h <= h_upper * (1 - bound_margin)]
    finite = np.isfinite(s_upper)
    if finite.any():
        cons.append(s[np.flatnonzero(finite)] <= s_upper[finite] * (1 - bound_margin))
    objective, extra = build_cost(cost, E, h)
    problem = cp.Problem(cp.Minimize(objective), cons + extra)
    return LocalSDP(sub, np.atleast_2d(U_i), np.atleast_2d(W_i), eps_i, eps_0, cost, h_upper,
                    s_upper, margin, problem, dict(E=E, G=G, h=h, s=s), index)


def _equilibration(sub):
    nominal = build_passivity_lmi(sub, np.eye(sub.n), np.zeros((sub.m, sub.n)), np.eye(sub.m), np.eye(sub.n))
    return 1.0 / np.sqrt(np.abs(nominal).sum(axis=1))


@dataclass
class LocalCertificate:
    """Controller and passivity certificate of one subsystem."""

    K: np.ndarray
    P: np.ndarray
    Gamma: np.ndarray
    D: np.ndarray
    E: np.ndarray
    G: np.ndarray
    H: np.ndarray
    S: np.ndarray
    status: str = "optimal"
    objective: float = 0.0
    residuals: dict = field(default_factory=dict)
    cost: str = "a"
    eps_i: float = DEFAULT_EPS_I
    eps_0: float = DEFAULT_EPS_0
    solve_time: float = 0.0

    @classmethod
    def from_raw(cls, E, G, H, S, **kw):
        """Apply the variable map to raw SDP variables."""
        E = np.asarray(E, dtype=float)
        E = (E + E.T) / 2
        G = np.atleast_2d(np.asarray(G, dtype=float))
        H = np.atleast_2d(np.asarray(H, dtype=float))
        S = np.atleast_2d(np.asarray(S, dtype=float))
        P = np.linalg.inv(E)
        P = (P + P.T) / 2
        K = np.linalg.solve(E, G.T).T
        Gamma = np.diag(1.0 / np.diag(H))
        return cls(K=K, P=P, Gamma=Gamma, D=S.copy(), E=E, G=G, H=H, S=S, **kw)

    def to_dict(self):
        out = {k: getattr(self, k).tolist() for k in ("K", "P", "Gamma", "D", "E", "G", "H", "S")}
        out.update(status=self.status, objective=self.objective, residuals=self.residuals,
                   cost=self.cost, eps_i=self.eps_i, eps_0=self.eps_0, solve_time=self.solve_time)
        return out

    @classmethod
    def from_dict(cls, d):
        mats = {k: np.array(d[k], dtype=float, ndmin=2) for k in ("K", "P", "Gamma", "D", "E", "G", "H", "S")}
        extra = {k: d[k] for k in ("status", "objective", "residuals", "cost", "eps_i", "eps_0", "solve_time") if k in d}
        return cls(**mats, **extra)


def constraint_residuals(sub, E, G, H, S, h_upper, s_upper, eps_i):
    """Smallest slack of every constraint, recomputed from plain arithmetic.

    Negative values are violations.
    """
    E = np.asarray(E, dtype=float)
    H = np.atleast_2d(H)
    S = np.atleast_2d(S)
    lmi = build_passivity_lmi(sub, E, G, S, H)
    lmi = (lmi + lmi.T) / 2
    h, s = np.diag(H), np.diag(S)
    finite = np.isfinite(s_upper)
    return {
        "passivity_lmi": float(np.linalg.eigvalsh(lmi).min()),
        "E_lower": float(np.linalg.eigvalsh((E + E.T) / 2 - eps_i * np.eye(len(E))).min()),
        "H_positive": float(h.min()),
        "S_positive": float(s.min()),
        "H_diagonal": -float(np.abs(H - np.diag(h)).max()),
        "S_diagonal": -float(np.abs(S - np.diag(s)).max()),
        "H_bound": float((h_upper - h).min()),
        "S_bound": float((s_upper[finite] - s[finite]).min()) if finite.any() else float("inf"),
    }


def solve_local_sdp(sdp: LocalSDP, backend: ConicBackend | None = None) -> LocalCertificate:
    """Solve, map back to ``(K, P, Gamma, D)`` and record residuals.

    Raises
    ------
    InfeasibleError
        The solver certified infeasibility.
    SolverNumericalFailure
        The solver stopped without a usable point, or the point fails the
        recomputed constraint residuals.
    """
    backend = backend or ConicBackend()
    t0 = time.perf_counter()
    status = backend.solve(sdp.problem, subsystem=sdp.index)
    elapsed = time.perf_counter() - t0
    v = sdp.variables
    if v["E"].value is None:
        raise SolverNumericalFailure("solver returned no primal point", status=status, subsystem=sdp.index)
    E, G = v["E"].value, v["G"].value
    H, S = np.diag(v["h"].value), np.diag(v["s"].value)
    if np.diag(H).min() <= 0 or np.diag(S).min() <= 0 or np.linalg.eigvalsh(E).min() <= 0:
        raise SolverNumericalFailure("returned point is not positive definite", status=status,
                                     subsystem=sdp.index)
    residuals = constraint_residuals(sdp.subsystem, E, G, H, S, sdp.h_upper, sdp.s_upper, sdp.eps_i)
    if min(residuals.values()) < -RESIDUAL_TOL:
        raise SolverNumericalFailure(f"returned point violates constraints ({status})", status=status,
                                     subsystem=sdp.index)
    return LocalCertificate.from_raw(
        E, G, H, S, status=status, objective=cost_value(sdp.cost, E, G, H, S), residuals=residuals,
        cost=sdp.cost.kind.value, eps_i=sdp.eps_i, eps_0=sdp.eps_0, solve_time=elapsed)


def thread_count(default=1):
    try:
        return max(1, int(os.environ.get("PASSIVNET_THREADS", default)))
    except ValueError:
        return default


@dataclass
class SynthesisResult:
    certificates: list
    failures: dict

    @property
    def ok(self):
        return not self.failures

    @property
    def gains(self):
        return [c.K for c in self.certificates]


def synthesize(network: NetworkModel, cost="a", eps_i=DEFAULT_EPS_I, eps_0=DEFAULT_EPS_0, P_c=None,
               backend=None, margin=DEFAULT_MARGIN, equilibrate=False, threads=None,
               fallbacks=FALLBACKS) -> SynthesisResult:
    """Solve every local SDP; failures are collected per subsystem, not raised.

    A numerical failure (including a returned point whose recomputed
    residuals fall below ``-RESIDUAL_TOL``) is retried with the LMI
    equilibration toggled, then with each backend in ``fallbacks``.
    Infeasibility is final.
    """
    if not network.symmetric:
        raise GraphError("decentralized synthesis requires symmetric coupling weights")
    specs = cost_specs(cost, network, P_c)
    _, _, U_i, W_i = compute_UW(network)

    backend = backend or ConicBackend()
    attempts = [(backend, equilibrate), (backend, not equilibrate)]
    attempts += [(be, eq) for be in fallbacks for eq in (equilibrate, not equilibrate)]

    def one(i):
        last = None
        for be, eq in attempts:
            sdp = build_local_sdp(network.subsystems[i], U_i[i], W_i[i], eps_i, eps_0, specs[i],
                                  margin=margin, index=i, equilibrate=eq)
            try:
                return solve_local_sdp(sdp, be)
            except SolverNumericalFailure as exc:
                last = exc
        raise last

    workers = threads or thread_count()
    certs, failures = [None] * network.M, {}
    with ThreadPoolExecutor(max_workers=min(workers, max(network.M, 1))) as pool:
        futures = {i: pool.submit(one, i) for i in range(network.M)}
        for i, fut in futures.items():
            try:
                certs[i] = fut.result()
            except (InfeasibleError, SolverNumericalFailure) as exc:
                exc.subsystem = i
                failures[i] = exc
    return SynthesisResult(certs, failures)


def certificates_document(certs, manifest=None):
    doc = {"certificates": [c.to_dict() if c is not None else None for c in certs]}
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def load_certificates(doc):
    try:
        return [LocalCertificate.from_dict(c) for c in doc["certificates"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise PassivnetError(f"malformed certificate document: {exc}") from exc

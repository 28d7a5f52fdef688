"""Exact and structure-preserving discretization.

Four approximate schemes keep the sparsity of the continuous interconnection:

* ``SN`` / ``FN``: best pattern-constrained approximation of the exact
  discrete matrices in spectral / Frobenius norm.
* ``AM``: the self-coupling is absorbed into the local drift and only the
  neighbour sum ``w_i = sum_j l_ij y_j`` is held.
* ``LM``: the whole coupling input ``v_i`` is held over the sample.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
from scipy.linalg import block_diag, expm

from .errors import DimensionError, SolverNumericalFailure
from .network import ContinuousSubsystem, CouplingGraph, DiscreteSubsystem, NetworkModel, build_laplacian, expand_laplacian


class Method(str, enum.Enum):
    EXACT = "Exact"
    SN = "SN"
    FN = "FN"
    AM = "AM"
    LM = "LM"


class InputClass(str, enum.Enum):
    IMPULSE = "Impulse"
    STEP = "Step"
    RANDOM = "Random"


@dataclass(frozen=True)
class DiscretizationRequest:
    method: Method
    Ts: float

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.Ts > 0:
            raise ValueError(f"sampling time must be positive, got {self.Ts}")


@dataclass(frozen=True)
class DiscreteSystem:
    """Global discrete model ``x+ = A x + B u (+ Bw w)``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None
    Bw: np.ndarray | None = None


def matrix_exponential_pair(A_c, B_aug, Ts):
    """Zero-order-hold pair ``(exp(A_c Ts), int_0^Ts exp(A_c s) ds B_aug)``.

    Both blocks come from one exponential of ``[[A_c, B_aug], [0, 0]] * Ts``.
    """
    A_c = np.atleast_2d(np.asarray(A_c, dtype=float))
    B_aug = np.asarray(B_aug, dtype=float)
    if B_aug.ndim == 1:
        B_aug = B_aug[:, None]
    if not Ts > 0:
        raise ValueError(f"sampling time must be positive, got {Ts}")
    if not (np.all(np.isfinite(A_c)) and np.all(np.isfinite(B_aug))):
        raise ValueError("non-finite entries in continuous-time data")
    n, p = A_c.shape[0], B_aug.shape[1]
    if A_c.shape != (n, n) or B_aug.shape[0] != n:
        raise DimensionError(f"incompatible shapes {A_c.shape} and {B_aug.shape}")
    Z = np.zeros((n + p, n + p))
    Z[:n, :n] = A_c
    Z[:n, n:] = B_aug
    E = expm(Z * Ts)
    return E[:n, :n], E[:n, n:]


def continuous_global(subsystems, graph: CouplingGraph):
    """Global continuous drift including coupling, plus ``B_c``, ``C``, ``F_c``."""
    L = build_laplacian(graph)
    Lt = expand_laplacian(L, [s.m for s in subsystems])
    Cg = block_diag(*[s.C for s in subsystems])
    Fg = block_diag(*[s.F_c for s in subsystems])
    Ac = block_diag(*[s.A_c for s in subsystems]) - Fg @ Lt @ Cg
    Bc = block_diag(*[s.B_c for s in subsystems])
    return Ac, Bc, Cg, Fg


def discretize_exact(subsystems, graph, Ts, extra_inputs=None) -> DiscreteSystem:
    """Exact ZOH discretization of the coupled network (dense in general).

    ``extra_inputs`` is an optional ``n x q`` matrix of additional held
    continuous inputs (e.g. reference offsets); its discrete image lands in
    ``Bw``.
    """
    Ac, Bc, Cg, _ = continuous_global(subsystems, graph)
    Baug = Bc if extra_inputs is None else np.hstack([Bc, extra_inputs])
    A, Bd = matrix_exponential_pair(Ac, Baug, Ts)
    m = Bc.shape[1]
    Bw = None if extra_inputs is None else Bd[:, m:]
    return DiscreteSystem(A, Bd[:, :m], Cg, Bw)


def discretize_lm(sub: ContinuousSubsystem, Ts) -> DiscreteSubsystem:
    """Hold the full coupling input ``v_i`` over each sample."""
    A, BF = matrix_exponential_pair(sub.A_c, np.hstack([sub.B_c, sub.F_c]), Ts)
    return DiscreteSubsystem(A, BF[:, :sub.m], BF[:, sub.m:], sub.C)


def discretize_am(sub: ContinuousSubsystem, in_weight_sum, Ts) -> DiscreteSubsystem:
    """Absorb ``-(sum_j l_ij) F_c C`` into the drift, hold ``w_i = sum_j l_ij y_j``.

    The returned ``F`` multiplies ``w_i``, not ``v_i``; see
    :func:`am_global`.
    """
    A_tilde = sub.A_c - in_weight_sum * sub.F_c @ sub.C
    A, BF = matrix_exponential_pair(A_tilde, np.hstack([sub.B_c, sub.F_c]), Ts)
    return DiscreteSubsystem(A, BF[:, :sub.m], BF[:, sub.m:], sub.C)


def lm_network(subsystems, graph, Ts) -> NetworkModel:
    return NetworkModel(tuple(discretize_lm(s, Ts) for s in subsystems), graph)


def am_global(subsystems, graph, Ts) -> DiscreteSystem:
    """Global AM model, coupling evaluated as ``w = (D_L - L) C x`` per node."""
    L = build_laplacian(graph)
    M = len(subsystems)
    parts = [discretize_am(s, sum(graph.weight(i, j) for j in graph.in_neighbours(i)), Ts)
             for i, s in enumerate(subsystems)]
    m_i = subsystems[0].m
    offdiag = -(L - np.diag(np.diag(L)))
    Cg = block_diag(*[s.C for s in subsystems])
    A = block_diag(*[p.A for p in parts]) + block_diag(*[p.F for p in parts]) @ np.kron(offdiag, np.eye(m_i)) @ Cg
    B = block_diag(*[p.B for p in parts])
    return DiscreteSystem(A, B, Cg)


def sparsity_patterns(subsystems, graph):
    """Free-entry masks for the structured global ``A`` and ``B``.

    ``A`` entries are free where ``I + A_c,global`` is nonzero (the diagonal
    is always free since a discrete drift is close to identity); ``B`` is
    block-diagonal.
    """
    Ac, _, _, _ = continuous_global(subsystems, graph)
    pattern_A = (np.eye(Ac.shape[0]) + np.abs(Ac)) != 0
    pattern_B = block_diag(*[np.ones(s.B_c.shape) for s in subsystems]) != 0
    return pattern_A, pattern_B


def frobenius_truncate(M, pattern):
    """Closest pattern-constrained matrix in Frobenius norm (entrywise mask)."""
    return np.where(pattern, M, 0.0)


def spectral_fit(M, pattern, solver="CLARABEL"):
    """Pattern-constrained minimiser of ``||M - X||_2`` via a small SDP."""
    r, c = M.shape
    if pattern.all():
        return np.array(M, dtype=float), 0.0
    X = cp.Variable((r, c))
    t = cp.Variable()
    E = M - cp.multiply(pattern.astype(float), X)
    lmi = cp.bmat([[t * np.eye(r), E], [E.T, t * np.eye(c)]])
    prob = cp.Problem(cp.Minimize(t), [(lmi + lmi.T) / 2 >> 0])
    try:
        prob.solve(solver=solver)
    except cp.SolverError as exc:
        raise SolverNumericalFailure(f"spectral fit failed: {exc}") from exc
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or X.value is None:
        raise SolverNumericalFailure(f"spectral fit failed with status {prob.status}",
                                     status=prob.status)
    return np.where(pattern, X.value, 0.0), float(t.value)


def discretize_sn_fn(subsystems, graph, Ts, norm="Frobenius", exact=None, solver="CLARABEL"):
    """Structured global approximation of the exact model.

    Returns the per-subsystem ``DiscreteSubsystem`` list read off the block
    diagonal (``F`` is left zero since the coupling is already inside the
    structured global ``A``) together with the global ``DiscreteSystem``.
    """
    if exact is None:
        exact = discretize_exact(subsystems, graph, Ts)
    pA, pB = sparsity_patterns(subsystems, graph)
    if norm.lower().startswith("f"):
        A = frobenius_truncate(exact.A, pA)
        B = frobenius_truncate(exact.B, pB)
    elif norm.lower().startswith("s"):
        A, _ = spectral_fit(exact.A, pA, solver)
        B, _ = spectral_fit(exact.B, pB, solver)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    subs, k, q = [], 0, 0
    for s in subsystems:
        sl, ul = slice(k, k + s.n), slice(q, q + s.m)
        subs.append(DiscreteSubsystem(A[sl, sl], B[sl, ul], np.zeros((s.n, s.m)), s.C))
        k += s.n
        q += s.m
    return subs, DiscreteSystem(A, B, exact.C)


def global_models(subsystems, graph, Ts, solver="CLARABEL"):
    """All five global models keyed by :class:`Method`."""
    exact = discretize_exact(subsystems, graph, Ts)
    lm_net = lm_network(subsystems, graph, Ts)
    Ag = block_diag(*[s.A for s in lm_net.subsystems]) - block_diag(
        *[s.F for s in lm_net.subsystems]) @ lm_net.expanded_laplacian @ lm_net.C_global
    Bg = block_diag(*[s.B for s in lm_net.subsystems])
    return {
        Method.EXACT: exact,
        Method.SN: discretize_sn_fn(subsystems, graph, Ts, "Spectral", exact, solver)[1],
        Method.FN: discretize_sn_fn(subsystems, graph, Ts, "Frobenius", exact)[1],
        Method.AM: am_global(subsystems, graph, Ts),
        Method.LM: DiscreteSystem(Ag, Bg, lm_net.C_global),
    }


def input_sequence(input_class, steps, m, seed=0):
    """Open-loop test inputs: unit impulse, unit step, or iid uniform[-1, 1]."""
    input_class = InputClass(input_class)
    if input_class is InputClass.IMPULSE:
        u = np.zeros((steps, m))
        u[0] = 1.0
    elif input_class is InputClass.STEP:
        u = np.ones((steps, m))
    else:
        u = np.random.default_rng(seed).uniform(-1.0, 1.0, (steps, m))
    return u


def _open_loop(model, u, observe):
    x = np.zeros(model.A.shape[0])
    out = np.empty((len(u), len(observe)))
    for k, uk in enumerate(u):
        x = model.A @ x + model.B @ uk
        out[k] = x[observe]
    return out


@dataclass
class RmseReport:
    """RMSE of each structured model against the exact one.

    ``table[input_class][method]``; rows are input classes, columns methods.
    """

    table: dict = field(default_factory=dict)
    horizon: int = 0
    seed: int = 0

    methods = (Method.SN, Method.FN, Method.AM, Method.LM)

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["input"] + [m.value for m in self.methods])
        for ic, row in self.table.items():
            w.writerow([InputClass(ic).value] + [repr(float(row[m])) for m in self.methods])
        return buf.getvalue()


def rmse_compare(subsystems, graph, Ts, horizon=1000, input_classes=tuple(InputClass),
                 seed=0, observe=None, models=None) -> RmseReport:
    """Simulate every structured model and the exact one from rest.

    ``observe`` lists the global state indices compared (default: the first
    two states of every subsystem, i.e. voltage and current for a DGU).
    """
    if models is None:
        models = global_models(subsystems, graph, Ts)
    if observe is None:
        observe, k = [], 0
        for s in subsystems:
            observe += [k, k + 1][: s.n]
            k += s.n
    m = models[Method.EXACT].B.shape[1]
    report = RmseReport(horizon=horizon, seed=seed)
    for ic in input_classes:
        ic = InputClass(ic)
        u = input_sequence(ic, horizon, m, seed)
        ref = _open_loop(models[Method.EXACT], u, observe)
        report.table[ic] = {
            meth: float(np.sqrt(np.mean((_open_loop(models[meth], u, observe) - ref) ** 2)))
            for meth in RmseReport.methods
        }
    return report

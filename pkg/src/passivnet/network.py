"""Coupled discrete-time LTI networks.

Each subsystem follows

    x_i+ = A_i x_i + B_i u_i + F_i v_i,   y_i = C_i x_i,
    v_i  = sum_{j in N_i^-} l_ij (y_j - y_i),

and the stacked coupling satisfies ``v = -Lt @ C @ x`` where ``Lt`` is the
Laplacian lifted to output dimensions.  Node ids are 0-based in Python and
1-based in JSON documents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionError, GraphError


def _as_matrix(a, name):
    arr = np.array(a, dtype=float, ndmin=2)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_dims(A, B, F, C):
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    m = C.shape[0]
    if C.shape != (m, n):
        raise DimensionError(f"C must be {m}x{n}, got {C.shape}")
    if B.shape != (n, m):
        raise DimensionError(f"B must be {n}x{m}, got {B.shape}")
    if F.shape != (n, m):
        raise DimensionError(f"F must be {n}x{m}, got {F.shape}")
    return n, m


@dataclass(frozen=True)
class ContinuousSubsystem:
    """Continuous-time subsystem ``dx = A_c x + B_c u + F_c v``, ``y = C x``."""

    A_c: np.ndarray
    B_c: np.ndarray
    F_c: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in ("A_c", "B_c", "F_c", "C"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        _check_dims(self.A_c, self.B_c, self.F_c, self.C)

    @property
    def n(self) -> int:
        return self.A_c.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class DiscreteSubsystem:
    """Discrete-time subsystem ``x+ = A x + B u + F v``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "F", "C"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        _check_dims(self.A, self.B, self.F, self.C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class CouplingGraph:
    """Weighted directed graph; an edge ``(i, j, w)`` means y_i drives node j.

    With this convention ``l_ji = w`` in the subsystem equations, i.e. node
    ``j`` lists ``i`` as an in-neighbour.
    """

    node_count: int
    edges: tuple = ()

    def __post_init__(self):
        seen = set()
        clean = []
        for e in self.edges:
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if i == j:
                raise GraphError(f"self loop at node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise GraphError(f"edge ({i}, {j}) references a missing node")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            if not np.isfinite(w) or w < 0:
                raise GraphError(f"edge ({i}, {j}) has invalid weight {w}")
            seen.add((i, j))
            clean.append((i, j, w))
        object.__setattr__(self, "edges", tuple(clean))

    @classmethod
    def undirected(cls, node_count, pairs):
        """Build a symmetric graph from ``(i, j, w)`` pairs, one per line."""
        edges = []
        for i, j, w in pairs:
            edges += [(i, j, w), (j, i, w)]
        return cls(node_count, tuple(edges))

    def weight(self, i, j):
        """``l_ij``: weight with which y_j enters v_i (0 if no edge j -> i)."""
        for a, b, w in self.edges:
            if a == j and b == i:
                return w
        return 0.0

    def in_neighbours(self, i):
        return sorted(a for a, b, _ in self.edges if b == i)

    def out_neighbours(self, i):
        return sorted(b for a, b, _ in self.edges if a == i)

    def neighbours(self, i):
        return sorted(set(self.in_neighbours(i)) | set(self.out_neighbours(i)))

    @property
    def is_symmetric(self) -> bool:
        w = {(a, b): x for a, b, x in self.edges}
        return all(w.get((b, a)) == x for (a, b), x in w.items())


def build_laplacian(graph: CouplingGraph) -> np.ndarray:
    """Graph Laplacian.

    The diagonal sums ``l_ij`` over the full neighbour set ``N_i`` (in and
    out), off-diagonals are ``-l_ij`` for in-neighbours.  For directed graphs
    the rows need not sum to zero.
    """
    M = graph.node_count
    L = np.zeros((M, M))
    for i in range(M):
        for j in graph.in_neighbours(i):
            L[i, j] = -graph.weight(i, j)
        L[i, i] = sum(graph.weight(i, j) for j in graph.neighbours(i))
    return L


def expand_laplacian(L: np.ndarray, output_dims: Sequence[int]) -> np.ndarray:
    """Lift ``L`` to output dimensions: block (i, j) is ``L_ij * I_m``."""
    L = np.asarray(L, dtype=float)
    M = L.shape[0]
    if L.shape != (M, M):
        raise DimensionError("Laplacian must be square")
    if len(output_dims) != M:
        raise DimensionError(f"expected {M} output dimensions, got {len(output_dims)}")
    if len(set(output_dims)) > 1:
        raise DimensionError("all subsystems must share the same output dimension")
    m_i = int(output_dims[0]) if M else 0
    return np.kron(L, np.eye(m_i))


@dataclass(frozen=True)
class NetworkModel:
    """Discrete subsystems plus their interconnection.

    ``laplacian``, ``expanded_laplacian``, ``U`` and ``W`` are derived on
    construction.
    """

    subsystems: tuple
    graph: CouplingGraph
    laplacian: np.ndarray = field(init=False, repr=False)
    expanded_laplacian: np.ndarray = field(init=False, repr=False)
    U: np.ndarray = field(init=False, repr=False)
    W: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        if len(subs) != self.graph.node_count:
            raise DimensionError(
                f"{len(subs)} subsystems but graph has {self.graph.node_count} nodes")
        if len({s.m for s in subs}) > 1:
            raise DimensionError(
                "all subsystems must share the same output dimension, got "
                f"{[s.m for s in subs]}")
        L = build_laplacian(self.graph)
        Lt = expand_laplacian(L, [s.m for s in subs])
        Cg = self.C_global
        for name, val in (("laplacian", L), ("expanded_laplacian", Lt),
                          ("U", Lt @ Cg), ("W", Cg.T @ Lt.T)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def M(self) -> int:
        return len(self.subsystems)

    @property
    def n(self) -> int:
        return sum(s.n for s in self.subsystems)

    @property
    def m(self) -> int:
        return sum(s.m for s in self.subsystems)

    @property
    def symmetric(self) -> bool:
        return self.graph.is_symmetric

    @property
    def state_slices(self):
        out, k = [], 0
        for s in self.subsystems:
            out.append(slice(k, k + s.n))
            k += s.n
        return out

    @property
    def output_slices(self):
        out, k = [], 0
        for s in self.subsystems:
            out.append(slice(k, k + s.m))
            k += s.m
        return out

    @property
    def C_global(self) -> np.ndarray:
        return block_diag(*[s.C for s in self.subsystems])

    def coupling_inputs(self, x):
        """Per-subsystem ``v_i`` computed edge by edge from the global state."""
        x = np.asarray(x, dtype=float)
        ys = [s.C @ x[sl] for s, sl in zip(self.subsystems, self.state_slices)]
        v = []
        for i in range(self.M):
            vi = np.zeros(self.subsystems[i].m)
            for j in self.graph.in_neighbours(i):
                vi = vi + self.graph.weight(i, j) * (ys[j] - ys[i])
            v.append(vi)
        return v


def assemble_global(network: NetworkModel, gains=None):
    """Global matrices of the coupled network.

    Returns
    -------
    A_global, B_global, C_global, A_closed
        ``A_global = blkdiag(A_i) - blkdiag(F_i) Lt C``; ``A_closed`` is
        ``None`` when no gains are given.
    """
    subs = network.subsystems
    Cg = network.C_global
    Ag = block_diag(*[s.A for s in subs]) - block_diag(*[s.F for s in subs]) @ network.expanded_laplacian @ Cg
    Bg = block_diag(*[s.B for s in subs])
    Acl = None
    if gains is not None:
        Acl = Ag + Bg @ block_diag_gains(network, gains)
    return Ag, Bg, Cg, Acl


def block_diag_gains(network: NetworkModel, gains) -> np.ndarray:
    """Stack local gains ``K_i`` into the block-diagonal global gain."""
    if len(gains) != network.M:
        raise DimensionError(f"expected {network.M} gains, got {len(gains)}")
    blocks = []
    for i, (s, K) in enumerate(zip(network.subsystems, gains)):
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape != (s.m, s.n):
            raise DimensionError(f"gain {i} must be {s.m}x{s.n}, got {K.shape}")
        blocks.append(K)
    return block_diag(*blocks)


def compute_UW(network: NetworkModel):
    """``U = Lt C``, ``W = C^T Lt^T`` and their per-subsystem row slices."""
    U, W = network.U, network.W
    U_i = [U[sl] for sl in network.output_slices]
    W_i = [W[sl] for sl in network.state_slices]
    return U, W, U_i, W_i


@dataclass(frozen=True)
class ContinuousNetwork:
    """Continuous-time subsystems sharing a coupling graph."""

    subsystems: tuple
    graph: CouplingGraph

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        if len(self.subsystems) != self.graph.node_count:
            raise DimensionError("subsystem count does not match graph size")
        if len({s.m for s in self.subsystems}) > 1:
            raise DimensionError("all subsystems must share the same output dimension")

    @property
    def M(self) -> int:
        return len(self.subsystems)

    @property
    def n(self) -> int:
        return sum(s.n for s in self.subsystems)

    @property
    def m(self) -> int:
        return sum(s.m for s in self.subsystems)

    @property
    def laplacian(self):
        return build_laplacian(self.graph)

    @property
    def state_slices(self):
        out, k = [], 0
        for s in self.subsystems:
            out.append(slice(k, k + s.n))
            k += s.n
        return out

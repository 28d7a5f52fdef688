"""DC microgrid case study: averaged buck-converter DGUs on resistive lines.

DGU state ``x = [V, I - I_l, s]`` with ``s`` an integrator of the voltage
error, input ``u = d - R I_l / V_in``.  Lines carry weight ``1 / R_ij``.
The integrator is driven as ``ds/dt = alpha (V + s_f)`` with the
feedforward ``s_f = -V_r``, and the input as ``u = K x + u_f`` with
``u_f = -V_r / V_in + K [-V_r, 0, 0]'``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

from .discretization import DiscreteSystem, discretize_exact, lm_network, matrix_exponential_pair
from .errors import ConfigError, SingularSystemError
from .network import ContinuousNetwork, ContinuousSubsystem, CouplingGraph, NetworkModel

DEFAULT_CONFIG = "default_microgrid.json"


@dataclass(frozen=True)
class DguParams:
    V_in: float
    R: float
    L: float
    C: float
    I_l: float = 5.0
    alpha: float | None = None

    def __post_init__(self):
        for name in ("V_in", "R", "L", "C", "I_l"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be positive, got {val}")
        if self.alpha is not None and not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class MicrogridConfig:
    dgus: tuple
    lines: tuple
    Ts: float = 1e-5
    references: tuple | None = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "dgus", tuple(self.dgus))
        object.__setattr__(self, "lines", tuple((int(i), int(j), float(r)) for i, j, r in self.lines))
        if not self.Ts > 0:
            raise ConfigError("Ts must be positive", "$.Ts")
        M = len(self.dgus)
        seen = set()
        for k, (i, j, r) in enumerate(self.lines):
            if not r > 0:
                raise ConfigError(f"line resistance must be positive, got {r}", f"$.lines[{k}]")
            if i == j or not (0 <= i < M and 0 <= j < M):
                raise ConfigError(f"invalid line endpoints ({i + 1}, {j + 1})", f"$.lines[{k}]")
            key = frozenset((i, j))
            if key in seen:
                raise ConfigError(f"duplicate line ({i + 1}, {j + 1})", f"$.lines[{k}]")
            seen.add(key)
        refs = self.references
        if refs is None:
            refs = tuple(50.0 + 0.01 * i * (-1) ** (i + 1) for i in range(M))
        if len(refs) != M:
            raise ConfigError(f"expected {M} references, got {len(refs)}", "$.references")
        object.__setattr__(self, "references", tuple(float(r) for r in refs))

    @property
    def M(self):
        return len(self.dgus)

    def alpha(self, i):
        a = self.dgus[i].alpha
        return 1.0 / self.Ts if a is None else a

    @property
    def V_in(self):
        return np.array([d.V_in for d in self.dgus])

    @property
    def R(self):
        return np.array([d.R for d in self.dgus])

    @property
    def loads(self):
        return np.array([d.I_l for d in self.dgus])


def alternating_references(M):
    """``V_r,i = 50 + 0.01 (i - 1) (-1)^i`` for ``i = 1..M``."""
    return np.array([50.0 + 0.01 * (i - 1) * (-1) ** i for i in range(1, M + 1)])


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dgus", "lines"],
    "properties": {
        "description": {"type": "string"},
        "Ts": {"type": "number", "exclusiveMinimum": 0},
        "dgus": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object",
                "required": ["V_in", "R", "L", "C"],
                "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                               for k in ("V_in", "R", "L", "C", "I_l", "alpha")},
            },
        },
        "lines": {
            "type": "array",
            "items": {"type": "array", "minItems": 3, "maxItems": 3,
                      "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "integer", "minimum": 1},
                                      {"type": "number", "exclusiveMinimum": 0}],
                      "items": {"type": "number"}},
        },
        "references": {"type": "array", "items": {"type": "number"}},
    },
}


def config_from_dict(doc) -> MicrogridConfig:
    from .schema import validate
    validate(doc, CONFIG_SCHEMA)
    dgus = [DguParams(**{k: v for k, v in d.items() if k in ("V_in", "R", "L", "C", "I_l", "alpha")})
            for d in doc["dgus"]]
    lines = [(i - 1, j - 1, r) for i, j, r in doc["lines"]]
    return MicrogridConfig(dgus, lines, doc.get("Ts", 1e-5), doc.get("references"), doc.get("description", ""))


def config_to_dict(cfg: MicrogridConfig):
    dgus = []
    for d in cfg.dgus:
        item = {"V_in": d.V_in, "R": d.R, "L": d.L, "C": d.C, "I_l": d.I_l}
        if d.alpha is not None:
            item["alpha"] = d.alpha
        dgus.append(item)
    return {"description": cfg.description, "Ts": cfg.Ts, "dgus": dgus,
            "lines": [[i + 1, j + 1, r] for i, j, r in cfg.lines], "references": list(cfg.references)}


def load_config(path=None) -> MicrogridConfig:
    """Read a config file; ``None`` loads the bundled default."""
    if path is None:
        text = resources.files("passivnet.data").joinpath(DEFAULT_CONFIG).read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "$") from exc
    return config_from_dict(doc)


def build_dgu(params: DguParams, alpha=None) -> ContinuousSubsystem:
    """Averaged DGU model with voltage integrator."""
    a = params.alpha if alpha is None else alpha
    if a is None or not a > 0:
        raise ConfigError(f"integrator coefficient must be positive, got {a}")
    A = [[0.0, 1.0 / params.C, 0.0],
         [-1.0 / params.L, -params.R / params.L, 0.0],
         [a, 0.0, 0.0]]
    B = [[0.0], [params.V_in / params.L], [0.0]]
    F = [[1.0 / params.C], [0.0], [0.0]]
    return ContinuousSubsystem(A, B, F, [[1.0, 0.0, 0.0]])


def build_network(config: MicrogridConfig) -> ContinuousNetwork:
    subs = tuple(build_dgu(d, config.alpha(i)) for i, d in enumerate(config.dgus))
    graph = CouplingGraph.undirected(config.M, [(i, j, 1.0 / r) for i, j, r in config.lines])
    return ContinuousNetwork(subs, graph)


def reference_input_matrix(config: MicrogridConfig):
    """Continuous matrix through which ``s_f`` enters the integrators (``alpha`` on s rows)."""
    cols = [np.array([[0.0], [0.0], [config.alpha(i)]]) for i in range(config.M)]
    return block_diag(*cols)


@dataclass(frozen=True)
class Microgrid:
    """Config plus derived continuous network and discrete models."""

    config: MicrogridConfig
    network: ContinuousNetwork = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "network", build_network(self.config))

    @property
    def M(self):
        return self.config.M

    @property
    def n(self):
        return self.network.n

    def exact_model(self) -> DiscreteSystem:
        """Dense exact model with the integrator feedforward as ``Bw``."""
        return discretize_exact(self.network.subsystems, self.network.graph, self.config.Ts,
                                extra_inputs=reference_input_matrix(self.config))

    def lm_network(self) -> NetworkModel:
        return lm_network(self.network.subsystems, self.network.graph, self.config.Ts)

    def lm_model(self) -> DiscreteSystem:
        """Global LM model (structured) with the matching ``Bw``."""
        net = self.lm_network()
        A = block_diag(*[s.A for s in net.subsystems]) - block_diag(
            *[s.F for s in net.subsystems]) @ net.expanded_laplacian @ net.C_global
        B = block_diag(*[s.B for s in net.subsystems])
        Bw = []
        for i, s in enumerate(self.network.subsystems):
            _, bw = matrix_exponential_pair(s.A_c, reference_input_matrix(self.config)[3 * i:3 * i + 3, i:i + 1],
                                            self.config.Ts)
            Bw.append(bw)
        return DiscreteSystem(A, B, net.C_global, block_diag(*Bw))


def global_gain(gains, n=None):
    """Accept a list of local gains or an already global matrix."""
    if isinstance(gains, np.ndarray) and gains.ndim == 2 and (n is None or gains.shape[1] == n):
        return gains
    return block_diag(*[np.atleast_2d(K) for K in gains])


def feedforward(config: MicrogridConfig, K, refs):
    """``u_f = -V_r / V_in + K xbar`` with ``xbar`` stacking ``[-V_r, 0, 0]``; ``s_f = -V_r``."""
    refs = np.asarray(refs, dtype=float)
    xbar = np.zeros(3 * config.M)
    xbar[0::3] = -refs
    return -refs / config.V_in + K @ xbar, -refs


@dataclass(frozen=True)
class Equilibrium:
    """Closed-loop steady state in shifted and physical coordinates."""

    x: np.ndarray
    u: np.ndarray
    u_f: np.ndarray
    s_f: np.ndarray
    V_r: np.ndarray
    I_r: np.ndarray
    s_r: np.ndarray
    u_r: np.ndarray
    loads: np.ndarray


def compute_equilibrium(config: MicrogridConfig, gains, refs=None, loads=None, model=None) -> Equilibrium:
    """Fixed point of ``x = (A + B K) x + B u_f + Bw s_f``.

    ``model`` defaults to the exact discrete model.  Loads only shift the
    current coordinate, so they matter for the physical ``I_r`` alone.
    """
    if model is None:
        model = Microgrid(config).exact_model()
    refs = np.asarray(config.references if refs is None else refs, dtype=float)
    loads = np.asarray(config.loads if loads is None else loads, dtype=float)
    n = model.A.shape[0]
    K = global_gain(gains, n)
    u_f, s_f = feedforward(config, K, refs)
    lhs = np.eye(n) - model.A - model.B @ K
    if np.linalg.cond(lhs) > 1e14:
        raise SingularSystemError("closed loop has an eigenvalue at 1; no unique equilibrium")
    x = np.linalg.solve(lhs, model.B @ u_f + model.Bw @ s_f)
    u = K @ x + u_f
    return Equilibrium(x=x, u=u, u_f=u_f, s_f=s_f, V_r=refs.copy(), I_r=x[1::3] + loads,
                       s_r=x[2::3].copy(), u_r=u, loads=loads)

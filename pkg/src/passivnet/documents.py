"""JSON documents: network definitions, manifests, certificate files.

Two config kinds are accepted.  A microgrid config has a ``dgus`` list (see
:mod:`passivnet.microgrid`).  A generic network document looks like::

    {
      "time": "discrete",            # or "continuous" (then "Ts" is required)
      "Ts": 1e-3,
      "subsystems": [{"A": [[...]], "B": [[...]], "F": [[...]], "C": [[...]]}, ...],
      "edges": [[1, 2, 0.5], [2, 1, 0.5]]
    }

Edge ``[i, j, w]`` (1-based) means the output of ``i`` enters ``v_j`` with
weight ``w``.
"""
from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .discretization import lm_network
from .errors import ConfigError, DimensionError, GraphError
from .microgrid import Microgrid, MicrogridConfig, config_from_dict
from .network import ContinuousNetwork, ContinuousSubsystem, CouplingGraph, DiscreteSubsystem, NetworkModel
from .schema import validate

_MATRIX = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["subsystems"],
    "properties": {
        "time": {"enum": ["discrete", "continuous"]},
        "Ts": {"type": "number", "exclusiveMinimum": 0},
        "subsystems": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["A", "B", "F", "C"],
                      "properties": {k: _MATRIX for k in ("A", "B", "F", "C")}},
        },
        "edges": {
            "type": "array",
            "items": {"type": "array", "minItems": 3, "maxItems": 3,
                      "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "integer", "minimum": 1},
                                      {"type": "number", "minimum": 0}]},
        },
    },
    "if": {"properties": {"time": {"const": "continuous"}}, "required": ["time"]},
    "then": {"required": ["Ts"]},
}

CERTIFICATE_SCHEMA = {
    "type": "object",
    "required": ["certificates"],
    "properties": {
        "certificates": {
            "type": "array",
            "items": {"type": "object", "required": ["K", "P", "Gamma", "D", "E", "G", "H", "S"],
                      "properties": {k: _MATRIX for k in ("K", "P", "Gamma", "D", "E", "G", "H", "S")}},
        },
    },
}


@dataclass
class LoadedConfig:
    """A parsed config: always a discrete design network, sometimes more."""

    kind: str
    network: NetworkModel
    continuous: ContinuousNetwork | None = None
    grid: Microgrid | None = None
    Ts: float | None = None


def read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", "$") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", "$") from exc


def _wrap(fn, path):
    try:
        return fn()
    except (DimensionError, GraphError) as exc:
        raise ConfigError(str(exc), path) from exc


def network_from_dict(doc) -> LoadedConfig:
    validate(doc, NETWORK_SCHEMA)
    M = len(doc["subsystems"])
    edges = []
    for k, (i, j, w) in enumerate(doc.get("edges", [])):
        if i > M or j > M:
            raise ConfigError(f"node id out of range 1..{M}", f"$.edges[{k}]")
        edges.append((i - 1, j - 1, w))
    graph = _wrap(lambda: CouplingGraph(M, tuple(edges)), "$.edges")
    time = doc.get("time", "discrete")
    subs = []
    for k, s in enumerate(doc["subsystems"]):
        cls = ContinuousSubsystem if time == "continuous" else DiscreteSubsystem
        subs.append(_wrap(lambda: cls(s["A"], s["B"], s["F"], s["C"]), f"$.subsystems[{k}]"))
    if time == "continuous":
        cont = _wrap(lambda: ContinuousNetwork(tuple(subs), graph), "$.subsystems")
        net = lm_network(cont.subsystems, graph, doc["Ts"])
        return LoadedConfig("network", net, cont, None, doc["Ts"])
    net = _wrap(lambda: NetworkModel(tuple(subs), graph), "$.subsystems")
    return LoadedConfig("network", net)


def load_any(path) -> LoadedConfig:
    """Parse a microgrid or generic network config."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", "$")
    if "dgus" in doc:
        cfg = config_from_dict(doc)
        grid = Microgrid(cfg)
        return LoadedConfig("microgrid", grid.lm_network(), grid.network, grid, cfg.Ts)
    if "subsystems" in doc:
        return network_from_dict(doc)
    raise ConfigError("expected a 'dgus' (microgrid) or 'subsystems' (network) key", "$")


def manifest(command, config=None, **parameters):
    """Reproducibility header embedded in every output."""
    return {
        "tool": "passivnet",
        "version": __version__,
        "command": command,
        "config": None if config is None else str(config),
        "parameters": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in parameters.items()},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def manifest_lines(man):
    return ["manifest: " + json.dumps(man, sort_keys=True)]


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def read_certificates(path):
    from .synthesis import load_certificates

    doc = read_json(path)
    validate(doc, CERTIFICATE_SCHEMA)
    return load_certificates(doc), doc


def read_csv_table(text):
    """Parse a CSV produced by this package, skipping ``#`` manifest lines."""
    import csv
    import io

    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    return rows[0], rows[1:]


__all__ = ["LoadedConfig", "MicrogridConfig", "load_any", "manifest", "read_certificates", "read_json",
           "write_json", "network_from_dict", "read_csv_table"]

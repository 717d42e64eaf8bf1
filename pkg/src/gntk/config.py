"""Experiment configuration: parsing, validation, defaults, and the figure1 preset."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .graphs import (
    GraphSpec,
    FeatureMoment,
    TrainSplit,
    build_ring_graph,
    figure1_split,
    graph_from_dict,
    identity_features,
    load_graph_json,
)
from .recursion import (
    GcnHyper,
    LayerWithReplacement,
    LayerWithoutReplacement,
    NodeWise,
    NoSampling,
    fastgcn_probabilities,
    uniform_probabilities,
)

__all__ = ["ConfigError", "ExperimentConfig", "SchemeSpec", "FiniteRunSpec", "OracleSpec",
           "FIGURE1_PRESET", "load_config", "resolve_config"]


class ConfigError(ValueError):
    """Validation failure with a machine-readable error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def to_json(self) -> dict:
        return {"error": self.code, "message": self.message}


# Defaults of the bundled ring-graph demo; `gntk run --preset figure1` uses
# these verbatim.  The gradient-flow rate eta applies to the GP evolution; the
# finite-width trainer needs a step size below its own stability limit, hence
# the separate finite_gcn.eta.
FIGURE1_PRESET: dict = {
    "graph": "ring100",
    "features": "identity",
    "architecture": "gcn",
    "hyper": {"sigma_w2": 32.0, "sigma_b2": 0.0, "n_layers": 2, "activation": "relu"},
    "schemes": [
        {"name": "none"},
        {"name": "layer_without_replacement", "q": 0.5},
    ],
    "split": "figure1",
    "eta": 0.1,
    "time_grid": [0.0, 0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.128, 0.256],
    "append_limit_time": True,
    "epsilon": 1e-4,
    "seed": 0,
    "n_paths": 10,
    "finite_gcn": {"widths": [100, 100, 1], "n_trials": 10, "eta": 1e-4, "max_steps": 400},
    "oracles": "default",
    "out_dir": "gntk_out",
}

PRESETS = {"figure1": FIGURE1_PRESET}

_SCHEME_NAMES = ("none", "layer_with_replacement", "layer_without_replacement", "node_wise")


@dataclass(frozen=True)
class SchemeSpec:
    """One sampling scheme entry of the config, resolved lazily against a graph."""

    name: str
    label: str
    params: dict

    def build(self, graph: GraphSpec, n_layers: int):
        del n_layers  # single scheme broadcasts to all layers downstream
        n = graph.n_nodes
        if self.name == "none":
            return NoSampling()
        if self.name == "layer_with_replacement":
            p = self.params["p"]
            if isinstance(p, str):
                if p == "uniform":
                    p_vec = uniform_probabilities(n)
                elif p == "fastgcn":
                    p_vec = fastgcn_probabilities(graph)
                else:
                    raise ConfigError("invalid_sampling_prob", f"unknown p spec {p!r}")
            else:
                p_vec = np.asarray(p, dtype=float)
            try:
                return LayerWithReplacement(p=p_vec, n_samples=int(self.params["n_samples"]))
            except ValueError as exc:
                raise ConfigError("invalid_sampling_prob", str(exc)) from None
        if self.name == "layer_without_replacement":
            q = self.params["q"]
            q_vec = np.full(n, float(q)) if np.isscalar(q) else np.asarray(q, dtype=float)
            try:
                return LayerWithoutReplacement(q=q_vec)
            except ValueError as exc:
                raise ConfigError("invalid_sampling_prob", str(exc)) from None
        if self.name == "node_wise":
            try:
                return NodeWise(fanout=int(self.params["fanout"]))
            except ValueError as exc:
                raise ConfigError("invalid_sampling_prob", str(exc)) from None
        raise ConfigError("bad_config", f"unknown scheme name {self.name!r}")


@dataclass(frozen=True)
class FiniteRunSpec:
    widths: tuple
    n_trials: int
    eta: float
    max_steps: int


@dataclass(frozen=True)
class OracleSpec:
    moment_samples: int = 200_000
    mask_draws: int = 20_000
    finite_nodes: int = 16
    finite_width: int = 512
    finite_trials: int = 40
    finite_columns: int = 256


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description."""

    raw: dict
    graph_spec: Any
    features: Any
    architecture: Any
    hyper: GcnHyper
    schemes: tuple
    split_spec: Any
    eta: float
    time_grid: tuple
    append_limit_time: bool
    epsilon: float
    seed: int
    n_paths: int
    finite: FiniteRunSpec | None
    oracles: OracleSpec | None
    out_dir: str
    config_dir: str = "."

    def build_graph(self) -> GraphSpec:
        spec = self.graph_spec
        if spec == "ring100":
            return build_ring_graph()
        if isinstance(spec, dict) and "file" in spec:
            path = spec["file"]
            if not os.path.isabs(path):
                path = os.path.join(self.config_dir, path)
            if not os.path.exists(path):
                raise ConfigError("graph_not_found", f"edge-list file not found: {path}")
            try:
                return load_graph_json(path)
            except (ValueError, json.JSONDecodeError) as exc:
                raise ConfigError("bad_graph", f"cannot parse graph file {path}: {exc}") from None
        if isinstance(spec, dict):
            try:
                return graph_from_dict(spec)
            except ValueError as exc:
                raise ConfigError("bad_graph", str(exc)) from None
        raise ConfigError("bad_config", f"unsupported graph spec {spec!r}")

    def build_features(self, graph: GraphSpec) -> FeatureMoment:
        if self.features == "identity":
            return identity_features(graph.n_nodes)
        try:
            return FeatureMoment(np.asarray(self.features, dtype=float))
        except ValueError as exc:
            raise ConfigError("bad_features", str(exc)) from None

    def build_split(self, graph: GraphSpec) -> TrainSplit:
        spec = self.split_spec
        if spec == "figure1":
            if graph.coords is None or graph.n_nodes != 100:
                raise ConfigError("invalid_split", "the figure1 split requires the ring100 graph")
            return figure1_split(graph)
        try:
            b = np.asarray(spec["train_idx"], dtype=int)
            y = np.asarray(spec["y_b"], dtype=float)
            rest = np.setdiff1d(np.arange(graph.n_nodes), b)
            return TrainSplit(train_idx=b, rest_idx=rest, y_b=y)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("invalid_split", f"bad split spec: {exc}") from None


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(
    config_path: str | None,
    preset: str | None = None,
    overrides: dict | None = None,
) -> ExperimentConfig:
    """Load + validate a config file, optionally on top of a named preset."""
    data: dict = {}
    config_dir = "."
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("bad_config", f"unknown preset {preset!r}")
        data = copy.deepcopy(PRESETS[preset])
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError("config_not_found", f"config file not found: {config_path}")
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                file_data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("bad_config", f"config is not valid JSON: {exc}") from None
        data = _merge(data, file_data)
        config_dir = os.path.dirname(os.path.abspath(config_path))
    if not data:
        raise ConfigError("bad_config", "no config file and no preset given")
    if overrides:
        data = _merge(data, overrides)
    return resolve_config(data, config_dir=config_dir)


def resolve_config(data: dict, config_dir: str = ".") -> ExperimentConfig:
    data = _merge({"features": "identity", "append_limit_time": True, "epsilon": 1e-4,
                   "seed": 0, "n_paths": 10, "finite_gcn": None, "oracles": "default",
                   "out_dir": "gntk_out"}, data)
    for key in ("graph", "architecture", "hyper", "schemes", "split", "eta", "time_grid"):
        if key not in data:
            raise ConfigError("bad_config", f"missing config key {key!r}")

    h = data["hyper"]
    try:
        hyper = GcnHyper(
            sigma_w2=float(h["sigma_w2"]),
            sigma_b2=float(h["sigma_b2"]),
            n_layers=int(h["n_layers"]),
            activation=h.get("activation", "relu"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("bad_config", f"bad hyper block: {exc}") from None

    arch = data["architecture"]
    if isinstance(arch, str):
        if arch not in ("gcn", "graphsage"):
            raise ConfigError("invalid_architecture", f"unknown architecture {arch!r}")
    elif not (isinstance(arch, dict) and ("program" in arch or "program_file" in arch)):
        raise ConfigError("invalid_architecture", f"unsupported architecture spec {arch!r}")

    schemes = []
    labels: list[str] = []
    raw_schemes = data["schemes"]
    if not isinstance(raw_schemes, list) or not raw_schemes:
        raise ConfigError("bad_config", "schemes must be a nonempty list")
    for entry in raw_schemes:
        name = entry.get("name")
        if name not in _SCHEME_NAMES:
            raise ConfigError("bad_config", f"unknown scheme name {name!r}")
        label = entry.get("label", name)
        if label in labels:
            label = f"{label}_{len(labels)}"
        labels.append(label)
        params = {k: v for k, v in entry.items() if k not in ("name", "label")}
        _precheck_scheme(name, params)
        schemes.append(SchemeSpec(name=name, label=label, params=params))
    if isinstance(arch, dict) or arch == "graphsage":
        allowed = {"none", "node_wise"} if arch == "graphsage" else {"none"}
        bad = [s.name for s in schemes if s.name not in allowed]
        if bad:
            raise ConfigError(
                "unsupported_scheme",
                f"architecture {arch!r} supports schemes {sorted(allowed)}, got {bad}",
            )

    grid = [float(t) for t in data["time_grid"]]
    if not grid or grid[0] != 0.0 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("invalid_time_grid", "time grid must start at 0 and strictly increase")

    eta = float(data["eta"])
    if eta <= 0:
        raise ConfigError("bad_config", "eta must be positive")
    epsilon = float(data["epsilon"])
    if epsilon <= 0:
        raise ConfigError("bad_config", "epsilon must be positive")
    n_paths = int(data["n_paths"])
    if n_paths < 0:
        raise ConfigError("bad_config", "n_paths must be nonnegative")

    finite = None
    if data["finite_gcn"]:
        f = data["finite_gcn"]
        try:
            finite = FiniteRunSpec(
                widths=tuple(int(w) for w in f["widths"]),
                n_trials=int(f.get("n_trials", 10)),
                eta=float(f.get("eta", 1e-4)),
                max_steps=int(f.get("max_steps", 400)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("bad_config", f"bad finite_gcn block: {exc}") from None
        if finite.eta <= 0 or finite.n_trials < 0 or finite.max_steps < 0:
            raise ConfigError("bad_config", "finite_gcn values out of range")

    oracles: OracleSpec | None
    if data["oracles"] in (None, False):
        oracles = None
    elif data["oracles"] == "default":
        oracles = OracleSpec()
    elif isinstance(data["oracles"], dict):
        oracles = OracleSpec(**{k: int(v) for k, v in data["oracles"].items()})
    else:
        raise ConfigError("bad_config", f"bad oracles spec {data['oracles']!r}")

    return ExperimentConfig(
        raw=data,
        graph_spec=data["graph"],
        features=data["features"],
        architecture=arch,
        hyper=hyper,
        schemes=tuple(schemes),
        split_spec=data["split"],
        eta=eta,
        time_grid=tuple(grid),
        append_limit_time=bool(data["append_limit_time"]),
        epsilon=epsilon,
        seed=int(data["seed"]),
        n_paths=n_paths,
        finite=finite,
        oracles=oracles,
        out_dir=str(data["out_dir"]),
        config_dir=config_dir,
    )


def _precheck_scheme(name: str, params: dict) -> None:
    """Early validation of scheme parameters that do not need the graph."""
    if name == "layer_with_replacement":
        if "p" not in params or "n_samples" not in params:
            raise ConfigError("bad_config", "layer_with_replacement needs 'p' and 'n_samples'")
        p = params["p"]
        if not isinstance(p, str):
            arr = np.asarray(p, dtype=float)
            if np.any(arr <= 0):
                raise ConfigError("invalid_sampling_prob", "p entries must be strictly positive")
        if int(params["n_samples"]) < 1:
            raise ConfigError("invalid_sampling_prob", "n_samples must be >= 1")
    elif name == "layer_without_replacement":
        if "q" not in params:
            raise ConfigError("bad_config", "layer_without_replacement needs 'q'")
        q = np.atleast_1d(np.asarray(params["q"], dtype=float))
        if np.any(q <= 0) or np.any(q > 1):
            raise ConfigError("invalid_sampling_prob", "q entries must lie in (0, 1]")
    elif name == "node_wise":
        if "fanout" not in params:
            raise ConfigError("bad_config", "node_wise needs 'fanout'")
        if int(params["fanout"]) < 1:
            raise ConfigError("invalid_sampling_prob", "fanout must be >= 1")

"""Scenario files: strict YAML schema to typed objects.

Every unknown key, missing required key or out-of-range value raises ``ConfigError``
naming the dotted path of the offending field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from qconsensus.graph import PRESETS, Graph, GraphError, build_graph
from qconsensus.params import VARIANTS, ParamError, ProtocolParams

MODES = ("linear", "nonlinear", "params", "dos-gen", "compare")
DOS_MODES = ("none", "scripted", "random", "duty_cycle")
MODELS = ("duffing5",)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class DoSConfig:
    mode: str = "none"
    intervals: list[tuple[float, float]] = field(default_factory=list)
    eta: float = 0.0
    tau_D: float = math.inf
    kappa: float = 0.0
    T_dur: float = math.inf
    percent_active: float = 0.0
    max_consecutive: int = 1


@dataclass
class ScenarioConfig:
    name: str
    mode: str
    graph: Graph
    params: ProtocolParams
    dos: DoSConfig
    n_steps: int
    seed: int = 0
    output_dir: str | None = None
    protocol: str = "zih"
    consensus_tol: float = 1e-3
    # linear plant
    last_row: tuple[float, ...] | None = None
    initial_states: np.ndarray | None = None
    beta_floor: float | None = None
    # nonlinear plant
    model: str | None = None
    initial_range: tuple[float, float] | None = None
    rho0: np.ndarray | None = None
    z0: np.ndarray | None = None
    eso_l: tuple[float, ...] | None = None
    eso_M: tuple[float, ...] | None = None
    substeps: int | None = None
    source: str | None = None

    @property
    def is_linear(self) -> bool:
        return self.model is None


def _keys(d: Any, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else str(k), "unknown key")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}.{k}" if path else k, "required key is missing")
    return d


def _num(d: dict, key: str, path: str, *, default=None, positive=False, nonneg=False, integer=False, allow_inf=False):
    p = f"{path}.{key}" if path else key
    if key not in d:
        if default is None:
            raise ConfigError(p, "required key is missing")
        return default
    v = d[key]
    if isinstance(v, str) and allow_inf and v.strip().lower() in ("inf", ".inf", "infinity"):
        v = math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(p, f"expected a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(p, f"expected an integer, got {v!r}")
    if math.isinf(v) and not allow_inf or math.isnan(v):
        raise ConfigError(p, f"expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(p, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(p, f"must be non-negative, got {v!r}")
    return int(v) if integer else float(v)


def _vec(d: dict, key: str, path: str, length: int | None = None, required=True):
    p = f"{path}.{key}" if path else key
    if key not in d:
        if required:
            raise ConfigError(p, "required key is missing")
        return None
    v = d[key]
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(p, "expected a list of numbers")
    if length is not None and len(v) != length:
        raise ConfigError(p, f"expected {length} entries, got {len(v)}")
    return tuple(float(x) for x in v)


def _matrix(d: dict, key: str, path: str, shape: tuple[int, int]):
    p = f"{path}.{key}"
    try:
        m = np.array(d[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(p, "expected a matrix of numbers") from None
    if m.shape != shape:
        raise ConfigError(p, f"expected shape {shape}, got {m.shape}")
    return m


def _graph(d: Any) -> Graph:
    _keys(d, "graph", {"preset", "n", "edges", "center"}, {"n"})
    n = _num(d, "n", "graph", integer=True, positive=True)
    if "preset" in d and "edges" in d:
        raise ConfigError("graph", "give either preset or edges, not both")
    try:
        if "preset" in d:
            if d["preset"] not in PRESETS:
                raise ConfigError("graph.preset", f"unknown preset {d['preset']!r}; expected one of {sorted(PRESETS)}")
            if d["preset"] == "star":
                return PRESETS["star"](n, int(d.get("center", 1)))
            return PRESETS[d["preset"]](n)
        if "edges" not in d:
            raise ConfigError("graph.edges", "required key is missing (or give a preset)")
        if not isinstance(d["edges"], list):
            raise ConfigError("graph.edges", "expected a list of pairs")
        return build_graph(n, [tuple(e) if isinstance(e, list) else e for e in d["edges"]])
    except GraphError as exc:
        raise ConfigError("graph", str(exc)) from None
    except TypeError as exc:
        raise ConfigError("graph.edges", str(exc)) from None


PARAM_KEYS = {"variant", "c", "T", "gamma1", "beta0", "K", "k_gains", "eps", "eps0", "C_h", "gamma2", "Kc", "beta_floor"}


def _params(d: Any, lambda2: float | None) -> tuple[ProtocolParams, float | None]:
    _keys(d, "params", PARAM_KEYS, {"variant", "c", "T", "beta0", "K"})
    variant = d["variant"]
    if variant not in VARIANTS:
        raise ConfigError("params.variant", f"unknown variant {variant!r}; expected one of {VARIANTS}")
    c = _num(d, "c", "params", positive=True)
    T = _num(d, "T", "params", positive=True)
    eps0 = _num(d, "eps0", "params", default=-1.0)
    eps0 = None if eps0 == -1.0 else eps0
    if eps0 is not None and not 0 < eps0 < 1:
        raise ConfigError("params.eps0", "must lie in (0, 1)")
    if "gamma1" in d:
        gamma1 = _num(d, "gamma1", "params")
    elif variant in ("nonlinear_thm2", "linear_thm3") and eps0 is not None and lambda2 is not None:
        gamma1 = 1 - (1 - eps0) * c * T * lambda2
    else:
        raise ConfigError("params.gamma1", "required key is missing (it can only be derived from eps0 for the nonlinear_thm2 and linear_thm3 variants)")
    if not 0 < gamma1 < 1:
        raise ConfigError("params.gamma1", f"must lie in (0, 1), got {gamma1}")
    K = _num(d, "K", "params", integer=True)
    if K < 1:
        raise ConfigError("params.K", f"must be a positive integer, got {K}")
    eps = _num(d, "eps", "params", default=-1.0)
    eps = None if eps == -1.0 else eps
    if eps is not None and not 0 < eps < 1:
        raise ConfigError("params.eps", "must lie in (0, 1)")
    C_h = _num(d, "C_h", "params", default=-1.0)
    C_h = None if C_h == -1.0 else C_h
    if C_h is not None and C_h < 0:
        raise ConfigError("params.C_h", "must be non-negative")
    gamma2 = _num(d, "gamma2", "params", default=-1.0)
    gamma2 = None if gamma2 == -1.0 else gamma2
    if gamma2 is not None and gamma2 <= 1:
        raise ConfigError("params.gamma2", "must exceed 1")
    beta_floor = _num(d, "beta_floor", "params", default=-1.0)
    beta_floor = None if beta_floor == -1.0 else beta_floor
    if beta_floor is not None and beta_floor < 0:
        raise ConfigError("params.beta_floor", "must be non-negative")
    try:
        p = ProtocolParams(
            variant=variant, c=c, T=T, gamma1=gamma1,
            beta0=_num(d, "beta0", "params", positive=True), K=K,
            k_gains=_vec(d, "k_gains", "params", required=False) or (),
            eps=eps, eps0=eps0, C_h=C_h, gamma2=gamma2,
            Kc=_vec(d, "Kc", "params", required=False),
        )
    except ParamError as exc:
        raise ConfigError("params", str(exc)) from None
    return p, beta_floor


def _dos(d: Any) -> DoSConfig:
    if d is None:
        return DoSConfig()
    _keys(d, "dos", {"mode", "intervals", "eta", "tau_D", "kappa", "T_dur", "percent_active", "max_consecutive"}, {"mode"})
    mode = d["mode"]
    if mode not in DOS_MODES:
        raise ConfigError("dos.mode", f"unknown mode {mode!r}; expected one of {DOS_MODES}")
    cfg = DoSConfig(mode=mode)
    if mode == "scripted":
        raw = d.get("intervals")
        if not isinstance(raw, list):
            raise ConfigError("dos.intervals", "expected a list of [start_s, duration_s] pairs")
        for i, pair in enumerate(raw):
            if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, (int, float)) for x in pair)):
                raise ConfigError(f"dos.intervals[{i}]", "expected [start_s, duration_s]")
            if pair[0] < 0 or pair[1] < 0:
                raise ConfigError(f"dos.intervals[{i}]", "start and duration must be non-negative")
            cfg.intervals.append((float(pair[0]), float(pair[1])))
    elif mode == "random":
        cfg.eta = _num(d, "eta", "dos", nonneg=True)
        cfg.tau_D = _num(d, "tau_D", "dos", positive=True, allow_inf=True)
        cfg.kappa = _num(d, "kappa", "dos", nonneg=True)
        cfg.T_dur = _num(d, "T_dur", "dos", allow_inf=True)
        if not cfg.T_dur > 1:
            raise ConfigError("dos.T_dur", "must exceed 1")
    elif mode == "duty_cycle":
        cfg.percent_active = _num(d, "percent_active", "dos", nonneg=True)
        if cfg.percent_active >= 1:
            raise ConfigError("dos.percent_active", "must lie in [0, 1)")
        cfg.max_consecutive = _num(d, "max_consecutive", "dos", integer=True, positive=True)
    return cfg


TOP_KEYS = {
    "name", "mode", "protocol", "seed", "horizon", "output_dir", "consensus_tol",
    "graph", "plant", "model", "eso", "params", "dos",
}


def parse_config(raw: Any, source: str | None = None) -> ScenarioConfig:
    _keys(raw, "", TOP_KEYS, {"graph", "params", "horizon"})
    name = str(raw.get("name", Path(source).stem if source else "scenario"))
    mode = raw.get("mode", "nonlinear" if "model" in raw else "linear")
    if mode not in MODES:
        raise ConfigError("mode", f"unknown mode {mode!r}; expected one of {MODES}")
    protocol = raw.get("protocol", "zih")
    if protocol not in ("zih", "zizo"):
        raise ConfigError("protocol", f"expected zih or zizo, got {protocol!r}")
    n_steps = _num(raw, "horizon", "", integer=True, nonneg=True)
    seed = _num(raw, "seed", "", integer=True, nonneg=True, default=0)
    tol = _num(raw, "consensus_tol", "", positive=True, default=1e-3)
    out = raw.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir", "expected a path string")

    g = _graph(raw["graph"])
    lambda2 = None
    if g.n_agents > 1:
        from qconsensus.graph import spectrum

        spec = spectrum(g)
        lambda2 = spec.lambda2 if spec.connected else None
    params, beta_floor = _params(raw["params"], lambda2)
    if protocol == "zizo":
        if params.variant != "zizo_baseline":
            raise ConfigError("params.variant", "the zizo protocol needs variant zizo_baseline")
        if params.gamma2 is None:
            raise ConfigError("params.gamma2", "required for the zizo protocol")
        if params.Kc is None:
            raise ConfigError("params.Kc", "required for the zizo protocol")

    cfg = ScenarioConfig(
        name=name, mode=mode, graph=g, params=params, dos=_dos(raw.get("dos")), n_steps=n_steps,
        seed=seed, output_dir=out, protocol=protocol, consensus_tol=tol, beta_floor=beta_floor, source=source,
    )

    if "model" in raw:
        if "plant" in raw:
            raise ConfigError("plant", "give either plant (linear) or model (nonlinear), not both")
        m = _keys(raw["model"], "model", {"name", "initial_range", "rho0", "z0"}, {"name"})
        if m["name"] not in MODELS:
            raise ConfigError("model.name", f"unknown model {m['name']!r}; expected one of {MODELS}")
        cfg.model = m["name"]
        N = g.n_agents
        if "rho0" in m or "z0" in m:
            cfg.rho0 = _matrix(m, "rho0", "model", (N, 3))
            cfg.z0 = _matrix(m, "z0", "model", (N, 1))
        else:
            rng_ = _vec(m, "initial_range", "model", length=2, required=False) or (0.0, 2.0)
            if not rng_[0] < rng_[1]:
                raise ConfigError("model.initial_range", "expected [low, high] with low < high")
            cfg.initial_range = rng_
        e = _keys(raw.get("eso"), "eso", {"l", "M", "substeps"}, {"l", "M"})
        cfg.eso_l = _vec(e, "l", "eso", length=4)
        cfg.eso_M = _vec(e, "M", "eso", length=4)
        if any(v <= 0 for v in cfg.eso_M):
            raise ConfigError("eso.M", "saturation bounds must be positive")
        if "substeps" in e:
            cfg.substeps = _num(e, "substeps", "eso", integer=True, positive=True)
        if params.eps is None:
            raise ConfigError("params.eps", "required for nonlinear scenarios")
        if len(params.k_gains) != 2:
            raise ConfigError("params.k_gains", "duffing5 has relative degree 3 and needs two gains")
        if protocol != "zih":
            raise ConfigError("protocol", "nonlinear scenarios run the zih protocol only")
    else:
        if "eso" in raw:
            raise ConfigError("eso", "observer settings only apply to nonlinear scenarios")
        p = _keys(raw.get("plant"), "plant", {"last_row", "initial_states"}, {"last_row", "initial_states"})
        cfg.last_row = _vec(p, "last_row", "plant")
        r = len(cfg.last_row)
        if r < 1:
            raise ConfigError("plant.last_row", "must not be empty")
        cfg.initial_states = _matrix(p, "initial_states", "plant", (g.n_agents, r))
        if protocol == "zih" and len(params.k_gains) != r - 1:
            raise ConfigError("params.k_gains", f"expected {r - 1} gains for a plant of order {r}")
        if protocol == "zizo" and len(params.Kc) != r:
            raise ConfigError("params.Kc", f"expected {r} entries for a plant of order {r}")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} is not valid YAML: {exc}") from None
    return parse_config(raw, str(path))


def bundled_scenarios() -> dict[str, Path]:
    d = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(d.glob("*.yaml"))}


def resolve_config_path(name_or_path: str) -> Path:
    """A file path, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = bundled_scenarios()
    if name_or_path in bundled:
        return bundled[name_or_path]
    raise ConfigError("", f"no config file or bundled scenario named {name_or_path!r}")

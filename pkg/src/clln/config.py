"""Config files for the command-line runner.

YAML with fixed sections; every key has a default except the environment
kind and the seed list, which must be explicit. Unknown keys are rejected
by dotted path. The fully-merged mapping (defaults plus file plus
overrides) is kept on the parsed config so runs can echo a resolved file
that reproduces them exactly.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .circuit import DeviceModel, SolverConfig, Topology
from .envs import FourStateMDP, GridNav, fourstate_topology, grid_topology
from .experiment import TrialConfig
from .learning import LearnConfig
from .qagent import AgentConfig


class ConfigError(ValueError):
    """Bad config file or override; the message names the offending key."""


_ENV_DEFAULTS = {
    "fourstate": {"kind": "fourstate", "table_seed": 0, "noise_std": 0.01},
    "grid": {"kind": "grid", "target_reward": 1.0, "reset_period": 5},
}
_TOPOLOGY_DEFAULTS = {
    "fourstate": {"builtin": "fourstate-default", "seed": 0},
    "grid": {"builtin": "grid-layered"},
}
_SECTION_DEFAULTS = {
    "model": {"mode": "nonlinear"},
    "solver": {"max_iterations": 500, "tolerance": 1e-9, "damping": 1.0},
    "learn": {
        "alpha": 0.02,
        "eta": 0.1,
        "batch_size": 50,
        "gate_min": 1.0,
        "gate_max": 5.5,
    },
    "agent": {"gamma": 0.5, "epsilon_start": 0.05, "epsilon_end": 0.0},
    "trial": {
        "total_steps": 100_000,
        "seeds": None,
        "gate_init_mean": 1.5,
        "gate_init_std": 0.1,
        "reuse_free_solve": True,
    },
    "oracle": {"eval_steps": 10_000, "seed": 0},
}
_TOP_LEVEL = ("name", "environment", "topology", "output") + tuple(_SECTION_DEFAULTS)


@dataclass(frozen=True)
class RunConfig:
    """A parsed, validated run description ready to execute."""

    name: str
    environment: object
    topology: Topology
    base_trial: TrialConfig
    seeds: tuple
    oracle_eval_steps: int
    oracle_seed: int
    output: str
    resolved: dict


def _require_mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(value).__name__}")
    return value


def _merge_section(user: dict, defaults: dict, section: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {section}.{key}")
        merged[key] = value
    return merged


def apply_override(mapping: dict, spec: str) -> None:
    """Set a dotted path in the raw mapping, e.g. 'learn.alpha=0.01'.

    Values parse as YAML scalars, so ints, floats, booleans, and lists
    all work. Unknown paths surface later through normal key validation.
    """
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} is not of the form key=value")
    path, _, raw_value = spec.partition("=")
    keys = path.strip().split(".")
    if not all(keys):
        raise ConfigError(f"override {spec!r} has an empty key segment")
    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {spec!r}: unparseable value ({exc})") from exc
    node = mapping
    for key in keys[:-1]:
        nxt = node.get(key)
        if nxt is None:
            nxt = node[key] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(f"override {spec!r}: {key} is not a section")
        node = nxt
    node[keys[-1]] = value


def _build_environment(section: dict):
    if section["kind"] == "fourstate":
        return FourStateMDP(
            table_seed=section["table_seed"], noise_std=section["noise_std"]
        )
    return GridNav(
        target_reward=section["target_reward"],
        reset_period=section["reset_period"],
    )


def _build_topology(section: dict) -> Topology:
    if "builtin" in section:
        allowed = {"fourstate-default": {"builtin", "seed"}, "grid-layered": {"builtin"}}
        builtin = section["builtin"]
        if builtin not in allowed:
            raise ConfigError(
                f"unknown builtin topology {builtin!r}; "
                f"choose from {sorted(allowed)}"
            )
        extra = set(section) - allowed[builtin]
        if extra:
            raise ConfigError(
                f"topology.{sorted(extra)[0]} is not valid for builtin {builtin}"
            )
        if builtin == "fourstate-default":
            return fourstate_topology(seed=section.get("seed", 0))
        return grid_topology()
    required = {"nodes", "edges", "inputs", "outputs"}
    extra = set(section) - required
    if extra:
        raise ConfigError(f"unknown key topology.{sorted(extra)[0]}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"topology is missing {sorted(missing)[0]}")
    try:
        return Topology(
            int(section["nodes"]),
            tuple(tuple(edge) for edge in section["edges"]),
            input_nodes=tuple(section["inputs"]),
            output_nodes=tuple(section["outputs"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad topology: {exc}") from exc


def _normalize(raw: dict, seed_list=None) -> dict:
    """Merge the raw mapping over the defaults tree; reject unknown keys."""
    for key in raw:
        if key not in _TOP_LEVEL:
            raise ConfigError(f"unknown key {key}")

    env_raw = _require_mapping(raw.get("environment"), "environment")
    kind = env_raw.get("kind")
    if kind is None:
        raise ConfigError("environment.kind is required (fourstate or grid)")
    if kind not in _ENV_DEFAULTS:
        raise ConfigError(
            f"environment.kind {kind!r} unknown; choose fourstate or grid"
        )

    resolved = {
        "name": raw.get("name", kind),
        "environment": _merge_section(env_raw, _ENV_DEFAULTS[kind], "environment"),
        "output": raw.get("output"),
    }
    topo_raw = raw.get("topology", copy.deepcopy(_TOPOLOGY_DEFAULTS[kind]))
    if isinstance(topo_raw, str):
        topo_raw = {"builtin": topo_raw}
        if topo_raw["builtin"] == "fourstate-default":
            topo_raw["seed"] = 0
    resolved["topology"] = _require_mapping(topo_raw, "topology")
    for section, defaults in _SECTION_DEFAULTS.items():
        resolved[section] = _merge_section(
            _require_mapping(raw.get(section), section), defaults, section
        )
    if seed_list is not None:
        resolved["trial"]["seeds"] = list(seed_list)

    seeds = resolved["trial"]["seeds"]
    if not seeds:
        raise ConfigError("trial.seeds is required (or pass --seed-list)")
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("trial.seeds must be a list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("trial.seeds contains duplicates")
    return resolved


def _build(resolved: dict) -> RunConfig:
    environment = _build_environment(resolved["environment"])
    topology = _build_topology(resolved["topology"])
    trial = resolved["trial"]
    try:
        base_trial = TrialConfig(
            environment=environment,
            topology=topology,
            total_steps=int(trial["total_steps"]),
            trial_seed=int(trial["seeds"][0]),
            model=DeviceModel(mode=resolved["model"]["mode"]),
            solver=SolverConfig(**resolved["solver"]),
            learn=LearnConfig(**resolved["learn"]),
            agent=AgentConfig(**resolved["agent"]),
            gate_init_mean=float(trial["gate_init_mean"]),
            gate_init_std=float(trial["gate_init_std"]),
            reuse_free_solve=bool(trial["reuse_free_solve"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        name=str(resolved["name"]),
        environment=environment,
        topology=topology,
        base_trial=base_trial,
        seeds=tuple(trial["seeds"]),
        oracle_eval_steps=int(resolved["oracle"]["eval_steps"]),
        oracle_seed=int(resolved["oracle"]["seed"]),
        output=resolved["output"],
        resolved=resolved,
    )


def parse_config(text: str, overrides=(), seed_list=None) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"YAML parse error{where}: {exc}") from exc
    raw = _require_mapping(raw, "config")
    for spec in overrides:
        apply_override(raw, spec)
    return _build(_normalize(raw, seed_list=seed_list))


def load_config(path, overrides=(), seed_list=None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides=overrides, seed_list=seed_list)


def dump_resolved(cfg: RunConfig) -> str:
    """The resolved mapping as YAML; reparsing it reproduces the run."""
    return yaml.safe_dump(cfg.resolved, sort_keys=True, default_flow_style=False)

"""Experiment configuration: YAML loading, validation, canonical serialization.

An empty (or absent-section) file yields the full defaults: 4 links, 1 MHz,
1 ms slots, 100-slot episodes, 3000-bit packets, 10 dBm power cap, batches
of 3 with arrival probability 0.8. Unknown keys are rejected. Power and
noise can be given in dBm (``max_power_dbm``/``noise_dbm``) or linear mW;
the canonical serialized form is linear mW.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from aoisim.mappo import TrainConfig
from aoisim.queueing import ArrivalProcess
from aoisim.topology import NetworkConfig, dbm_to_mw

__all__ = [
    "ConfigError",
    "ConfigFileMissing",
    "ConfigSchemaError",
    "ConfigInvariantError",
    "ExperimentConfig",
    "SWEEP_AXES",
    "load_config",
    "parse_config",
    "serialize_config",
]

SWEEP_AXES = {
    "packet_bits": [1500, 2000, 2500, 3000, 3500, 4000],
    "arrival_prob": [0.2, 0.4, 0.6, 0.8, 1.0],
    "num_links": [4, 5, 6, 7, 8],
}

POLICIES = ("mappo", "wmmse", "itlinq", "random", "threshold")


class ConfigError(Exception):
    """Base class; ``exit_code`` distinguishes the failure mode for the CLI."""

    exit_code = 2


class ConfigFileMissing(ConfigError):
    exit_code = 2


class ConfigSchemaError(ConfigError):
    exit_code = 3


class ConfigInvariantError(ConfigError):
    exit_code = 4


@dataclass
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    arrival: ArrivalProcess = field(default_factory=ArrivalProcess)
    train: TrainConfig = field(default_factory=TrainConfig)
    policy: str = "mappo"
    seeds: tuple[int, ...] = (1, 2, 3)
    eval_episodes: int = 20
    sweep_axis: str = "packet_bits"
    sweep_values: tuple | None = None  # None -> default grid for the axis
    out_dir: str = "runs"

    def sweep_grid(self) -> list:
        if self.sweep_values is not None:
            return list(self.sweep_values)
        return list(SWEEP_AXES[self.sweep_axis])


_NETWORK_ALIASES = {"max_power_dbm": "max_power_mw", "noise_dbm": "noise_mw"}
_TOP_KEYS = {"network", "arrival", "train", "policy", "seeds", "eval_episodes",
             "sweep", "out_dir"}
_SWEEP_KEYS = {"axis", "values"}


def _field_names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigSchemaError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


def _tupled(value):
    return tuple(value) if isinstance(value, (list, tuple)) else value


def _build_section(cls, section: str, data: dict, tuple_fields: set[str]):
    _check_keys(section, data, _field_names(cls))
    kwargs = {k: (_tupled(v) if k in tuple_fields else v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvariantError(f"invalid {section} config: {exc}") from exc


def _section(data: dict, name: str) -> dict:
    raw = data.get(name)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigSchemaError(f"{name} section must be a mapping")
    return dict(raw)


def parse_config(data: dict | None) -> ExperimentConfig:
    """Validate a parsed YAML mapping and fill defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigSchemaError("config root must be a mapping")
    _check_keys("top level", data, _TOP_KEYS)

    network_raw = _section(data, "network")
    for alias, target in _NETWORK_ALIASES.items():
        if alias in network_raw:
            if target in network_raw:
                raise ConfigSchemaError(f"give {alias} or {target}, not both")
            network_raw[target] = dbm_to_mw(float(network_raw.pop(alias)))
    network = _build_section(NetworkConfig, "network", network_raw,
                             {"lane_offsets_m", "pair_distance_m"})

    arrival = _build_section(ArrivalProcess, "arrival", _section(data, "arrival"), set())
    train = _build_section(TrainConfig, "train", _section(data, "train"), set())

    policy = data.get("policy", "mappo")
    if policy not in POLICIES:
        raise ConfigInvariantError(f"unknown policy {policy!r}; expected one of {POLICIES}")

    seeds = data.get("seeds", [1, 2, 3])
    if not isinstance(seeds, (list, tuple)) or not seeds or \
            not all(isinstance(s, int) for s in seeds):
        raise ConfigSchemaError("seeds must be a non-empty list of integers")

    eval_episodes = data.get("eval_episodes", 20)
    if not isinstance(eval_episodes, int) or eval_episodes < 1:
        raise ConfigInvariantError("eval_episodes must be a positive integer")

    sweep_raw = _section(data, "sweep")
    _check_keys("sweep", sweep_raw, _SWEEP_KEYS)
    axis = sweep_raw.get("axis", "packet_bits")
    if axis not in SWEEP_AXES:
        raise ConfigInvariantError(
            f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    values = sweep_raw.get("values")
    if values is not None:
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigSchemaError("sweep values must be a non-empty list")
        values = tuple(values)

    out_dir = data.get("out_dir", "runs")
    if not isinstance(out_dir, str):
        raise ConfigSchemaError("out_dir must be a string")

    return ExperimentConfig(network=network, arrival=arrival, train=train,
                            policy=policy, seeds=tuple(seeds),
                            eval_episodes=eval_episodes, sweep_axis=axis,
                            sweep_values=values, out_dir=out_dir)


def load_config(path) -> ExperimentConfig:
    """Load and validate a YAML config file; an empty file means all defaults."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise ConfigFileMissing(f"config file not found: {path}") from exc
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigSchemaError(f"config is not valid YAML: {exc}") from exc
    return parse_config(data)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical YAML form; ``parse_config(yaml.safe_load(...))`` round-trips."""
    data = {
        "network": {f.name: _listed(getattr(cfg.network, f.name))
                    for f in fields(NetworkConfig)},
        "arrival": dataclasses.asdict(cfg.arrival),
        "train": dataclasses.asdict(cfg.train),
        "policy": cfg.policy,
        "seeds": list(cfg.seeds),
        "eval_episodes": cfg.eval_episodes,
        "sweep": {"axis": cfg.sweep_axis,
                  "values": None if cfg.sweep_values is None else list(cfg.sweep_values)},
        "out_dir": cfg.out_dir,
    }
    return yaml.safe_dump(data, sort_keys=True)


def _listed(value):
    return list(value) if isinstance(value, tuple) else value

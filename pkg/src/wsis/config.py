"""Run configuration: TOML loading, presets, validation and seeding."""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli
import tomli_w

from .agents import AgentConfig, PinnConfig
from .baseline_mpc import MpcConfig
from .bess import BatteryParams
from .errors import ConfigError, WsisError
from .farm import FarmLayout, row_layout
from .mdp import EnvConfig
from .winddata import ScenarioSpec, default_scenarios

METHODS = ("mpc", "ddpg", "ma-ddpg", "pama-ddpg")
RL_METHODS = METHODS[1:]
PRESETS = ("paper", "desk")


@dataclass(frozen=True)
class FarmConfig:
    """A single row of identical turbines aligned with the zero-direction wind."""

    n_turbines: int = 3
    spacing_diameters: float = 5.0
    rotor_diameter: float = 100.0
    yaw_angle: float = 0.0
    cut_in: float = 3.0
    cut_out: float = 25.0
    wake_expansion: float = 0.08
    air_density: float = 1.2
    power_scale: float = 0.95

    def __post_init__(self):
        if self.n_turbines < 1:
            raise ConfigError("farm.n_turbines must be >= 1")
        if self.spacing_diameters <= 0:
            raise ConfigError("farm.spacing_diameters must be > 0")

    def layout(self) -> FarmLayout:
        return row_layout(**asdict(self))


@dataclass(frozen=True)
class RunConfig:
    method: str = "pama-ddpg"
    seeds: tuple[int, ...] = (0,)
    episodes: int = 200
    output_dir: str = "runs"
    preset: str = "paper"
    scenarios: tuple[ScenarioSpec, ...] = field(default_factory=lambda: tuple(default_scenarios()))
    farm: FarmConfig = FarmConfig()
    battery: BatteryParams = BatteryParams()
    env: EnvConfig = EnvConfig()
    agents: AgentConfig = AgentConfig()
    pinn: PinnConfig = PinnConfig()
    mpc: MpcConfig = MpcConfig()

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}; expected one of {METHODS}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds: seeds must be >= 0")
        if self.episodes < 0:
            raise ConfigError("episodes: must be >= 0")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {self.preset!r}")
        if not self.scenarios:
            raise ConfigError("scenarios: at least one scenario is required")
        if self.env.gamma != self.agents.gamma:
            raise ConfigError("env.gamma and agents.gamma must agree")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenarios: names must be unique")

    @property
    def is_rl(self) -> bool:
        return self.method in RL_METHODS

    def layout(self) -> FarmLayout:
        return self.farm.layout()

    def pinn_for_method(self) -> PinnConfig:
        return replace(self.pinn, enabled=self.method == "pama-ddpg")

    def digest(self) -> str:
        """Short content hash of the resolved configuration."""
        blob = json.dumps(to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --- presets -----------------------------------------------------------------

def desk_preset() -> RunConfig:
    """Laptop-sized runs: 3 turbines, small networks, four-hour episodes."""
    length = 240
    return RunConfig(
        preset="desk",
        seeds=(0, 1, 2),
        episodes=200,
        scenarios=tuple(default_scenarios(duration=length)),
        farm=FarmConfig(n_turbines=3),
        env=EnvConfig(episode_length=length, gamma=0.9),
        agents=AgentConfig(hidden=(64, 64), actor_lr=1e-3, critic_lr=1e-3, gamma=0.9, tau=5e-3,
                           buffer_capacity=50_000, warmup=256, sigma_decay=0.98,
                           reward_scale=0.1),
    )


def preset(name: str) -> RunConfig:
    if name == "paper":
        return RunConfig()
    if name == "desk":
        return desk_preset()
    raise ConfigError(f"preset: unknown preset {name!r}")


# --- (de)serialisation ------------------------------------------------------------

_SECTIONS = {"farm": FarmConfig, "battery": BatteryParams, "env": EnvConfig,
             "agents": AgentConfig, "pinn": PinnConfig, "mpc": MpcConfig}
_TOP = ("method", "seeds", "episodes", "output_dir", "preset")


def _drop_none(d: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}


def to_dict(cfg: RunConfig) -> dict:
    out: dict[str, Any] = {k: getattr(cfg, k) for k in _TOP}
    out["seeds"] = list(cfg.seeds)
    for name in _SECTIONS:
        out[name] = _drop_none(asdict(getattr(cfg, name)))
    out["scenarios"] = [_drop_none(asdict(s)) for s in cfg.scenarios]
    return out


# fields recomputed from their inputs unless given explicitly alongside them
_DERIVED = {"battery": {"capacity": ("e_min", "e_max"),
                        "replacement_cost": ("k_deg",), "lifetime_throughput": ("k_deg",),
                        "roundtrip_sqrt": ("k_deg",)}}
# shorthand keys that set several fields at once
_ALIASES = {"battery": {"eta": ("eta_ch", "eta_dis")}}


def _overlay(base, section: str, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"{section}: expected a table")
    values = dict(values)
    for alias, targets in _ALIASES.get(section, {}).items():
        if alias in values:
            v = values.pop(alias)
            for t in targets:
                values.setdefault(t, v)
    known = {f.name for f in fields(base)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
    for key, derived in _DERIVED.get(section, {}).items():
        if key in values:
            for d in derived:
                values.setdefault(d, None)
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _scenario(raw: dict, i: int) -> ScenarioSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"scenarios[{i}]: expected a table")
    known = {f.name for f in fields(ScenarioSpec)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key scenarios[{i}].{key}")
    if "name" not in raw or "duration" not in raw:
        raise ConfigError(f"scenarios[{i}]: name and duration are required")
    try:
        return ScenarioSpec(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scenarios[{i}]: {exc}") from None


def from_dict(data: dict, preset_name: Optional[str] = None) -> RunConfig:
    """Resolve a nested mapping on top of a preset (``data['preset']`` unless overridden)."""
    data = dict(data)
    for key in data:
        if key not in _TOP and key not in _SECTIONS and key != "scenarios":
            raise ConfigError(f"unknown key {key}")
    name = preset_name or data.get("preset", "paper")
    cfg = preset(name)
    data = _sync_gamma(data)
    changes: dict[str, Any] = {}
    for section in _SECTIONS:
        if section in data:
            changes[section] = _overlay(getattr(cfg, section), section, data[section])
    if "scenarios" in data:
        changes["scenarios"] = tuple(_scenario(s, i) for i, s in enumerate(data["scenarios"]))
    for key in _TOP:
        if key in data:
            changes[key] = data[key]
    changes["preset"] = name
    try:
        return replace(cfg, **changes)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _sync_gamma(data: dict) -> dict:
    # the discount lives in both env and agents; setting either sets both
    env, agents = dict(data.get("env", {})), dict(data.get("agents", {}))
    if "gamma" in env and "gamma" not in agents:
        agents["gamma"] = env["gamma"]
    elif "gamma" in agents and "gamma" not in env:
        env["gamma"] = agents["gamma"]
    else:
        return data
    return {**data, "env": env, "agents": agents}


def load_config(path=None, preset_name: Optional[str] = None) -> RunConfig:
    """Parse a TOML run file; a missing path yields the preset's defaults."""
    if path is None:
        return from_dict({}, preset_name)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return from_dict(data, preset_name)


def dumps_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def write_config(cfg: RunConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_config(cfg))


# --- seeding ----------------------------------------------------------------------

def substream(master: int, name: str) -> np.random.Generator:
    """Independent generator for a named component of run ``master``."""
    seq = np.random.SeedSequence([int(master), zlib.crc32(name.encode())])
    return np.random.Generator(np.random.PCG64(seq))


def set_path(cfg: RunConfig, dotted: str, value) -> RunConfig:
    """Return ``cfg`` with one ``section.field`` (or top-level field) replaced."""
    parts = dotted.split(".")
    if len(parts) == 1:
        if parts[0] not in ("episodes", "method"):
            raise ConfigError(f"unknown parameter {dotted}")
        return replace(cfg, **{parts[0]: value})
    if len(parts) != 2 or parts[0] not in _SECTIONS:
        raise ConfigError(f"unknown parameter {dotted}")
    section, key = parts
    if key == "gamma" and section in ("env", "agents"):
        return replace(cfg, env=_overlay(cfg.env, "env", {"gamma": value}),
                       agents=_overlay(cfg.agents, "agents", {"gamma": value}))
    sub = getattr(cfg, section)
    if key not in {f.name for f in fields(sub)} and key not in _ALIASES.get(section, {}):
        raise ConfigError(f"unknown parameter {dotted}")
    return replace(cfg, **{section: _overlay(sub, section, {key: value})})


__all__ = ["FarmConfig", "RunConfig", "METHODS", "RL_METHODS", "load_config", "from_dict",
           "to_dict", "dumps_config", "write_config", "preset", "desk_preset", "substream",
           "set_path", "WsisError"]

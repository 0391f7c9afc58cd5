"""Training and evaluation orchestration shared by the command line and tests."""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .agents import (hierarchical_policy, joint_policy, make_buffer, make_joint_agent,
                     make_lower_agent, make_upper_agent, train_episode, train_single_ddpg)
from .baseline_mpc import MpcController
from .config import RunConfig, substream
from .errors import ConfigError, ContractError
from .mdp import WsisEnv, rollout, write_trajectory_csv
from .metrics import EpisodeSummary, average, summarize
from .nn import MLP
from .winddata import ScenarioSpec, WindSeries, synthesize

LOG_FIELDS = ("episode", "total_profit", "fs", "vo", "critic_loss_mean", "actor_obj_mean",
              "pinn_loss_mean")
NETS = ("actor", "critic", "target_actor", "target_critic")


def build_env(cfg: RunConfig, training: bool = False) -> WsisEnv:
    """Environment for ``cfg``. Ablation switches only apply when ``training``."""
    env_cfg = cfg.env
    if not training:
        env_cfg = replace(env_cfg, wake_enabled=True, degradation_in_reward=True)
    return WsisEnv(cfg.layout(), cfg.battery, env_cfg)


class Learner:
    """The agents, buffers and episode routine for one RL method and seed."""

    def __init__(self, cfg: RunConfig, env: WsisEnv, seed: int):
        if not cfg.is_rl:
            raise ConfigError(f"method {cfg.method!r} has no learner")
        self.cfg, self.env, self.seed = cfg, env, seed
        self.method = cfg.method
        self.pinn = cfg.pinn_for_method()
        self.episodes_done = 0
        if self.method == "ddpg":
            joint = make_joint_agent(env, cfg.agents, substream(seed, "init-joint"),
                                     substream(seed, "noise-joint"))
            self.agents = {"joint": joint}
        else:
            upper = make_upper_agent(env, cfg.agents, substream(seed, "init-upper"),
                                     substream(seed, "noise-upper"))
            lower = make_lower_agent(env, cfg.agents, substream(seed, "init-lower"),
                                     substream(seed, "noise-lower"))
            self.agents = {"upper": upper, "lower": lower}
        self.buffers = {role: make_buffer(a, substream(seed, f"buffer-{role}"))
                        for role, a in self.agents.items()}

    def train_episode(self, wind: WindSeries) -> EpisodeSummary:
        if self.method == "ddpg":
            s = train_single_ddpg(self.env, wind, self.agents["joint"], self.buffers["joint"])
        else:
            s = train_episode(self.env, wind, self.agents["upper"], self.agents["lower"],
                              (self.buffers["upper"], self.buffers["lower"]), self.pinn)
        self.episodes_done += 1
        return s

    def policy(self):
        if self.method == "ddpg":
            return joint_policy(self.agents["joint"])
        return hierarchical_policy(self.agents["upper"], self.agents["lower"])

    # checkpoints

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = {}
        for role, agent in self.agents.items():
            for name, net in agent.networks().items():
                fname = f"{role}_{name}.npz"
                net.save(d / fname)
                files[f"{role}.{name}"] = fname
            fname = f"{role}_obs_norm.npz"
            np.savez(d / fname, **agent.obs_norm.state_dict())
            files[f"{role}.obs_norm"] = fname
        manifest = {"method": self.method, "seed": self.seed, "config_hash": self.cfg.digest(),
                    "episodes": self.episodes_done, "files": files}
        with open(d / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def load(self, directory) -> None:
        """Restore network weights; the architecture must match this learner's."""
        d = Path(directory)
        mf = d / "manifest.json"
        if not mf.is_file():
            raise ConfigError(f"no checkpoint manifest in {d}")
        manifest = json.loads(mf.read_text(encoding="utf-8"))
        if manifest.get("method") != self.method:
            raise ContractError(f"checkpoint method {manifest.get('method')!r} != {self.method!r}")
        for role, agent in self.agents.items():
            for name in NETS:
                net = MLP.load(d / manifest["files"][f"{role}.{name}"])
                current = getattr(agent, name)
                if not current.same_architecture(net):
                    raise ContractError(f"checkpoint {role}.{name} architecture "
                                        f"{net.layer_sizes} does not match {current.layer_sizes}")
                setattr(agent, name, net)
            with np.load(d / manifest["files"][f"{role}.obs_norm"]) as z:
                agent.obs_norm.load_state_dict(z)
        self.episodes_done = int(manifest.get("episodes", 0))


def training_wind(cfg: RunConfig, episode: int, rng: np.random.Generator) -> WindSeries:
    """Scenario generators cycle by episode; each episode draws a fresh wind seed."""
    spec = cfg.scenarios[episode % len(cfg.scenarios)]
    seed = int(rng.integers(0, 2**31 - 1))
    return synthesize(spec, seed=seed)


def train(cfg: RunConfig, seed: int, episodes: Optional[int] = None,
          on_episode: Optional[Callable[[int, EpisodeSummary], None]] = None) -> tuple[Learner, list[dict]]:
    env = build_env(cfg, training=True)
    learner = Learner(cfg, env, seed)
    rng = substream(seed, "wind")
    rows = []
    n = cfg.episodes if episodes is None else episodes
    for ep in range(n):
        s = learner.train_episode(training_wind(cfg, ep, rng))
        row = {"episode": ep, "total_profit": s.total_profit, "fs": s.fs, "vo": s.vo,
               "critic_loss_mean": s.extras.get("critic_loss_mean", 0.0),
               "actor_obj_mean": s.extras.get("actor_obj_mean", 0.0),
               "pinn_loss_mean": s.extras.get("pinn_loss_mean", 0.0)}
        rows.append(row)
        if on_episode is not None:
            on_episode(ep, s)
    return learner, rows


def evaluation_wind(spec: ScenarioSpec) -> WindSeries:
    return synthesize(spec)


def evaluate(cfg: RunConfig, learner: Optional[Learner] = None) -> dict[str, EpisodeSummary]:
    """Greedy rollouts on each configured scenario with its own seed."""
    env = build_env(cfg)
    if cfg.is_rl:
        if learner is None:
            raise ConfigError(f"method {cfg.method} needs trained agents")
        upper_fn, lower_fn = learner.policy()
    else:
        ctl = MpcController(cfg.mpc)
        upper_fn, lower_fn = ctl.upper, ctl.lower
    out = {}
    for spec in cfg.scenarios:
        records = rollout(env, evaluation_wind(spec), upper_fn, lower_fn)
        out[spec.name] = summarize(list(records), cfg.env.fluct_threshold)
    return out


def mean_summary(summaries) -> EpisodeSummary:
    m = average(list(summaries))
    return EpisodeSummary(m["total_profit"], m["fs"], m["vo"], m["revenue"],
                          m["degradation_total"])


# --- file output -------------------------------------------------------------------

def run_dir(out, method: str, scenario: str, seed: int) -> Path:
    return Path(out) / method / scenario / str(seed)


def write_log(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(LOG_FIELDS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[k]) for k in LOG_FIELDS) + "\n")


def write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_evaluation(out, cfg: RunConfig, seed: int, results: dict[str, EpisodeSummary]) -> None:
    for name, s in results.items():
        d = run_dir(out, cfg.method, name, seed)
        d.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(s.records, d / "trajectory.csv")
        write_json(_summary_dict(s), d / "summary.json")


def _summary_dict(s: EpisodeSummary) -> dict:
    d = s.as_dict()
    return {k: v for k, v in d.items() if isinstance(v, (int, float, str))}


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not serialisable: {type(o)}")


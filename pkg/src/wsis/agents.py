"""DDPG agents, replay memory and the bi-level training loops.

Two training regimes are provided:

* :func:`train_episode` runs the hierarchical scheme: an upper agent picks
  induction factors every control period and a lower agent picks battery
  power every minute. With :class:`PinnConfig` enabled the lower actor
  also descends the squared grid-power-change residual
  ``f = (P_W - mu(s)) - P_G_prev``.
* :func:`train_single_ddpg` runs one agent that emits the joint action at
  the slower cadence and holds the battery power across the window.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .farm import ALPHA_MAX
from .mdp import LowerState, WsisEnv
from .metrics import EpisodeSummary, summarize
from .nn import MLP, Adam, soft_update
from .winddata import WindSeries


@dataclass(frozen=True)
class AgentConfig:
    hidden: tuple[int, ...] = (400, 300, 400)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-2
    gamma: float = 0.99
    tau: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 100_000
    warmup: int = 1000
    # exploration noise std as a fraction of the action range
    sigma: float = 0.2
    sigma_decay: float = 0.9995
    sigma_floor: float = 0.01
    reward_scale: float = 1.0
    final_scale: float = 1e-3
    joint_critic: bool = False
    # standardise observations with running statistics gathered while exploring
    standardize_inputs: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.batch_size < 1:
            raise ConfigError("agents.batch_size must be >= 1")
        if self.buffer_capacity < self.batch_size:
            raise ConfigError("agents.buffer_capacity must be >= batch_size")
        if not 0 < self.gamma < 1:
            raise ConfigError("agents.gamma must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ConfigError("agents.tau must lie in (0, 1]")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.warmup < 0 or self.sigma < 0 or self.sigma_floor < 0:
            raise ConfigError("agents.warmup, sigma and sigma_floor must be >= 0")
        if not 0 < self.sigma_decay <= 1:
            raise ConfigError("agents.sigma_decay must lie in (0, 1]")
        if self.reward_scale <= 0:
            raise ConfigError("agents.reward_scale must be > 0")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("agents.hidden must list positive layer widths")


@dataclass(frozen=True)
class PinnConfig:
    omega_u: float = 1.0
    omega_f: float = 0.1
    enabled: bool = False

    def __post_init__(self):
        if self.omega_u < 0 or self.omega_f < 0:
            raise ConfigError("PINN weights must be >= 0")


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    # (P_W, P_G_prev) in MW, consumed by the physics residual
    aux: Optional[tuple[float, float]] = None
    extra: Optional[np.ndarray] = None
    next_extra: Optional[np.ndarray] = None


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    aux: np.ndarray
    extra: np.ndarray
    next_extra: np.ndarray

    def __len__(self):
        return self.states.shape[0]

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "Batch":
        if not transitions:
            raise ContractError("empty batch")
        aux = np.array([t.aux if t.aux is not None else (np.nan, np.nan) for t in transitions],
                       dtype=float)
        n = len(transitions)

        def stack_extra(attr):
            vals = [getattr(t, attr) for t in transitions]
            if vals[0] is None:
                return np.zeros((n, 0))
            return np.array(vals, dtype=float)

        return cls(np.array([t.state for t in transitions], dtype=float),
                   np.array([np.atleast_1d(t.action) for t in transitions], dtype=float),
                   np.array([t.reward for t in transitions], dtype=float),
                   np.array([t.next_state for t in transitions], dtype=float),
                   np.array([t.done for t in transitions], dtype=float),
                   aux, stack_extra("extra"), stack_extra("next_extra"))


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, extra_dim: int = 0,
                 rng: Optional[np.random.Generator] = None):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity)
        self.aux = np.full((capacity, 2), np.nan)
        self.extra = np.zeros((capacity, extra_dim))
        self.next_extra = np.zeros((capacity, extra_dim))
        self._next = 0
        self._size = 0
        self.total_added = 0

    def __len__(self):
        return self._size

    def add(self, tr: Transition) -> None:
        i = self._next
        self.states[i] = tr.state
        self.actions[i] = np.atleast_1d(tr.action)
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self.dones[i] = float(tr.done)
        self.aux[i] = tr.aux if tr.aux is not None else (np.nan, np.nan)
        if self.extra.shape[1]:
            self.extra[i] = tr.extra
            self.next_extra[i] = tr.next_extra
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.total_added += 1

    def oldest_index(self) -> int:
        return self._next if self._size == self.capacity else 0

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if batch_size > self._size:
            raise ContractError(f"cannot sample {batch_size} from {self._size} transitions")
        return self.rng.choice(self._size, batch_size, replace=False)

    def sample(self, batch_size: int) -> Batch:
        idx = self.sample_indices(batch_size)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.dones[idx], self.aux[idx],
                     self.extra[idx], self.next_extra[idx])


class RunningNorm:
    """Per-feature running mean and variance (Welford) used to standardise inputs.

    Before any observation it is the identity. Features that have not varied
    pass through centred but unscaled.
    """

    clip = 5.0

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        sd = np.sqrt(self.m2 / self.count)
        return np.where(sd > 1e-6, sd, 1.0)

    def __call__(self, x):
        if self.count == 0:
            return np.asarray(x, dtype=float)
        return np.clip((np.asarray(x, dtype=float) - self.mean) / self.std, -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"count": np.array(self.count), "mean": self.mean.copy(), "m2": self.m2.copy()}

    def load_state_dict(self, d) -> None:
        if np.asarray(d["mean"]).shape != self.mean.shape:
            raise ContractError("normaliser dimension mismatch")
        self.count = int(d["count"])
        self.mean = np.array(d["mean"], dtype=float)
        self.m2 = np.array(d["m2"], dtype=float)


class AgentPair:
    """Actor, critic, their target copies and optimizers for one decision level."""

    def __init__(self, state_dim: int, action_low, action_high, cfg: AgentConfig,
                 rng: np.random.Generator, noise_rng: Optional[np.random.Generator] = None,
                 output: str = "tanh", extra_dim: int = 0):
        self.cfg = cfg
        self.low = np.atleast_1d(np.asarray(action_low, dtype=float))
        self.high = np.atleast_1d(np.asarray(action_high, dtype=float))
        if self.low.shape != self.high.shape or not np.all(self.low < self.high):
            raise ConfigError("action bounds need low < high")
        self.action_dim = self.low.size
        self.state_dim = state_dim
        self.extra_dim = extra_dim
        self.mid = 0.5 * (self.low + self.high)
        self.half = 0.5 * (self.high - self.low)
        self.actor = MLP([state_dim, *cfg.hidden, self.action_dim], output,
                         (self.low, self.high), rng, final_scale=cfg.final_scale)
        self.critic = MLP([state_dim + self.action_dim + extra_dim, *cfg.hidden, 1],
                          "identity", rng=rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = Adam(self.actor, cfg.actor_lr)
        self.critic_opt = Adam(self.critic, cfg.critic_lr)
        self.gamma = cfg.gamma
        self.tau = cfg.tau
        self.sigma = cfg.sigma
        self.noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(0)
        self.obs_norm = RunningNorm(state_dim)

    def observe(self, state) -> None:
        if self.cfg.standardize_inputs:
            self.obs_norm.update(state)

    def prep(self, states):
        """Network view of raw observations."""
        return self.obs_norm(states) if self.cfg.standardize_inputs else np.asarray(states, float)

    @property
    def noise_std(self) -> np.ndarray:
        return self.sigma * (self.high - self.low)

    def decay_noise(self) -> None:
        self.sigma = max(self.sigma * self.cfg.sigma_decay, self.cfg.sigma_floor)

    def scale_action(self, actions):
        return (np.asarray(actions) - self.mid) / self.half

    def critic_input(self, states, actions, extra=None):
        parts = [states, self.scale_action(actions)]
        if self.extra_dim:
            parts.append(extra)
        return np.concatenate(parts, axis=-1)

    def networks(self) -> dict:
        return {"actor": self.actor, "critic": self.critic,
                "target_actor": self.target_actor, "target_critic": self.target_critic}


def select_action(agent: AgentPair, state, explore: bool = False) -> np.ndarray:
    """Deterministic action, plus Gaussian noise when exploring.

    Exploring calls also feed the observation statistics.
    """
    if explore:
        agent.observe(state)
    action = agent.actor(agent.prep(state))
    if explore and agent.sigma > 0:
        action = action + agent.noise_rng.normal(0.0, 1.0, agent.action_dim) * agent.noise_std
    return action


def critic_update(agent: AgentPair, batch: Batch) -> float:
    """One TD step on the critic; returns the loss before the step."""
    n = len(batch)
    if n < 1:
        raise ContractError("empty batch")
    rewards = batch.rewards * agent.cfg.reward_scale
    states, next_states = agent.prep(batch.states), agent.prep(batch.next_states)
    next_actions = agent.target_actor(next_states)
    q_next = agent.target_critic(agent.critic_input(next_states, next_actions,
                                                    batch.next_extra))[:, 0]
    y = rewards + agent.gamma * (1.0 - batch.dones) * q_next
    q, cache = agent.critic.forward(agent.critic_input(states, batch.actions, batch.extra))
    err = q[:, 0] - y
    loss = float(np.mean(err**2))
    grads, _ = agent.critic.backward(cache, (2.0 / n) * err[:, None])
    agent.critic_opt.step(agent.critic, grads)
    return loss


def pinn_residual(actions, aux) -> np.ndarray:
    """Per-sample change in grid power implied by battery actions: ``(P_W - P_B) - P_G_prev``."""
    return (aux[:, 0] - actions[:, 0]) - aux[:, 1]


def actor_update(agent: AgentPair, batch: Batch,
                 pinn: Optional[PinnConfig] = None) -> tuple[float, float]:
    """One policy-gradient step. Returns ``(mean Q, physics loss)``.

    The physics loss is 0.0 when ``pinn`` is absent or disabled.
    """
    n = len(batch)
    if n < 1:
        raise ContractError("empty batch")
    states = agent.prep(batch.states)
    actions, a_cache = agent.actor.forward(states)
    q, q_cache = agent.critic.forward(agent.critic_input(states, actions, batch.extra))
    objective = float(np.mean(q))
    _, q_in_grad = agent.critic.backward(q_cache, np.full((n, 1), 1.0 / n))
    grad_a = q_in_grad[:, agent.state_dim:agent.state_dim + agent.action_dim] / agent.half
    pinn_loss = 0.0
    if pinn is not None and pinn.enabled:
        if agent.action_dim != 1:
            raise ContractError("physics residual applies to a scalar battery action")
        if np.isnan(batch.aux).any():
            raise ContractError("physics residual needs (P_W, P_G_prev) on every transition")
        f = pinn_residual(actions, batch.aux)
        pinn_loss = float(np.mean(f**2))
        grad_a = pinn.omega_u * grad_a
        if pinn.omega_f != 0:
            # ascend  omega_u*J - omega_f*mean(f^2);  df/da = -1
            grad_a = grad_a + (2.0 * pinn.omega_f / n) * f[:, None]
    grads, _ = agent.actor.backward(a_cache, grad_a)
    agent.actor_opt.step(agent.actor, grads, maximize=True)
    return objective, pinn_loss


def update_targets(agent: AgentPair) -> None:
    soft_update(agent.target_critic, agent.critic, agent.tau)
    soft_update(agent.target_actor, agent.actor, agent.tau)


class _Stats:
    def __init__(self):
        self.critic, self.actor, self.pinn = [], [], []

    def mean(self, name):
        vals = getattr(self, name)
        return float(np.mean(vals)) if vals else 0.0


def learn(agent: AgentPair, buffer: ReplayBuffer, pinn: Optional[PinnConfig] = None,
          stats: Optional[_Stats] = None) -> bool:
    """Sample a mini-batch and run one critic, actor and target update if warm."""
    if len(buffer) < max(agent.cfg.warmup, agent.cfg.batch_size):
        return False
    batch = buffer.sample(agent.cfg.batch_size)
    c = critic_update(agent, batch)
    a, p = actor_update(agent, batch, pinn)
    update_targets(agent)
    if stats is not None:
        stats.critic.append(c)
        stats.actor.append(a)
        stats.pinn.append(p)
    return True


# --- agent construction -------------------------------------------------------

def make_upper_agent(env: WsisEnv, cfg: AgentConfig, rng, noise_rng=None) -> AgentPair:
    n = env.n_turbines
    return AgentPair(env.upper_dim, np.zeros(n), np.full(n, ALPHA_MAX), cfg, rng, noise_rng,
                     output="sigmoid")


def make_lower_agent(env: WsisEnv, cfg: AgentConfig, rng, noise_rng=None) -> AgentPair:
    p = env.battery_params
    extra = env.n_turbines if cfg.joint_critic else 0
    return AgentPair(env.lower_dim, -p.p_dis_max, p.p_ch_max, cfg, rng, noise_rng,
                     output="tanh", extra_dim=extra)


def make_joint_agent(env: WsisEnv, cfg: AgentConfig, rng, noise_rng=None) -> AgentPair:
    n, p = env.n_turbines, env.battery_params
    low = np.append(np.zeros(n), -p.p_dis_max)
    high = np.append(np.full(n, ALPHA_MAX), p.p_ch_max)
    return AgentPair(env.lower_dim, low, high, cfg, rng, noise_rng, output="sigmoid")


def make_buffer(agent: AgentPair, rng) -> ReplayBuffer:
    return ReplayBuffer(agent.cfg.buffer_capacity, agent.state_dim, agent.action_dim,
                        agent.extra_dim, rng)


# --- training loops -------------------------------------------------------------

def _alpha_features(env: WsisEnv) -> np.ndarray:
    return np.asarray(env.alphas.alphas) / ALPHA_MAX * 2.0 - 1.0


def train_episode(env: WsisEnv, wind: WindSeries, upper: AgentPair, lower: AgentPair,
                  buffers: tuple[ReplayBuffer, ReplayBuffer],
                  pinn: Optional[PinnConfig] = None, learn_upper: bool = True,
                  learn_lower: bool = True) -> EpisodeSummary:
    """Run one exploring episode of the hierarchical scheme, learning online."""
    rb_upper, rb_lower = buffers
    env.reset(wind)
    lstats, ustats = _Stats(), _Stats()
    pend_u = None   # (state, action) of the open upper window
    pend_l = None   # (state, action, reward, aux, extra) of the previous minute
    n_upper = n_lower = 0
    reward_upper = 0.0
    reward_lower = 0.0
    done = False
    while not done:
        upper_action = None
        if env.is_decision_minute():
            s_u = env.normalized_upper()
            r_u = env.close_window()
            if pend_u is not None:
                rb_upper.add(Transition(pend_u[0], pend_u[1], r_u, s_u, False))
                n_upper += 1
                reward_upper += r_u
                if learn_upper:
                    learn(upper, rb_upper, None, ustats)
            upper_action = select_action(upper, s_u, explore=True)
            pend_u = (s_u, upper_action)
        ls = env.begin_minute(upper_action)
        s_l = env.normalized_lower(ls)
        extra = _alpha_features(env) if lower.extra_dim else None
        if pend_l is not None:
            rb_lower.add(Transition(pend_l[0], pend_l[1], pend_l[2], s_l, False, pend_l[3],
                                    pend_l[4], extra))
            n_lower += 1
            if learn_lower:
                learn(lower, rb_lower, pinn, lstats)
        a_l = select_action(lower, s_l, explore=True)
        rec, done = env.end_minute(float(a_l[0]))
        reward_lower += rec.r_l
        pend_l = (s_l, a_l, rec.r_l, (ls.wind_power, ls.prev_grid_power), extra)

    # terminal transitions; next states are placeholders never bootstrapped through
    rb_lower.add(Transition(pend_l[0], pend_l[1], pend_l[2], pend_l[0], True, pend_l[3],
                            pend_l[4], pend_l[4]))
    n_lower += 1
    if learn_lower:
        learn(lower, rb_lower, pinn, lstats)
    r_u = _last_window_reward(env)
    rb_upper.add(Transition(pend_u[0], pend_u[1], r_u, pend_u[0], True))
    n_upper += 1
    reward_upper += r_u
    if learn_upper:
        learn(upper, rb_upper, None, ustats)
    upper.decay_noise()
    lower.decay_noise()
    return summarize(env.records, env.cfg.fluct_threshold,
                     critic_loss_mean=lstats.mean("critic"), actor_obj_mean=lstats.mean("actor"),
                     pinn_loss_mean=lstats.mean("pinn"),
                     upper_critic_loss_mean=ustats.mean("critic"),
                     reward_lower=reward_lower, reward_upper=reward_upper,
                     lower_transitions=n_lower, upper_transitions=n_upper,
                     lower_updates=len(lstats.critic), upper_updates=len(ustats.critic))


def _last_window_reward(env: WsisEnv) -> float:
    for rec in reversed(env.records):
        if rec.decision:
            return rec.r_u
    raise ContractError("episode has no decision minute")


def train_single_ddpg(env: WsisEnv, wind: WindSeries, agent: AgentPair,
                      buffer: ReplayBuffer) -> EpisodeSummary:
    """One exploring episode of the single-agent baseline.

    The agent emits ``(alpha_1..alpha_n, P_B)`` on decision minutes and the
    battery power is held until the next decision.
    """
    env.reset(wind)
    stats = _Stats()
    pending = None  # (state, action, accumulated reward)
    n_trans = 0
    done = False
    total_reward = 0.0
    window_reward = 0.0
    p_b = 0.0
    n = env.n_turbines
    while not done:
        upper_action = None
        if env.is_decision_minute():
            s = _joint_state(env)
            r_u = env.close_window()
            if pending is not None:
                r = window_reward + r_u
                buffer.add(Transition(pending[0], pending[1], r, s, False))
                n_trans += 1
                total_reward += r
                learn(agent, buffer, None, stats)
            action = select_action(agent, s, explore=True)
            upper_action, p_b = action[:n], float(action[n])
            pending = (s, action)
            window_reward = 0.0
        env.begin_minute(upper_action)
        rec, done = env.end_minute(p_b)
        window_reward += rec.r_l
    r = window_reward + _last_window_reward(env)
    buffer.add(Transition(pending[0], pending[1], r, pending[0], True))
    n_trans += 1
    total_reward += r
    learn(agent, buffer, None, stats)
    agent.decay_noise()
    return summarize(env.records, env.cfg.fluct_threshold,
                     critic_loss_mean=stats.mean("critic"), actor_obj_mean=stats.mean("actor"),
                     pinn_loss_mean=0.0, reward_total=total_reward, transitions=n_trans,
                     updates=len(stats.critic))


def _joint_state(env: WsisEnv) -> np.ndarray:
    """Observation for the joint agent: the lower-level state previewed with held alphas."""
    up = env.upper_state()
    p_g_prev = env.p_g_prev if env.p_g_prev is not None else env.wind_power()
    ls = LowerState(up, p_g_prev, env.wind_power(), env.battery.energy)
    return env.normalized_lower(ls)


# --- greedy policies for evaluation ----------------------------------------------

def hierarchical_policy(upper: AgentPair, lower: AgentPair):
    """``(upper_fn, lower_fn)`` callables acting greedily for :func:`mdp.rollout`."""
    def upper_fn(env, state):
        return select_action(upper, env.normalized_upper(state))

    def lower_fn(env, state):
        return float(select_action(lower, env.normalized_lower(state))[0])

    return upper_fn, lower_fn


def joint_policy(agent: AgentPair):
    held = {"p_b": 0.0}
    n = agent.action_dim - 1

    def upper_fn(env, state):
        action = select_action(agent, _joint_state(env))
        held["p_b"] = float(action[n])
        return action[:n]

    def lower_fn(env, state):
        return held["p_b"]

    return upper_fn, lower_fn

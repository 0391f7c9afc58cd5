"""Bi-level decision process for the wind-storage system.

The upper level sets turbine induction factors every ``control_period``
minutes; the lower level sets battery power every minute. Each minute is
split into :meth:`WsisEnv.begin_minute` (apply any new induction vector,
evaluate the farm, expose the lower-level observation) and
:meth:`WsisEnv.end_minute` (clip and apply battery power, book the grid
flows and rewards).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import bess
from .bess import BatteryParams, BatteryState
from .errors import ConfigError, EpisodeError
from .farm import ALPHA_MAX, FarmLayout, InductionVector, farm_step, turbine_power
from .winddata import WindSeries


@dataclass(frozen=True)
class EnvConfig:
    control_period: int = 5
    dt: float = 1.0 / 60.0
    price: float = 300.0
    fluct_threshold: float = 3.0
    kappa: float = 10.0
    beta1: float = 5.0
    beta2: float = 10.0
    nu: float = 10.0
    gamma: float = 0.99
    episode_length: int = 1440
    include_soc: bool = True
    # ablation switches: training-time model simplifications
    wake_enabled: bool = True
    degradation_in_reward: bool = True
    initial_alpha: float = 1.0 / 3.0
    # wind speed used to size the power normalisation range
    norm_power_speed: float = 16.0

    def __post_init__(self):
        if self.control_period < 1:
            raise ConfigError("env.control_period must be >= 1")
        if self.dt <= 0:
            raise ConfigError("env.dt must be > 0")
        for name in ("kappa", "beta1", "beta2", "nu", "price"):
            if getattr(self, name) < 0:
                raise ConfigError(f"env.{name} must be >= 0")
        if self.fluct_threshold <= 0:
            raise ConfigError("env.fluct_threshold must be > 0")
        if not 0 < self.gamma < 1:
            raise ConfigError("env.gamma must lie in (0, 1)")
        if self.episode_length < 1:
            raise ConfigError("env.episode_length must be >= 1")
        if not 0 <= self.initial_alpha <= ALPHA_MAX:
            raise ConfigError("env.initial_alpha must lie in [0, 0.5]")


@dataclass(frozen=True)
class UpperState:
    u_inf: float
    direction: float
    price: float


@dataclass(frozen=True)
class LowerState:
    upper: UpperState
    prev_grid_power: float
    wind_power: float
    battery_energy: float


@dataclass
class GridRecord:
    minute: int
    wind: float
    direction: float
    alphas: tuple[float, ...]
    p_w: float
    p_b: float
    p_g: float
    p_fg: float
    p_vg: float
    e_b: float
    degradation_cost: float
    revenue: float
    r_u_contrib: float
    r_l: float
    g_l: float = 0.0
    g_u: float = 0.0
    r_u: Optional[float] = None
    decision: bool = False


# --- safety modules ----------------------------------------------------------

def clip_upper_action(raw: Sequence[float]) -> tuple[InductionVector, float]:
    """Clamp each induction factor to [0, 0.5]; also return the Manhattan clip distance."""
    clipped = [min(max(float(a), 0.0), ALPHA_MAX) for a in raw]
    distance = math.fsum(abs(float(a) - c) for a, c in zip(raw, clipped))
    return InductionVector(tuple(clipped)), distance


def rate_violation(raw: float, params: BatteryParams) -> float:
    """Distance of ``raw`` outside the charge/discharge rate band (zero inside)."""
    g = abs(raw + params.p_dis_max) + abs(raw - params.p_ch_max) - params.p_ch_max - params.p_dis_max
    return max(g, 0.0)


def clip_lower_action(raw: float, battery: BatteryState, params: BatteryParams,
                      dt: float) -> tuple[float, float]:
    """Clamp battery power to the rate limits, then to energy feasibility.

    Returns ``(clipped, G_L)``; only the rate-limit violation is penalised.
    """
    raw = float(raw)
    g_l = rate_violation(raw, params)
    p = min(max(raw, -params.p_dis_max), params.p_ch_max)
    lo, hi = bess.feasible_power_bounds(battery, params, dt)
    p = min(max(p, lo), hi)
    return p, g_l


# --- rewards ----------------------------------------------------------------

def violation_penalty(p_fg: float, cfg: EnvConfig) -> float:
    excess = p_fg - cfg.fluct_threshold
    if excess <= 0:
        return p_fg
    return cfg.fluct_threshold + cfg.nu * excess


def lower_reward(p_w: float, p_b: float, p_g_prev: float, degradation_cost: float,
                 g_l: float, cfg: EnvConfig, price: Optional[float] = None) -> float:
    """Battery-level reward in dollars for one minute."""
    price = cfg.price if price is None else price
    p_g = p_w - p_b
    p_vg = violation_penalty(abs(p_g_prev - p_g), cfg)
    return -(degradation_cost + price * (p_b - p_w) * cfg.dt) - cfg.beta1 * p_vg - cfg.beta2 * g_l


def upper_reward(records: Sequence[GridRecord], g_u: float, cfg: EnvConfig) -> float:
    """Farm-level reward over one control window: wind revenue minus clip penalty."""
    return math.fsum(r.r_u_contrib for r in records) - cfg.kappa * g_u


# --- observation scaling -----------------------------------------------------

@dataclass(frozen=True)
class NormBounds:
    speed: tuple[float, float] = (0.0, 30.0)
    direction: tuple[float, float] = (-math.pi, math.pi)
    price: tuple[float, float] = (0.0, 600.0)
    power: tuple[float, float] = (-3.0, 30.0)
    soc: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ConfigError(f"normalisation bounds for {f.name} must be finite with min < max")


def _scale(value, bounds):
    lo, hi = bounds
    return min(max((value - lo) / (hi - lo), 0.0), 1.0)


def normalize_state(state, bounds: NormBounds, battery_capacity: Optional[float] = None) -> np.ndarray:
    """Min-max scale an observation onto [0, 1] per field, clamping outliers.

    For a :class:`LowerState` the state of charge is appended when
    ``battery_capacity`` is given.
    """
    if isinstance(state, UpperState):
        return np.array([_scale(state.u_inf, bounds.speed),
                         _scale(state.direction, bounds.direction),
                         _scale(state.price, bounds.price)])
    if isinstance(state, LowerState):
        vals = [_scale(state.upper.u_inf, bounds.speed),
                _scale(state.upper.direction, bounds.direction),
                _scale(state.upper.price, bounds.price),
                _scale(state.prev_grid_power, bounds.power),
                _scale(state.wind_power, bounds.power)]
        if battery_capacity is not None:
            vals.append(_scale(state.battery_energy / battery_capacity, bounds.soc))
        return np.array(vals)
    raise TypeError(f"cannot normalise {type(state).__name__}")


def default_bounds(layout: FarmLayout, params: BatteryParams, cfg: EnvConfig) -> NormBounds:
    ref = sum(turbine_power(t, min(cfg.norm_power_speed, t.cut_out), math.cos(t.yaw_angle) / 3,
                            layout) for t in layout.turbines)
    return NormBounds(power=(-params.p_dis_max, max(ref, params.p_ch_max)))


# --- environment ------------------------------------------------------------

class WsisEnv:
    """Minute-resolution wind farm + battery environment.

    One instance holds mutable episode state and must not be shared across
    threads mid-episode.
    """

    def __init__(self, layout: FarmLayout, battery: BatteryParams, cfg: EnvConfig,
                 bounds: Optional[NormBounds] = None):
        self.layout = layout
        self.battery_params = battery
        self.cfg = cfg
        self.bounds = bounds or default_bounds(layout, battery, cfg)
        self._reward_params = battery if cfg.degradation_in_reward else replace(battery, k_deg=0.0)
        self.wind: Optional[WindSeries] = None

    @property
    def n_turbines(self) -> int:
        return self.layout.n_turbines

    @property
    def upper_dim(self) -> int:
        return 3

    @property
    def lower_dim(self) -> int:
        return 6 if self.cfg.include_soc else 5

    def reset(self, wind: WindSeries) -> UpperState:
        if len(wind) == 0:
            raise EpisodeError("empty wind series")
        self.wind = wind
        self.length = min(self.cfg.episode_length, len(wind))
        self.t = 0
        self.battery = self.battery_params.initial_state()
        self.alphas = InductionVector((self.cfg.initial_alpha,) * self.n_turbines)
        self.p_g_prev: Optional[float] = None
        self.records: list[GridRecord] = []
        self._window_start: Optional[int] = None
        self._window_gu = 0.0
        self._p_w: Optional[float] = None
        self.done = False
        return self.upper_state()

    # observations

    def _sample(self, t):
        if self.wind is None or t >= len(self.wind):
            raise EpisodeError(f"no wind sample for minute {t}")
        return float(self.wind.speeds[t]), float(self.wind.directions[t])

    def upper_state(self, t: Optional[int] = None) -> UpperState:
        u, d = self._sample(self.t if t is None else t)
        return UpperState(u, d, self.cfg.price)

    def wind_power(self, t: Optional[int] = None, alphas=None, wake=None) -> float:
        u, d = self._sample(self.t if t is None else t)
        wake = self.cfg.wake_enabled if wake is None else wake
        return farm_step(self.layout, u, d, self.alphas if alphas is None else alphas,
                         wake=wake).total_power

    def lower_state(self) -> LowerState:
        if self._p_w is None:
            raise EpisodeError("begin_minute must run before the lower state is read")
        return LowerState(self.upper_state(), self.p_g_prev, self._p_w, self.battery.energy)

    def normalized_upper(self, state: Optional[UpperState] = None) -> np.ndarray:
        return normalize_state(state or self.upper_state(), self.bounds)

    def normalized_lower(self, state: Optional[LowerState] = None) -> np.ndarray:
        cap = self.battery_params.capacity if self.cfg.include_soc else None
        return normalize_state(state or self.lower_state(), self.bounds, cap)

    def is_decision_minute(self) -> bool:
        return self.t % self.cfg.control_period == 0

    # stepping

    def close_window(self) -> Optional[float]:
        """Finish the open control window and return its farm-level reward."""
        if self._window_start is None:
            return None
        window = self.records[self._window_start:]
        r_u = upper_reward(window, self._window_gu, self.cfg)
        if window:
            window[0].r_u = r_u
        self._window_start = None
        return r_u

    def begin_minute(self, upper_action: Optional[Sequence[float]] = None) -> LowerState:
        if self.done:
            raise EpisodeError("episode finished; call reset()")
        decision = self.is_decision_minute()
        if decision:
            self.close_window()
            g_u = 0.0
            if upper_action is not None:
                if len(upper_action) != self.n_turbines:
                    raise EpisodeError(f"upper action needs {self.n_turbines} entries")
                self.alphas, g_u = clip_upper_action(upper_action)
            self._window_start = len(self.records)
            self._window_gu = g_u
        elif upper_action is not None:
            raise EpisodeError(f"minute {self.t} is not an upper-level decision minute")
        self._p_w = self.wind_power()
        if self.p_g_prev is None:
            self.p_g_prev = self._p_w
        return self.lower_state()

    def end_minute(self, lower_action: float) -> tuple[GridRecord, bool]:
        if self._p_w is None:
            raise EpisodeError("begin_minute must precede end_minute")
        cfg, params = self.cfg, self.battery_params
        p_w = self._p_w
        p_b, g_l = clip_lower_action(lower_action, self.battery, params, cfg.dt)
        self.battery, deg = bess.step(self.battery, params, p_b, cfg.dt)
        reward_deg = bess.discharge_cost(self._reward_params, p_b, cfg.dt)
        p_g = p_w - p_b
        p_fg = abs(self.p_g_prev - p_g)
        r_l = lower_reward(p_w, p_b, self.p_g_prev, reward_deg, g_l, cfg)
        u, d = self._sample(self.t)
        rec = GridRecord(
            minute=self.t, wind=u, direction=d, alphas=self.alphas.alphas,
            p_w=p_w, p_b=p_b, p_g=p_g, p_fg=p_fg, p_vg=violation_penalty(p_fg, cfg),
            e_b=self.battery.energy, degradation_cost=deg,
            revenue=cfg.price * p_g * cfg.dt, r_u_contrib=cfg.price * p_w * cfg.dt,
            r_l=r_l, g_l=g_l, decision=self.is_decision_minute(),
            g_u=self._window_gu if self.is_decision_minute() else 0.0,
        )
        self.records.append(rec)
        self.p_g_prev = p_g
        self._p_w = None
        self.t += 1
        self.done = self.t >= self.length
        if self.done:
            self.close_window()
        return rec, self.done

    def step(self, upper_action: Optional[Sequence[float]], lower_action: float):
        """One full minute. Returns ``(record, next_upper, next_lower, done)``.

        ``next_lower`` previews the following minute with the induction
        vector held; it is ``None`` once the episode is done.
        """
        self.begin_minute(upper_action)
        rec, done = self.end_minute(lower_action)
        if done:
            return rec, None, None, True
        nxt_upper = self.upper_state()
        nxt_lower = LowerState(nxt_upper, self.p_g_prev, self.wind_power(), self.battery.energy)
        return rec, nxt_upper, nxt_lower, False


TRAJECTORY_FIELDS = ("p_w", "p_b", "p_g", "p_fg", "e_b", "degradation_cost", "r_l")


def write_trajectory_csv(records: Sequence[GridRecord], path) -> None:
    """Per-minute trajectory; ``r_u`` is filled on decision minutes only."""
    if not records:
        raise EpisodeError("no records to write")
    n = len(records[0].alphas)
    header = (["minute", "wind_mps"] + [f"alpha_{i}" for i in range(n)]
              + ["p_w_mw", "p_b_mw", "p_g_mw", "p_fg_mw", "e_b_mwh", "deg_cost", "r_l", "r_u"])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in records:
            vals = [str(r.minute), repr(r.wind)] + [repr(a) for a in r.alphas]
            vals += [repr(getattr(r, f)) for f in TRAJECTORY_FIELDS]
            vals.append(repr(r.r_u) if r.r_u is not None else "")
            fh.write(",".join(vals) + "\n")


def rollout(env: WsisEnv, wind: WindSeries, upper_fn, lower_fn) -> list[GridRecord]:
    """Play one episode with ``upper_fn(env, UpperState)`` and ``lower_fn(env, LowerState)``.

    ``upper_fn`` is only consulted on decision minutes.
    """
    env.reset(wind)
    done = False
    while not done:
        action = upper_fn(env, env.upper_state()) if env.is_decision_minute() else None
        lower_state = env.begin_minute(action)
        _, done = env.end_minute(lower_fn(env, lower_state))
    return env.records

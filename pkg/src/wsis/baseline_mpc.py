"""Model-predictive baseline.

Each control period the wind is forecast by persistence and the induction
factors are set by coordinate-wise grid search over the analytic farm
model. Each minute the battery power minimises the one-step cost
``C_deg + Pr*(P_B - P_W)*dt + beta1*P_VG``. That cost is piecewise linear
in ``P_B``, so the exact minimiser is among a handful of breakpoints.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import bess
from .bess import BatteryParams, BatteryState
from .errors import ConfigError
from .farm import ALPHA_MAX, FarmLayout, InductionVector, farm_step
from .mdp import EnvConfig, WsisEnv, rollout, violation_penalty
from .metrics import EpisodeSummary, summarize
from .winddata import WindSeries

_TIE = 1e-9


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 5
    induction_grid_resolution: float = 0.01
    battery_search_resolution: float = 0.001
    # >1 switches the battery scheduler to coarse exhaustive search
    battery_horizon: int = 1

    def __post_init__(self):
        if self.horizon < 1 or self.battery_horizon < 1:
            raise ConfigError("mpc horizons must be >= 1")
        if self.induction_grid_resolution <= 0 or self.battery_search_resolution <= 0:
            raise ConfigError("mpc resolutions must be > 0")


class WindSample(NamedTuple):
    speed: float
    direction: float = 0.0


def persistence_forecast(sample: WindSample, horizon: int) -> list[WindSample]:
    if horizon < 1:
        raise ConfigError("forecast horizon must be >= 1")
    return [WindSample(*sample)] * horizon


def induction_grid(resolution: float) -> np.ndarray:
    n = max(int(round(ALPHA_MAX / resolution)), 1)
    return np.linspace(0.0, ALPHA_MAX, n + 1)


def _forecast_power(layout, forecast, alphas, wake=True):
    counts = {}
    for s in forecast:
        counts[s] = counts.get(s, 0) + 1
    total = sum(c * farm_step(layout, s.speed, s.direction, alphas, wake=wake).total_power
                for s, c in counts.items())
    return total / len(forecast)


def optimize_induction(layout: FarmLayout, forecast: Sequence[WindSample],
                       resolution: float = 0.01, max_sweeps: int = 50) -> InductionVector:
    """Coordinate ascent on forecast-mean farm power, upstream to downstream.

    Each factor is grid-searched with the others fixed; sweeps repeat until
    no factor changes. Ties resolve to the smaller factor.
    """
    if not forecast:
        raise ConfigError("forecast must not be empty")
    forecast = [WindSample(*s) for s in forecast]
    grid = induction_grid(resolution)
    ids = layout.ids
    direction = forecast[0].direction
    c, s = math.cos(direction), math.sin(direction)
    by_id = {t.id: t for t in layout.turbines}
    sweep_order = sorted(range(len(ids)), key=lambda j: by_id[ids[j]].position[0] * c
                         + by_id[ids[j]].position[1] * s)
    start = [math.cos(by_id[i].yaw_angle) / 3.0 for i in ids]
    alphas = [float(grid[np.argmin(np.abs(grid - a))]) for a in start]
    best = _forecast_power(layout, forecast, alphas)
    for _ in range(max_sweeps):
        changed = False
        for j in sweep_order:
            trial = list(alphas)
            best_a, best_p = None, -math.inf
            for a in grid:
                trial[j] = float(a)
                p = _forecast_power(layout, forecast, trial)
                if p > best_p:
                    best_a, best_p = float(a), p
            if best_a != alphas[j] and best_p >= best:
                alphas[j] = best_a
                changed = best_p > best or changed
                best = best_p
        if not changed:
            break
    return InductionVector(tuple(alphas))


def battery_objective(p_b: float, p_w: float, p_g_prev: float, params: BatteryParams,
                      cfg: EnvConfig) -> float:
    """One-step cost of battery power ``p_b``: degradation, forgone revenue, fluctuation."""
    p_fg = abs(p_g_prev - (p_w - p_b))
    return (bess.discharge_cost(params, p_b, cfg.dt) + cfg.price * (p_b - p_w) * cfg.dt
            + cfg.beta1 * violation_penalty(p_fg, cfg))


def _pick(candidates, cost):
    best_p, best_c = None, math.inf
    for p in sorted(candidates, key=abs):
        c = cost(p)
        if c < best_c - _TIE:
            best_p, best_c = p, c
    return best_p, best_c


def schedule_battery(p_w: float, p_g_prev: float, battery: BatteryState, params: BatteryParams,
                     cfg: EnvConfig, bounds: Optional[tuple[float, float]] = None) -> float:
    """Exact one-step optimal battery power.

    Candidates are the feasible bounds, zero, the power that holds grid
    output flat, and the powers that put the fluctuation exactly on its
    threshold. Among equal-cost candidates the smallest ``|P_B|`` wins.
    """
    lo, hi = bounds if bounds is not None else bess.feasible_power_bounds(battery, params, cfg.dt)
    if lo > hi:
        schedule_battery.anomalies += 1
        return 0.5 * (lo + hi)
    flat = p_w - p_g_prev
    thr = cfg.fluct_threshold
    cands = {lo, hi, 0.0, flat, flat - thr, flat + thr}
    cands = [min(max(p, lo), hi) for p in cands]
    p, _ = _pick(cands, lambda q: battery_objective(q, p_w, p_g_prev, params, cfg))
    return p


schedule_battery.anomalies = 0


def schedule_battery_grid(p_w: float, p_g_prev: float, battery: BatteryState,
                          params: BatteryParams, cfg: EnvConfig, resolution: float = 0.001,
                          bounds: Optional[tuple[float, float]] = None) -> float:
    """Brute-force scheduler: every multiple of ``resolution`` in the bounds plus the bounds."""
    lo, hi = bounds if bounds is not None else bess.feasible_power_bounds(battery, params, cfg.dt)
    k0, k1 = math.ceil(lo / resolution - 1e-9), math.floor(hi / resolution + 1e-9)
    grid = np.concatenate([[lo, hi], np.arange(k0, k1 + 1) * resolution])
    grid = grid[(grid >= lo) & (grid <= hi)]
    p_fg = np.abs(p_g_prev - (p_w - grid))
    excess = p_fg - cfg.fluct_threshold
    p_vg = np.where(excess <= 0, p_fg, cfg.fluct_threshold + cfg.nu * excess)
    cost = (params.k_deg * np.maximum(-grid, 0.0) * cfg.dt * 1000.0
            + cfg.price * (grid - p_w) * cfg.dt + cfg.beta1 * p_vg)
    best = cost.min()
    ties = grid[cost <= best + _TIE]
    return float(ties[np.argmin(np.abs(ties))])


def schedule_battery_horizon(p_w_forecast: Sequence[float], p_g_prev: float,
                             battery: BatteryState, params: BatteryParams, cfg: EnvConfig,
                             resolution: float = 0.5) -> float:
    """First move of the cheapest battery plan over a short horizon (exhaustive, coarse grid)."""
    levels = np.arange(-params.p_dis_max, params.p_ch_max + 1e-9, resolution)
    levels = sorted(set(np.round(levels, 12).tolist()) | {0.0}, key=abs)
    best_first, best_cost = 0.0, math.inf
    for plan in itertools.product(levels, repeat=len(p_w_forecast)):
        state, prev, total, ok = battery, p_g_prev, 0.0, True
        for p_b, p_w in zip(plan, p_w_forecast):
            lo, hi = bess.feasible_power_bounds(state, params, cfg.dt)
            if not lo <= p_b <= hi:
                ok = False
                break
            total += battery_objective(p_b, p_w, prev, params, cfg)
            state, _ = bess.step(state, params, p_b, cfg.dt)
            prev = p_w - p_b
        if ok and total < best_cost - _TIE:
            best_first, best_cost = plan[0], total
    return float(best_first)


class MpcController:
    """Stateless-between-episodes controller exposing ``upper``/``lower`` callables."""

    def __init__(self, cfg: MpcConfig = MpcConfig()):
        self.cfg = cfg
        self._cache: dict = {}

    def upper(self, env: WsisEnv, state) -> list[float]:
        sample = WindSample(state.u_inf, state.direction)
        key = (sample, self.cfg.horizon)
        if key not in self._cache:
            forecast = persistence_forecast(sample, self.cfg.horizon)
            self._cache[key] = list(optimize_induction(env.layout, forecast,
                                                       self.cfg.induction_grid_resolution).alphas)
        return self._cache[key]

    def lower(self, env: WsisEnv, state) -> float:
        params, cfg = env.battery_params, env.cfg
        battery = BatteryState(state.battery_energy)
        if self.cfg.battery_horizon == 1:
            return schedule_battery(state.wind_power, state.prev_grid_power, battery, params, cfg)
        forecast = [state.wind_power] * self.cfg.battery_horizon
        return schedule_battery_horizon(forecast, state.prev_grid_power, battery, params, cfg,
                                        max(self.cfg.battery_search_resolution, 0.25))


def run_mpc_episode(env: WsisEnv, wind: WindSeries, cfg: MpcConfig = MpcConfig(),
                    controller: Optional[MpcController] = None) -> EpisodeSummary:
    ctl = controller or MpcController(cfg)
    records = rollout(env, wind, ctl.upper, ctl.lower)
    return summarize(records, env.cfg.fluct_threshold)

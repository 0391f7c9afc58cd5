"""Battery energy dynamics and linearised degradation cost.

Power is in MW, energy in MWh and time in hours. The degradation
coefficient is quoted in $/kWh, so discharged energy is converted to kWh
before costing.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import ConfigError, ContractError

# tolerated overshoot of the energy band caused by float rounding in bounds
_ENERGY_TOL = 1e-9


def degradation_coefficient(replacement_cost: float, lifetime_throughput: float,
                            roundtrip_sqrt: float) -> float:
    """Equivalent degradation cost in $/kWh: ``C_R / (L_T * RE)``."""
    denom = lifetime_throughput * roundtrip_sqrt
    if lifetime_throughput <= 0 or roundtrip_sqrt <= 0:
        raise ConfigError("lifetime_throughput and roundtrip_sqrt must be > 0")
    return replacement_cost / denom


def lifetime_throughput(dod_cycles: Sequence[tuple[float, float]], e_max: float) -> float:
    """Mean lifetime throughput (kWh) over (depth-of-discharge, cycles-to-failure) pairs.

    ``e_max`` is in MWh.
    """
    if not dod_cycles:
        raise ConfigError("dod_cycles must not be empty")
    total = 0.0
    for g, f in dod_cycles:
        if not 0 < g <= 1 or f <= 0:
            raise ConfigError(f"invalid DOD/cycle pair ({g}, {f})")
        total += e_max * 1000.0 * g * f
    return total / len(dod_cycles)


@dataclass(frozen=True)
class BatteryParams:
    capacity: float = 6.0
    e_min: Optional[float] = None
    e_max: Optional[float] = None
    p_ch_max: float = 3.0
    p_dis_max: float = 3.0
    eta_ch: float = 0.98
    eta_dis: float = 0.98
    k_deg: Optional[float] = None
    replacement_cost: float = 900.0
    lifetime_throughput: float = 1344.0
    roundtrip_sqrt: float = 0.89
    initial_soc: float = 0.5

    def __post_init__(self):
        if self.e_min is None:
            object.__setattr__(self, "e_min", 0.1 * self.capacity)
        if self.e_max is None:
            object.__setattr__(self, "e_max", 0.9 * self.capacity)
        if self.k_deg is None:
            object.__setattr__(self, "k_deg", degradation_coefficient(
                self.replacement_cost, self.lifetime_throughput, self.roundtrip_sqrt))
        if not 0 <= self.e_min < self.e_max <= self.capacity:
            raise ConfigError("battery: need 0 <= e_min < e_max <= capacity")
        if self.p_ch_max <= 0 or self.p_dis_max <= 0:
            raise ConfigError("battery: power limits must be > 0")
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_dis <= 1):
            raise ConfigError("battery: efficiencies must lie in (0, 1]")
        if self.k_deg < 0:
            raise ConfigError("battery: k_deg must be >= 0")
        if not 0 <= self.initial_soc <= 1:
            raise ConfigError("battery: initial_soc must lie in [0, 1]")

    def initial_state(self) -> "BatteryState":
        energy = min(max(self.initial_soc * self.capacity, self.e_min), self.e_max)
        return BatteryState(energy, 0)


@dataclass(frozen=True)
class BatteryState:
    energy: float
    minute_index: int = 0


def discharge_cost(params: BatteryParams, p_b: float, dt: float) -> float:
    return params.k_deg * max(-p_b, 0.0) * dt * 1000.0


def step(state: BatteryState, params: BatteryParams, p_b: float,
         dt: float) -> tuple[BatteryState, float]:
    """Advance one interval at battery power ``p_b`` (positive charges).

    Returns the new state and the degradation cost in dollars.
    """
    if not -params.p_dis_max <= p_b <= params.p_ch_max:
        raise ContractError(f"battery power {p_b} outside [-{params.p_dis_max}, {params.p_ch_max}]")
    energy = state.energy + (max(p_b, 0.0) * params.eta_ch - max(-p_b, 0.0) / params.eta_dis) * dt
    if energy < params.e_min - _ENERGY_TOL or energy > params.e_max + _ENERGY_TOL:
        raise ContractError(f"battery energy {energy} leaves [{params.e_min}, {params.e_max}]")
    energy = min(max(energy, params.e_min), params.e_max)
    new_state = replace(state, energy=energy, minute_index=state.minute_index + 1)
    return new_state, discharge_cost(params, p_b, dt)


def feasible_power_bounds(state: BatteryState, params: BatteryParams,
                          dt: float) -> tuple[float, float]:
    """Battery power interval honouring both the rate limits and the energy band."""
    p_high = min(params.p_ch_max, max(params.e_max - state.energy, 0.0) / (params.eta_ch * dt))
    p_low = -min(params.p_dis_max, max(state.energy - params.e_min, 0.0) * params.eta_dis / dt)
    return p_low, p_high

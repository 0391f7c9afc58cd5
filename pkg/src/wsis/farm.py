"""Turbine power and Jensen Park wake model for a wind farm layout.

Turbines follow the actuator-disk relation ``Cp = 4a(cos(yaw) - a)^2`` and
shed a top-hat Jensen wake. Deficits from several upstream rotors are
combined by root-sum-of-squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import DomainError

ALPHA_MAX = 0.5


@dataclass(frozen=True)
class TurbineSpec:
    id: int
    position: tuple[float, float]
    rotor_diameter: float = 100.0
    yaw_angle: float = 0.0
    cut_in: float = 3.0
    cut_out: float = 25.0

    def __post_init__(self):
        if self.rotor_diameter <= 0:
            raise DomainError(f"turbine {self.id}: rotor_diameter must be > 0")
        if not 0 <= self.cut_in < self.cut_out:
            raise DomainError(f"turbine {self.id}: need 0 <= cut_in < cut_out")
        if abs(self.yaw_angle) >= math.pi / 2:
            raise DomainError(f"turbine {self.id}: |yaw_angle| must be < pi/2")

    @property
    def rotor_area(self) -> float:
        return math.pi * self.rotor_diameter**2 / 4.0


@dataclass(frozen=True)
class FarmLayout:
    turbines: tuple[TurbineSpec, ...]
    wake_expansion: float = 0.08
    air_density: float = 1.2
    power_scale: float = 0.95

    def __post_init__(self):
        turbines = tuple(sorted(self.turbines, key=lambda t: (t.position[0], t.position[1])))
        object.__setattr__(self, "turbines", turbines)
        if not turbines:
            raise DomainError("farm layout needs at least one turbine")
        if self.wake_expansion <= 0:
            raise DomainError("wake_expansion must be > 0")
        if self.air_density <= 0:
            raise DomainError("air_density must be > 0")
        if len({t.position for t in turbines}) != len(turbines):
            raise DomainError("turbine positions must be distinct")
        if len({t.id for t in turbines}) != len(turbines):
            raise DomainError("turbine ids must be distinct")

    @property
    def n_turbines(self) -> int:
        return len(self.turbines)

    @property
    def ids(self) -> list[int]:
        return sorted(t.id for t in self.turbines)


def row_layout(n_turbines=3, spacing_diameters=5.0, rotor_diameter=100.0, yaw_angle=0.0,
               cut_in=3.0, cut_out=25.0, wake_expansion=0.08, air_density=1.2,
               power_scale=0.95) -> FarmLayout:
    """Build a linear row along +x with turbines ``spacing_diameters`` rotor diameters apart."""
    spacing = spacing_diameters * rotor_diameter
    turbines = tuple(
        TurbineSpec(i, (i * spacing, 0.0), rotor_diameter, yaw_angle, cut_in, cut_out)
        for i in range(n_turbines)
    )
    return FarmLayout(turbines, wake_expansion, air_density, power_scale)


@dataclass(frozen=True)
class InductionVector:
    alphas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        for a in self.alphas:
            if not 0.0 <= a <= ALPHA_MAX:
                raise DomainError(f"induction factor {a} outside [0, 0.5]")

    def __len__(self):
        return len(self.alphas)

    def __iter__(self):
        return iter(self.alphas)

    def __getitem__(self, i):
        return self.alphas[i]


@dataclass(frozen=True)
class FarmOutput:
    # indexed by position in ``FarmLayout.ids`` (ascending turbine id)
    per_turbine_power: tuple[float, ...]
    per_turbine_speed: tuple[float, ...]
    total_power: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total_power", math.fsum(self.per_turbine_power))


def power_coefficient(alpha: float, yaw: float = 0.0) -> float:
    if not 0.0 <= alpha <= ALPHA_MAX:
        raise DomainError(f"induction factor {alpha} outside [0, 0.5]")
    return 4.0 * alpha * (math.cos(yaw) - alpha) ** 2


def turbine_power(spec: TurbineSpec, incident_speed: float, alpha: float, layout: FarmLayout) -> float:
    """Electrical power of one turbine in MW; zero outside the cut-in/cut-out band."""
    if incident_speed < 0:
        raise DomainError(f"negative wind speed {incident_speed}")
    cp = power_coefficient(alpha, spec.yaw_angle)
    if incident_speed < spec.cut_in or incident_speed > spec.cut_out:
        return 0.0
    watts = 0.5 * layout.air_density * spec.rotor_area * cp * incident_speed**3
    return layout.power_scale * watts / 1e6


def wake_deficit(upstream: TurbineSpec, alpha: float, downstream_offset: tuple[float, float],
                 k: float) -> float:
    """Fractional speed deficit at ``downstream_offset`` (wind-aligned frame) behind ``upstream``."""
    dx, dy = downstream_offset
    if dx <= 0:
        return 0.0
    d = upstream.rotor_diameter
    if abs(dy) > (d + 2.0 * k * dx) / 2.0:
        return 0.0
    return 2.0 * alpha / (1.0 + 2.0 * k * dx / d) ** 2


def _wind_frame(layout: FarmLayout, direction: float):
    c, s = math.cos(direction), math.sin(direction)
    return [(t.position[0] * c + t.position[1] * s, -t.position[0] * s + t.position[1] * c)
            for t in layout.turbines]


def farm_step(layout: FarmLayout, free_stream: float, direction: float,
              alphas: InductionVector | Sequence[float], wake: bool = True) -> FarmOutput:
    """Steady-state farm power for one wind sample.

    ``alphas`` is indexed by ascending turbine id. ``direction`` is the angle
    of the wind vector (the way it blows) measured from the farm +x axis.
    With ``wake=False`` every rotor sees the free stream.
    """
    if free_stream < 0:
        raise DomainError(f"negative wind speed {free_stream}")
    ids = layout.ids
    if len(alphas) != len(ids):
        raise DomainError(f"expected {len(ids)} induction factors, got {len(alphas)}")
    alpha_by_id = dict(zip(ids, alphas))
    for a in alpha_by_id.values():
        if not 0.0 <= a <= ALPHA_MAX:
            raise DomainError(f"induction factor {a} outside [0, 0.5]")

    coords = _wind_frame(layout, direction)
    order = sorted(range(layout.n_turbines), key=lambda i: (coords[i][0], coords[i][1]))
    k = layout.wake_expansion
    power, speed = {}, {}
    # (turbine, effective alpha) of rotors already resolved; shut-down rotors shed no wake
    upstream = []
    for i in order:
        t = layout.turbines[i]
        deficit_sq = 0.0
        if wake:
            xi, yi = coords[i]
            for j, a_eff in upstream:
                if a_eff == 0.0:
                    continue
                xj, yj = coords[j]
                d = wake_deficit(layout.turbines[j], a_eff, (xi - xj, yi - yj), k)
                deficit_sq += d * d
        u = free_stream * (1.0 - math.sqrt(deficit_sq))
        u = max(u, 0.0)
        a = alpha_by_id[t.id]
        p = turbine_power(t, u, a, layout)
        power[t.id], speed[t.id] = p, u
        running = t.cut_in <= u <= t.cut_out
        upstream.append((i, a if running else 0.0))
    return FarmOutput(tuple(power[i] for i in ids), tuple(speed[i] for i in ids))

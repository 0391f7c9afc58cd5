import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wsis.errors import DomainError
from wsis.farm import (FarmLayout, InductionVector, TurbineSpec, farm_step, power_coefficient,
                       row_layout, turbine_power, wake_deficit)

alphas = st.floats(0.0, 0.5)


def single(power_scale=1.0, **kw):
    return FarmLayout((TurbineSpec(0, (0.0, 0.0), **kw),), power_scale=power_scale)


class TestPowerCoefficient:
    def test_zero_induction(self):
        assert power_coefficient(0.0, 0.3) == 0.0

    def test_betz(self):
        assert power_coefficient(1 / 3) == pytest.approx(16 / 27, abs=1e-15)

    def test_quarter(self):
        assert power_coefficient(0.25) == 0.5625

    @pytest.mark.parametrize("bad", [-0.01, 0.51, math.nan])
    def test_out_of_range(self, bad):
        with pytest.raises(DomainError):
            power_coefficient(bad)

    @given(alphas, st.floats(-1.2, 1.2))
    def test_matches_rational_oracle(self, a, yaw):
        c = Fraction(math.cos(yaw))
        fa = Fraction(a)
        exact = 4 * fa * (c - fa) ** 2
        assert power_coefficient(a, yaw) == pytest.approx(float(exact), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("yaw", [0.0, 0.1, 0.3])
    def test_grid_optimum(self, yaw):
        grid = np.round(np.arange(0, 5001) * 1e-4, 10)
        vals = [power_coefficient(float(a), yaw) for a in grid]
        i = int(np.argmax(vals))
        assert grid[i] == pytest.approx(math.cos(yaw) / 3, abs=1e-4)
        assert vals[i] == pytest.approx(16 * math.cos(yaw) ** 3 / 27, abs=1e-8)


class TestTurbinePower:
    def test_hand_value(self):
        lay = single()
        p = turbine_power(lay.turbines[0], 8.0, 1 / 3, lay)
        oracle = 0.5 * 1.2 * math.pi * 2500 * (16 / 27) * 512 / 1e6
        assert p == pytest.approx(oracle, rel=1e-12)
        assert p == pytest.approx(1.4298, abs=1e-4)

    def test_below_cut_in(self):
        lay = single()
        assert turbine_power(lay.turbines[0], 2.0, 1 / 3, lay) == 0.0

    def test_above_cut_out(self):
        lay = single()
        assert turbine_power(lay.turbines[0], 25.5, 1 / 3, lay) == 0.0

    def test_zero_alpha(self):
        lay = single()
        assert turbine_power(lay.turbines[0], 8.0, 0.0, lay) == 0.0

    def test_negative_speed(self):
        lay = single()
        with pytest.raises(DomainError):
            turbine_power(lay.turbines[0], -1.0, 0.2, lay)

    def test_power_scale(self):
        a, b = single(1.0), single(0.95)
        pa = turbine_power(a.turbines[0], 9.0, 0.3, a)
        pb = turbine_power(b.turbines[0], 9.0, 0.3, b)
        assert pb == pytest.approx(0.95 * pa, rel=1e-14)


class TestWakeDeficit:
    up = TurbineSpec(0, (0.0, 0.0))

    def test_centreline(self):
        assert wake_deficit(self.up, 1 / 3, (500.0, 0.0), 0.08) == pytest.approx(
            (2 / 3) / 1.8**2, rel=1e-14)
        assert wake_deficit(self.up, 1 / 3, (500.0, 0.0), 0.08) == pytest.approx(0.20576, abs=1e-5)

    def test_outside_cone(self):
        assert wake_deficit(self.up, 1 / 3, (500.0, 95.0), 0.08) == 0.0

    def test_cone_edge_inclusive(self):
        assert wake_deficit(self.up, 1 / 3, (500.0, 90.0), 0.08) > 0

    def test_zero_alpha(self):
        assert wake_deficit(self.up, 0.0, (300.0, 10.0), 0.08) == 0.0

    @pytest.mark.parametrize("dx", [0.0, -100.0])
    def test_upstream_has_no_effect(self, dx):
        assert wake_deficit(self.up, 0.3, (dx, 0.0), 0.08) == 0.0

    @given(alphas, st.floats(1.0, 5000.0), st.floats(1.0, 5000.0))
    def test_non_increasing_in_dx(self, a, d1, d2):
        lo, hi = sorted((d1, d2))
        assert wake_deficit(self.up, a, (hi, 0.0), 0.08) <= wake_deficit(self.up, a, (lo, 0.0), 0.08)

    @given(alphas, alphas, st.floats(1.0, 5000.0), st.floats(-400.0, 400.0))
    def test_non_decreasing_in_alpha(self, a1, a2, dx, dy):
        lo, hi = sorted((a1, a2))
        assert wake_deficit(self.up, lo, (dx, dy), 0.08) <= wake_deficit(self.up, hi, (dx, dy), 0.08)

    @given(alphas, st.floats(1e-6, 1e4), st.floats(0.01, 0.5))
    def test_bounded(self, a, dx, k):
        assert 0.0 <= wake_deficit(self.up, a, (dx, 0.0), k) < 1.0


class TestFarmStep:
    def test_single_turbine_reduces_to_turbine_power(self):
        lay = single(0.95)
        out = farm_step(lay, 8.0, 0.0, [1 / 3])
        assert out.total_power == pytest.approx(1.4298 * 0.95, abs=1e-4)
        assert out.per_turbine_speed == (8.0,)

    def test_two_turbine_downstream_speed(self):
        lay = row_layout(2)
        out = farm_step(lay, 8.0, 0.0, [1 / 3, 1 / 3])
        assert out.per_turbine_speed[1] == pytest.approx(8 * (1 - (2 / 3) / 1.8**2), rel=1e-14)
        assert out.per_turbine_speed[1] == pytest.approx(6.354, abs=1e-3)

    def test_three_turbines_root_sum_square(self):
        lay = row_layout(3)
        out = farm_step(lay, 8.0, 0.0, [0.3, 0.2, 0.25])
        d1 = 0.6 / (1 + 2 * 0.08 * 10) ** 2      # turbine 0 at 10 D
        d2 = 0.4 / (1 + 2 * 0.08 * 5) ** 2       # turbine 1 at 5 D
        assert out.per_turbine_speed[2] == pytest.approx(8 * (1 - math.hypot(d1, d2)), rel=1e-13)

    def test_all_zero_alpha(self):
        lay = row_layout(4)
        out = farm_step(lay, 9.0, 0.0, [0.0] * 4)
        assert out.total_power == 0.0
        assert all(u == 9.0 for u in out.per_turbine_speed)

    def test_wake_switch(self):
        lay = row_layout(3)
        out = farm_step(lay, 8.0, 0.0, [1 / 3] * 3, wake=False)
        assert all(u == 8.0 for u in out.per_turbine_speed)

    def test_reverse_direction_swaps_roles(self):
        lay = row_layout(2)
        fwd = farm_step(lay, 8.0, 0.0, [1 / 3, 1 / 3])
        rev = farm_step(lay, 8.0, math.pi, [1 / 3, 1 / 3])
        assert rev.per_turbine_speed[0] == pytest.approx(fwd.per_turbine_speed[1], rel=1e-12)
        assert rev.per_turbine_speed[1] == pytest.approx(8.0)

    def test_crosswind_no_wake(self):
        lay = row_layout(3)
        out = farm_step(lay, 8.0, math.pi / 2, [1 / 3] * 3)
        assert out.per_turbine_speed == pytest.approx((8.0, 8.0, 8.0))

    def test_total_is_sum(self):
        out = farm_step(row_layout(3), 10.0, 0.0, [0.2, 0.3, 0.4])
        assert out.total_power == math.fsum(out.per_turbine_power)

    def test_wrong_alpha_count(self):
        with pytest.raises(DomainError):
            farm_step(row_layout(3), 8.0, 0.0, [0.3, 0.3])

    @given(st.floats(3.0, 25.0), st.floats(3.0, 25.0), st.lists(alphas, min_size=3, max_size=3))
    def test_monotone_in_free_stream(self, u1, u2, a):
        lay = row_layout(3)
        lo, hi = sorted((u1, u2))
        # keep downstream rotors inside the operating band for both speeds
        if farm_step(lay, lo, 0.0, a).per_turbine_speed[-1] < 3.0:
            return
        assert farm_step(lay, lo, 0.0, a).total_power <= farm_step(lay, hi, 0.0, a).total_power + 1e-12

    @given(st.permutations(range(4)), st.lists(alphas, min_size=4, max_size=4),
           st.floats(0.0, 2 * math.pi))
    def test_turbine_order_invariance(self, perm, a, direction):
        base = row_layout(4)
        shuffled = FarmLayout(tuple(base.turbines[i] for i in perm))
        x = farm_step(base, 9.0, direction, a)
        y = farm_step(shuffled, 9.0, direction, a)
        assert x.per_turbine_power == y.per_turbine_power
        assert x.per_turbine_speed == y.per_turbine_speed


class TestTypes:
    def test_invalid_turbine(self):
        with pytest.raises(DomainError):
            TurbineSpec(0, (0.0, 0.0), rotor_diameter=0.0)
        with pytest.raises(DomainError):
            TurbineSpec(0, (0.0, 0.0), cut_in=10.0, cut_out=5.0)
        with pytest.raises(DomainError):
            TurbineSpec(0, (0.0, 0.0), yaw_angle=math.pi / 2)

    def test_invalid_layout(self):
        t = TurbineSpec(0, (0.0, 0.0))
        with pytest.raises(DomainError):
            FarmLayout(())
        with pytest.raises(DomainError):
            FarmLayout((t, TurbineSpec(1, (0.0, 0.0))))
        with pytest.raises(DomainError):
            FarmLayout((t,), wake_expansion=0.0)
        with pytest.raises(DomainError):
            FarmLayout((t,), air_density=-1.0)

    def test_layout_sorted_upstream(self):
        a, b = TurbineSpec(0, (500.0, 0.0)), TurbineSpec(1, (0.0, 0.0))
        assert [t.id for t in FarmLayout((a, b)).turbines] == [1, 0]

    def test_induction_vector_bounds(self):
        with pytest.raises(DomainError):
            InductionVector((0.6,))
        assert InductionVector((0.5, 0.0)).alphas == (0.5, 0.0)

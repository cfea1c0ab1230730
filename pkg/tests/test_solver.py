"""Fixed-step integrator contracts: RK4 micro level and forward-Euler macro level."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmmemt.errors import ConfigurationError, DivergenceError, ParameterError
from hmmemt.solver import (
    OdeSystem,
    StateLayout,
    StateVector,
    integrate_micro,
    macro_step,
    rk4_step,
    steps_in_interval,
)


def linear_system(lam=-1.0):
    layout = StateLayout(("x",))
    return OdeSystem(
        dimension=1,
        field_eval=lambda x, t: lam * x,
        layout=layout,
        description="x' = lam x",
    )


def measured_rk4_order(hs=(1e-2, 3e-3, 1e-3, 3e-4)):
    """Convergence slope of RK4 on x' = -x over [0, ~1].

    With lambda = -1 the finest steps sink below the float64 rounding
    plateau (truncation ~7e-17 vs accumulated rounding ~1e-15), so the fit
    covers the asymptotic regime: the largest prefix of step pairs whose
    pairwise slope stays >= 3.  Returns (slope, per-h errors).
    """
    sys_ = linear_system(-1.0)
    errs = []
    for h in hs:
        n = round(1.0 / h)
        x = np.array([1.0])
        for i in range(n):
            x = rk4_step(sys_, StateVector(x, sys_.layout), i * h, h).values
        errs.append(abs(x[0] - math.exp(-n * h)))
    keep = 1
    for i in range(len(hs) - 1):
        pair = (math.log(errs[i + 1]) - math.log(errs[i])) / (
            math.log(hs[i + 1]) - math.log(hs[i])
        )
        if pair < 3.0:
            break
        keep = i + 2
    assert keep >= 3, f"too few points in the asymptotic regime: {errs}"
    slope = np.polyfit(np.log(np.array(hs[:keep])), np.log(np.array(errs[:keep])), 1)[0]
    return float(slope), errs


def oscillator():
    layout = StateLayout(("x", "v"))
    return OdeSystem(
        dimension=2,
        field_eval=lambda x, t: np.array([x[1], -x[0]]),
        layout=layout,
        description="harmonic oscillator",
    )


class TestRk4Step:
    def test_zero_field_leaves_state_unchanged(self):
        sys_ = OdeSystem(2, lambda x, t: np.zeros(2), StateLayout(("a", "b")))
        x = StateVector(np.array([1.5, -2.0]), sys_.layout)
        out = rk4_step(sys_, x, 0.0, 0.1)
        assert np.array_equal(out.values, x.values)

    def test_exponential_decay_accuracy(self):
        sys_ = linear_system(-1.0)
        x = StateVector(np.array([1.0]), sys_.layout)
        out = rk4_step(sys_, x, 0.0, 0.1)
        assert abs(out.values[0] - math.exp(-0.1)) <= 1e-7

    def test_oscillator_energy_drift_over_one_period(self):
        sys_ = oscillator()
        h = 1e-3
        n = round(2 * math.pi / h)
        x = StateVector(np.array([1.0, 0.0]), sys_.layout)
        t = 0.0
        for i in range(n):
            x = rk4_step(sys_, x, t, h)
            t += h
        energy = 0.5 * float(x.values @ x.values)
        assert abs(energy - 0.5) / 0.5 <= 1e-10

    def test_measured_convergence_order(self):
        slope, errs = measured_rk4_order()
        assert 3.8 <= slope <= 4.2
        assert errs[0] > errs[-1]

    def test_divergence_reports_state_and_time(self):
        layout = StateLayout(("fine", "bad"))
        sys_ = OdeSystem(2, lambda x, t: np.array([0.0, x[1] ** 2]), layout)
        x = StateVector(np.array([0.0, 1e200]), layout)
        with pytest.raises(DivergenceError) as err:
            rk4_step(sys_, x, 0.5, 0.1)
        assert err.value.variable == "bad"
        assert err.value.t is not None

    def test_nonpositive_step_rejected(self):
        sys_ = linear_system()
        with pytest.raises(ParameterError):
            rk4_step(sys_, StateVector(np.array([1.0]), sys_.layout), 0.0, 0.0)


class TestIntegrateMicro:
    def test_zero_window_single_node(self):
        sys_ = linear_system()
        x0 = StateVector(np.array([2.0]), sys_.layout)
        tr = integrate_micro(sys_, x0, 1.5, 0.0, 0.1)
        assert len(tr) == 1
        assert tr.times[0] == 1.5
        assert np.array_equal(tr.states[0], x0.values)

    def test_against_closed_form_exponential(self):
        lam = -3.0
        sys_ = linear_system(lam)
        x0 = StateVector(np.array([1.0]), sys_.layout)
        tr = integrate_micro(sys_, x0, 0.0, 1.0, 1e-3)
        exact = np.exp(lam * tr.times)
        assert np.max(np.abs(tr.states[:, 0] - exact)) <= 1e-10

    def test_node_count_table_window(self):
        sys_ = linear_system()
        x0 = StateVector(np.array([1.0]), sys_.layout)
        tr = integrate_micro(sys_, x0, 0.0, 0.022, 5e-6)
        assert len(tr) == 4401

    def test_bitwise_equals_composed_steps(self):
        sys_ = oscillator()
        x0 = StateVector(np.array([0.3, -0.7]), sys_.layout)
        h, k = 1e-3, 37
        tr = integrate_micro(sys_, x0, 0.25, k * h, h)
        x = x0
        for i in range(k):
            x = rk4_step(sys_, x, 0.25 + i * h, h)
        assert np.array_equal(tr.states[-1], x.values)

    def test_force_samples_are_field_at_nodes(self):
        sys_ = oscillator()
        x0 = StateVector(np.array([0.3, -0.7]), sys_.layout)
        tr = integrate_micro(sys_, x0, 0.0, 0.02, 1e-3)
        for i in range(len(tr)):
            expect = sys_.field_eval(tr.states[i], float(tr.times[i]))
            assert np.array_equal(tr.force_samples[i], expect)

    def test_window_step_mismatch_rejected(self):
        sys_ = linear_system()
        with pytest.raises(ConfigurationError):
            integrate_micro(sys_, StateVector(np.array([1.0]), sys_.layout), 0.0, 0.01, 3e-3)

    def test_divergence_carries_step_index(self):
        layout = StateLayout(("x",))
        sys_ = OdeSystem(1, lambda x, t: x * x, layout)
        with pytest.raises(DivergenceError) as err:
            integrate_micro(sys_, StateVector(np.array([1.0]), layout), 0.0, 10.0, 0.5)
        assert "micro step" in str(err.value)


class TestMacroStep:
    def test_zero_force(self):
        layout = StateLayout(("x",))
        x = StateVector(np.array([3.0]), layout)
        out, t = macro_step(x, 1.0, np.zeros(1), 0.012)
        assert out.values[0] == 3.0
        assert t == 1.012

    def test_simple_arithmetic(self):
        layout = StateLayout(("x",))
        out, t = macro_step(StateVector(np.array([1.0]), layout), 0.0, np.array([-1.0]), 0.012)
        assert out.values[0] == pytest.approx(0.988, abs=1e-15)

    def test_forward_euler_error_bound_on_decay(self):
        # Repeated macro steps with the exact effective force f = -X.
        layout = StateLayout(("x",))
        H = 0.01
        x = StateVector(np.array([1.0]), layout)
        t = 0.0
        worst = 0.0
        while t < 1.0 - 1e-12:
            x, t = macro_step(x, t, -x.values, H)
            worst = max(worst, abs(x.values[0] - math.exp(-t)))
        assert worst <= 1.0 * H

    @given(
        a=st.floats(-10, 10, allow_nan=False),
        b=st.floats(-10, 10, allow_nan=False),
        h=st.floats(1e-4, 1.0, allow_nan=False),
    )
    @settings(max_examples=40, deadline=None)
    def test_affine_in_anchor_and_force(self, a, b, h):
        layout = StateLayout(("x", "y"))
        rng = np.random.default_rng(7)
        x1 = rng.normal(size=2)
        x2 = rng.normal(size=2)
        f1 = rng.normal(size=2)
        f2 = rng.normal(size=2)
        lhs, _ = macro_step(StateVector(a * x1 + (1 - a) * x2, layout), 0.0, b * f1 + (1 - b) * f2, h)
        r1, _ = macro_step(StateVector(x1, layout), 0.0, f1, h)
        r2, _ = macro_step(StateVector(x1, layout), 0.0, f2, h)
        r3, _ = macro_step(StateVector(x2, layout), 0.0, f1, h)
        r4, _ = macro_step(StateVector(x2, layout), 0.0, f2, h)
        combo = (
            a * b * r1.values + a * (1 - b) * r2.values
            + (1 - a) * b * r3.values + (1 - a) * (1 - b) * r4.values
        )
        assert np.allclose(lhs.values, combo, atol=1e-9)


class TestStepsInInterval:
    def test_exact_division(self):
        assert steps_in_interval(0.022, 5e-6) == 4400

    def test_tolerates_ulp_noise(self):
        assert steps_in_interval(0.1 + 1e-13, 5e-6) == 20000

    def test_rejects_misfit(self):
        with pytest.raises(ConfigurationError):
            steps_in_interval(0.01, 3e-3)

# -*- coding: utf-8 -*-
"""Unit tests for closed-loop monitoring and verdict classification."""
import numpy as np
import pytest  # pylint: disable=import-error
from hypothesis import given, settings  # pylint: disable=import-error
from hypothesis import strategies as st  # pylint: disable=import-error

from ..adaptive_rom_controller.monitor import (
    VERDICTS,
    MonitorState,
    MonitorThresholds,
    Verdict,
    WindowStats,
    classify,
    diagnose,
    identify_spectral_radius,
    is_monotonic_increasing,
    record_step,
    window_stats,
)
from ..adaptive_rom_controller.numerics import zoh
from ..adaptive_rom_controller.rom import ReducedModel

pytestmark = pytest.mark.unit

BOUNDS = (np.array([-1.0]), np.array([1.0]))


def stats(e=0.01, rho=0.01, s=0.0, lam=0.5, end_step=50):
    """Window statistics with quiet defaults."""
    return WindowStats(e_bar=e, rho_bar=rho, s_bar=s, lambda_max=lam, end_step=end_step)


def fresh_counters():
    return MonitorState().counters


def line_model():
    """One-mode model spanning e1 of R^3."""
    A_d, B_d = zoh([[-1.0]], [[1.0]], 0.1)
    return ReducedModel(
        method="pod_galerkin",
        Phi=np.array([[1.0], [0.0], [0.0]]),
        A_r=np.array([[-1.0]]),
        B_r=np.array([[1.0]]),
        C_r=np.array([[1.0]]),
        A_d=A_d,
        B_d=B_d,
        T_s=0.1,
    )


class TestRecordStep:
    """Test cases for record_step and the monitor buffers."""

    def test_metrics(self, small_model):
        """e, rho and s follow their normalized definitions."""
        state = MonitorState()
        metrics = record_step(
            state, [1.1], [1.0], [0.96], np.array([0.5, 0.5]), small_model, BOUNDS
        )
        assert metrics.e == pytest.approx(0.1)
        assert metrics.rho == pytest.approx(0.1 / 1.1)
        assert metrics.s == 1.0
        assert state.steps == 1

    def test_zero_reference_uses_floor(self, small_model):
        """A zero reference divides by 1e-6 per output."""
        state = MonitorState()
        metrics = record_step(state, [1e-6], [0.0], [0.0], np.zeros(2), small_model, BOUNDS)
        assert metrics.e == pytest.approx(1.0)
        assert metrics.s == 0.0

    def test_snapshot_stride(self, small_model):
        """Full-order states are kept every fifth step."""
        state = MonitorState()
        for k in range(10):
            record_step(
                state, [1.0], [1.0], [0.0], np.zeros(2), small_model, BOUNDS, x=np.full(3, k)
            )
        snapshots = state.recent_snapshots()
        assert snapshots.shape == (3, 2)
        np.testing.assert_array_equal(snapshots[0], [0.0, 5.0])

    def test_window_ready_on_stride(self, small_model):
        """Windows close once full and then every stride steps."""
        state = MonitorState(MonitorThresholds(window=5, stride=2))
        ready = []
        for _ in range(8):
            record_step(state, [1.0], [1.0], [0.0], np.zeros(2), small_model, BOUNDS)
            ready.append(state.window_ready)
        assert ready == [False, False, False, False, True, False, True, False]

    def test_clear_window(self, small_model):
        """Clearing drops buffered steps but keeps the step count."""
        state = MonitorState(MonitorThresholds(window=5, stride=1))
        for _ in range(5):
            record_step(state, [1.0], [1.0], [0.0], np.zeros(2), small_model, BOUNDS)
        state.clear_window()
        assert not state.window_ready
        assert state.steps == 5


class TestIdentification:
    """Test cases for identify_spectral_radius and window_stats."""

    def test_recovers_pole_with_inputs(self):
        """Exact data r+ = 0.8 r + u gives 0.8."""
        inputs = np.random.default_rng(0).standard_normal((1, 30))
        estimates = np.zeros((1, 30))
        for k in range(29):
            estimates[0, k + 1] = 0.8 * estimates[0, k] + inputs[0, k]
        assert identify_spectral_radius(estimates, inputs) == pytest.approx(0.8)

    def test_too_few_columns(self):
        """Two samples identify nothing."""
        assert identify_spectral_radius(np.ones((2, 2)), np.ones((1, 2))) is None

    def test_constant_estimates(self):
        """No variation, no dynamics."""
        assert identify_spectral_radius(np.ones((2, 10)), np.zeros((1, 10))) is None

    def test_window_means_and_radius(self, small_model):
        """A geometric decay at 1/2 with zero input gives lambda = 0.5."""
        state = MonitorState(MonitorThresholds(window=5, stride=1))
        assert window_stats(state) is None
        for k in range(5):
            record_step(
                state,
                [1.0],
                [1.0],
                [0.0],
                np.array([0.5, 0.5]),
                small_model,
                BOUNDS,
                r_meas=np.full(2, 0.5**k),
            )
        result = window_stats(state)
        assert result.e_bar == 0.0
        assert result.rho_bar == 0.0
        assert result.lambda_max == pytest.approx(0.5)
        assert not result.stale
        assert state.history == [result]

    def test_stale_identification_keeps_previous(self, small_model):
        """Without identifiable dynamics the previous lambda is reused."""
        state = MonitorState(MonitorThresholds(window=5, stride=1))
        state.history.append(stats(lam=0.7))
        for _ in range(5):
            record_step(state, [1.0], [1.0], [0.0], np.zeros(2), small_model, BOUNDS)
        result = window_stats(state)
        assert result.stale
        assert result.lambda_max == 0.7


class TestTrend:
    """Test cases for is_monotonic_increasing."""

    @pytest.mark.parametrize(
        "values, expected",
        [
            ([0.1, 0.2, 0.3], True),
            ([0.1, 0.0995, 0.2], True),
            ([0.1, 0.1, 0.1], False),
            ([0.3, 0.2, 0.4], False),
            ([0.1], False),
        ],
    )
    def test_values(self, values, expected):
        """Non-decreasing within the tolerance and rising overall."""
        assert is_monotonic_increasing(values, 1e-3) is expected


class TestClassify:
    """Test cases for classify."""

    def run(self, window, counters, rank=2, theta=0.0, r=2, gm=20.0, pm=60.0, trend=False):
        return classify(window, rank, theta, r, gm, pm, trend, counters, MonitorThresholds())[0]

    def test_good_resets_counters(self):
        """Good clears every persistence counter."""
        counters = fresh_counters()
        counters["Condition3"] = 1
        assert self.run(stats(), counters) == "Good"
        assert all(value == 0 for value in counters.values())

    def test_emergency_needs_two_windows(self):
        """One unstable window is Indeterminate, the second is Emergency."""
        counters = fresh_counters()
        assert self.run(stats(lam=1.05), counters) == "Indeterminate"
        assert self.run(stats(lam=1.05), counters) == "Emergency"

    @settings(max_examples=100, deadline=None)
    @given(
        e=st.floats(0.0, 1.0),
        rho=st.floats(0.0, 1.0),
        s=st.floats(0.0, 1.0),
        lam=st.floats(0.0, 1.5),
        rank=st.integers(0, 10),
        theta=st.floats(0.0, 90.0),
        trend=st.booleans(),
    )
    def test_first_window_has_one_verdict(self, e, rho, s, lam, rank, theta, trend):
        """Good excludes every condition; a first window is Condition2, Good or Indeterminate."""
        counters = fresh_counters()
        kind, triggers = classify(
            stats(e, rho, s, lam), rank, theta, 2, 20.0, 60.0, trend, counters, MonitorThresholds()
        )
        assert kind in VERDICTS
        conditions = ("Emergency", "Condition1", "Condition2", "Condition3")
        assert not (triggers["Good"] and any(triggers[name] for name in conditions))
        if triggers["Condition2"]:
            assert kind == "Condition2"
        elif triggers["Good"]:
            assert kind == "Good"
        else:
            assert kind == "Indeterminate"

    def test_subspace_inadequacy_needs_three_windows(self):
        """High residual with a rank jump persists three windows."""
        counters = fresh_counters()
        kinds = [self.run(stats(rho=0.2), counters, rank=4) for _ in range(3)]
        assert kinds == ["Indeterminate", "Indeterminate", "Condition1"]

    def test_parametric_drift_is_immediate(self):
        """High residual with a rising trend and no new directions."""
        counters = fresh_counters()
        assert self.run(stats(rho=0.2), counters, rank=2, theta=5.0, trend=True) == "Condition2"

    def test_control_inadequacy(self):
        """Large error with an accurate model and saturation persists two windows."""
        counters = fresh_counters()
        window = stats(e=0.2, rho=0.01, s=0.5)
        assert self.run(window, counters) == "Indeterminate"
        assert self.run(window, counters) == "Condition3"

    def test_low_margin_triggers_control_inadequacy(self):
        """A 6 dB gain margin is below the 8 dB trigger."""
        counters = fresh_counters()
        window = stats(e=0.2, rho=0.01)
        self.run(window, counters, gm=6.0)
        assert self.run(window, counters, gm=6.0) == "Condition3"

    def test_interrupted_persistence(self):
        """A window without the trigger resets the count."""
        counters = fresh_counters()
        self.run(stats(lam=1.05), counters)
        self.run(stats(e=0.07, rho=0.07), counters)
        assert self.run(stats(lam=1.05), counters) == "Indeterminate"


class TestDiagnose:
    """Test cases for diagnose and Verdict."""

    def test_indeterminate_escalates_after_five(self, small_model):
        """Five Indeterminate windows in a row escalate to the coordinator."""
        state = MonitorState()
        verdicts = [
            diagnose(state, small_model, stats=stats(e=0.07, rho=0.07)) for _ in range(5)
        ]
        assert [v.escalate for v in verdicts] == [False, False, False, False, True]
        assert verdicts[-1].routing == ("Central_Agent", "escalate")
        assert verdicts[0].routing == (None, "log")

    def test_subspace_angle_triggers_enrichment(self):
        """Snapshots orthogonal to the basis route to the data stage."""
        state = MonitorState()
        snapshots = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        verdicts = [
            diagnose(state, line_model(), recent_snapshots=snapshots, stats=stats(rho=0.2))
            for _ in range(3)
        ]
        final = verdicts[-1]
        assert final.kind == "Condition1"
        assert final.diagnostics["theta_deg"] == pytest.approx(90.0)
        assert final.diagnostics["rank_recent"] == 2
        assert final.routing == ("Data_Agent", "basis_enrichment")
        assert final.persistence == 3

    def test_good_message(self, small_model):
        """A Good verdict needs no adaptation."""
        verdict = diagnose(MonitorState(), small_model, stats=stats())
        message = verdict.to_dict("pod_galerkin", "lqr")
        assert message["verdict"] == "Good"
        assert message["condition_triggered"] is None
        assert not message["adaptation_required"]
        assert message["routing"]["target_agent"] is None
        assert message["diagnostics"]["current_rom_method"] == "pod_galerkin"

    def test_condition_message(self):
        """Condition verdicts report 'No' and carry a priority."""
        verdict = Verdict("Condition2", stats(rho=0.2))
        message = verdict.to_dict()
        assert message["verdict"] == "No"
        assert message["routing"]["target_agent"] == "ROM_Agent"
        assert message["routing"]["priority"] == "medium"
        assert message["adaptation_required"]

    def test_small_residual_directions_do_not_count(self):
        """Directions far below the snapshot energy leave drift as Condition2."""
        state = MonitorState()
        state.history.extend([stats(rho=0.16), stats(rho=0.18), stats(rho=0.2)])
        noise = 1e-4 * np.random.default_rng(0).standard_normal((3, 20))
        snapshots = np.outer([1.0, 0.0, 0.0], np.linspace(1.0, 2.0, 20)) + noise
        verdict = diagnose(state, line_model(), recent_snapshots=snapshots, stats=stats(rho=0.2))
        assert verdict.diagnostics["rank_recent"] == 1
        assert verdict.diagnostics["theta_deg"] < 1.0
        assert verdict.kind == "Condition2"
        assert verdict.routing == ("ROM_Agent", "rls_update")

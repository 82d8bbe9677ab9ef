# -*- coding: utf-8 -*-
"""Unit tests for LQR and MPC synthesis, feedforward and the control step."""
from dataclasses import replace

import numpy as np
import pytest  # pylint: disable=import-error
from hypothesis import given, settings  # pylint: disable=import-error
from hypothesis import strategies as st  # pylint: disable=import-error

from ..adaptive_rom_controller.control import (
    Margins,
    control_step,
    design_lqr,
    design_mpc,
    feedforward,
    inverse_variance_weights,
    loop_margins,
    prediction_horizon,
    reference_state,
    solve_mpc,
)
from ..adaptive_rom_controller.errors import DimensionError, DomainError, StabilityError
from ..adaptive_rom_controller.numerics import dare_residual, spectral_radius, zoh
from ..adaptive_rom_controller.rom import ReducedModel

pytestmark = pytest.mark.unit


class TestWeights:
    """Test cases for inverse_variance_weights."""

    def test_normalized_inverse_variance(self):
        """Variances 1 and 4 give weights 1/2 and 1/8 after normalization."""
        X = np.array([[1.0, -1.0], [2.0, -2.0]])
        np.testing.assert_allclose(inverse_variance_weights(X), [0.5, 0.125])

    def test_constant_snapshots(self):
        """Zero variance everywhere falls back to unit weights."""
        np.testing.assert_array_equal(inverse_variance_weights(np.ones((3, 4))), np.ones(3))


class TestMargins:
    """Test cases for Margins and loop_margins."""

    def test_missing_crossovers_pass(self):
        """No crossover means an infinite margin."""
        margins = Margins(gm_db=None, pm_deg=None, min_sv=None)
        assert margins.passes(6.0, 30.0, 0.5)
        assert margins.to_dict()["no_phase_crossover"]

    def test_low_gain_margin_fails(self):
        """A 3 dB gain margin fails the 6 dB requirement."""
        assert not Margins(gm_db=3.0, pm_deg=60.0, min_sv=0.9).passes(6.0, 30.0, 0.5)

    def test_zero_gain(self, small_model):
        """An open loop has no crossover and sigma_min(I + L) = 1."""
        margins = loop_margins(small_model, np.zeros((1, 2)))
        assert margins.gm_db is None
        assert margins.pm_deg is None
        assert margins.min_sv == 1.0

    def test_gain_shape_checked(self, small_model):
        """K must be m x r."""
        with pytest.raises(DimensionError):
            loop_margins(small_model, np.zeros((1, 3)))


class TestLqr:
    """Test cases for design_lqr."""

    def test_stabilizing_gain(self, small_model, small_lqr):
        """The gain solves the DARE and the closed loop is stable."""
        assert small_lqr.kind == "lqr"
        assert small_lqr.K.shape == (1, 2)
        assert small_lqr.closed_loop_radius < 1.0
        residual = dare_residual(
            small_model.A_d, small_model.B_d, small_lqr.Q_r, 0.1 * np.eye(1), small_lqr.P
        )
        assert residual < 1e-8
        np.testing.assert_array_equal(small_lqr.u_max, [1.0])

    def test_identity_basis_gives_identity_weight(self, small_lqr):
        """Q_r = Phi^T Phi for unit state weights."""
        np.testing.assert_allclose(small_lqr.Q_r, np.eye(2))

    def test_rejects_non_positive_rho(self, small_model):
        """rho must be positive."""
        with pytest.raises(DomainError):
            design_lqr(small_model, rho=0.0)

    def test_state_weight_length(self, small_model):
        """Q_x needs one entry per basis row."""
        with pytest.raises(DimensionError):
            design_lqr(small_model, Q_x=np.ones(3))

    def test_to_dict(self, small_lqr):
        """Controller messages carry bounds and margins."""
        data = small_lqr.to_dict()
        assert data["controller_type"] == "lqr"
        assert data["input_bounds"] == {"u_min": [-1.0], "u_max": [1.0]}
        assert "gain_margin_db" in data
        assert "horizons" not in data

    def test_unknown_kind(self, small_lqr):
        """Only lqr and mpc exist."""
        with pytest.raises(DomainError):
            replace(small_lqr, kind="pid")

    def test_with_bounds(self, small_lqr):
        """New bounds leave the gain unchanged."""
        wider = small_lqr.with_bounds(-2.0, 2.0)
        np.testing.assert_array_equal(wider.u_max, [2.0])
        np.testing.assert_array_equal(wider.K, small_lqr.K)


class TestMpc:
    """Test cases for prediction_horizon, design_mpc and solve_mpc."""

    def test_horizon_from_decay_rate(self, small_model):
        """alpha = 1 and T_s = 0.1: three settling times are 120 steps."""
        assert prediction_horizon(small_model) == (120, 40)
        assert prediction_horizon(small_model, cap=50) == (50, 17)

    def test_horizon_needs_stable_model(self):
        """An unstable reduced model has no settling time."""
        A_r = np.diag([0.1, -1.0])
        B_r = np.ones((2, 1))
        A_d, B_d = zoh(A_r, B_r, 0.1)
        model = ReducedModel(
            method="dmd",
            Phi=np.eye(2),
            A_r=A_r,
            B_r=B_r,
            C_r=np.ones((1, 2)),
            A_d=A_d,
            B_d=B_d,
            T_s=0.1,
        )
        with pytest.raises(StabilityError):
            prediction_horizon(model)

    def test_needs_constraints(self, small_model):
        """Without bounds or a descriptor there is nothing to constrain."""
        with pytest.raises(DomainError):
            design_mpc(small_model)

    def test_bounds_from_descriptor(self, small_model, descriptor_factory):
        """Descriptor bounds are used when none are given."""
        ctrl = design_mpc(small_model, descriptor_factory(u_min=-2.0, u_max=3.0), horizons=(10, 4))
        assert ctrl.kind == "mpc"
        assert ctrl.horizons == (10, 4)
        np.testing.assert_array_equal(ctrl.u_min, [-2.0])
        np.testing.assert_array_equal(ctrl.u_max, [3.0])
        assert ctrl.to_dict()["horizons"] == {"N_p": 10, "N_c": 4}

    def test_unconstrained_first_move_is_lqr(self, small_model):
        """With inactive bounds the dual-mode optimum follows the LQR law."""
        ctrl = design_mpc(small_model, u_min=-100.0, u_max=100.0, horizons=(10, 4))
        delta = np.array([0.1, -0.05])
        moves, cost, converged = solve_mpc(ctrl, delta, np.zeros(2), np.zeros(1))
        assert converged
        assert moves.shape == (4, 1)
        np.testing.assert_allclose(moves[0], -ctrl.K @ delta, atol=1e-8)
        assert cost >= 0.0

    def test_constrained_moves_respect_bounds(self, small_model):
        """Active input bounds hold for every free move."""
        ctrl = design_mpc(small_model, u_min=-0.05, u_max=0.05, horizons=(10, 4))
        info = {}
        moves, _, converged = solve_mpc(
            ctrl, np.array([2.0, 1.0]), np.zeros(2), np.zeros(1), info=info
        )
        assert info["converged"] == converged
        if converged:
            assert np.all(moves <= 0.05 + 1e-4)
            assert np.all(moves >= -0.05 - 1e-4)


class TestReferenceTracking:
    """Test cases for reference_state, feedforward and control_step."""

    def test_reference_state_matches_dc_gain(self, small_model):
        """DC gain 1/1 + 1/2 = 1.5 needs u_ss = 2/3 for y_ref = 1."""
        r_ref, u_ss = reference_state(small_model, np.array([1.0]))
        assert u_ss[0] == pytest.approx(2.0 / 3.0)
        assert (small_model.C_r @ r_ref)[0] == pytest.approx(1.0)

    def test_feedforward_holds_steady_state(self, small_model):
        """Holding a steady reference needs exactly u_ss."""
        r_ref, u_ss = reference_state(small_model, np.array([1.0]))
        np.testing.assert_allclose(feedforward(small_model, r_ref, r_ref), u_ss, atol=1e-10)

    def test_on_reference_applies_feedforward(self, small_model, small_lqr):
        """Zero deviation leaves only the feedforward term."""
        r_ref, u_ss = reference_state(small_model, np.array([1.0]))
        u = control_step(small_lqr, r_ref, r_ref, small_model)
        np.testing.assert_allclose(u, u_ss, atol=1e-10)

    def test_saturation(self, small_model, small_lqr):
        """Large deviations clip to the input bounds."""
        u = control_step(small_lqr, np.array([50.0, 50.0]), np.zeros(2), small_model)
        np.testing.assert_array_equal(u, [-1.0])

    def test_mpc_step_within_bounds(self, small_model):
        """MPC moves, or the fallback, always respect the bounds."""
        ctrl = design_mpc(small_model, u_min=-0.2, u_max=0.2, horizons=(10, 4))
        info = {}
        u = control_step(ctrl, np.array([1.0, 0.5]), np.zeros(2), small_model, info=info)
        assert -0.2 <= float(u[0]) <= 0.2
        assert "converged" in info

    def test_shape_mismatch(self, small_model, small_lqr):
        """State vectors must have r entries."""
        with pytest.raises(DimensionError):
            control_step(small_lqr, np.zeros(3), np.zeros(3), small_model)

    def test_closed_loop_converges(self, small_model, small_lqr):
        """Iterating the plant under the law drives the output to the reference."""
        r_ref, _ = reference_state(small_model, np.array([0.5]))
        r = np.zeros(2)
        for _ in range(200):
            u = control_step(small_lqr, r, r_ref, small_model)
            r = small_model.step(r, u)
        assert (small_model.C_r @ r)[0] == pytest.approx(0.5, abs=1e-6)
        assert spectral_radius(small_model.A_d - small_model.B_d @ small_lqr.K) < 1.0


class TestBoundAdherence:
    """Property tests for input bounds."""

    @staticmethod
    def model():
        A_d, B_d = zoh(np.diag([-1.0, -2.0]), np.ones((2, 1)), 0.1)
        return ReducedModel(
            method="pod_galerkin",
            Phi=np.eye(2),
            A_r=np.diag([-1.0, -2.0]),
            B_r=np.ones((2, 1)),
            C_r=np.ones((1, 2)),
            A_d=A_d,
            B_d=B_d,
            T_s=0.1,
        )

    @settings(max_examples=50, deadline=None)
    @given(
        r=st.lists(st.floats(-100.0, 100.0), min_size=2, max_size=2),
        bound=st.floats(0.05, 5.0),
        rho=st.floats(0.01, 10.0),
    )
    def test_lqr_step_within_bounds(self, r, bound, rho):
        """The saturated LQR law never leaves [u_min, u_max]."""
        model = self.model()
        ctrl = design_lqr(model, rho=rho, u_min=-bound, u_max=bound)
        u = control_step(ctrl, np.array(r), np.zeros(2), model)
        assert -bound <= float(u[0]) <= bound
        assert spectral_radius(model.A_d - model.B_d @ ctrl.K) < 1.0

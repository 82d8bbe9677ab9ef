# -*- coding: utf-8 -*-
"""Unit tests for RLS refits, basis enrichment, retuning and the post-update gate."""
import numpy as np
import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller import adapt
from ..adaptive_rom_controller.adapt import (
    RlsState,
    enrich_basis,
    orthonormalize,
    post_update_gate,
    retune,
    retune_branch,
    rls_refit,
    rls_update,
)
from ..adaptive_rom_controller.control import Margins
from ..adaptive_rom_controller.errors import DimensionError, DomainError
from ..adaptive_rom_controller.monitor import Verdict, WindowStats

pytestmark = pytest.mark.unit

GOOD_MARGINS = Margins(gm_db=20.0, pm_deg=60.0, min_sv=0.9)
POOR_MARGINS = Margins(gm_db=3.0, pm_deg=60.0, min_sv=0.9)


def condition3(s_bar=0.5, gm=None, pm=None):
    """Control-inadequacy verdict with the given saturation and margins."""
    stats = WindowStats(e_bar=0.2, rho_bar=0.01, s_bar=s_bar, lambda_max=0.5)
    return Verdict(
        "Condition3", stats, {"gain_margin_db": gm, "phase_margin_deg": pm}, persistence=2
    )


class TestRls:
    """Test cases for RlsState, rls_update and rls_refit."""

    def test_forgetting_factor_range(self):
        """lambda must lie in (0.9, 1]."""
        with pytest.raises(DomainError):
            RlsState.from_operator(np.eye(2), lambda_forget=0.5)

    def test_covariance_shape(self):
        """P must be square in the parameter count."""
        with pytest.raises(DimensionError):
            RlsState(theta=np.zeros(4), P_cov=np.eye(3))

    def test_column_major_round_trip(self):
        """theta stacks A_d column by column."""
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        rls = RlsState.from_operator(A)
        np.testing.assert_array_equal(rls.theta, [1.0, 3.0, 2.0, 4.0])
        np.testing.assert_array_equal(rls.A_d, A)
        assert rls.r == 2

    def test_converges_to_true_operator(self):
        """Exciting data identifies A_d from a zero start."""
        A_true = np.array([[0.9, 0.1], [0.0, 0.8]])
        B_d = np.array([[1.0], [0.5]])
        rng = np.random.default_rng(0)
        rls = RlsState.from_operator(np.zeros((2, 2)), lambda_forget=1.0)
        for _ in range(60):
            r_i = rng.standard_normal(2)
            u_i = rng.standard_normal(1)
            rls, A_hat = rls_update(rls, r_i, A_true @ r_i + B_d @ u_i, u_i, B_d)
        np.testing.assert_allclose(A_hat, A_true, atol=1e-3)
        assert rls.updates == 60
        assert rls.resets == 0

    def test_shape_mismatch(self):
        """r_i must have r entries."""
        rls = RlsState.from_operator(np.eye(2))
        with pytest.raises(DimensionError):
            rls_update(rls, np.zeros(3), np.zeros(2), np.zeros(1), np.zeros((2, 1)))

    def test_refit_recovers_model(self, small_model):
        """A perturbed operator is pulled back to the data-generating one."""
        rng = np.random.default_rng(1)
        inputs = rng.standard_normal((1, 80))
        estimates = np.zeros((2, 80))
        for k in range(79):
            estimates[:, k + 1] = small_model.step(estimates[:, k], inputs[:, k])
        rls = RlsState.from_operator(0.5 * small_model.A_d, p0=1e6)
        refit, rls = rls_refit(small_model, rls, estimates, inputs)
        np.testing.assert_allclose(refit.A_d, small_model.A_d, atol=1e-3)
        poles = np.sort(np.linalg.eigvals(refit.A_r).real)
        np.testing.assert_allclose(poles, [-2.0, -1.0], atol=0.05)
        assert rls.updates == 79

    def test_refit_order_mismatch(self, small_model):
        """The RLS state must match the model order."""
        with pytest.raises(DimensionError):
            rls_refit(
                small_model, RlsState.from_operator(np.eye(3)), np.zeros((2, 5)), np.zeros((1, 5))
            )


class TestEnrichment:
    """Test cases for enrich_basis and orthonormalize."""

    def test_adds_missing_direction(self):
        """A snapshot along e2 adds e2 to the basis {e1}."""
        Phi = np.array([[1.0], [0.0], [0.0]])
        X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        result = enrich_basis(Phi, X)
        assert result.added == 1
        assert result.r == 2
        np.testing.assert_allclose(result.Phi[:, 1], [0.0, 1.0, 0.0], atol=1e-12)
        assert result.residual_before == pytest.approx(1.0)
        assert result.residual_after == pytest.approx(0.0, abs=1e-12)
        assert not result.no_op

    def test_snapshots_in_span(self):
        """Nothing to add when the basis already spans the data."""
        Phi = np.array([[1.0], [0.0], [0.0]])
        result = enrich_basis(Phi, np.array([2.0, 0.0, 0.0]))
        assert result.no_op
        assert result.added == 0

    def test_maximum_order(self):
        """A basis at its cap is not enriched."""
        Phi = np.array([[1.0], [0.0], [0.0]])
        result = enrich_basis(Phi, np.array([[0.0], [1.0], [0.0]]), max_r=1)
        assert result.no_op
        assert result.capped
        assert result.r == 1

    def test_row_mismatch(self):
        """Snapshot and basis rows must agree."""
        with pytest.raises(DimensionError):
            enrich_basis(np.eye(3)[:, :1], np.ones((2, 2)))

    def test_energy_tolerance_range(self):
        """energy_tol must lie in (0, 1]."""
        with pytest.raises(DomainError):
            enrich_basis(np.eye(3)[:, :1], np.ones((3, 2)), energy_tol=0.0)

    def test_orthonormalize_keeps_signs(self):
        """Each column keeps the direction of the input column."""
        result = orthonormalize(np.diag([2.0, -3.0]))
        np.testing.assert_allclose(result, np.diag([1.0, -1.0]), atol=1e-12)


class TestRetune:
    """Test cases for retune_branch and retune."""

    def test_branch_selection(self):
        """Saturation wins; otherwise low margins pick the margin branch."""
        assert retune_branch(condition3(s_bar=0.5, gm=5.0)) == "saturation"
        assert retune_branch(condition3(s_bar=0.0, gm=5.0)) == "margin"
        assert retune_branch(condition3(s_bar=0.0, pm=30.0)) == "margin"
        assert retune_branch(condition3(s_bar=0.0)) == "saturation"

    def test_saturation_lowers_rho(self, mocker, small_model, small_lqr):
        """The saturation branch scales rho by 0.7 and succeeds with good margins."""
        mocker.patch.object(adapt, "loop_margins", return_value=GOOD_MARGINS)
        result = retune(small_lqr, condition3(), small_model)
        assert result.branch == "saturation"
        assert result.rho_after == pytest.approx(0.07)
        assert result.controller.rho == pytest.approx(0.07)
        assert result.success
        assert result.failures == 0
        assert not result.escalate

    def test_margin_branch_raises_rho(self, mocker, small_model, small_lqr):
        """The margin branch scales rho by 1.3."""
        mocker.patch.object(adapt, "loop_margins", return_value=GOOD_MARGINS)
        result = retune(small_lqr, condition3(s_bar=0.0, gm=5.0), small_model)
        assert result.branch == "margin"
        assert result.rho_after == pytest.approx(0.13)
        assert result.to_dict()["consecutive_failures"] == 0

    def test_second_failure_escalates(self, mocker, small_model, small_lqr):
        """Two consecutive failed retunes ask for a different controller."""
        mocker.patch.object(adapt, "loop_margins", return_value=POOR_MARGINS)
        first = retune(small_lqr, condition3(), small_model)
        assert not first.success
        assert not first.escalate
        second = retune(first.controller, condition3(), small_model, failures=first.failures)
        assert second.failures == 2
        assert second.escalate


class TestGate:
    """Test cases for post_update_gate."""

    def test_accepts_good_margins(self, mocker, small_model, small_lqr):
        """Healthy margins keep the gain."""
        mocker.patch.object(adapt, "loop_margins", return_value=GOOD_MARGINS)
        decision = post_update_gate(small_model, small_lqr)
        assert decision.accepted
        assert decision.closed_loop_radius < 0.98

    def test_poor_margins_recompute(self, mocker, small_model, small_lqr):
        """A low gain margin triggers a gain recomputation."""
        mocker.patch.object(adapt, "loop_margins", return_value=POOR_MARGINS)
        decision = post_update_gate(small_model, small_lqr)
        assert decision.action == "recompute_gain"
        assert not decision.accepted

# -*- coding: utf-8 -*-
"""Unit tests for the method selection table."""
import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller.errors import DomainError, UnsupportedSystemError
from ..adaptive_rom_controller.selection import normalize_method, order_range, select_methods
from ..adaptive_rom_controller.trace import jsonable, validate_message

pytestmark = pytest.mark.unit


class TestNormalizeMethod:
    """Test cases for normalize_method."""

    @pytest.mark.parametrize(
        "name, expected",
        [
            ("POD", "pod_galerkin"),
            ("pod-galerkin", "pod_galerkin"),
            (" BT ", "balanced_truncation"),
            ("balanced truncation", "balanced_truncation"),
            ("DMDc", "dmd"),
        ],
    )
    def test_aliases(self, name, expected):
        """Common spellings map to canonical names."""
        assert normalize_method(name) == expected

    def test_unknown(self):
        """Unknown names are rejected."""
        with pytest.raises(DomainError):
            normalize_method("krylov")


class TestOrderRange:
    """Test cases for order_range."""

    def test_default_range(self):
        """5% to 15% of N, rounded up."""
        assert order_range(100) == (5, 15)
        assert order_range(20) == (1, 3)

    def test_override_is_clipped(self):
        """Overrides narrow the default range."""
        assert order_range(100, (3, 10)) == (5, 10)

    def test_override_outside_range(self):
        """A disjoint override falls back to the default."""
        assert order_range(100, (20, 30)) == (5, 15)


class TestSelectMethods:
    """Test cases for select_methods."""

    @pytest.mark.parametrize(
        "overrides, method",
        [
            ({}, "balanced_truncation"),
            ({"N": 600}, "pod_galerkin"),
            ({"system_type": "hyperbolic_pde"}, "dmd"),
            ({"system_type": "elliptic_pde"}, "pod_galerkin"),
            ({"system_type": "ode_system", "physics": "structural"}, "balanced_truncation"),
            ({"linearity": "nonlinear"}, "pod_galerkin"),
        ],
    )
    def test_decision_table(self, descriptor_factory, overrides, method):
        """Each system class gets its preferred reduction method."""
        assert select_methods(descriptor_factory(**overrides)).rom_method == method

    def test_default_controller_and_sampling(self, descriptor_factory):
        """Loose constraints give LQR; sampling follows the descriptor."""
        descriptor = descriptor_factory()
        selection = select_methods(descriptor)
        assert selection.controller_type == "lqr"
        assert selection.f_s == pytest.approx(20.0 * descriptor.f_max)
        assert selection.T_s == pytest.approx(descriptor.sampling_bound())
        assert selection.rom_order_range == (1, 3)
        assert selection.rho == 0.1

    def test_exclusions_fall_through(self, descriptor_factory):
        """An excluded method moves to the next table entry."""
        selection = select_methods(descriptor_factory(), excluded=["bt"])
        assert selection.rom_method == "pod_galerkin"
        assert selection.excluded == ("balanced_truncation",)

    def test_everything_excluded(self, descriptor_factory):
        """No method left is a domain error."""
        with pytest.raises(DomainError):
            select_methods(descriptor_factory(), excluded=["pod", "bt", "dmd"])

    def test_time_varying_unsupported(self, descriptor_factory):
        """LTV systems are out of scope."""
        with pytest.raises(UnsupportedSystemError):
            select_methods(descriptor_factory(linearity="LTV"))

    def test_tight_constraints_pick_mpc(self, descriptor_factory):
        """A commanded amplitude within 20% of the bound needs MPC."""
        selection = select_methods(descriptor_factory(commanded_amplitude=0.9))
        assert selection.controller_type == "mpc"

    def test_pid_request_becomes_lqr(self, descriptor_factory):
        """Unsupported controller families are designed as LQR with a warning."""
        selection = select_methods(descriptor_factory(controller_type="PID"))
        assert selection.controller_type == "lqr"
        assert selection.warnings

    def test_unknown_controller(self, descriptor_factory):
        """Unknown controller names are rejected."""
        with pytest.raises(DomainError):
            select_methods(descriptor_factory(controller_type="fuzzy"))

    def test_requested_method_wins(self, descriptor_factory):
        """A descriptor request overrides the table."""
        selection = select_methods(descriptor_factory(rom_method="DMD"))
        assert selection.rom_method == "dmd"
        assert selection.rom_rationale == "requested by descriptor"

    def test_balanced_truncation_request_for_nonlinear(self, descriptor_factory):
        """Balanced truncation needs linear dynamics, so the table decides."""
        descriptor = descriptor_factory(linearity="nonlinear", rom_method="bt")
        selection = select_methods(descriptor)
        assert selection.rom_method == "pod_galerkin"
        assert selection.warnings

    def test_descriptor_rho(self, descriptor_factory):
        """An explicit rho is carried into the design parameters."""
        assert select_methods(descriptor_factory(rho=0.5)).rho == 0.5

    def test_central_message_validates(self, descriptor_factory):
        """The selection message matches its schema."""
        descriptor = descriptor_factory()
        message = select_methods(descriptor).to_dict(descriptor)
        validate_message("central_output", jsonable(message))
        assert message["method_selections"]["controller_type"] == "LQR"
        assert message["design_parameters"]["rom_order_range"] == [1, 3]

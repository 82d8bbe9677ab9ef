# -*- coding: utf-8 -*-
"""Pytest configuration and fixtures for adaptive_rom_controller."""
import numpy as np
import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller.config import Config
from ..adaptive_rom_controller.control import design_lqr
from ..adaptive_rom_controller.excitation import (
    ExcitationSpec,
    collect_snapshots,
    design_excitation,
)
from ..adaptive_rom_controller.numerics import zoh
from ..adaptive_rom_controller.rom import ReducedModel
from ..adaptive_rom_controller.systems import (
    SystemDescriptor,
    describe_system,
    make_heat_chain,
    make_spring_mass_chain,
)
from ..adaptive_rom_controller.workflow import run_design


@pytest.fixture
def heat_system():
    """Twenty-node heat rod with one source and one sensor."""
    return make_heat_chain(20)


@pytest.fixture
def heat_descriptor(heat_system):
    """Descriptor derived from the heat rod's slowest mode."""
    return describe_system(heat_system, "parabolic_pde", "thermal", 1.0)


@pytest.fixture
def heat_snapshots(heat_system, heat_descriptor):
    """PRBS snapshots of the heat rod."""
    spec = design_excitation("pod_galerkin", heat_descriptor, seed=0)
    return collect_snapshots(heat_system, spec, tau_fast=heat_descriptor.tau_fast)


@pytest.fixture
def cubic_chain():
    """Three-mass chain with cubic springs."""
    return make_spring_mass_chain(3, cubic_coeff=0.5)


@pytest.fixture
def descriptor_factory():
    """Build descriptors with sensible defaults and keyword overrides."""

    def build(**overrides):
        values = {
            "system_type": "parabolic_pde",
            "physics": "thermal",
            "linearity": "LTI",
            "N": 20,
            "m": 1,
            "p": 1,
            "tau_slow": 10.0,
            "tau_fast": 2.0,
            "u_min": -1.0,
            "u_max": 1.0,
        }
        values.update(overrides)
        return SystemDescriptor(**values)

    return build


@pytest.fixture
def small_model():
    """Two-state reduced model with distinct real poles at -1 and -2."""
    A_r = np.diag([-1.0, -2.0])
    B_r = np.array([[1.0], [1.0]])
    C_r = np.array([[1.0, 1.0]])
    A_d, B_d = zoh(A_r, B_r, 0.1)
    return ReducedModel(
        method="pod_galerkin",
        Phi=np.eye(2),
        A_r=A_r,
        B_r=B_r,
        C_r=C_r,
        A_d=A_d,
        B_d=B_d,
        T_s=0.1,
    )


@pytest.fixture
def small_lqr(small_model):
    """LQR on the two-state model with unit input bounds."""
    return design_lqr(small_model, rho=0.1, u_min=-1.0, u_max=1.0)


@pytest.fixture
def multisine_spec():
    """Ten-second multisine experiment at 10 Hz."""
    return ExcitationSpec("multisine", f_s=10.0, duration=10.0, amplitude=1.0, channels=1)


@pytest.fixture
def config():
    """Default configuration with a fixed seed."""
    return Config(seed=0)


@pytest.fixture(scope="session")
def heat_design():
    """System, descriptor, configuration and certified bundle of the heat rod.

    Designed once per session; tests must not mutate the bundle.
    """
    system = make_heat_chain(20)
    descriptor = describe_system(system, "parabolic_pde", "thermal", 1.0)
    config = Config(seed=0)
    bundle = run_design(
        descriptor, system, config, system_spec={"generator": "heat_chain", "n": 20}
    )
    return system, descriptor, config, bundle

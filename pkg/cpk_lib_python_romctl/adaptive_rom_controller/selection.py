# -*- coding: utf-8 -*-
"""Method selection decision table."""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .errors import DomainError, UnsupportedSystemError
from .rom import ROM_METHODS
from .systems import SystemDescriptor

logger = logging.getLogger(__name__)

BT_MAX_N = 500
TIGHT_CONSTRAINT_FRACTION = 0.8
METHOD_ALIASES = {
    "pod_galerkin": "pod_galerkin",
    "pod-galerkin": "pod_galerkin",
    "pod": "pod_galerkin",
    "balanced_truncation": "balanced_truncation",
    "balanced truncation": "balanced_truncation",
    "bt": "balanced_truncation",
    "dmd": "dmd",
    "dmdc": "dmd",
}
CONTROLLER_ALIASES = {"lqr": "lqr", "mpc": "mpc", "pid": "lqr", "adaptive": "lqr"}
STRUCTURAL_PHYSICS = ("structural", "structural_dynamics", "mechanical", "servo")
METHOD_LABELS = {
    "pod_galerkin": "POD-Galerkin",
    "dmd": "DMD",
    "balanced_truncation": "balanced_truncation",
}
CONTROLLER_LABELS = {"lqr": "LQR", "mpc": "MPC"}


def normalize_method(name: str) -> str:
    """Canonical ROM method name for common spellings."""
    key = str(name).strip().lower()
    if key not in METHOD_ALIASES:
        raise DomainError(f"unknown ROM method '{name}'")
    return METHOD_ALIASES[key]


@dataclass
class MethodSelection:
    """ROM method, controller type and design ranges for one system."""

    rom_method: str
    controller_type: str
    rom_rationale: str
    controller_rationale: str
    rom_order_range: Tuple[int, int]
    f_s: float
    T_s: float
    rho: float = 0.1
    excluded: Tuple[str, ...] = ()
    warnings: List[str] = field(default_factory=list)

    def to_dict(self, descriptor: Optional[SystemDescriptor] = None) -> Dict[str, Any]:
        """Central output message: the descriptor fields plus the selection."""
        data = descriptor.to_dict() if descriptor is not None else {}
        data["sampling_requirements"] = {"f_s_recommended_hz": self.f_s, "dt_s": 1.0 / self.f_s}
        data["method_selections"] = {
            "rom_method": METHOD_LABELS[self.rom_method],
            "rom_rationale": self.rom_rationale,
            "controller_type": CONTROLLER_LABELS[self.controller_type],
            "controller_rationale": self.controller_rationale,
        }
        data["design_parameters"] = {
            "rom_order_range": list(self.rom_order_range),
            "T_s": self.T_s,
            "lqr_weights": {"Q_structure": "inverse_variance", "rho": self.rho},
        }
        if self.excluded:
            data["excluded_methods"] = [METHOD_LABELS[name] for name in self.excluded]
        if self.warnings:
            data["warnings"] = list(self.warnings)
        return data


def order_range(N: int, override: Optional[Tuple[int, int]] = None) -> Tuple[int, int]:
    """[ceil(0.05 N), ceil(0.15 N)], narrowed by an explicit override."""
    low = max(1, math.ceil(0.05 * N))
    high = max(low, math.ceil(0.15 * N))
    if override:
        requested_low, requested_high = int(override[0]), int(override[1])
        clipped = (max(low, requested_low), min(high, requested_high))
        if clipped[0] > clipped[1]:
            logger.warning("Requested order range %s lies outside [%d, %d]", override, low, high)
            return low, high
        return clipped
    return low, high


def _candidates(descriptor: SystemDescriptor, bt_max_n: int) -> List[Tuple[str, str]]:
    """Applicable methods in preference order with their reasons."""
    linear = descriptor.linearity == "LTI"
    if not linear:
        return [
            ("pod_galerkin", "nonlinear dynamics: Galerkin projection keeps the nonlinear term"),
            ("dmd", "fallback: linear operator fitted to snapshot data"),
        ]
    if descriptor.system_type == "hyperbolic_pde":
        table = [
            ("dmd", "transport-dominant dynamics: data-driven linear operator"),
            ("pod_galerkin", "fallback: energy-optimal snapshot basis"),
        ]
    elif descriptor.system_type == "parabolic_pde" and descriptor.N > bt_max_n:
        table = [
            ("pod_galerkin", f"energy-dominant diffusion with N={descriptor.N} > {bt_max_n}"),
            ("dmd", "fallback: data-driven linear operator"),
        ]
    elif descriptor.system_type == "elliptic_pde":
        table = [
            ("pod_galerkin", "energy-dominant field: snapshot basis"),
            ("dmd", "fallback: data-driven linear operator"),
        ]
    elif descriptor.system_type == "parabolic_pde":
        table = [
            (
                "balanced_truncation",
                f"input-output diffusion with dense Gramians tractable (N={descriptor.N})",
            ),
            ("pod_galerkin", "fallback: energy-optimal snapshot basis"),
        ]
    else:
        reason = (
            "structural input-output system"
            if descriptor.physics in STRUCTURAL_PHYSICS
            else "linear input-output system"
        )
        table = [
            ("balanced_truncation", f"{reason}: Hankel-norm truncation"),
            ("pod_galerkin", "fallback: energy-optimal snapshot basis"),
        ]
    listed = [row[0] for row in table]
    table += [(name, "last resort") for name in ROM_METHODS if name not in listed]
    if descriptor.N > bt_max_n:
        table = [row for row in table if row[0] != "balanced_truncation"]
    return table


def _controller(descriptor: SystemDescriptor, warnings: List[str]) -> Tuple[str, str]:
    requested = descriptor.controller_type
    if requested:
        key = str(requested).strip().lower()
        if key not in CONTROLLER_ALIASES:
            raise DomainError(f"unknown controller type '{requested}'")
        if key in ("pid", "adaptive"):
            message = f"controller type '{requested}' is designed as LQR"
            logger.warning(message)
            warnings.append(message)
        return CONTROLLER_ALIASES[key], f"requested {requested}"
    amplitude = descriptor.commanded_amplitude
    if amplitude is not None and abs(amplitude) >= TIGHT_CONSTRAINT_FRACTION * descriptor.u_bound:
        return "mpc", "commanded amplitude within 20% of the input bound"
    return "lqr", "loose input constraints"


def select_methods(
    descriptor: SystemDescriptor,
    excluded: Iterable[str] = (),
    bt_max_n: int = BT_MAX_N,
    sampling_factor: float = 20.0,
    default_rho: float = 0.1,
) -> MethodSelection:
    """Pick ROM method and controller type from the descriptor."""
    if descriptor.linearity == "LTV":
        raise UnsupportedSystemError("time-varying (LTV) systems are not supported")
    excluded = tuple(normalize_method(name) for name in excluded)
    warnings: List[str] = []

    method, reason = None, ""
    if descriptor.rom_method:
        requested = normalize_method(descriptor.rom_method)
        if requested in excluded:
            logger.info("Requested ROM method %s is excluded, consulting the table", requested)
        elif requested == "balanced_truncation" and descriptor.linearity != "LTI":
            warnings.append("balanced truncation requested for a nonlinear system, ignored")
        else:
            method, reason = requested, "requested by descriptor"
    if method is None:
        for name, why in _candidates(descriptor, bt_max_n):
            if name not in excluded:
                method, reason = name, why
                break
    if method is None:
        raise DomainError(f"no ROM method left after excluding {list(excluded)}")

    controller, controller_reason = _controller(descriptor, warnings)
    f_s = descriptor.sampling_frequency(sampling_factor)
    T_s = descriptor.sampling_bound(sampling_factor)
    selection = MethodSelection(
        rom_method=method,
        controller_type=controller,
        rom_rationale=reason,
        controller_rationale=controller_reason,
        rom_order_range=order_range(descriptor.N, descriptor.rom_order_range),
        f_s=f_s,
        T_s=T_s,
        rho=descriptor.rho if descriptor.rho is not None else default_rho,
        excluded=excluded,
        warnings=warnings,
    )
    logger.info(
        "Selected %s + %s (r in %s, f_s=%.3f Hz)",
        selection.rom_method,
        selection.controller_type,
        selection.rom_order_range,
        selection.f_s,
    )
    return selection

# -*- coding: utf-8 -*-
"""Evaluation metrics: ROM fidelity, closed-loop performance and adaptation efficiency.

Metrics that do not apply to a system category are reported as ``None``
with the reason in ``EvaluationResult.flags``.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, DomainError
from .numerics import frequency_response

logger = logging.getLogger(__name__)

HANKEL_ENERGY_MIN = 0.998
ENERGY_RESIDUAL_MAX = 0.02
LINEARIZATION_RATIO_MAX = 0.10
SETTLING_BAND = 0.02
SOFT_FRACTION = 0.95
ETA_TARGET = 0.90


def dominant_poles(poles: np.ndarray, d: int) -> np.ndarray:
    """The ``d`` poles closest to the imaginary axis."""
    poles = np.asarray(poles, dtype=complex).reshape(-1)
    order = np.argsort(-poles.real, kind="stable")
    return poles[order[:d]]


def eps_inf(A, B, C, A_r, B_r, C_r, points: int = 400) -> float:
    """sup sigma_max(G - G_r) over [0, omega_sys], omega_sys = 3 max |Im lambda(A)|.

    Purely real spectra use omega_sys = max |lambda(A)|.
    """
    eigenvalues = np.linalg.eigvals(np.asarray(A, dtype=float))
    omega_sys = 3.0 * float(np.max(np.abs(eigenvalues.imag)))
    if omega_sys <= 0:
        omega_sys = float(np.max(np.abs(eigenvalues)))
    top = math.log10(omega_sys)
    omegas = np.concatenate([[0.0], np.logspace(top - 4, top, points)])
    s = 1j * omegas
    difference = frequency_response(A, B, C, s) - frequency_response(A_r, B_r, C_r, s)
    return float(max(np.linalg.norm(block, 2) for block in difference))


def eps_lambda(fom_poles, rom_poles, d: Optional[int] = None) -> float:
    """Mean relative distance of the d dominant full-order poles to their nearest reduced pole."""
    rom = np.asarray(rom_poles, dtype=complex).reshape(-1)
    if rom.size == 0:
        raise DimensionError("reduced model has no poles")
    d = min(rom.size, 20) if d is None else int(d)
    targets = dominant_poles(fom_poles, d)
    errors = []
    for pole in targets:
        nearest = float(np.min(np.abs(rom - pole)))
        errors.append(nearest / max(abs(pole), np.finfo(float).tiny))
    return float(np.mean(errors))


def hankel_energy(hsv, r: int) -> float:
    """sum_{i<=r} sigma_i / sum_i sigma_i."""
    hsv = np.asarray(hsv, dtype=float)
    total = float(hsv.sum())
    return float(hsv[:r].sum() / total) if total > 0 else 1.0


def trajectory_error(Y, Y_r) -> float:
    """sqrt(sum ||y - y_r||^2 / sum ||y||^2) over one trajectory."""
    Y = np.asarray(Y, dtype=float)
    Y_r = np.asarray(Y_r, dtype=float)
    if Y.shape != Y_r.shape:
        raise DimensionError(f"trajectory shapes differ: {Y.shape} vs {Y_r.shape}")
    reference = float(np.sum(Y**2))
    error = float(np.sum((Y - Y_r) ** 2))
    if reference == 0:
        return 0.0 if error == 0 else math.inf
    return math.sqrt(error / reference)


def eps_traj(pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[float, float]:
    """Mean and standard deviation of the trajectory error over (Y, Y_r) pairs."""
    if not pairs:
        raise DomainError("no validation trajectories")
    errors = np.array([trajectory_error(Y, Y_r) for Y, Y_r in pairs])
    return float(errors.mean()), float(errors.std())


def eps_st(X, X_r) -> float:
    """Relative space-time L2 error of the lifted state."""
    return trajectory_error(X, X_r)


def eps_inf_x(X, X_r) -> float:
    """max_t max_i |x - x_r|."""
    return float(np.max(np.abs(np.asarray(X, dtype=float) - np.asarray(X_r, dtype=float))))


def energy_residual(X, U, A, B, dt: float, X_dot=None) -> float:
    """||dE/dt - q||_L2 / ||E||_L2 with E = 0.5 ||x||^2 and q = x^T (A x + B u).

    ``X_dot`` is the model's own state derivative; without it dE/dt is a
    finite difference of E.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    energy = 0.5 * np.sum(X**2, axis=0)
    flux = np.einsum("ik,ik->k", X, np.asarray(A) @ X + np.asarray(B) @ U)
    if X_dot is None:
        rate = np.gradient(energy, dt)
    else:
        rate = np.einsum("ik,ik->k", X, np.asarray(X_dot, dtype=float))
    norm = float(np.linalg.norm(energy))
    return float(np.linalg.norm(rate - flux)) / norm if norm > 0 else 0.0


def linearization_consistency(Phi, A_lin, A_r) -> float:
    """||Phi^T A_lin Phi - A_r||_F / ||A_r||_F at the nominal operating point."""
    Phi = np.asarray(Phi, dtype=float)
    A_r = np.asarray(A_r, dtype=float)
    norm = float(np.linalg.norm(A_r))
    if norm == 0:
        raise DomainError("reduced operator is zero")
    return float(np.linalg.norm(Phi.T @ np.asarray(A_lin) @ Phi - A_r)) / norm


def _as_columns(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y[None, :] if Y.ndim == 1 else Y


def j_track(Y, Y_ref, W_y=None, start: int = 0) -> float:
    """Percentage NRMSE of W_y (y - y_ref) against W_y y_ref from sample ``start`` on."""
    Y = _as_columns(Y)
    Y_ref = _as_columns(Y_ref)
    if Y_ref.shape[1] == 1 and Y.shape[1] > 1:
        Y_ref = np.repeat(Y_ref, Y.shape[1], axis=1)
    if Y.shape != Y_ref.shape:
        raise DimensionError(f"output shapes differ: {Y.shape} vs {Y_ref.shape}")
    if W_y is None:
        weight = np.ones((Y.shape[0], 1))
    else:
        weight = np.asarray(W_y, dtype=float).reshape(-1, 1)
    error = weight * (Y[:, start:] - Y_ref[:, start:])
    reference = weight * Y_ref[:, start:]
    denominator = float(np.sum(reference**2))
    if denominator == 0:
        raise DomainError("reference is zero over the evaluation interval")
    return 100.0 * math.sqrt(float(np.sum(error**2)) / denominator)


def j_settle(Y, Y_ref, dt: float, band: float = SETTLING_BAND) -> Optional[float]:
    """Earliest time after which ||y - y_ref|| stays below band * ||y_ref||; None if never."""
    Y = _as_columns(Y)
    Y_ref = _as_columns(Y_ref)
    if Y_ref.shape[1] == 1:
        Y_ref = np.repeat(Y_ref, Y.shape[1], axis=1)
    outside = np.linalg.norm(Y - Y_ref, axis=0) >= band * np.linalg.norm(Y_ref, axis=0)
    if outside[-1]:
        return None
    indices = np.flatnonzero(outside)
    return 0.0 if indices.size == 0 else float((indices[-1] + 1) * dt)


def overshoot(Y, y_ss) -> float:
    """max_t ||y|| / ||y_ss|| - 1."""
    Y = _as_columns(Y)
    steady = float(np.linalg.norm(np.asarray(y_ss, dtype=float)))
    if steady == 0:
        raise DomainError("steady-state output is zero")
    return float(np.max(np.linalg.norm(Y, axis=0)) / steady - 1.0)


def v_hard(U, u_min, u_max, tol: float = 1e-9) -> float:
    """Percentage of steps with an input outside its bounds."""
    U = _as_columns(U)
    lower = np.broadcast_to(np.asarray(u_min, dtype=float), (U.shape[0],))[:, None]
    upper = np.broadcast_to(np.asarray(u_max, dtype=float), (U.shape[0],))[:, None]
    violated = np.any((U > upper + tol) | (U < lower - tol), axis=0)
    return 100.0 * float(np.count_nonzero(violated)) / U.shape[1]


def v_soft(U, u_max, dt: float, fraction: float = SOFT_FRACTION) -> float:
    """Integral of max(0, ||u||_inf - 0.95 u_max)."""
    U = _as_columns(U)
    excess = np.maximum(0.0, np.max(np.abs(U), axis=0) - fraction * float(np.max(np.abs(u_max))))
    return float(np.sum(excess) * dt)


def eta_sequence(j_values: Sequence[float], j_star: float) -> List[Optional[float]]:
    """(J0 - Jk) / (J0 - J*) for k >= 1; None entries when J0 does not exceed J*."""
    if len(j_values) < 1:
        return []
    j0 = float(j_values[0])
    gap = j0 - float(j_star)
    if gap <= 0:
        return [None] * (len(j_values) - 1)
    return [(j0 - float(value)) / gap for value in j_values[1:]]


def k_90(etas: Sequence[Optional[float]], target: float = ETA_TARGET) -> Optional[int]:
    """First 1-based iteration with eta > target."""
    for k, value in enumerate(etas, start=1):
        if value is not None and value > target:
            return k
    return None


def r_conv(etas: Sequence[Optional[float]], k90: Optional[int]) -> Optional[float]:
    """log(eta_k90 / eta_1) / log(k90); undefined for k90 in (None, 1) or eta_1 <= 0."""
    if k90 is None or k90 <= 1 or not etas or etas[0] is None or etas[0] <= 0:
        return None
    return math.log(etas[k90 - 1] / etas[0]) / math.log(k90)


def g_final(j_best_static: float, j_final: float) -> Optional[float]:
    """(J_static - J_final) / J_static."""
    if j_best_static <= 0:
        return None
    return (j_best_static - j_final) / j_best_static


@dataclass
class EvaluationResult:
    """Metrics of the three criteria plus per-scenario rows."""

    criterion1: Dict[str, Any] = field(default_factory=dict)
    criterion2: Dict[str, Any] = field(default_factory=dict)
    criterion3: Dict[str, Any] = field(default_factory=dict)
    scenarios: List[Dict[str, Any]] = field(default_factory=list)
    flags: Dict[str, str] = field(default_factory=dict)

    def mark_not_applicable(self, criterion: Dict[str, Any], name: str, reason: str) -> None:
        criterion[name] = None
        self.flags[name] = f"not applicable: {reason}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion1": dict(self.criterion1),
            "criterion2": dict(self.criterion2),
            "criterion3": dict(self.criterion3),
            "scenarios": list(self.scenarios),
            "flags": dict(self.flags),
        }

    def rows(self) -> List[Dict[str, Any]]:
        """Flat (criterion, scenario, metric, value) rows."""
        rows = []
        for name in ("criterion1", "criterion2", "criterion3"):
            for metric, value in getattr(self, name).items():
                if isinstance(value, (list, tuple)):
                    value = ";".join("" if item is None else f"{item:.6g}" for item in value)
                rows.append({"criterion": name, "scenario": "", "metric": metric, "value": value})
        for scenario in self.scenarios:
            for metric, value in scenario.items():
                if metric == "name":
                    continue
                rows.append(
                    {
                        "criterion": "scenario",
                        "scenario": scenario["name"],
                        "metric": metric,
                        "value": value,
                    }
                )
        return rows

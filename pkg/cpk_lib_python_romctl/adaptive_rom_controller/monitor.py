# -*- coding: utf-8 -*-
"""Closed-loop performance monitoring, windowed statistics and adaptation diagnosis."""
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Tuple

import numpy as np

from .numerics import (
    energy_rank,
    numerical_rank,
    orthonormal_basis,
    principal_angle,
    spectral_radius,
)

logger = logging.getLogger(__name__)

VERDICTS = ("Good", "Condition1", "Condition2", "Condition3", "Indeterminate", "Emergency")
PERSISTENT_VERDICTS = ("Emergency", "Condition1", "Condition3", "Indeterminate")

ROUTING = {
    "Good": (None, None),
    "Condition1": ("Data_Agent", "basis_enrichment"),
    "Condition2": ("ROM_Agent", "rls_update"),
    "Condition3": ("Control_Agent", "retuning"),
    "Emergency": ("Central_Agent", "emergency_halt"),
    "Indeterminate": (None, "log"),
}

DIAGNOSES = {
    "Good": "All metrics within acceptable bounds",
    "Condition1": "Subspace inadequacy",
    "Condition2": "Parametric drift",
    "Condition3": "Control inadequacy",
    "Emergency": "Identified closed-loop instability",
    "Indeterminate": "No condition matched",
}

PRIORITIES = {
    "Good": None,
    "Condition1": "high",
    "Condition2": "medium",
    "Condition3": "medium",
    "Emergency": "emergency",
    "Indeterminate": None,
}


@dataclass(frozen=True)
class MonitorThresholds:
    """Window geometry and verdict thresholds."""

    window: int = 50
    stride: int = 10
    e_good: float = 0.05
    rho_good: float = 0.10
    lambda_good: float = 0.98
    rho_high: float = 0.15
    rho_low: float = 0.05
    e_high: float = 0.10
    s_high: float = 0.3
    theta_deg: float = 15.0
    gm_trigger_db: float = 8.0
    pm_trigger_deg: float = 40.0
    emergency_lambda: float = 1.02
    emergency_windows: int = 2
    condition1_windows: int = 3
    condition3_windows: int = 2
    trend_windows: int = 3
    trend_tol: float = 1e-3
    indeterminate_windows: int = 5
    snapshot_history: int = 100
    snapshot_stride: int = 5
    rank_energy: float = 0.999
    angle_energy: float = 0.99
    saturation_fraction: float = 0.95


@dataclass(frozen=True)
class StepMetrics:
    """Per-step tracking error, ROM residual and saturation index."""

    e: float
    rho: float
    s: float


@dataclass(frozen=True)
class WindowStats:
    """Trailing-window means and the identified closed-loop spectral radius."""

    e_bar: float
    rho_bar: float
    s_bar: float
    lambda_max: Optional[float]
    stale: bool = False
    end_step: int = 0


@dataclass
class Verdict:
    """Outcome of one window diagnosis and where it is routed."""

    kind: str
    stats: WindowStats
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    persistence: int = 0
    escalate: bool = False

    @property
    def routing(self) -> Tuple[Optional[str], Optional[str]]:
        target, action = ROUTING[self.kind]
        if self.kind == "Indeterminate" and self.escalate:
            return "Central_Agent", "escalate"
        return target, action

    def to_dict(
        self, rom_method: Optional[str] = None, controller_type: Optional[str] = None
    ) -> Dict[str, Any]:
        """Evaluation output message."""
        target, action = self.routing
        stats = self.stats
        good = self.kind == "Good"
        return {
            "agent_name": "Evaluation_Agent",
            "verdict": "Good" if good else ("Emergency" if self.kind == "Emergency" else "No"),
            "condition_triggered": None if good else self.kind,
            "timestamp": float(stats.end_step),
            "performance_acceptable": good,
            "windowed_averages": {
                "e_avg": stats.e_bar,
                "rho_avg": stats.rho_bar,
                "s_avg": stats.s_bar,
            },
            "diagnostics": {
                "rho_avg": stats.rho_bar,
                "e_avg": stats.e_bar,
                "s_avg": stats.s_bar,
                "lambda_max": stats.lambda_max,
                "lambda_stale": stats.stale,
                "rank_recent": self.diagnostics.get("rank_recent"),
                "rank_nominal": self.diagnostics.get("rom_order"),
                "subspace_angle_deg": self.diagnostics.get("theta_deg"),
                "persistence_windows": self.persistence,
                "stability_margin_db": self.diagnostics.get("gain_margin_db"),
                "phase_margin_deg": self.diagnostics.get("phase_margin_deg"),
                "rho_trend_increasing": self.diagnostics.get("rho_trend_increasing"),
                "current_rom_method": rom_method,
                "current_controller_type": controller_type,
            },
            "routing": {
                "target_agent": target,
                "action": action,
                "reason": DIAGNOSES[self.kind],
                "priority": PRIORITIES[self.kind],
                "method_change_recommended": self.escalate,
            },
            "adaptation_required": self.kind.startswith("Condition") or self.kind == "Emergency",
        }


@dataclass
class MonitorState:
    """Ring buffers and per-window history of one closed-loop run."""

    thresholds: MonitorThresholds = field(default_factory=MonitorThresholds)
    y_scale: Optional[np.ndarray] = None
    steps: int = 0
    metrics: Deque[StepMetrics] = field(init=False)
    estimates: Deque[np.ndarray] = field(init=False)
    inputs: Deque[np.ndarray] = field(init=False)
    snapshots: Deque[np.ndarray] = field(init=False)
    history: List[WindowStats] = field(default_factory=list)
    counters: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        window = self.thresholds.window
        self.metrics = deque(maxlen=window)
        self.estimates = deque(maxlen=window)
        self.inputs = deque(maxlen=window)
        self.snapshots = deque(maxlen=self.thresholds.snapshot_history)
        self.reset_counters()

    def reset_counters(self) -> None:
        """Zero every persistence counter."""
        self.counters = {name: 0 for name in PERSISTENT_VERDICTS}

    def clear_window(self) -> None:
        """Drop buffered steps after an adaptation so the next window sees only new data."""
        self.metrics.clear()
        self.estimates.clear()
        self.inputs.clear()

    @property
    def window_ready(self) -> bool:
        """A full window is buffered and the stride boundary is reached."""
        window, stride = self.thresholds.window, self.thresholds.stride
        return len(self.metrics) >= window and (self.steps - window) % stride == 0

    def recent_snapshots(self) -> Optional[np.ndarray]:
        """Buffered full-order snapshots as columns."""
        return np.column_stack(list(self.snapshots)) if self.snapshots else None


def record_step(
    state: MonitorState,
    y: np.ndarray,
    y_ref: np.ndarray,
    u: np.ndarray,
    r_hat: np.ndarray,
    model,
    bounds: Tuple[np.ndarray, np.ndarray],
    r_meas: Optional[np.ndarray] = None,
    x: Optional[np.ndarray] = None,
) -> StepMetrics:
    """Record one closed-loop step and return its metrics.

    ``r_hat`` is the predicted reduced state used for the ROM residual;
    ``r_meas`` (default ``r_hat``) is the measured reduced state used for
    windowed identification.
    """
    y = np.asarray(y, dtype=float)
    y_ref = np.asarray(y_ref, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if state.y_scale is None:
        scale = np.ones(y.size)
    else:
        scale = 1.0 / np.asarray(state.y_scale, dtype=float)
    denominator = max(float(np.linalg.norm(scale * y_ref)), 1e-6 * y.size)
    e = float(np.linalg.norm(scale * (y - y_ref))) / denominator

    predicted = model.C_r @ np.asarray(r_hat, dtype=float)
    y_norm = float(np.linalg.norm(y))
    residual = float(np.linalg.norm(y - predicted))
    rho = residual / y_norm if y_norm > 0 else (0.0 if residual == 0 else 1.0)

    u_min, u_max = bounds
    limit = np.maximum(
        np.abs(np.asarray(u_min, dtype=float)), np.abs(np.asarray(u_max, dtype=float))
    )
    saturated = np.abs(u) > state.thresholds.saturation_fraction * limit
    s = float(np.count_nonzero(saturated)) / u.size

    metrics = StepMetrics(e=e, rho=rho, s=s)
    state.metrics.append(metrics)
    state.estimates.append(np.asarray(r_hat if r_meas is None else r_meas, dtype=float).copy())
    state.inputs.append(u.copy())
    if x is not None and state.steps % state.thresholds.snapshot_stride == 0:
        state.snapshots.append(np.asarray(x, dtype=float).copy())
    state.steps += 1
    return metrics


def identify_spectral_radius(estimates: np.ndarray, inputs: np.ndarray) -> Optional[float]:
    """Spectral radius of A from a least-squares fit r_{k+1} ~ A r_k + B u_k + c.

    The fit runs in the basis of the window's centred variation; when inputs are
    collinear with the state (closed loop) the input regressor is dropped.
    Returns None when the data carries no identifiable dynamics.
    """
    R = np.asarray(estimates, dtype=float)
    U = np.asarray(inputs, dtype=float)
    if R.shape[1] < 3:
        return None
    variation = R - R.mean(axis=1, keepdims=True)
    floor = 1e-9 * max(1.0, float(np.linalg.norm(R)))
    left, s, _ = np.linalg.svd(variation, full_matrices=False)
    keep = s > floor
    if not np.any(keep):
        return None
    Z = left[:, keep].T @ R
    ones = np.ones((1, Z.shape[1] - 1))
    for regressors in (np.vstack([Z[:, :-1], U[:, :-1], ones]), np.vstack([Z[:, :-1], ones])):
        if regressors.shape[0] > regressors.shape[1]:
            continue
        singular = np.linalg.svd(regressors, compute_uv=False)
        if numerical_rank(regressors, 1e-9 * singular[0]) < regressors.shape[0]:
            continue
        solution, *_ = np.linalg.lstsq(regressors.T, Z[:, 1:].T, rcond=None)
        A_hat = solution.T[:, : Z.shape[0]]
        return spectral_radius(A_hat)
    return None


def window_stats(state: MonitorState) -> Optional[WindowStats]:
    """Means over the trailing window and the identified closed-loop radius."""
    if len(state.metrics) < state.thresholds.window:
        return None
    e_bar = float(np.mean([item.e for item in state.metrics]))
    rho_bar = float(np.mean([item.rho for item in state.metrics]))
    s_bar = float(np.mean([item.s for item in state.metrics]))
    lam = identify_spectral_radius(
        np.column_stack(list(state.estimates)), np.column_stack(list(state.inputs))
    )
    stale = lam is None
    if stale:
        previous = state.history[-1].lambda_max if state.history else None
        logger.debug("Window identification rank deficient, keeping lambda=%s", previous)
        lam = previous
    stats = WindowStats(e_bar, rho_bar, s_bar, lam, stale, end_step=state.steps)
    state.history.append(stats)
    return stats


def is_monotonic_increasing(values, tol: float = 1e-3) -> bool:
    """Non-decreasing within ``tol`` and rising overall."""
    values = list(values)
    if len(values) < 2:
        return False
    steps_ok = all(b - a >= -tol for a, b in zip(values, values[1:]))
    return steps_ok and values[-1] > values[0]


def classify(
    stats: WindowStats,
    rank_recent: int,
    theta_deg: float,
    r: int,
    gm_db: float,
    pm_deg: float,
    trend: bool,
    counters: Dict[str, int],
    thresholds: MonitorThresholds,
) -> Tuple[str, Dict[str, bool]]:
    """Update persistence counters and return the verdict kind in priority order."""
    t = thresholds
    lam = 0.0 if stats.lambda_max is None else abs(stats.lambda_max)
    rank_jump = r + max(2, math.ceil(0.2 * r))
    triggers = {
        "Emergency": lam > t.emergency_lambda,
        "Condition1": stats.rho_bar > t.rho_high
        and (rank_recent >= rank_jump or theta_deg > t.theta_deg),
        "Condition2": stats.rho_bar > t.rho_high
        and rank_recent <= r + 1
        and theta_deg <= t.theta_deg
        and trend,
        "Condition3": stats.e_bar > t.e_high
        and stats.rho_bar < t.rho_low
        and (stats.s_bar > t.s_high or gm_db < t.gm_trigger_db or pm_deg < t.pm_trigger_deg),
        "Good": stats.e_bar < t.e_good and stats.rho_bar < t.rho_good and lam < t.lambda_good,
    }
    for name in ("Emergency", "Condition1", "Condition3"):
        counters[name] = counters[name] + 1 if triggers[name] else 0

    if counters["Emergency"] >= t.emergency_windows:
        return "Emergency", triggers
    if counters["Condition1"] >= t.condition1_windows:
        return "Condition1", triggers
    if triggers["Condition2"]:
        return "Condition2", triggers
    if counters["Condition3"] >= t.condition3_windows:
        return "Condition3", triggers
    if triggers["Good"]:
        for name in counters:
            counters[name] = 0
        return "Good", triggers
    return "Indeterminate", triggers


def diagnose(
    state: MonitorState,
    model,
    recent_snapshots: Optional[np.ndarray] = None,
    margins=None,
    stats: Optional[WindowStats] = None,
) -> Verdict:
    """Classify the latest window as Good, a Condition, Indeterminate or Emergency."""
    t = state.thresholds
    if stats is None:
        stats = state.history[-1] if state.history else window_stats(state)
    snapshots = state.recent_snapshots() if recent_snapshots is None else recent_snapshots
    r = model.r
    rank_recent, theta = 0, 0.0
    if snapshots is not None and np.any(snapshots):
        singular = np.linalg.svd(snapshots, compute_uv=False)
        rank_recent = energy_rank(singular, t.rank_energy)
        theta = principal_angle(orthonormal_basis(model.Phi), snapshots, energy=t.angle_energy)
    gm_db = math.inf if margins is None else margins.gm
    pm_deg = math.inf if margins is None else margins.pm

    recent = [item.rho_bar for item in state.history[-t.trend_windows :]]
    trend = len(recent) >= t.trend_windows and is_monotonic_increasing(recent, t.trend_tol)

    kind, triggers = classify(
        stats, rank_recent, theta, r, gm_db, pm_deg, trend, state.counters, t
    )
    escalate = False
    if kind == "Indeterminate":
        state.counters["Indeterminate"] += 1
        escalate = state.counters["Indeterminate"] >= t.indeterminate_windows
        if escalate:
            logger.warning(
                "Indeterminate for %d windows, escalating", state.counters["Indeterminate"]
            )
    persistence = {
        "Emergency": state.counters["Emergency"],
        "Condition1": state.counters["Condition1"],
        "Condition2": len(recent),
        "Condition3": state.counters["Condition3"],
        "Indeterminate": state.counters["Indeterminate"],
        "Good": 0,
    }[kind]
    diagnostics = {
        "rank_recent": rank_recent,
        "rom_order": r,
        "theta_deg": theta,
        "gain_margin_db": None if math.isinf(gm_db) else gm_db,
        "phase_margin_deg": None if math.isinf(pm_deg) else pm_deg,
        "rho_trend_increasing": trend,
        "triggers": triggers,
    }
    verdict = Verdict(kind, stats, diagnostics, persistence, escalate)
    if kind != "Good":
        logger.info(
            "Window ending at step %d: %s (rho=%.3f e=%.3f s=%.2f lambda=%s rank=%d theta=%.1f)",
            stats.end_step,
            kind,
            stats.rho_bar,
            stats.e_bar,
            stats.s_bar,
            stats.lambda_max,
            rank_recent,
            theta,
        )
    return verdict

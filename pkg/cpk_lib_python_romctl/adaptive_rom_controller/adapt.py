# -*- coding: utf-8 -*-
"""Online adaptation actions for the three degradation conditions.

Condition2 refits the reduced operator by recursive least squares,
Condition1 enriches the reduced basis from recent full-order snapshots and
Condition3 retunes the controller's input penalty.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .control import Controller, Margins, design_lqr, design_mpc, loop_margins
from .errors import DimensionError, DomainError, RomControlError
from .numerics import energy_rank, spectral_radius, truncated_svd
from .rom import ReducedModel, _continuous_from_discrete

logger = logging.getLogger(__name__)

SATURATION_FACTOR = 0.7
MARGIN_FACTOR = 1.3
RETUNE_FAILURE_LIMIT = 2
ENRICHMENT_FAILURE_LIMIT = 2


@dataclass
class RlsState:
    """Recursive least-squares estimate of vec(A_d), stacked column by column."""

    theta: np.ndarray
    P_cov: np.ndarray
    lambda_forget: float = 0.99
    p0: float = 1e3
    resets: int = 0
    updates: int = 0

    def __post_init__(self):
        if not 0.9 < self.lambda_forget <= 1.0:
            raise DomainError(f"lambda_forget must lie in (0.9, 1], got {self.lambda_forget}")
        size = self.theta.size
        if self.P_cov.shape != (size, size):
            raise DimensionError(f"P_cov has shape {self.P_cov.shape}, expected {(size, size)}")

    @classmethod
    def from_operator(
        cls, A_d: np.ndarray, lambda_forget: float = 0.99, p0: float = 1e3
    ) -> "RlsState":
        """Start from the current operator with covariance p0 I."""
        A_d = np.asarray(A_d, dtype=float)
        size = A_d.size
        return cls(
            theta=A_d.reshape(-1, order="F").copy(),
            P_cov=p0 * np.eye(size),
            lambda_forget=lambda_forget,
            p0=p0,
        )

    @property
    def r(self) -> int:
        return int(round(math.sqrt(self.theta.size)))

    @property
    def A_d(self) -> np.ndarray:
        """mat(theta)."""
        return self.theta.reshape((self.r, self.r), order="F")


def _is_positive_definite(P: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True


def rls_update(
    rls: RlsState, r_i: np.ndarray, r_next: np.ndarray, u_i: np.ndarray, B_d: np.ndarray
) -> Tuple[RlsState, np.ndarray]:
    """One forgetting-factor RLS step on r_next - B_d u_i = (r_i^T kron I) vec(A_d)."""
    r = rls.r
    r_i = np.asarray(r_i, dtype=float).reshape(-1)
    r_next = np.asarray(r_next, dtype=float).reshape(-1)
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    B_d = np.atleast_2d(np.asarray(B_d, dtype=float))
    if r_i.size != r or r_next.size != r or B_d.shape != (r, u_i.size):
        raise DimensionError(
            f"RLS step shapes r_i={r_i.shape} r_next={r_next.shape} u={u_i.shape} B_d={B_d.shape} "
            f"do not match r={r}"
        )
    lam = rls.lambda_forget
    psi = np.kron(r_i[None, :], np.eye(r))
    target = r_next - B_d @ u_i
    innovation = target - psi @ rls.theta

    P_psi_t = rls.P_cov @ psi.T
    S = psi @ P_psi_t + lam * np.eye(r)
    gain = np.linalg.solve(S, P_psi_t.T).T
    theta = rls.theta + gain @ innovation
    P_cov = (rls.P_cov - gain @ psi @ rls.P_cov) / lam
    P_cov = 0.5 * (P_cov + P_cov.T)

    resets = rls.resets
    if not _is_positive_definite(P_cov):
        logger.warning("RLS covariance lost positive definiteness, resetting to %.1e I", rls.p0)
        P_cov = rls.p0 * np.eye(theta.size)
        resets += 1
    updated = replace(rls, theta=theta, P_cov=P_cov, resets=resets, updates=rls.updates + 1)
    return updated, updated.A_d


def rls_refit(
    model: ReducedModel, rls: RlsState, estimates: np.ndarray, inputs: np.ndarray
) -> Tuple[ReducedModel, RlsState]:
    """Run RLS over consecutive (r_k, u_k, r_{k+1}) columns and rebuild the model's operators."""
    estimates = np.asarray(estimates, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if rls.r != model.r:
        raise DimensionError(f"RLS state is for r={rls.r}, model has r={model.r}")
    for k in range(estimates.shape[1] - 1):
        rls, _ = rls_update(rls, estimates[:, k], estimates[:, k + 1], inputs[:, k], model.B_d)
    A_d = rls.A_d.copy()
    try:
        A_r, B_r = _continuous_from_discrete(A_d, model.B_d, model.T_s)
    except (np.linalg.LinAlgError, ValueError) as error:
        logger.warning(
            "Continuous operators unavailable after RLS (%s), keeping previous A_r", error
        )
        A_r, B_r = model.A_r, model.B_r
    logger.info(
        "RLS refit over %d pairs: ||dA_d||_F=%.3e, radius %.4f",
        estimates.shape[1] - 1,
        float(np.linalg.norm(A_d - model.A_d)),
        spectral_radius(A_d),
    )
    updated = replace(model, A_d=A_d, A_r=A_r, B_r=B_r, certificates=dict(model.certificates))
    return updated, rls


@dataclass
class Enrichment:
    """Result of one basis enrichment."""

    Phi: np.ndarray
    added: int
    residual_before: float
    residual_after: float
    no_op: bool = False
    capped: bool = False

    @property
    def r(self) -> int:
        return self.Phi.shape[1]


def enrich_basis(
    Phi: np.ndarray,
    X_recent: np.ndarray,
    energy_tol: float = 0.99,
    max_r: Optional[int] = None,
    zero_tol: float = 1e-10,
) -> Enrichment:
    """Append the dominant directions of X_recent orthogonal to span(Phi)."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    X = np.asarray(X_recent, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != Phi.shape[0]:
        raise DimensionError(f"snapshots have {X.shape[0]} rows, basis has {Phi.shape[0]}")
    if not 0.0 < energy_tol <= 1.0:
        raise DomainError(f"energy_tol must lie in (0, 1], got {energy_tol}")
    residual = X - Phi @ (Phi.T @ X)
    before = float(np.linalg.norm(residual))
    if before <= zero_tol * max(1.0, float(np.linalg.norm(X))):
        logger.info("Snapshots lie in the current basis, enrichment unnecessary")
        return Enrichment(Phi, 0, before, before, no_op=True)

    svd = truncated_svd(residual, rank=min(residual.shape))
    count = energy_rank(svd.s, energy_tol)
    capped = False
    if max_r is not None and Phi.shape[1] + count > max_r:
        count = max(0, max_r - Phi.shape[1])
        capped = True
    if count == 0:
        logger.warning("Basis already at its maximum order %d, enrichment skipped", Phi.shape[1])
        return Enrichment(Phi, 0, before, before, no_op=True, capped=True)

    directions = svd.U[:, :count]
    directions = directions - Phi @ (Phi.T @ directions)
    Q, R = np.linalg.qr(directions)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    Phi_new = np.hstack([Phi, Q])
    after = float(np.linalg.norm(X - Phi_new @ (Phi_new.T @ X)))
    logger.info(
        "Basis enriched from r=%d to r=%d (residual %.3e -> %.3e)",
        Phi.shape[1],
        Phi_new.shape[1],
        before,
        after,
    )
    return Enrichment(Phi_new, count, before, after, capped=capped)


@dataclass
class RetuneResult:
    """Outcome of one Condition3 retune."""

    controller: Controller
    branch: str
    rho_before: float
    rho_after: float
    margins: Margins
    success: bool
    escalate: bool = False
    failures: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "branch": self.branch,
            "rho_before": self.rho_before,
            "rho_after": self.rho_after,
            "success": self.success,
            "escalate": self.escalate,
            "consecutive_failures": self.failures,
            **self.margins.to_dict(),
        }


def retune_branch(
    verdict, gm_trigger: float = 8.0, pm_trigger: float = 40.0, s_high: float = 0.3
) -> str:
    """'saturation' when the window is input-limited, otherwise 'margin'."""
    if verdict.stats.s_bar > s_high:
        return "saturation"
    gm = verdict.diagnostics.get("gain_margin_db")
    pm = verdict.diagnostics.get("phase_margin_deg")
    if (gm is not None and gm < gm_trigger) or (pm is not None and pm < pm_trigger):
        return "margin"
    return "saturation"


def retune(
    ctrl: Controller,
    verdict,
    model: ReducedModel,
    failures: int = 0,
    gm_trigger: float = 8.0,
    pm_trigger: float = 40.0,
    radius_max: float = 0.98,
    margin_points: int = 720,
) -> RetuneResult:
    """Scale rho by 0.7 (saturation) or 1.3 (margins), resynthesize and re-certify.

    ``failures`` counts consecutive unsuccessful retunes; reaching the limit
    sets ``escalate`` so the caller reconsiders the controller type.
    """
    branch = retune_branch(verdict, gm_trigger, pm_trigger)
    factor = SATURATION_FACTOR if branch == "saturation" else MARGIN_FACTOR
    rho = ctrl.rho * factor
    if branch == "margin" and failures > 0:
        logger.info(
            "Margin-limited again after a retune; loop-shaping filter branch is not synthesized"
        )
    try:
        if ctrl.kind == "mpc":
            candidate = design_mpc(
                model,
                Q_x=ctrl.Q_x,
                rho=rho,
                horizons=ctrl.horizons,
                u_min=ctrl.u_min,
                u_max=ctrl.u_max,
                margin_points=margin_points,
            )
        else:
            candidate = design_lqr(model, ctrl.Q_x, rho, ctrl.u_min, ctrl.u_max, margin_points)
    except RomControlError as error:
        logger.error("Retune synthesis failed: %s", error)
        failures += 1
        return RetuneResult(ctrl, branch, ctrl.rho, rho, ctrl.margins, False, True, failures)

    margins = loop_margins(model, candidate.K, margin_points)
    radius = spectral_radius(model.A_d - model.B_d @ candidate.K)
    success = margins.gm >= gm_trigger and margins.pm >= pm_trigger and radius < radius_max
    failures = 0 if success else failures + 1
    escalate = failures >= RETUNE_FAILURE_LIMIT
    if escalate:
        logger.warning(
            "%d consecutive retunes failed, escalating controller reconsideration", failures
        )
    logger.info("Retune (%s): rho %.4g -> %.4g, success=%s", branch, ctrl.rho, rho, success)
    candidate = replace(candidate, margins=margins, closed_loop_radius=radius)
    return RetuneResult(candidate, branch, ctrl.rho, rho, margins, success, escalate, failures)


@dataclass(frozen=True)
class GateDecision:
    """Post-update check of the existing gain against a changed model."""

    action: str
    margins: Margins
    closed_loop_radius: float
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.action == "accept"


def post_update_gate(
    model: ReducedModel,
    ctrl: Controller,
    gm_trigger: float = 8.0,
    pm_trigger: float = 40.0,
    radius_max: float = 0.98,
    margin_points: int = 720,
) -> GateDecision:
    """'accept' when the current K keeps GM/PM above the triggers and the loop contracting."""
    margins = loop_margins(model, ctrl.K, margin_points)
    radius = spectral_radius(model.A_d - model.B_d @ ctrl.K)
    ok = margins.gm >= gm_trigger and margins.pm >= pm_trigger and radius < radius_max
    action = "accept" if ok else "recompute_gain"
    if not ok:
        logger.info(
            "Post-update gate: GM %s dB, PM %s deg, radius %.4f -> recompute gain",
            margins.gm_db,
            margins.pm_deg,
            radius,
        )
    details = {"gm_trigger": gm_trigger, "pm_trigger": pm_trigger}
    return GateDecision(action, margins, radius, details)


def orthonormalize(Phi: np.ndarray) -> np.ndarray:
    """Orthonormal basis for span(Phi) with column signs kept."""
    Q, R = scipy.linalg.qr(np.asarray(Phi, dtype=float), mode="economic")
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)

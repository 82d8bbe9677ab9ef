# -*- coding: utf-8 -*-
"""Controller synthesis on reduced models: LQR, dual-mode MPC, feedforward and loop margins."""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, StabilityError, SynthesisError
from .numerics import frequency_response, solve_dare, spectral_abscissa, spectral_radius
from .rom import ReducedModel
from .systems import SystemDescriptor

logger = logging.getLogger(__name__)

CONTROLLER_KINDS = ("lqr", "mpc")


@dataclass(frozen=True)
class Margins:
    """Loop margins; ``None`` fields mean no crossover was found (infinite margin)."""

    gm_db: Optional[float]
    pm_deg: Optional[float]
    min_sv: Optional[float]
    crossover: Optional[float] = None
    loops: Tuple[Tuple[Optional[float], Optional[float]], ...] = ()

    @property
    def gm(self) -> float:
        return math.inf if self.gm_db is None else self.gm_db

    @property
    def pm(self) -> float:
        return math.inf if self.pm_deg is None else self.pm_deg

    def passes(self, gm_min: float, pm_min: float, sv_min: float, m: int = 1) -> bool:
        """Every loop-at-a-time margin passes and, for m > 1, sigma_min(I + L) at crossover."""
        if not (self.gm > gm_min and self.pm > pm_min):
            return False
        return m == 1 or self.min_sv is None or self.min_sv > sv_min

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gain_margin_db": self.gm_db,
            "phase_margin_deg": self.pm_deg,
            "min_singular_value": self.min_sv,
            "crossover_rad_s": self.crossover,
            "no_phase_crossover": self.gm_db is None,
            "no_gain_crossover": self.pm_deg is None,
        }


@dataclass(frozen=True)
class MpcData:
    """Condensed dual-mode QP data for a fixed model and weights."""

    N_p: int
    N_c: int
    H: np.ndarray
    F: np.ndarray
    const: np.ndarray
    input_map: np.ndarray
    input_offset: np.ndarray
    state_map: Optional[np.ndarray]
    state_offset: Optional[np.ndarray]
    state_selector: Optional[np.ndarray]
    state_lower: Optional[np.ndarray]
    state_upper: Optional[np.ndarray]
    tol: float = 1e-6
    max_iter: int = 5000


@dataclass(frozen=True)
class Controller:
    """Synthesized controller on reduced coordinates; immutable after synthesis."""

    kind: str
    K: np.ndarray
    P: np.ndarray
    rho: float
    Q_r: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    margins: Margins
    closed_loop_radius: float
    Q_x: Optional[np.ndarray] = field(default=None, repr=False)
    mpc: Optional[MpcData] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise DomainError(f"unknown controller kind '{self.kind}'")
        if not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def horizons(self) -> Optional[Tuple[int, int]]:
        return None if self.mpc is None else (self.mpc.N_p, self.mpc.N_c)

    def passed(
        self,
        gm_min: float = 6.0,
        pm_min: float = 30.0,
        sv_min: float = 0.5,
        radius_max: float = 0.98,
    ) -> bool:
        """Design-time acceptance: closed-loop radius and loop margins."""
        return self.closed_loop_radius < radius_max and self.margins.passes(
            gm_min, pm_min, sv_min, self.m
        )

    def with_bounds(self, u_min, u_max) -> "Controller":
        """Copy with new input bounds (the MPC condensation does not depend on them)."""
        lower, upper = _bounds(u_min, u_max, self.m)
        return replace(self, u_min=lower, u_max=upper)

    def to_dict(self) -> Dict[str, Any]:
        """Fields of the controller output message."""
        data = {
            "controller_type": self.kind,
            "rho": self.rho,
            "closed_loop_spectral_radius": self.closed_loop_radius,
            "input_bounds": {"u_min": self.u_min.tolist(), "u_max": self.u_max.tolist()},
            **self.margins.to_dict(),
        }
        if self.mpc is not None:
            data["horizons"] = {"N_p": self.mpc.N_p, "N_c": self.mpc.N_c}
        return data


def _bounds(u_min, u_max, m: int) -> Tuple[np.ndarray, np.ndarray]:
    lower = np.broadcast_to(np.asarray(u_min, dtype=float), (m,)).copy()
    upper = np.broadcast_to(np.asarray(u_max, dtype=float), (m,)).copy()
    if np.any(lower > upper):
        raise DomainError(f"input bounds are empty: {lower} > {upper}")
    return lower, upper


def inverse_variance_weights(X: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Diagonal state weights 1/var(x_i), scaled so a typical snapshot has unit weighted energy."""
    X = np.asarray(X, dtype=float)
    variance = X.var(axis=1)
    top = float(variance.max())
    if top <= 0:
        return np.ones(X.shape[0])
    weights = 1.0 / np.maximum(variance, floor * top)
    energy = float(np.mean(np.sum(weights[:, None] * X**2, axis=0)))
    return weights / energy if energy > 0 else weights


def _reduced_weight(model: ReducedModel, Q_x: Optional[np.ndarray]) -> np.ndarray:
    if Q_x is None:
        weights = np.ones(model.Phi.shape[0])
    else:
        weights = np.asarray(Q_x, dtype=float)
        if weights.ndim == 2:
            weights = np.diag(weights)
    if weights.shape[0] != model.Phi.shape[0]:
        raise DimensionError(
            f"Q_x has {weights.shape[0]} entries, basis has {model.Phi.shape[0]} rows"
        )
    if np.any(weights < 0):
        raise DomainError("state weights must be non-negative")
    Q_r = model.Phi.T @ (weights[:, None] * model.Phi)
    return 0.5 * (Q_r + Q_r.T)


def _unit_circle(angles) -> np.ndarray:
    """e^{j theta} with the endpoints 0 and pi mapped exactly to z = 1 and z = -1."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    z = np.exp(1j * angles)
    z[angles == 0.0] = 1.0
    z[angles == math.pi] = -1.0
    return z


def _crossings(values: np.ndarray, tol: float) -> List[int]:
    """Indices i where values[i] is (numerically) zero or values[i], values[i+1] differ in sign."""
    indices = []
    for i in range(values.size):
        if abs(values[i]) <= tol:
            indices.append(i)
        elif i + 1 < values.size and abs(values[i + 1]) > tol and values[i] * values[i + 1] < 0:
            indices.append(i)
    return indices


def _interpolate(theta: np.ndarray, values: np.ndarray, i: int, tol: float) -> float:
    if abs(values[i]) <= tol or i + 1 >= values.size:
        return float(theta[i])
    fraction = values[i] / (values[i] - values[i + 1])
    return float(theta[i] + fraction * (theta[i + 1] - theta[i]))


def _siso_margins(A: np.ndarray, b: np.ndarray, k: np.ndarray, theta: np.ndarray):
    """Classical gain/phase margins of L(z) = k (zI - A)^{-1} b on the upper unit circle."""
    def loop(angles):
        return frequency_response(A, b, k, _unit_circle(angles))[:, 0, 0]

    L = loop(theta)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(L))))
    gm_db = None
    for i in _crossings(L.imag, tol):
        point = _interpolate(theta, L.imag, i, tol)
        value = loop(point)[0]
        if value.real < 0:
            candidate = -20.0 * math.log10(max(abs(value), 1e-300))
            gm_db = candidate if gm_db is None else min(gm_db, candidate)
    pm_deg = None
    crossover = None
    magnitude = np.abs(L) - 1.0
    for i in _crossings(magnitude, 1e-12):
        point = _interpolate(theta, magnitude, i, 1e-12)
        value = loop(point)[0]
        candidate = 180.0 - abs(math.degrees(np.angle(value)))
        if pm_deg is None or candidate < pm_deg:
            pm_deg, crossover = candidate, point
    return gm_db, pm_deg, crossover


def loop_margins(model: ReducedModel, K: np.ndarray, points: int = 720) -> Margins:
    """Loop-at-a-time margins of the state-feedback loop broken at the plant input.

    With several inputs each loop is opened while the others stay closed, and
    sigma_min(I + L) is evaluated at the first unity crossing of sigma_max(L).
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A_d, B_d = model.A_d, model.B_d
    m = B_d.shape[1]
    if K.shape != (m, A_d.shape[0]):
        raise DimensionError(f"K has shape {K.shape}, expected {(m, A_d.shape[0])}")
    theta = np.linspace(0.0, math.pi, points)
    if not np.any(K):
        return Margins(gm_db=None, pm_deg=None, min_sv=1.0)

    loops = []
    for i in range(m):
        others = [j for j in range(m) if j != i]
        A_i = A_d - B_d[:, others] @ K[others] if others else A_d
        loops.append(_siso_margins(A_i, B_d[:, [i]], K[[i]], theta))
    gms = [gm for gm, _, _ in loops if gm is not None]
    pms = [pm for _, pm, _ in loops if pm is not None]

    full = frequency_response(A_d, B_d, K, _unit_circle(theta))
    sigma_max = np.array([np.linalg.norm(block, 2) for block in full])
    identity = np.eye(m)
    crossing = _crossings(sigma_max - 1.0, 1e-12)
    if crossing:
        angle = _interpolate(theta, sigma_max - 1.0, crossing[0], 1e-12)
        block = frequency_response(A_d, B_d, K, _unit_circle(angle))[0]
        min_sv = float(np.linalg.svd(identity + block, compute_uv=False).min())
        crossover = angle / model.T_s
    else:
        min_sv = float(
            min(np.linalg.svd(identity + block, compute_uv=False).min() for block in full)
        )
        crossover = None
    margins = Margins(
        gm_db=min(gms) if gms else None,
        pm_deg=min(pms) if pms else None,
        min_sv=min_sv,
        crossover=crossover,
        loops=tuple((gm, pm) for gm, pm, _ in loops),
    )
    logger.debug("Loop margins: %s", margins)
    return margins


def design_lqr(
    model: ReducedModel,
    Q_x: Optional[np.ndarray] = None,
    rho: float = 0.1,
    u_min=-math.inf,
    u_max=math.inf,
    margin_points: int = 720,
) -> Controller:
    """Infinite-horizon discrete LQR with Q_r = Phi^T Q_x Phi and R = rho I."""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    Q_r = _reduced_weight(model, Q_x)
    R = rho * np.eye(model.m)
    P, K = solve_dare(model.A_d, model.B_d, Q_r, R)
    radius = spectral_radius(model.A_d - model.B_d @ K)
    margins = loop_margins(model, K, margin_points)
    lower, upper = _bounds(u_min, u_max, model.m)
    logger.info(
        "LQR rho=%.4g: closed-loop radius %.4f, GM %s dB, PM %s deg",
        rho,
        radius,
        margins.gm_db,
        margins.pm_deg,
    )
    return Controller(
        kind="lqr",
        K=K,
        P=P,
        rho=rho,
        Q_r=Q_r,
        u_min=lower,
        u_max=upper,
        margins=margins,
        closed_loop_radius=radius,
        Q_x=None if Q_x is None else np.asarray(Q_x, dtype=float),
    )


def prediction_horizon(model: ReducedModel, cap: int = 200) -> Tuple[int, int]:
    """N_p spanning three settling times (tau_settled = 4/alpha) and N_c = ceil(N_p/3)."""
    alpha = -spectral_abscissa(model.A_r)
    if alpha <= 0:
        raise StabilityError("MPC horizon needs a stable reduced model")
    N_p = int(math.ceil(3.0 * (4.0 / alpha) / model.T_s))
    N_p = max(1, min(N_p, cap))
    return N_p, int(math.ceil(N_p / 3.0))


def _condense(
    model: ReducedModel,
    K: np.ndarray,
    P: np.ndarray,
    Q_r: np.ndarray,
    R: np.ndarray,
    N_p: int,
    N_c: int,
    state_bounds,
) -> Tuple[np.ndarray, ...]:
    A, B = model.A_d, model.B_d
    r, m = B.shape
    n_u = N_c * m
    closed = A - B @ K
    Sx = np.zeros((N_p * r, r))
    Su = np.zeros((N_p * r, n_u))
    input_map = np.zeros((N_p * m, n_u))
    input_offset = np.zeros((N_p * m, r))
    x_part = np.eye(r)
    u_part = np.zeros((r, n_u))
    for k in range(N_p):
        if k < N_c:
            input_map[k * m : (k + 1) * m, k * m : (k + 1) * m] = np.eye(m)
            x_part, u_part = A @ x_part, A @ u_part
            u_part[:, k * m : (k + 1) * m] += B
        else:
            input_map[k * m : (k + 1) * m] = -K @ u_part
            input_offset[k * m : (k + 1) * m] = -K @ x_part
            x_part, u_part = closed @ x_part, closed @ u_part
        Sx[k * r : (k + 1) * r] = x_part
        Su[k * r : (k + 1) * r] = u_part

    weights = [Q_r] * (N_c - 1) + [P]
    Q_bar = scipy.linalg.block_diag(*weights)
    Sx_c, Su_c = Sx[: N_c * r], Su[: N_c * r]
    H = 2.0 * (Su_c.T @ Q_bar @ Su_c + np.kron(np.eye(N_c), R))
    F = 2.0 * Su_c.T @ Q_bar @ Sx_c
    const = Q_r + Sx_c.T @ Q_bar @ Sx_c

    state_map = state_offset = selector = lower = upper = None
    if state_bounds is not None:
        rows, lower, upper = (np.atleast_1d(np.asarray(item)) for item in state_bounds)
        selector = model.Phi[rows.astype(int)]
        lower = np.broadcast_to(lower.astype(float), (rows.size,)).copy()
        upper = np.broadcast_to(upper.astype(float), (rows.size,)).copy()
        mapper = np.kron(np.eye(N_p), selector)
        state_map, state_offset = mapper @ Su, mapper @ Sx
    return H, F, const, input_map, input_offset, state_map, state_offset, selector, lower, upper


def design_mpc(
    model: ReducedModel,
    descriptor: Optional[SystemDescriptor] = None,
    Q_x: Optional[np.ndarray] = None,
    rho: float = 0.1,
    horizon_cap: int = 200,
    horizons: Optional[Tuple[int, int]] = None,
    state_bounds: Optional[Tuple[Any, Any, Any]] = None,
    qp_tol: float = 1e-6,
    qp_max_iter: int = 5000,
    u_min=None,
    u_max=None,
    margin_points: int = 720,
) -> Controller:
    """Dual-mode MPC: N_c free moves, then the LQR law whose cost-to-go P_inf prices the tail.

    Input bounds apply over the whole prediction horizon N_p, as do box bounds
    on selected full-order states mapped through rows of Phi.
    """
    if u_min is None or u_max is None:
        if descriptor is None:
            raise DomainError("MPC needs input constraints")
        u_min, u_max = descriptor.u_min, descriptor.u_max
    lqr = design_lqr(model, Q_x, rho, u_min, u_max, margin_points)
    N_p, N_c = horizons if horizons is not None else prediction_horizon(model, horizon_cap)
    N_c = max(1, min(N_c, N_p))
    R = rho * np.eye(model.m)
    parts = _condense(model, lqr.K, lqr.P, lqr.Q_r, R, N_p, N_c, state_bounds)
    data = MpcData(N_p, N_c, *parts, tol=qp_tol, max_iter=qp_max_iter)
    controller = replace(lqr, kind="mpc", mpc=data)

    origin_solve = {}
    zero = np.zeros(model.r)
    u_ss = np.clip(np.zeros(model.m), controller.u_min, controller.u_max)
    _, _, violations = _constraint_system(controller, zero, zero, u_ss)
    if violations:
        raise SynthesisError(f"MPC infeasible at the origin, active constraints: {violations}")
    solve_mpc(controller, zero, zero, u_ss, info=origin_solve)
    logger.info(
        "MPC N_p=%d N_c=%d designed (origin QP converged: %s)",
        N_p,
        N_c,
        origin_solve.get("converged"),
    )
    return controller


def _constraint_system(ctrl: Controller, delta0: np.ndarray, r_ref: np.ndarray, u_ss: np.ndarray):
    """Rows G U <= h for the current deviation state, plus the rows already violated at U = 0."""
    data = ctrl.mpc
    free = data.input_offset @ delta0
    blocks = [data.input_map, -data.input_map]
    limits = [
        np.tile(ctrl.u_max - u_ss, data.N_p) - free,
        free - np.tile(ctrl.u_min - u_ss, data.N_p),
    ]
    if data.state_map is not None:
        drift = data.state_offset @ delta0 + np.tile(data.state_selector @ r_ref, data.N_p)
        blocks += [data.state_map, -data.state_map]
        limits += [
            np.tile(data.state_upper, data.N_p) - drift,
            drift - np.tile(data.state_lower, data.N_p),
        ]
    G = np.vstack(blocks)
    h = np.concatenate(limits)
    finite = np.isfinite(h)
    G, h = G[finite], h[finite]
    violations = [int(i) for i in np.flatnonzero(h < -data.tol)]
    return G, h, violations


def solve_mpc(
    ctrl: Controller,
    r_hat: np.ndarray,
    r_ref: np.ndarray,
    u_ss: np.ndarray,
    info: Optional[Dict[str, Any]] = None,
) -> Tuple[np.ndarray, float, bool]:
    """Solve the condensed QP by accelerated dual projected gradient.

    Returns the stacked free moves (absolute inputs, N_c x m), the predicted
    cost and whether the KKT residual met the tolerance.
    """
    data = ctrl.mpc
    delta0 = np.asarray(r_hat, dtype=float) - np.asarray(r_ref, dtype=float)
    f = data.F @ delta0
    factor = scipy.linalg.cho_factor(data.H)
    unconstrained = -scipy.linalg.cho_solve(factor, f)
    G, h, _ = _constraint_system(ctrl, delta0, r_ref, u_ss)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0

    solution = unconstrained
    converged = True
    iterations = 0
    if h.size and np.any(G @ unconstrained - h > data.tol * scale):
        converged = False
        h_inv_gt = scipy.linalg.cho_solve(factor, G.T)
        lipschitz = float(np.linalg.eigvalsh(G @ h_inv_gt).max())
        multipliers = np.zeros(h.size)
        momentum = multipliers.copy()
        t = 1.0
        for iterations in range(1, data.max_iter + 1):
            candidate = unconstrained - h_inv_gt @ momentum
            updated = np.maximum(0.0, momentum + (G @ candidate - h) / lipschitz)
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            momentum = updated + ((t - 1.0) / t_next) * (updated - multipliers)
            multipliers, t = updated, t_next
            solution = unconstrained - h_inv_gt @ multipliers
            slack = G @ solution - h
            violation = float(np.max(slack, initial=0.0))
            complementarity = float(np.max(np.abs(multipliers * slack), initial=0.0))
            if violation <= data.tol * scale and complementarity <= data.tol * scale:
                converged = True
                break
    cost = float(delta0 @ data.const @ delta0 + 0.5 * solution @ data.H @ solution + f @ solution)
    if info is not None:
        info.update(converged=converged, iterations=iterations, cost=cost)
    moves = solution.reshape(data.N_c, ctrl.m) + u_ss
    return moves, cost, converged


def feedforward(model: ReducedModel, ref_r_next: np.ndarray, ref_r_now: np.ndarray) -> np.ndarray:
    """Least-squares u_ff solving B_d u = r_ref,k+1 - A_d r_ref,k."""
    target = np.asarray(ref_r_next, dtype=float) - model.A_d @ np.asarray(ref_r_now, dtype=float)
    u_ff, *_ = np.linalg.lstsq(model.B_d, target, rcond=None)
    residual = float(np.linalg.norm(model.B_d @ u_ff - target))
    if residual > 1e-9 * max(1.0, float(np.linalg.norm(target))):
        logger.debug("Feedforward residual %.3e outside range(B_d)", residual)
    return u_ff


def reference_state(model: ReducedModel, y_ref: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Reduced steady state and input (r_ref, u_ss).

    Least-squares solution of (A_d - I) r + B_d u = 0 and C_r r = y_ref.
    """
    y_ref = np.asarray(y_ref, dtype=float).reshape(model.p)
    r, m = model.r, model.m
    system = np.block(
        [[model.A_d - np.eye(r), model.B_d], [model.C_r, np.zeros((model.p, m))]]
    )
    rhs = np.concatenate([np.zeros(r), y_ref])
    solution, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return solution[:r], solution[r:]


def control_step(
    ctrl: Controller,
    r_hat: np.ndarray,
    r_ref: np.ndarray,
    model: ReducedModel,
    u_ff: Optional[np.ndarray] = None,
    ref_r_next: Optional[np.ndarray] = None,
    info: Optional[Dict[str, Any]] = None,
) -> np.ndarray:
    """Next input u = clip(u_ff - K (r_hat - r_ref)) or the first MPC move, always within bounds."""
    r_hat = np.asarray(r_hat, dtype=float)
    r_ref = np.asarray(r_ref, dtype=float)
    if r_hat.shape != (ctrl.K.shape[1],) or r_ref.shape != r_hat.shape:
        raise DimensionError(
            f"state shapes {r_hat.shape}/{r_ref.shape} do not match K {ctrl.K.shape}"
        )
    if u_ff is None:
        u_ff = feedforward(model, r_ref if ref_r_next is None else ref_r_next, r_ref)
    lqr_move = np.clip(u_ff - ctrl.K @ (r_hat - r_ref), ctrl.u_min, ctrl.u_max)
    if ctrl.kind == "lqr":
        return lqr_move
    step_info: Dict[str, Any] = {}
    moves, _, converged = solve_mpc(ctrl, r_hat, r_ref, u_ff, info=step_info)
    if info is not None:
        info.update(step_info)
    if not converged:
        logger.warning(
            "QP did not converge in %d iterations, applying saturated LQR move",
            step_info["iterations"],
        )
        if info is not None:
            info["qp_fallback"] = True
        return lqr_move
    return np.clip(moves[0], ctrl.u_min, ctrl.u_max)

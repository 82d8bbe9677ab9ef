# -*- coding: utf-8 -*-
"""Reduced-order model construction, certification and validation."""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    ConditioningError,
    DegenerateInputError,
    DomainError,
    StabilityError,
    SynthesisError,
)
from .excitation import SnapshotSet
from .numerics import (
    frequency_response,
    numerical_rank,
    solve_continuous_lyapunov,
    spectral_abscissa,
    spectral_radius,
    truncated_svd,
    zoh,
)
from .systems import (
    FullOrderSystem,
    LtiSystem,
    SystemDescriptor,
    linearize,
    output_matrix,
    rk4_step,
)

logger = logging.getLogger(__name__)

ROM_METHODS = ("pod_galerkin", "balanced_truncation", "dmd")


@dataclass(frozen=True)
class DeimData:
    """Empirical interpolation of a nonlinear term: f ~ Phi_f (P^T Phi_f)^{-1} P^T f."""

    Phi_f: np.ndarray
    indices: np.ndarray
    interpolation: np.ndarray

    @property
    def q(self) -> int:
        """Interpolation point count."""
        return int(self.indices.size)

    def approximate(self, sampled: np.ndarray) -> np.ndarray:
        """Reconstruct the full vector from its values at ``indices``."""
        return self.interpolation @ sampled

    def projector(self, W: np.ndarray) -> np.ndarray:
        """Reduced map W^T Phi_f (P^T Phi_f)^{-1} applied to sampled values."""
        return W.T @ self.interpolation


@dataclass
class ReducedModel:
    """Reduced model r' = A_r r + B_r u, y = C_r r with its discrete ZOH pair.

    ``Phi`` lifts reduced coordinates to the full state and ``W`` restricts
    (W^T Phi = I). Both coincide for the orthonormal POD and DMD bases.
    """

    method: str
    Phi: np.ndarray
    A_r: np.ndarray
    B_r: np.ndarray
    C_r: np.ndarray
    A_d: np.ndarray
    B_d: np.ndarray
    T_s: float
    W: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    estimator: str = "output"
    T_s_adapted: bool = False
    energy_captured: Optional[float] = None
    hsv: Optional[np.ndarray] = None
    deim: Optional[DeimData] = None
    vector_field: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )
    certificates: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ROM_METHODS:
            raise DomainError(f"unknown ROM method '{self.method}'")
        if self.W is None:
            self.W = self.Phi

    @property
    def r(self) -> int:
        """Reduced dimension."""
        return self.A_r.shape[0]

    @property
    def m(self) -> int:
        return self.B_r.shape[1]

    @property
    def p(self) -> int:
        return self.C_r.shape[0]

    @property
    def is_nonlinear(self) -> bool:
        return self.vector_field is not None

    def restrict(self, x: np.ndarray) -> np.ndarray:
        """Reduced coordinates W^T x of a full state (or of state columns)."""
        return self.W.T @ x

    def lift(self, r: np.ndarray) -> np.ndarray:
        """Full state Phi r."""
        return self.Phi @ r

    def step(self, r: np.ndarray, u: np.ndarray) -> np.ndarray:
        """One discrete step r_{k+1} = A_d r_k + B_d u_k."""
        return self.A_d @ r + self.B_d @ u

    def basis_orthonormality(self) -> float:
        """||W^T Phi - I||_F; equals ||Phi^T Phi - I||_F for orthonormal bases."""
        return float(np.linalg.norm(self.W.T @ self.Phi - np.eye(self.r)))

    def summary(self) -> Dict[str, Any]:
        """Fields of the ROM output message."""
        return {
            "rom_method": self.method,
            "rom_dimension": self.r,
            "T_s_used": self.T_s,
            "T_s_adapted": self.T_s_adapted,
            "energy_captured": self.energy_captured,
            "estimator": self.estimator,
            "deim_points": None if self.deim is None else self.deim.q,
            "certificates": dict(self.certificates),
        }


@dataclass
class RomReport:
    """Validation metrics of a reduced model against held-out full-order data."""

    energy_captured: Optional[float]
    eps_L2: float
    freq_mismatch: Optional[float]
    cont_margin: float
    disc_margin: float
    estimator_kappa: Optional[float]
    speedup: float
    trajectory_nrmse: Optional[float] = None
    eps_max: float = 0.05
    freq_max: float = 0.1

    @property
    def passed(self) -> bool:
        if not self.eps_L2 < self.eps_max:
            return False
        return self.freq_mismatch is None or self.freq_mismatch < self.freq_max

    def to_dict(self) -> Dict[str, Any]:
        return {
            "energy_captured": self.energy_captured,
            "output_error_L2": self.eps_L2,
            "freq_mismatch": self.freq_mismatch,
            "stability_margin_continuous": self.cont_margin,
            "stability_margin_discrete": self.disc_margin,
            "estimator_kappa": self.estimator_kappa,
            "speedup": self.speedup,
            "trajectory_nrmse": self.trajectory_nrmse,
            "passed": self.passed,
        }


def zoh_discretize(A_r, B_r, T_s: float) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of the reduced pair."""
    return zoh(A_r, B_r, T_s)


def admissible_sampling_period(
    requested: Optional[float], descriptor: Optional[SystemDescriptor], fallback: float
) -> Tuple[float, bool]:
    """Sampling period within min(0.1 tau_fast, 1/(20 f_max)); flags whether it was shrunk."""
    T_s = fallback if requested is None else float(requested)
    if descriptor is None:
        return T_s, False
    bound = descriptor.sampling_bound()
    if requested is None:
        return bound, fallback > bound * (1.0 + 1e-12)
    if T_s > bound * (1.0 + 1e-12):
        logger.warning("Sampling period %.4g s exceeds bound %.4g s, shrinking", T_s, bound)
        return bound, True
    return T_s, False


def output_estimator(C_r, reg: float = 1e-6, kappa_max: float = 1e6) -> Tuple[np.ndarray, float]:
    """Regularized left inverse G = (C_r^T C_r + reg I)^{-1} C_r^T and its conditioning."""
    C_r = np.atleast_2d(np.asarray(C_r, dtype=float))
    if C_r.size == 0:
        raise DomainError("C_r is empty")
    gram = C_r.T @ C_r + reg * np.eye(C_r.shape[1])
    kappa = float(np.linalg.cond(gram))
    if kappa > kappa_max:
        raise ConditioningError(
            f"output estimator condition number {kappa:.3e} exceeds {kappa_max:.1e}"
        )
    return np.linalg.solve(gram, C_r.T), kappa


def attach_estimator(
    model: ReducedModel, mode: str = "output", reg: float = 1e-6, kappa_max: float = 1e6
) -> ReducedModel:
    """Attach the reduced-state estimator.

    Falls back to state projection when G is ill-conditioned.
    """
    if mode == "projection":
        model.G, model.estimator = None, "projection"
        model.certificates["estimator_kappa"] = None
        return model
    try:
        model.G, kappa = output_estimator(model.C_r, reg, kappa_max)
        model.estimator = "output"
        model.certificates["estimator_kappa"] = kappa
    except ConditioningError as error:
        logger.warning("Output estimator rejected (%s), using state projection", error)
        model.G, model.estimator = None, "projection"
        gram = model.C_r.T @ model.C_r + reg * np.eye(model.r)
        model.certificates["estimator_kappa"] = float(np.linalg.cond(gram))
        model.certificates["estimator_fallback"] = True
    return model


def _check_energy(energy: float) -> None:
    if not 0.9 < energy < 1.0:
        raise DomainError(f"energy threshold must lie in (0.9, 1), got {energy}")


def _clamp_order(r: int, order_range: Optional[Tuple[int, int]], available: int) -> int:
    if order_range is not None:
        low, high = order_range
        r = min(max(r, low), high)
    return max(1, min(r, available))


def build_deim(nonlinear_snapshots, q: int) -> DeimData:
    """Greedy discrete empirical interpolation of nonlinear-term snapshots."""
    F = np.asarray(nonlinear_snapshots, dtype=float)
    if F.ndim != 2 or not np.any(F):
        raise DegenerateInputError("nonlinear snapshots are empty or zero")
    U, s, _ = scipy.linalg.svd(F, full_matrices=False)
    rank = numerical_rank(F, max(F.shape) * np.finfo(float).eps * s[0])
    if not 1 <= q <= rank:
        raise DomainError(f"DEIM needs 1 <= q <= rank {rank}, got q={q}")
    Phi_f = U[:, :q]
    indices = [int(np.argmax(np.abs(Phi_f[:, 0])))]
    for column in range(1, q):
        coeffs = np.linalg.solve(Phi_f[indices, :column], Phi_f[indices, column])
        residual = Phi_f[:, column] - Phi_f[:, :column] @ coeffs
        indices.append(int(np.argmax(np.abs(residual))))
    indices = np.asarray(indices)
    interpolation = Phi_f @ np.linalg.inv(Phi_f[indices, :])
    return DeimData(Phi_f=Phi_f, indices=indices, interpolation=interpolation)


def galerkin_vector_field(system: FullOrderSystem, Phi: np.ndarray, deim: Optional[DeimData]):
    """Projected vector field r' = Phi^T f(Phi r, u), optionally with interpolated nonlinearity."""
    if deim is not None and system.nonlinear_term is not None:
        A_r = Phi.T @ system.A @ Phi
        B_r = Phi.T @ system.B
        reduced_deim = deim.projector(Phi)
        indices = deim.indices

        def deim_field(r, u):
            sampled = system.nonlinear_term(Phi @ r)[indices]
            return A_r @ r + B_r @ u + reduced_deim @ sampled

        return deim_field
    return lambda r, u: Phi.T @ system.f(Phi @ r, u)


def project_onto_basis(
    system: FullOrderSystem,
    Phi: np.ndarray,
    T_s: float,
    method: str = "pod_galerkin",
    deim: Optional[DeimData] = None,
    energy_captured: Optional[float] = None,
) -> ReducedModel:
    """Galerkin projection of the full-order operators onto an orthonormal basis."""
    A_full, B_full = linearize(system)
    A_r = Phi.T @ A_full @ Phi
    B_r = Phi.T @ B_full
    C_r = output_matrix(system) @ Phi
    vector_field = None if system.is_linear else galerkin_vector_field(system, Phi, deim)
    A_d, B_d = zoh_discretize(A_r, B_r, T_s)
    return ReducedModel(
        method=method,
        Phi=Phi,
        A_r=A_r,
        B_r=B_r,
        C_r=C_r,
        A_d=A_d,
        B_d=B_d,
        T_s=T_s,
        energy_captured=energy_captured,
        deim=deim,
        vector_field=vector_field,
    )


def build_pod_galerkin(
    system: FullOrderSystem,
    snap: SnapshotSet,
    energy: float = 0.995,
    descriptor: Optional[SystemDescriptor] = None,
    order_range: Optional[Tuple[int, int]] = None,
    T_s: Optional[float] = None,
    deim_points: Optional[int] = None,
) -> ReducedModel:
    """Galerkin projection onto the dominant POD modes of the snapshots."""
    _check_energy(energy)
    svd = truncated_svd(snap.X, energy=energy)
    full = truncated_svd(snap.X, rank=min(snap.X.shape))
    r = _clamp_order(svd.rank, order_range, full.rank)
    Phi = full.U[:, :r]
    captured = float(np.sum(full.s[:r] ** 2) / np.sum(full.s**2))

    deim = None
    if not system.is_linear:
        if snap.F is not None and system.nonlinear_term is not None and np.any(snap.F):
            s_f = np.linalg.svd(snap.F, compute_uv=False)
            available = numerical_rank(snap.F, max(snap.F.shape) * np.finfo(float).eps * s_f[0])
            deim = build_deim(snap.F, min(deim_points or r, available))

    T_used, adapted = admissible_sampling_period(T_s, descriptor, snap.dt)
    model = project_onto_basis(system, Phi, T_used, deim=deim, energy_captured=captured)
    model.T_s_adapted = adapted
    logger.info("POD-Galerkin model r=%d captures %.5f of snapshot energy", r, captured)
    return model


def _psd_factor(W: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(0.5 * (W + W.T))
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def hankel_singular_values(system: LtiSystem, kron_max_n: int = 50) -> np.ndarray:
    """sqrt(eig(W_c W_o)) in decreasing order."""
    W_c = solve_continuous_lyapunov(system.A, system.B @ system.B.T, kron_max_n)
    W_o = solve_continuous_lyapunov(system.A.T, system.C.T @ system.C, kron_max_n)
    L_c, L_o = _psd_factor(W_c), _psd_factor(W_o)
    return scipy.linalg.svd(L_o.T @ L_c, compute_uv=False)


def build_balanced_truncation(
    system: LtiSystem,
    hsv_rel_threshold: float = 1e-8,
    descriptor: Optional[SystemDescriptor] = None,
    order_range: Optional[Tuple[int, int]] = None,
    T_s: Optional[float] = None,
    rank: Optional[int] = None,
    kron_max_n: int = 50,
) -> ReducedModel:
    """Square-root balanced truncation of a stable LTI system."""
    if not isinstance(system, LtiSystem):
        raise DomainError("balanced truncation needs a linear system")
    abscissa = spectral_abscissa(system.A)
    if abscissa >= 0:
        raise StabilityError(
            f"balanced truncation needs a Hurwitz A (max real part {abscissa:.3e})"
        )
    W_c = solve_continuous_lyapunov(system.A, system.B @ system.B.T, kron_max_n)
    W_o = solve_continuous_lyapunov(system.A.T, system.C.T @ system.C, kron_max_n)
    L_c, L_o = _psd_factor(W_c), _psd_factor(W_o)
    U, hsv, Vt = scipy.linalg.svd(L_o.T @ L_c)
    if hsv[0] <= 0:
        raise DegenerateInputError("system has no controllable and observable states")
    kept = int(np.sum(hsv / hsv[0] > hsv_rel_threshold))
    r = rank if rank is not None else _clamp_order(kept, order_range, kept)
    r = max(1, min(r, kept))
    scale = 1.0 / np.sqrt(hsv[:r])
    T_r = L_c @ Vt[:r].T * scale
    W_r = L_o @ U[:, :r] * scale
    A_r = W_r.T @ system.A @ T_r
    B_r = W_r.T @ system.B
    C_r = system.C @ T_r
    biorthogonality = float(np.linalg.norm(W_r.T @ T_r - np.eye(r)))
    if biorthogonality > 1e-6:
        logger.warning("Balanced projection bi-orthogonality residual %.2e", biorthogonality)
    T_used, adapted = admissible_sampling_period(T_s, descriptor, _default_period(A_r))
    A_d, B_d = zoh_discretize(A_r, B_r, T_used)
    logger.info("Balanced truncation kept r=%d of %d Hankel singular values", r, hsv.size)
    return ReducedModel(
        method="balanced_truncation",
        Phi=T_r,
        W=W_r,
        A_r=A_r,
        B_r=B_r,
        C_r=C_r,
        A_d=A_d,
        B_d=B_d,
        T_s=T_used,
        T_s_adapted=adapted,
        energy_captured=float(np.sum(hsv[:r]) / np.sum(hsv)),
        hsv=hsv,
        certificates={"biorthogonality_residual": biorthogonality},
    )


def _default_period(A_r: np.ndarray) -> float:
    """0.1 of the fastest reduced time constant when no descriptor is given."""
    fastest = float(np.max(np.abs(np.linalg.eigvals(A_r))))
    return 0.1 / fastest if fastest > 0 else 1.0


def _continuous_from_discrete(A_d: np.ndarray, B_d: np.ndarray, dt: float):
    """Invert the ZOH map: A_r = log(A_d)/dt and B_r from the hold integral."""
    eigenvalues = np.linalg.eigvals(A_d)
    if np.any(np.abs(eigenvalues) < 1e-12) or np.any(
        (np.abs(eigenvalues.imag) < 1e-12) & (eigenvalues.real < 0)
    ):
        logger.warning("A_d has eigenvalues without a real logarithm, using the Euler inverse")
        A_r = (A_d - np.eye(A_d.shape[0])) / dt
    else:
        A_r = np.real(scipy.linalg.logm(A_d)) / dt
    r = A_r.shape[0]
    augmented = np.zeros((2 * r, 2 * r))
    augmented[:r, :r] = A_r
    augmented[:r, r:] = np.eye(r)
    hold = scipy.linalg.expm(augmented * dt)[:r, r:]
    return A_r, np.linalg.solve(hold, B_d)


def build_dmd(
    snap: SnapshotSet,
    eig_threshold: float = 1e-3,
    energy: float = 0.995,
    descriptor: Optional[SystemDescriptor] = None,
    order_range: Optional[Tuple[int, int]] = None,
    T_s: Optional[float] = None,
    rank: Optional[int] = None,
) -> ReducedModel:
    """Dynamic mode decomposition with control on the POD-projected snapshots."""
    if snap.M < 2:
        raise DegenerateInputError("DMD needs at least two snapshot columns")
    if rank is None:
        svd = truncated_svd(snap.X, energy=energy)
        r = _clamp_order(svd.rank, order_range, np.linalg.matrix_rank(snap.X))
        svd = truncated_svd(snap.X, rank=r)
    else:
        svd = truncated_svd(snap.X, rank=rank)
    Phi = svd.U
    r = svd.rank
    Z = Phi.T @ snap.X
    Z1, Z2 = Z[:, :-1], Z[:, 1:]
    U1 = snap.U[:-1].T
    has_inputs = bool(np.any(U1))
    regressors = np.vstack([Z1, U1]) if has_inputs else Z1
    s = np.linalg.svd(regressors, compute_uv=False)
    rank_tol = 1e3 * max(regressors.shape) * np.finfo(float).eps * s[0]
    if numerical_rank(regressors, rank_tol) < regressors.shape[0]:
        raise ConditioningError("DMD regression is rank deficient")
    solution, *_ = np.linalg.lstsq(regressors.T, Z2.T, rcond=None)
    operators = solution.T
    A_d = operators[:, :r]
    B_d = operators[:, r:] if has_inputs else np.zeros((r, snap.U.shape[1]))

    eigenvalues, vectors = np.linalg.eig(A_d)
    small = np.abs(eigenvalues) <= eig_threshold
    if np.any(small):
        kept = np.where(small, 0.0, eigenvalues)
        A_d = np.real(vectors @ np.diag(kept) @ np.linalg.inv(vectors))
        logger.info("DMD discarded %d modes with |lambda| <= %.1e", int(small.sum()), eig_threshold)

    C_solution, *_ = np.linalg.lstsq(Z.T, snap.Y.T, rcond=None)
    C_r = C_solution.T
    A_r, B_r = _continuous_from_discrete(A_d, B_d, snap.dt)
    T_used, adapted = admissible_sampling_period(T_s, descriptor, snap.dt)
    if not math.isclose(T_used, snap.dt, rel_tol=1e-12):
        A_d, B_d = zoh_discretize(A_r, B_r, T_used)
    logger.info("DMD model r=%d fitted on %d snapshot pairs", r, snap.M - 1)
    return ReducedModel(
        method="dmd",
        Phi=Phi,
        A_r=A_r,
        B_r=B_r,
        C_r=C_r,
        A_d=A_d,
        B_d=B_d,
        T_s=T_used,
        T_s_adapted=adapted,
        energy_captured=svd.energy_captured,
        certificates={"discarded_modes": int(small.sum())},
    )


def _clamp_spectrum(A_d: np.ndarray, margin: float, eps: float) -> Tuple[np.ndarray, int]:
    """Radially project eigenvalues with modulus >= margin onto margin - eps.

    Works on the real Schur form so the clamped operator stays real.
    """
    T, Z = scipy.linalg.schur(A_d, output="real")
    n = T.shape[0]
    target = margin - eps
    clamped = 0
    i = 0
    while i < n:
        size = 2 if i + 1 < n and abs(T[i + 1, i]) > 1e-14 else 1
        block = T[i : i + size, i : i + size]
        modulus = float(np.max(np.abs(np.linalg.eigvals(block))))
        if modulus >= margin:
            T[i : i + size, i : i + size] = block * (target / modulus)
            clamped += size
        i += size
    return Z @ T @ Z.T, clamped


def _shift_spectrum(A_r: np.ndarray, alpha_min: float, eps: float) -> Tuple[np.ndarray, int]:
    """Move eigenvalues with real part >= -alpha_min to -alpha_min (1 + eps).

    Shifts the diagonal blocks of the real Schur form, leaving faster modes alone.
    """
    T, Z = scipy.linalg.schur(A_r, output="real")
    n = T.shape[0]
    target = -alpha_min * (1.0 + eps)
    shifted = 0
    i = 0
    while i < n:
        size = 2 if i + 1 < n and abs(T[i + 1, i]) > 1e-14 else 1
        block = T[i : i + size, i : i + size]
        real = float(np.max(np.linalg.eigvals(block).real))
        if real >= -alpha_min:
            T[i : i + size, i : i + size] = block - (real - target) * np.eye(size)
            shifted += size
        i += size
    return Z @ T @ Z.T, shifted


def certify_stability(
    model: ReducedModel,
    descriptor: Optional[SystemDescriptor] = None,
    disc_margin: float = 0.98,
    alpha_factor: float = 0.05,
    clamp_eps: float = 1e-3,
) -> Tuple[ReducedModel, Dict[str, Any]]:
    """Check discrete and continuous stability margins, stabilizing once when needed.

    A_d eigenvalues at or beyond ``disc_margin`` are clamped radially; A_r
    eigenvalues with real part above -alpha_min are shifted left and A_d is
    rediscretized. Raises SynthesisError if a margin still fails afterwards.
    """
    radius = spectral_radius(model.A_d)
    abscissa = spectral_abscissa(model.A_r)
    alpha_min = alpha_factor / descriptor.tau_fast if descriptor is not None else 0.0
    stabilized = False
    clamped = 0
    shifted = 0
    if radius >= disc_margin:
        logger.warning("ROM spectral radius %.4f >= %.2f, clamping spectrum", radius, disc_margin)
        A_d, clamped = _clamp_spectrum(model.A_d, disc_margin, clamp_eps)
        A_r, B_r = _continuous_from_discrete(A_d, model.B_d, model.T_s)
        model = replace(model, A_d=A_d, A_r=A_r, B_r=B_r, certificates=dict(model.certificates))
        radius, abscissa = spectral_radius(A_d), spectral_abscissa(A_r)
        stabilized = True
    if descriptor is not None and -abscissa <= alpha_min:
        logger.warning(
            "ROM continuous margin %.3e <= alpha_min %.3e, shifting slow modes",
            -abscissa,
            alpha_min,
        )
        A_r, shifted = _shift_spectrum(model.A_r, alpha_min, clamp_eps)
        A_d, B_d = zoh_discretize(A_r, model.B_r, model.T_s)
        model = replace(model, A_r=A_r, A_d=A_d, B_d=B_d, certificates=dict(model.certificates))
        radius, abscissa = spectral_radius(A_d), spectral_abscissa(A_r)
        stabilized = True
    if radius >= disc_margin:
        raise SynthesisError(f"ROM still unstable after stabilization (radius {radius:.4f})")
    if descriptor is not None and -abscissa <= alpha_min:
        raise SynthesisError(
            f"ROM continuous margin {-abscissa:.3e} still below alpha_min {alpha_min:.3e}"
        )
    certificate = {
        "spectral_radius": radius,
        "stability_margin_discrete": 1.0 - radius,
        "stability_margin_continuous": -abscissa,
        "alpha_min": alpha_min,
        "stabilized": stabilized,
        "clamped_modes": clamped,
        "shifted_modes": shifted,
        "basis_orthonormality": model.basis_orthonormality(),
    }
    model.certificates.update(certificate)
    return model, certificate


def simulate_reduced(model: ReducedModel, U: np.ndarray, r0: np.ndarray, dt: float) -> np.ndarray:
    """Reduced states (r x steps) under the input rows of U, column k at time k*dt."""
    steps = U.shape[0]
    states = np.empty((model.r, steps))
    states[:, 0] = r0
    if model.is_nonlinear:
        for k in range(steps - 1):
            states[:, k + 1] = rk4_step(model.vector_field, states[:, k], U[k], dt)
    else:
        A_d, B_d = zoh_discretize(model.A_r, model.B_r, dt)
        for k in range(steps - 1):
            states[:, k + 1] = A_d @ states[:, k] + B_d @ U[k]
    return states


def _transfer_mismatch(
    system: LtiSystem, model: ReducedModel, omega_max: float, points: int
) -> float:
    omegas = np.logspace(math.log10(omega_max / 1e4), math.log10(omega_max), points)
    s = 1j * omegas
    full = frequency_response(system.A, system.B, system.C, s)
    reduced = frequency_response(model.A_r, model.B_r, model.C_r, s)
    difference = full - reduced
    return float(max(np.linalg.norm(block, 2) for block in difference))


def _speedup(system: FullOrderSystem, model: ReducedModel, dt: float, steps: int) -> float:
    A_full, B_full = linearize(system)
    A_d, B_d = zoh(A_full, B_full, dt)
    x = np.zeros(A_d.shape[0])
    u = np.zeros(B_d.shape[1])
    start = time.perf_counter()
    for _ in range(steps):
        x = A_d @ x + B_d @ u
    full_time = time.perf_counter() - start
    r = np.zeros(model.r)
    start = time.perf_counter()
    for _ in range(steps):
        r = model.A_d @ r + model.B_d @ u
    reduced_time = time.perf_counter() - start
    return full_time / max(reduced_time, 1e-12)


def validate_rom(
    system: FullOrderSystem,
    model: ReducedModel,
    holdout: SnapshotSet,
    descriptor: Optional[SystemDescriptor] = None,
    eps_max: float = 0.05,
    freq_max: float = 0.1,
    freq_points: int = 400,
    speedup_steps: int = 1000,
) -> RomReport:
    """Time- and frequency-domain accuracy of ``model`` on held-out full-order data."""
    reference = holdout.clean_Y if holdout.clean_Y is not None else holdout.Y
    r0 = model.restrict(holdout.X[:, 0])
    states = simulate_reduced(model, holdout.U, r0, holdout.dt)
    predicted = model.C_r @ states
    norm = float(np.linalg.norm(reference))
    error = float(np.linalg.norm(reference - predicted))
    eps_l2 = error / norm if norm > 0 else (0.0 if error == 0 else math.inf)

    freq_mismatch = None
    nrmse = None
    if isinstance(system, LtiSystem):
        if descriptor is not None:
            omega_max = 2.0 * math.pi * descriptor.f_max
        else:
            omega_max = float(np.max(np.abs(np.linalg.eigvals(system.A))))
        freq_mismatch = _transfer_mismatch(system, model, omega_max, freq_points)
    else:
        spread = float(np.ptp(reference)) or 1.0
        nrmse = error / (math.sqrt(reference.size) * spread)

    report = RomReport(
        energy_captured=model.energy_captured,
        eps_L2=eps_l2,
        freq_mismatch=freq_mismatch,
        cont_margin=-spectral_abscissa(model.A_r),
        disc_margin=1.0 - spectral_radius(model.A_d),
        estimator_kappa=model.certificates.get("estimator_kappa"),
        speedup=_speedup(system, model, holdout.dt, speedup_steps),
        trajectory_nrmse=nrmse,
        eps_max=eps_max,
        freq_max=freq_max,
    )
    logger.info(
        "ROM validation: eps_L2=%.4f freq_mismatch=%s disc_margin=%.3f",
        report.eps_L2,
        "n/a" if freq_mismatch is None else f"{freq_mismatch:.4f}",
        report.disc_margin,
    )
    return report


def build_rom(
    method: str,
    system: FullOrderSystem,
    snap: SnapshotSet,
    descriptor: Optional[SystemDescriptor] = None,
    params: Optional[Dict[str, Any]] = None,
) -> ReducedModel:
    """Dispatch to the builder for ``method`` with keyword parameters from ``params``."""
    params = dict(params or {})
    if method == "pod_galerkin":
        return build_pod_galerkin(system, snap, descriptor=descriptor, **params)
    if method == "balanced_truncation":
        return build_balanced_truncation(system, descriptor=descriptor, **params)
    if method == "dmd":
        return build_dmd(snap, descriptor=descriptor, **params)
    raise DomainError(f"unknown ROM method '{method}'")

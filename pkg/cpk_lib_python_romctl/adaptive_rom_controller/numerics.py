# -*- coding: utf-8 -*-
"""Dense linear-algebra kernels shared by every other module."""
import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateInputError,
    DimensionError,
    DomainError,
    StabilityError,
    SynthesisError,
)

logger = logging.getLogger(__name__)

KRONECKER_LYAPUNOV_MAX_N = 50
DARE_TOLERANCE = 1e-12
DARE_MAX_ITERATIONS = 200
DARE_RESIDUAL_MAX = 1e-8


class TruncatedSvd(NamedTuple):
    """Leading singular triplets of a snapshot matrix."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    energy_captured: float

    @property
    def rank(self) -> int:
        """Number of retained triplets."""
        return int(self.s.size)


def as_matrix(name: str, value, square: bool = False) -> np.ndarray:
    """Return ``value`` as a finite 2-D float array or raise."""
    array = np.asarray(value, dtype=float)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty matrix, got shape {array.shape}")
    if square and array.shape[0] != array.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise DomainError(f"{name} has non-finite entries")
    return array


def spectral_radius(A: np.ndarray) -> float:
    """Largest eigenvalue magnitude."""
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def spectral_abscissa(A: np.ndarray) -> float:
    """Largest eigenvalue real part."""
    return float(np.max(np.real(np.linalg.eigvals(np.atleast_2d(A)))))


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """Return e^{At} (Pade-13 scaling and squaring)."""
    A = as_matrix("A", A, square=True)
    if not np.isfinite(t) or t < 0:
        raise DomainError(f"t must be a finite non-negative scalar, got {t}")
    return scipy.linalg.expm(A * float(t))


def zoh(A, B, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold pair (e^{A dt}, int_0^dt e^{A tau} dtau B) via one augmented exponential."""
    A = as_matrix("A", A, square=True)
    B = as_matrix("B", B)
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    n, m = B.shape
    augmented = np.zeros((n + m, n + m))
    augmented[:n, :n] = A
    augmented[:n, n:] = B
    expm_aug = scipy.linalg.expm(augmented * dt)
    return expm_aug[:n, :n], expm_aug[:n, n:]


def _check_symmetric(name: str, M: np.ndarray) -> None:
    scale = max(1.0, np.linalg.norm(M))
    if np.linalg.norm(M - M.T) > 1e-10 * scale:
        raise DomainError(f"{name} must be symmetric")


def solve_continuous_lyapunov(A, Q, kron_max_n: int = KRONECKER_LYAPUNOV_MAX_N) -> np.ndarray:
    """Solve A W + W A^T + Q = 0 for a Hurwitz A.

    Small systems use the Kronecker-vectorized direct solve; larger ones the
    Schur-based Bartels-Stewart solver.
    """
    A = as_matrix("A", A, square=True)
    Q = as_matrix("Q", Q, square=True)
    if Q.shape != A.shape:
        raise DimensionError(f"Q shape {Q.shape} does not match A shape {A.shape}")
    _check_symmetric("Q", Q)
    abscissa = spectral_abscissa(A)
    if abscissa >= 0:
        raise StabilityError(f"A is not Hurwitz (max real eigenvalue {abscissa:.3e})")

    n = A.shape[0]
    if n <= kron_max_n:
        identity = np.eye(n)
        operator = np.kron(identity, A) + np.kron(A, identity)
        vec_w = np.linalg.solve(operator, -Q.flatten(order="F"))
        W = vec_w.reshape((n, n), order="F")
    else:
        W = scipy.linalg.solve_continuous_lyapunov(A, -Q)
    return 0.5 * (W + W.T)


def dare_residual(A, B, Q, R, P) -> float:
    """Frobenius norm of the DARE residual at P."""
    BtP = B.T @ P
    gain_term = A.T @ P @ B @ np.linalg.solve(R + BtP @ B, BtP @ A)
    return float(np.linalg.norm(P - A.T @ P @ A + gain_term - Q))


def _doubling(A, G, Q, tol, max_iter) -> Optional[np.ndarray]:
    """Structure-preserving doubling; returns None when it fails to converge."""
    identity = np.eye(A.shape[0])
    A_k, G_k, H_k = A.copy(), G.copy(), Q.copy()
    for iteration in range(max_iter):
        W = identity + G_k @ H_k
        try:
            w_inv_a = np.linalg.solve(W, A_k)
            w_inv_g = np.linalg.solve(W, G_k)
        except np.linalg.LinAlgError:
            return None
        A_next = A_k @ w_inv_a
        G_next = G_k + A_k @ w_inv_g @ A_k.T
        H_next = H_k + A_k.T @ H_k @ w_inv_a
        G_next = 0.5 * (G_next + G_next.T)
        H_next = 0.5 * (H_next + H_next.T)
        if not (np.all(np.isfinite(H_next)) and np.all(np.isfinite(A_next))):
            return None
        if np.linalg.norm(H_next - H_k) <= tol * max(1.0, np.linalg.norm(H_next)):
            logger.debug("Doubling converged after %d iterations", iteration + 1)
            return H_next
        A_k, G_k, H_k = A_next, G_next, H_next
    return None


def _newton_kleinman(A, B, Q, R, tol, max_iter=50) -> np.ndarray:
    try:
        P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as error:
        logger.error("Riccati fallback failed: %s", error)
        raise SynthesisError(f"DARE has no stabilizing solution: {error}") from error
    for _ in range(max_iter):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        closed_loop = A - B @ K
        if spectral_radius(closed_loop) >= 1.0:
            raise SynthesisError("Newton-Kleinman iterate is not stabilizing")
        P_next = scipy.linalg.solve_discrete_lyapunov(closed_loop.T, Q + K.T @ R @ K)
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P) <= tol * max(1.0, np.linalg.norm(P_next)):
            return P_next
        P = P_next
    return P


def solve_dare(
    A,
    B,
    Q,
    R,
    tol: float = DARE_TOLERANCE,
    max_iter: int = DARE_MAX_ITERATIONS,
    residual_max: float = DARE_RESIDUAL_MAX,
) -> Tuple[np.ndarray, np.ndarray]:
    """Stabilizing solution P and gain K of the discrete algebraic Riccati equation."""
    A = as_matrix("A_d", A, square=True)
    B = as_matrix("B_d", B)
    Q = as_matrix("Q", Q, square=True)
    R = as_matrix("R", R, square=True)
    n, m = B.shape
    if n != A.shape[0] or Q.shape[0] != n or R.shape[0] != m:
        raise DimensionError(
            f"inconsistent DARE shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}"
        )
    _check_symmetric("Q", Q)
    _check_symmetric("R", R)
    try:
        r_factor = scipy.linalg.cho_factor(R)
    except np.linalg.LinAlgError as error:
        raise DomainError("R must be symmetric positive definite") from error

    G = B @ scipy.linalg.cho_solve(r_factor, B.T)
    P = _doubling(A, 0.5 * (G + G.T), Q, tol, max_iter)
    scale = 1.0 if P is None else max(1.0, float(np.linalg.norm(P)))
    if P is None or dare_residual(A, B, Q, R, P) > residual_max * scale:
        logger.warning("Doubling iteration did not meet tolerance, refining by Newton-Kleinman")
        P = _newton_kleinman(A, B, Q, R, tol)

    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    radius = spectral_radius(A - B @ K)
    if radius >= 1.0:
        raise SynthesisError(f"closed loop not stabilized (spectral radius {radius:.6f})")
    residual = dare_residual(A, B, Q, R, P)
    logger.debug("DARE residual %.3e, closed-loop radius %.4f", residual, radius)
    if residual > residual_max * max(1.0, float(np.linalg.norm(P))):
        raise SynthesisError(f"DARE residual {residual:.3e} exceeds {residual_max:.1e}")
    return P, K


def _fix_signs(U: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Make the largest-magnitude entry of every left singular vector positive."""
    pivots = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivots, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def energy_rank(s: np.ndarray, energy: float) -> int:
    """Smallest r whose leading squared singular values reach ``energy`` of the total."""
    squared = np.asarray(s, dtype=float) ** 2
    total = squared.sum()
    if total <= 0:
        return 0
    fractions = np.cumsum(squared) / total
    index = int(np.searchsorted(fractions, energy - 1e-12, side="left"))
    return min(index + 1, squared.size)


def truncated_svd(X, energy: Optional[float] = None, rank: Optional[int] = None) -> TruncatedSvd:
    """Leading SVD triplets of X chosen by energy fraction or fixed rank."""
    X = as_matrix("X", X)
    if (energy is None) == (rank is None):
        raise DomainError("give exactly one of energy or rank")
    U, s, Vt = scipy.linalg.svd(X, full_matrices=False)
    if s[0] <= 0:
        raise DegenerateInputError("snapshot matrix is identically zero")

    if energy is not None:
        if not 0 < energy <= 1:
            raise DomainError(f"energy fraction must lie in (0, 1], got {energy}")
        r = energy_rank(s, energy)
    else:
        if rank < 1:
            raise DomainError(f"rank must be at least 1, got {rank}")
        r = min(int(rank), s.size)

    U_r, V_r = _fix_signs(U[:, :r], Vt[:r, :].T)
    captured = float(np.sum(s[:r] ** 2) / np.sum(s**2))
    return TruncatedSvd(U=U_r, s=s[:r].copy(), V=V_r, energy_captured=captured)


def numerical_rank(X, tau: float) -> int:
    """Count singular values strictly above ``tau``."""
    if tau < 0:
        raise DomainError(f"rank tolerance must be non-negative, got {tau}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0
    if not np.all(np.isfinite(X)):
        raise DomainError("X has non-finite entries")
    s = np.linalg.svd(X, compute_uv=False)
    return int(np.sum(s > tau))


def orthonormal_basis(X, energy: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the column span of X, optionally only its dominant part."""
    X = as_matrix("X", X)
    U, s, _ = scipy.linalg.svd(X, full_matrices=False)
    if s[0] <= 0:
        raise DegenerateInputError("cannot span a zero matrix")
    tol = max(X.shape) * np.finfo(float).eps * s[0]
    r = int(np.sum(s > tol))
    if energy is not None:
        r = min(r, energy_rank(s, energy))
    return U[:, :r]


def principal_angle(U, X, energy: Optional[float] = None) -> float:
    """Largest principal angle in degrees between span(U) and the column span of X.

    X is orthonormalized first; with ``energy`` only its dominant directions count.
    """
    U = as_matrix("U", U)
    X = as_matrix("X", X)
    if U.shape[0] != X.shape[0]:
        raise DimensionError(f"U has {U.shape[0]} rows, X has {X.shape[0]}")
    if not np.any(X):
        raise DegenerateInputError("recent snapshot matrix is zero")
    Q_x = orthonormal_basis(X, energy)
    if Q_x.shape[1] > U.shape[1]:
        return 90.0
    overlap = np.linalg.svd(U.T @ Q_x, compute_uv=False)
    cos_min = float(np.clip(overlap.min(), 0.0, 1.0))
    residual = Q_x - U @ (U.T @ Q_x)
    sin_max = float(np.clip(np.linalg.norm(residual, 2), 0.0, 1.0))
    return float(np.degrees(np.arctan2(sin_max, cos_min)))


def frequency_response(A, B, C, points) -> np.ndarray:
    """Transfer matrices C (sI - A)^{-1} B at each complex point s, shape (k, p, m).

    Uses one eigendecomposition of A when its eigenvectors are well conditioned,
    otherwise a linear solve per point.
    """
    A = as_matrix("A", A, square=True)
    B = as_matrix("B", B)
    C = as_matrix("C", C)
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    eigenvalues, V = np.linalg.eig(A)
    if np.linalg.cond(V) < 1e8:
        left = C @ V
        right = np.linalg.solve(V, B)
        resolvent = 1.0 / (points[:, None] - eigenvalues[None, :])
        return np.einsum("pn,kn,nm->kpm", left, resolvent, right)
    identity = np.eye(A.shape[0])
    return np.stack([C @ np.linalg.solve(s * identity - A, B) for s in points])

# -*- coding: utf-8 -*-
"""Excitation design, snapshot collection and snapshot quality assessment."""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import DegenerateInputError, DimensionError, DomainError
from .numerics import energy_rank
from .systems import FullOrderSystem, SystemDescriptor, simulate

logger = logging.getLogger(__name__)

EXCITATION_KINDS = ("prbs", "multisine", "chirp", "step_impulse")

# Maximal-length Fibonacci LFSR taps, 1-based register positions.
LFSR_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
}
MIN_LFSR_ORDER = 7
SNR_CAP_DB = 200.0
CONDITION_CAP = 1e16

METHOD_EXCITATION = {
    "pod_galerkin": "prbs",
    "dmd": "multisine",
    "balanced_truncation": "step_impulse",
}


@dataclass(frozen=True)
class ExcitationSpec:
    """Parameters of one excitation experiment."""

    kind: str
    f_s: float
    duration: float
    amplitude: float
    channels: int
    seed: int = 0
    bit_duration: Optional[float] = None
    band: Tuple[float, float] = (0.0, 0.0)
    online: bool = False
    settle_time: Optional[float] = None
    noise_snr_db: Optional[float] = None
    quiet_duration: float = 0.0

    def __post_init__(self):
        if self.kind not in EXCITATION_KINDS:
            raise DomainError(f"unknown excitation kind '{self.kind}'")
        if self.f_s <= 0 or self.duration <= 0:
            raise DomainError("f_s and duration must be positive")
        if self.amplitude < 0:
            raise DomainError(f"amplitude must be non-negative, got {self.amplitude}")
        if self.channels < 1:
            raise DomainError(f"channel count must be positive, got {self.channels}")
        if self.kind == "prbs" and (self.bit_duration is None or self.bit_duration <= 0):
            raise DomainError("prbs excitation needs a positive bit_duration")

    @property
    def dt(self) -> float:
        """Sampling period."""
        return 1.0 / self.f_s

    @property
    def steps(self) -> int:
        """Sample count covering the duration."""
        return int(round(self.duration * self.f_s))

    def check_limits(
        self,
        descriptor: SystemDescriptor,
        sampling_factor: float = 20.0,
        offline_fraction: float = 0.8,
        online_fraction: float = 0.5,
    ) -> None:
        """Raise DomainError when sampling or amplitude violate the descriptor limits."""
        if self.f_s < sampling_factor * descriptor.f_max * (1.0 - 1e-9):
            raise DomainError(
                f"f_s={self.f_s:.4g} Hz is below "
                f"{sampling_factor:g}*f_max={descriptor.f_max:.4g} Hz"
            )
        fraction = online_fraction if self.online else offline_fraction
        if self.amplitude > fraction * descriptor.u_bound * (1.0 + 1e-9):
            raise DomainError(
                f"amplitude {self.amplitude:.4g} exceeds "
                f"{fraction:g}*u_max={descriptor.u_bound:.4g}"
            )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["band"] = list(self.band)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExcitationSpec":
        values = dict(data)
        values["band"] = tuple(values.get("band", (0.0, 0.0)))
        return cls(**values)


@dataclass
class SnapshotSet:
    """Sampled excitation experiment: inputs (M x m), states (N x M), outputs (p x M)."""

    U: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    dt: float
    excitation: ExcitationSpec
    F: Optional[np.ndarray] = None
    quiet_outputs: Optional[np.ndarray] = None
    clean_Y: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        M = self.X.shape[1]
        if self.U.shape[0] != M or self.Y.shape[1] != M:
            raise DimensionError(
                f"snapshot column counts disagree: "
                f"U {self.U.shape}, X {self.X.shape}, Y {self.Y.shape}"
            )
        if self.F is not None and self.F.shape != self.X.shape:
            raise DimensionError(
                f"nonlinear snapshots {self.F.shape} do not match X {self.X.shape}"
            )

    @property
    def M(self) -> int:
        """Number of snapshot columns."""
        return self.X.shape[1]


@dataclass
class QualityReport:
    """Snapshot quality metrics and the pass decision."""

    snr_db: float
    corr_condition: float
    coverage: float
    max_cross_correlation: float
    nyquist_margin: float
    rank_99: int
    snr_min_db: float = 40.0
    coverage_min: float = 0.9
    xcorr_max: float = 0.3
    nyquist_min: float = 5.0
    kappa_max: float = 1e6
    kappa_strict: float = 1e3
    coverage_gated: bool = True

    @property
    def checks(self) -> Dict[str, bool]:
        """Individual threshold checks; the conditioning ones are informational."""
        return {
            "snr": self.snr_db > self.snr_min_db,
            "coverage": self.coverage > self.coverage_min,
            "cross_correlation": self.max_cross_correlation < self.xcorr_max,
            "nyquist": self.nyquist_margin > self.nyquist_min,
            "conditioning": self.corr_condition < self.kappa_max,
            "conditioning_strict": self.corr_condition < self.kappa_strict,
        }

    @property
    def passed(self) -> bool:
        """SNR, cross-correlation, Nyquist and, when gated, coverage."""
        checks = self.checks
        gated = ["snr", "cross_correlation", "nyquist"]
        if self.coverage_gated:
            gated.append("coverage")
        return all(checks[name] for name in gated)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "snr_db": self.snr_db,
            "corr_condition": self.corr_condition,
            "coverage": self.coverage,
            "max_cross_correlation": self.max_cross_correlation,
            "nyquist_margin": self.nyquist_margin,
            "rank_99": self.rank_99,
            "coverage_gated": self.coverage_gated,
            "checks": self.checks,
            "passed": self.passed,
        }


def design_excitation(
    method: str,
    descriptor: SystemDescriptor,
    seed: int = 0,
    online: bool = False,
    duration_min: float = 300.0,
    sampling_factor: float = 20.0,
    offline_fraction: float = 0.8,
    online_fraction: float = 0.5,
) -> ExcitationSpec:
    """Excitation matched to the reduction method.

    POD uses PRBS, DMD a multisine over [0, w_max] and balanced truncation a
    step/impulse battery. Online re-excitation halves the amplitude cap and
    lasts ten fast time constants.
    """
    if method not in METHOD_EXCITATION:
        raise DomainError(f"no excitation mapping for method '{method}'")
    f_s = descriptor.sampling_frequency(sampling_factor)
    if online:
        duration = 10.0 * descriptor.tau_fast
        amplitude = online_fraction * descriptor.u_bound
    else:
        duration = max(duration_min, 5.0 * descriptor.tau_slow)
        amplitude = offline_fraction * descriptor.u_bound
    omega_max = 2.0 * math.pi * descriptor.f_max
    spec = ExcitationSpec(
        kind=METHOD_EXCITATION[method],
        f_s=f_s,
        duration=duration,
        amplitude=amplitude,
        channels=descriptor.m,
        seed=seed,
        bit_duration=max(descriptor.tau_fast, 5.0 / f_s),
        band=(0.0, omega_max),
        online=online,
        settle_time=5.0 * descriptor.tau_slow,
    )
    logger.debug("Designed %s excitation: %s", spec.kind, spec)
    return spec


def lfsr_bits(order: int, length: int, state: int = 1) -> np.ndarray:
    """Output bits of the maximal-length Fibonacci LFSR of ``order``."""
    if order not in LFSR_TAPS:
        raise DomainError(f"no maximal taps tabulated for order {order}")
    if not 0 < state < 2**order:
        raise DomainError(f"LFSR state must be a non-zero {order}-bit integer")
    register = [(state >> i) & 1 for i in range(order)]
    taps = LFSR_TAPS[order]
    bits = np.empty(length, dtype=np.int8)
    for k in range(length):
        bits[k] = register[-1]
        feedback = 0
        for tap in taps:
            feedback ^= register[tap - 1]
        register = [feedback] + register[:-1]
    return bits


def _prbs(spec: ExcitationSpec, steps: int, rng: np.random.Generator) -> np.ndarray:
    samples_per_bit = max(1, int(math.ceil(spec.bit_duration * spec.f_s - 1e-9)))
    n_bits = int(math.ceil(steps / samples_per_bit))
    order = MIN_LFSR_ORDER
    while 2**order - 1 < n_bits and order < max(LFSR_TAPS):
        order += 1
    period = 2**order - 1
    state = int(rng.integers(1, 2**order))
    sequence = lfsr_bits(order, period, state)
    signal = np.empty((steps, spec.channels))
    for channel in range(spec.channels):
        offset = (channel * period) // spec.channels
        bits = np.take(sequence, np.arange(offset, offset + n_bits), mode="wrap")
        levels = np.repeat(2.0 * bits - 1.0, samples_per_bit)[:steps]
        signal[:, channel] = spec.amplitude * levels
    return signal


def _multisine(spec: ExcitationSpec, steps: int) -> np.ndarray:
    m = spec.channels
    base = 2.0 * math.pi / spec.duration
    omega_max = spec.band[1] if spec.band[1] > 0 else math.pi * spec.f_s
    count = max(1, int(omega_max // base))
    count = max(m, (count // m) * m)
    harmonics = np.arange(1, count + 1)
    times = np.arange(steps) / spec.f_s
    schroeder = -math.pi * harmonics * (harmonics - 1) / count
    signal = np.empty((steps, m))
    for channel in range(m):
        phases = schroeder + 2.0 * math.pi * channel * harmonics / m
        waveform = np.cos(np.outer(times, base * harmonics) + phases).sum(axis=1)
        peak = np.max(np.abs(waveform))
        signal[:, channel] = 0.0 if peak == 0 else spec.amplitude * waveform / peak
    return signal


def _chirp(spec: ExcitationSpec, steps: int) -> np.ndarray:
    times = np.arange(steps) / spec.f_s
    low = 2.0 * math.pi / spec.duration
    high = spec.band[1] if spec.band[1] > low else math.pi * spec.f_s
    phase = low * times + 0.5 * (high - low) * times**2 / spec.duration
    signal = np.empty((steps, spec.channels))
    for channel in range(spec.channels):
        signal[:, channel] = spec.amplitude * np.sin(
            phase + 2.0 * math.pi * channel / spec.channels
        )
    return signal


def _step_impulse(spec: ExcitationSpec, steps: int) -> np.ndarray:
    """Per channel: a held step, a settling gap, then a one-sample impulse and its tail."""
    signal = np.zeros((steps, spec.channels))
    segment = steps // spec.channels
    if segment < 3:
        raise DimensionError(f"{steps} samples cannot hold a step/impulse battery per channel")
    third = segment // 3
    if spec.settle_time is not None and third * spec.dt < spec.settle_time:
        logger.debug(
            "Step/impulse gaps shortened to %.3g s (settling time %.3g s)",
            third * spec.dt,
            spec.settle_time,
        )
    for channel in range(spec.channels):
        start = channel * segment
        signal[start : start + third, channel] = spec.amplitude
        signal[start + 2 * third, channel] = spec.amplitude
    return signal


def generate_signal(spec: ExcitationSpec, steps: Optional[int] = None) -> np.ndarray:
    """Sampled input sequence (steps x channels) for ``spec``; deterministic in the seed."""
    expected = spec.steps
    steps = expected if steps is None else int(steps)
    if abs(steps - spec.duration * spec.f_s) > 1.0:
        raise DimensionError(
            f"{steps} steps inconsistent with duration {spec.duration} s at {spec.f_s} Hz"
        )
    if spec.amplitude == 0:
        return np.zeros((steps, spec.channels))
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "prbs":
        return _prbs(spec, steps, rng)
    if spec.kind == "multisine":
        return _multisine(spec, steps)
    if spec.kind == "chirp":
        return _chirp(spec, steps)
    return _step_impulse(spec, steps)


def _output_noise(clean: np.ndarray, snr_db: float) -> float:
    power = float(np.mean(np.sum(clean**2, axis=0)))
    return math.sqrt(power / (clean.shape[0] * 10.0 ** (snr_db / 10.0)))


def collect_snapshots(
    system: FullOrderSystem,
    spec: ExcitationSpec,
    x0: Optional[np.ndarray] = None,
    tau_fast: Optional[float] = None,
) -> SnapshotSet:
    """Simulate the full-order system under the excitation and record snapshots.

    Column k holds the state and output at t_k = k*dt and the input held over
    [t_k, t_{k+1}). With ``spec.noise_snr_db`` set, Gaussian output noise at
    that SNR is added and a noisy quiet window of ``spec.quiet_duration`` is
    recorded before the excitation.
    """
    steps = spec.steps
    U = generate_signal(spec, steps)
    start = system.x0 if x0 is None else np.asarray(x0, dtype=float)
    trajectory = simulate(system, U, x0=start, dt=spec.dt, steps=steps, tau_fast=tau_fast)
    X = trajectory.states[:, :steps]
    clean = trajectory.outputs[:, :steps]
    F = None
    nonlinear_term = getattr(system, "nonlinear_term", None)
    if nonlinear_term is not None:
        F = np.column_stack([nonlinear_term(column) for column in X.T])

    Y = clean
    quiet = None
    if spec.noise_snr_db is not None:
        rng = np.random.default_rng(spec.seed + 7919)
        sigma = _output_noise(clean, spec.noise_snr_db)
        Y = clean + sigma * rng.standard_normal(clean.shape)
        quiet_steps = int(round(spec.quiet_duration * spec.f_s))
        if quiet_steps > 0:
            rest = system.output(np.repeat(start[:, None], quiet_steps, axis=1))
            quiet = rest + sigma * rng.standard_normal(rest.shape)
        logger.debug("Added output noise sigma=%.3e (target %.1f dB)", sigma, spec.noise_snr_db)
    logger.info("Collected %d %s snapshots of a %d-state system", steps, spec.kind, X.shape[0])
    return SnapshotSet(
        U=U, X=X, Y=Y, dt=spec.dt, excitation=spec, F=F, quiet_outputs=quiet, clean_Y=clean
    )


def holdout_spec(spec: ExcitationSpec) -> ExcitationSpec:
    """PRBS validation experiment disjoint from ``spec`` (seed + 1)."""
    values = spec.to_dict()
    values.update(kind="prbs", seed=spec.seed + 1, band=spec.band)
    if values["bit_duration"] is None:
        values["bit_duration"] = 5.0 / spec.f_s
    return ExcitationSpec.from_dict(values)


def _coverage(X: np.ndarray) -> float:
    """Joint occupancy of the two leading principal-component scores.

    Each score axis is cut into ceil(sqrt(M)) equiprobable strata. The count of
    occupied cells is divided by the count M independent draws reach on the same
    grid in expectation, capped at 1. Data without spread scores the minimum.
    """
    M = X.shape[1]
    grid = int(math.ceil(math.sqrt(M)))
    cells = grid * grid
    expected = cells * (1.0 - (1.0 - 1.0 / cells) ** M) if cells > 1 else 1.0
    floor = 1.0 / expected
    centered = X - X.mean(axis=1, keepdims=True)
    _, s, Vt = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-12 * max(1.0, float(np.abs(X).max())):
        return floor
    strata = np.zeros((2, M), dtype=int)
    for component in range(min(2, s.size)):
        if s[component] <= 1e-12 * s[0]:
            continue
        scores = Vt[component]
        edges = np.quantile(scores, np.linspace(0.0, 1.0, grid + 1)[1:-1])
        strata[component] = np.searchsorted(edges, scores, side="right")
    occupied = np.unique(strata[0] * grid + strata[1]).size
    return float(min(1.0, occupied / expected))


def _max_cross_correlation(U: np.ndarray) -> float:
    if U.shape[1] < 2:
        return 0.0
    centered = U - U.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    worst = 0.0
    for i in range(U.shape[1]):
        for j in range(i + 1, U.shape[1]):
            if norms[i] == 0 or norms[j] == 0:
                continue
            value = abs(centered[:, i] @ centered[:, j]) / (norms[i] * norms[j])
            worst = max(worst, float(value))
    return worst


def assess_quality(
    snap: SnapshotSet,
    noise_estimate: Optional[float] = None,
    f_max: Optional[float] = None,
    thresholds: Optional[Dict[str, float]] = None,
) -> QualityReport:
    """Score a snapshot set against the identification data thresholds.

    ``noise_estimate`` is the per-channel output noise standard deviation.
    Without it the quiet window, when recorded, provides the estimate;
    otherwise the data counts as noiseless.
    """
    if snap.M == 0:
        raise DegenerateInputError("snapshot set is empty")
    signal_power = float(np.mean(np.sum(snap.Y**2, axis=0)))
    if signal_power <= 0:
        raise DegenerateInputError("outputs are identically zero; SNR is undefined")

    quiet_available = snap.quiet_outputs is not None and snap.quiet_outputs.shape[1] > 1
    if noise_estimate is None and quiet_available:
        quiet = snap.quiet_outputs - snap.quiet_outputs.mean(axis=1, keepdims=True)
        noise_power = float(np.mean(np.sum(quiet**2, axis=0)))
    elif noise_estimate is None:
        noise_power = 0.0
    else:
        noise_power = snap.Y.shape[0] * float(noise_estimate) ** 2
    if noise_power <= 0:
        snr_db = SNR_CAP_DB
    else:
        snr_db = min(SNR_CAP_DB, 10.0 * math.log10(signal_power / noise_power))

    s = np.linalg.svd(snap.X, compute_uv=False)
    nonzero = s[s > max(snap.X.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)]
    if nonzero.size == 0 or (nonzero.size == 1 and snap.M > 1):
        corr_condition = CONDITION_CAP
    else:
        # kappa(X^T X) over the numerically nonzero spectrum
        corr_condition = float(min(CONDITION_CAP, (nonzero[0] / nonzero[-1]) ** 2))

    if f_max is None:
        high = snap.excitation.band[1]
        f_max = high / (2.0 * math.pi) if high > 0 else snap.excitation.f_s / 40.0
    values = dict(thresholds or {})
    report = QualityReport(
        snr_db=snr_db,
        corr_condition=max(1.0, corr_condition),
        coverage=_coverage(snap.X),
        max_cross_correlation=_max_cross_correlation(snap.U),
        nyquist_margin=(1.0 / snap.dt) / (2.0 * f_max),
        rank_99=max(1, energy_rank(s, 0.99)) if s.size and s[0] > 0 else 0,
        coverage_gated=snap.excitation.kind != "step_impulse",
        **values,
    )
    logger.info(
        "Snapshot quality: snr=%.1f dB kappa=%.2e coverage=%.2f xcorr=%.2f nyquist=%.1f rank99=%d",
        report.snr_db,
        report.corr_condition,
        report.coverage,
        report.max_cross_correlation,
        report.nyquist_margin,
        report.rank_99,
    )
    return report

# -*- coding: utf-8 -*-
"""End-to-end workflow: initial design, closed-loop deployment with adaptation, evaluation.

The design runs four deterministic agents in order (selection, data, ROM,
control), each data/ROM/control phase wrapped in validate_retry. Deployment
simulates the full-order system under the reduced-model controller, diagnoses
each monitoring window and dispatches the matching adaptation action.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import criteria
from .adapt import (
    ENRICHMENT_FAILURE_LIMIT,
    RlsState,
    enrich_basis,
    orthonormalize,
    post_update_gate,
    retune,
    rls_refit,
)
from .config import Config
from .control import (
    Controller,
    control_step,
    design_lqr,
    design_mpc,
    inverse_variance_weights,
    prediction_horizon,
    reference_state,
)
from .errors import (
    ConsistencyError,
    DivergenceError,
    DomainError,
    PipelineError,
    RomControlError,
)
from .excitation import (
    ExcitationSpec,
    QualityReport,
    SnapshotSet,
    assess_quality,
    collect_snapshots,
    design_excitation,
    generate_signal,
    holdout_spec,
)
from .monitor import MonitorState, MonitorThresholds, diagnose, record_step, window_stats
from .numerics import dare_residual, solve_dare, spectral_abscissa, zoh
from .retry import LadderStep, PhaseEscalation, RetryOutcome, validate_retry
from .rom import (
    ReducedModel,
    RomReport,
    attach_estimator,
    build_rom,
    certify_stability,
    hankel_singular_values,
    project_onto_basis,
    simulate_reduced,
    validate_rom,
)
from .selection import (
    CONTROLLER_LABELS,
    METHOD_LABELS,
    MethodSelection,
    normalize_method,
    select_methods,
)
from .systems import (
    FullOrderSystem,
    LtiSystem,
    SystemDescriptor,
    linearize,
    output_matrix,
    perturb,
    rk4_step,
    simulate,
    steady_state,
)
from .trace import RunTrace

logger = logging.getLogger(__name__)

HANKEL_MAX_N = 2000
Selector = Callable[..., MethodSelection]


@dataclass
class Bundle:
    """Certified reduced model and controller ready for deployment."""

    descriptor: SystemDescriptor
    selection: MethodSelection
    model: ReducedModel
    controller: Controller
    Q_x: np.ndarray
    thresholds: MonitorThresholds
    params: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    reports: Dict[str, Any] = field(default_factory=dict)
    snapshots: Optional[SnapshotSet] = field(default=None, repr=False)
    trace: RunTrace = field(default_factory=RunTrace, repr=False)
    system_spec: Optional[Dict[str, Any]] = None

    @property
    def tau_dom(self) -> float:
        return dominant_time_constant(self.model, self.descriptor.tau_slow)

    def summary(self) -> Dict[str, Any]:
        return {
            "rom_method": self.model.method,
            "rom_dimension": self.model.r,
            "controller_type": self.controller.kind,
            "rho": self.controller.rho,
            "T_s": self.model.T_s,
            "estimator": self.model.estimator,
            "closed_loop_radius": self.controller.closed_loop_radius,
            "gain_margin_db": self.controller.margins.gm_db,
            "phase_margin_deg": self.controller.margins.pm_deg,
            "output_error_L2": (self.reports.get("rom") or {}).get("output_error_L2"),
            "trace_messages": len(self.trace.messages),
        }


@dataclass
class DataProducts:
    snap: SnapshotSet
    holdout: SnapshotSet
    quality: QualityReport
    outcome: RetryOutcome


@dataclass
class ControlCheck:
    """Design-time acceptance of one synthesized controller."""

    controller: Controller
    margins_ok: bool
    radius_ok: bool

    @property
    def passed(self) -> bool:
        return self.margins_ok and self.radius_ok


def dominant_time_constant(model: ReducedModel, fallback: float = 1.0) -> float:
    """1/alpha of the slowest retained reduced mode."""
    alpha = -spectral_abscissa(model.A_r)
    return 1.0 / alpha if alpha > 0 else fallback


def check_consistency(descriptor: SystemDescriptor, system: FullOrderSystem) -> None:
    """Raise ConsistencyError when descriptor dimensions or linearity disagree with the system."""
    mismatches = [
        f"{name}: descriptor {declared} vs system {actual}"
        for name, declared, actual in (
            ("N", descriptor.N, system.n),
            ("m", descriptor.m, system.m),
            ("p", descriptor.p, system.p),
        )
        if declared != actual
    ]
    if descriptor.linearity == "LTI" and not system.is_linear:
        mismatches.append("descriptor declares LTI for a nonlinear system")
    if mismatches:
        raise ConsistencyError("descriptor and system disagree: " + "; ".join(mismatches))


def _summary(outcome: RetryOutcome) -> Dict[str, Any]:
    return {"num_iterations": outcome.iterations, "issues_resolved": list(outcome.fixes)}


def _shape(value: Optional[np.ndarray]) -> Dict[str, Any]:
    return {"shape": [] if value is None else list(np.shape(value))}


# data phase


def _data_ladder(descriptor: SystemDescriptor, config: Config) -> List[LadderStep]:
    def extend_duration(params, _report):
        params["duration"] = params["duration"] * 1.5
        return params

    def raise_sampling(params, _report):
        params["f_s"] = params["f_s"] * 1.5
        return params

    def raise_amplitude(params, _report):
        params["amplitude"] = config.offline_amplitude_fraction * descriptor.u_bound
        return params

    def switch_to_prbs(params, _report):
        params["kind"] = "prbs"
        if not params.get("bit_duration"):
            params["bit_duration"] = max(descriptor.tau_fast, 5.0 / params["f_s"])
        return params

    return [
        LadderStep("extend_duration", extend_duration),
        LadderStep("raise_sampling_rate", raise_sampling),
        LadderStep("raise_amplitude", raise_amplitude),
        LadderStep("switch_to_prbs", switch_to_prbs, "algorithm_change"),
    ]


def initial_excitation(method: str, descriptor: SystemDescriptor, config: Config) -> ExcitationSpec:
    spec = design_excitation(
        method,
        descriptor,
        seed=config.seed,
        duration_min=config.excitation_duration_min,
        sampling_factor=config.sampling_factor,
        offline_fraction=config.offline_amplitude_fraction,
        online_fraction=config.online_amplitude_fraction,
    )
    if config.noise_snr_db is not None:
        spec = replace(
            spec, noise_snr_db=config.noise_snr_db, quiet_duration=2.0 * descriptor.tau_fast
        )
    return spec


def _data_phase(
    system: FullOrderSystem,
    descriptor: SystemDescriptor,
    selection: MethodSelection,
    config: Config,
    trace: RunTrace,
) -> DataProducts:
    label = METHOD_LABELS[selection.rom_method]

    def run(params):
        spec = ExcitationSpec.from_dict(params)
        spec.check_limits(
            descriptor,
            config.sampling_factor,
            config.offline_amplitude_fraction,
            config.online_amplitude_fraction,
        )
        snap = collect_snapshots(system, spec, tau_fast=descriptor.tau_fast)
        quality = assess_quality(
            snap, f_max=descriptor.f_max, thresholds=config.quality_thresholds()
        )
        return snap, quality

    spec = initial_excitation(selection.rom_method, descriptor, config)
    outcome = validate_retry(
        "data_collection",
        run,
        _data_ladder(descriptor, config),
        spec.to_dict(),
        config.k_max,
        trace,
        label,
    )
    snap, quality = outcome.artifact, outcome.report
    holdout = collect_snapshots(system, holdout_spec(snap.excitation), tau_fast=descriptor.tau_fast)
    trace.add(
        "data_output",
        {
            "agent_name": "Data_Agent",
            "task_completed": True,
            "rom_method": label,
            "data_products": {
                "snapshot_matrix": _shape(snap.X),
                "input_matrix": _shape(snap.U),
                "output_matrix": _shape(snap.Y),
                "nonlinear_snapshots": _shape(snap.F),
                "holdout_matrix": _shape(holdout.X),
            },
            "quality_assessment": {
                "snr_db": quality.snr_db,
                "condition_number_correlation": quality.corr_condition,
                "coverage": quality.coverage,
                "coverage_gated": quality.coverage_gated,
                "max_cross_correlation": quality.max_cross_correlation,
                "nyquist_margin": quality.nyquist_margin,
                "rank_99": quality.rank_99,
                "checks": quality.checks,
                "passed": quality.passed,
            },
            "sampling_info": {
                "f_s_hz": snap.excitation.f_s,
                "dt_s": snap.dt,
                "excitation_type": snap.excitation.kind,
                "duration_s": snap.excitation.duration,
                "amplitude": snap.excitation.amplitude,
                "seed": snap.excitation.seed,
            },
            "code_agent_summary": _summary(outcome),
        },
    )
    return DataProducts(snap, holdout, quality, outcome)


# ROM phase


def rom_parameters(selection: MethodSelection, config: Config) -> Dict[str, Any]:
    params: Dict[str, Any] = {
        "order_range": list(selection.rom_order_range),
        "T_s": selection.T_s,
        "disc_margin": config.disc_margin,
    }
    if selection.rom_method in ("pod_galerkin", "dmd"):
        params["energy"] = config.pod_energy
    return params


def build_certified_model(
    method: str,
    system: FullOrderSystem,
    snap: SnapshotSet,
    descriptor: SystemDescriptor,
    params: Dict[str, Any],
    config: Config,
) -> ReducedModel:
    """build_rom, certify_stability and attach_estimator for one parameter set."""
    builder = {key: value for key, value in params.items() if key != "disc_margin"}
    model = build_rom(method, system, snap, descriptor, builder)
    model, _ = certify_stability(
        model,
        descriptor,
        params.get("disc_margin", config.disc_margin),
        config.alpha_factor,
        config.clamp_eps,
    )
    return attach_estimator(
        model, config.estimator, config.estimator_reg, config.estimator_kappa_max
    )


def _rom_ladder(method: str, config: Config, built: Dict[str, int]) -> List[LadderStep]:
    def raise_energy(params, _report):
        params["energy"] = max(params.get("energy", config.pod_energy), config.pod_energy_retry)
        return params

    def halve_sampling_period(params, _report):
        params["T_s"] = params["T_s"] * 0.5
        return params

    def raise_order(params, _report):
        r = built.get("r") or params["order_range"][0]
        params["order_range"] = [r + 2, r + 2]
        return params

    def lower_disc_margin(params, _report):
        params["disc_margin"] = min(params.get("disc_margin", config.disc_margin), 0.95)
        return params

    steps = [
        LadderStep("halve_sampling_period", halve_sampling_period),
        LadderStep("raise_order", raise_order),
        LadderStep("clamp_eigenvalues", lower_disc_margin),
    ]
    if method in ("pod_galerkin", "dmd"):
        steps.insert(0, LadderStep("raise_energy", raise_energy))
    return steps


def _rom_phase(
    system: FullOrderSystem,
    descriptor: SystemDescriptor,
    selection: MethodSelection,
    data: DataProducts,
    config: Config,
    trace: RunTrace,
) -> Tuple[ReducedModel, RomReport, RetryOutcome]:
    method = selection.rom_method
    label = METHOD_LABELS[method]
    built: Dict[str, int] = {}

    def run(params):
        model = build_certified_model(method, system, data.snap, descriptor, params, config)
        built["r"] = model.r
        report = validate_rom(
            system,
            model,
            data.holdout,
            descriptor,
            config.eps_max,
            config.freq_max,
            config.freq_points,
        )
        return model, report

    outcome = validate_retry(
        "rom_construction",
        run,
        _rom_ladder(method, config, built),
        rom_parameters(selection, config),
        config.k_max,
        trace,
        label,
    )
    model, report = outcome.artifact, outcome.report
    trace.add(
        "rom_output",
        {
            "agent_name": "ROM_Agent",
            "task_completed": True,
            "rom_method": label,
            "rom_dimension": model.r,
            "operators": {
                "A_d": _shape(model.A_d),
                "B_d": _shape(model.B_d),
                "C_r": _shape(model.C_r),
                "Phi": _shape(model.Phi),
                "G": _shape(model.G),
            },
            "performance_metrics": {
                "stability_margin_continuous": report.cont_margin,
                "stability_margin_discrete": report.disc_margin,
                "output_error_L2": report.eps_L2,
                "speedup_factor": report.speedup,
                "energy_captured": report.energy_captured,
                "freq_mismatch": report.freq_mismatch,
                "trajectory_nrmse": report.trajectory_nrmse,
            },
            "discretization": {
                "method": "zero_order_hold",
                "T_s_used": model.T_s,
                "T_s_adapted": model.T_s_adapted,
            },
            "performance_certificates": {"validation_passed": report.passed, **model.certificates},
            "code_agent_summary": _summary(outcome),
        },
    )
    return model, report, outcome


# control phase


def synthesize_controller(
    kind: str,
    model: ReducedModel,
    descriptor: SystemDescriptor,
    Q_x: np.ndarray,
    params: Dict[str, Any],
    config: Config,
) -> Controller:
    if kind == "mpc":
        horizons = params.get("horizons")
        return design_mpc(
            model,
            descriptor,
            Q_x=Q_x,
            rho=params["rho"],
            horizon_cap=config.mpc_horizon_cap,
            horizons=None if horizons is None else tuple(horizons),
            qp_tol=params.get("qp_tol", config.qp_tol),
            qp_max_iter=config.qp_max_iter,
            u_min=descriptor.u_min,
            u_max=descriptor.u_max,
            margin_points=config.margin_points,
        )
    return design_lqr(
        model, Q_x, params["rho"], descriptor.u_min, descriptor.u_max, config.margin_points
    )


def _control_ladder(kind: str, model: ReducedModel, config: Config) -> List[LadderStep]:
    def scale_rho(params, report):
        margins_failed = report is None or not report.margins_ok
        params["rho"] = params["rho"] * (1.3 if margins_failed else 0.7)
        return params

    def shorten_horizon(params, report):
        horizons = params.get("horizons")
        if horizons is None and report is not None:
            horizons = report.controller.horizons
        if horizons is None:
            horizons = prediction_horizon(model, config.mpc_horizon_cap)
        N_p = max(1, int(math.ceil(horizons[0] * 0.5)))
        params["horizons"] = [N_p, int(math.ceil(N_p / 3.0))]
        return params

    def relax_qp_tolerance(params, _report):
        params["qp_tol"] = params.get("qp_tol", config.qp_tol) * 10.0
        return params

    if kind == "mpc":
        return [
            LadderStep("scale_rho", scale_rho),
            LadderStep("shorten_horizon", shorten_horizon),
            LadderStep("relax_qp_tolerance", relax_qp_tolerance),
            LadderStep("scale_rho", scale_rho),
        ]
    return [LadderStep("scale_rho", scale_rho)]


def _control_phase(
    model: ReducedModel,
    descriptor: SystemDescriptor,
    kind: str,
    rho: float,
    Q_x: np.ndarray,
    config: Config,
    trace: RunTrace,
) -> Tuple[Controller, RetryOutcome]:
    def run(params):
        ctrl = synthesize_controller(kind, model, descriptor, Q_x, params, config)
        margins_ok = ctrl.margins.passes(config.gm_min_db, config.pm_min_deg, config.sv_min, ctrl.m)
        return ctrl, ControlCheck(ctrl, margins_ok, ctrl.closed_loop_radius < config.radius_max)

    params: Dict[str, Any] = {"kind": kind, "rho": rho}
    if kind == "mpc":
        params.update(horizons=None, qp_tol=config.qp_tol)
    outcome = validate_retry(
        "controller_design",
        run,
        _control_ladder(kind, model, config),
        params,
        config.k_max,
        trace,
        CONTROLLER_LABELS[kind],
    )
    ctrl = outcome.artifact
    R = ctrl.rho * np.eye(ctrl.m)
    trace.add(
        "control_output",
        {
            "agent_name": "Control_Agent",
            "task_completed": True,
            "controller_type": CONTROLLER_LABELS[kind],
            "gain_matrix": {**_shape(ctrl.K), "norm": float(np.linalg.norm(ctrl.K))},
            "design_parameters": {
                "rho": ctrl.rho,
                "Q_structure": "inverse_variance",
                "horizons": None if ctrl.horizons is None else list(ctrl.horizons),
                "input_bounds": {"u_min": ctrl.u_min, "u_max": ctrl.u_max},
            },
            "performance_metrics": {
                "closed_loop_stable": bool(ctrl.closed_loop_radius < 1.0),
                "closed_loop_spectral_radius": ctrl.closed_loop_radius,
                "stability_margin_discrete": 1.0 - ctrl.closed_loop_radius,
                "dare_residual": dare_residual(model.A_d, model.B_d, ctrl.Q_r, R, ctrl.P),
                "gain_norm": float(np.linalg.norm(ctrl.K)),
                "gain_margin_db": ctrl.margins.gm_db,
                "phase_margin_deg": ctrl.margins.pm_deg,
                "min_singular_value": ctrl.margins.min_sv,
            },
            "control_law": (
                "u = first move of the dual-mode MPC over (N_p, N_c)"
                if kind == "mpc"
                else "u = clip(u_ss - K (r_hat - r_ref), u_min, u_max)"
            ),
            "tuning_info": {"rho_initial": rho, "rho_final": ctrl.rho, "fixes": outcome.fixes},
            "code_agent_summary": _summary(outcome),
        },
    )
    return ctrl, outcome


def run_design(
    descriptor: SystemDescriptor,
    system: FullOrderSystem,
    config: Optional[Config] = None,
    trace: Optional[RunTrace] = None,
    selector: Selector = select_methods,
    system_spec: Optional[Dict[str, Any]] = None,
) -> Bundle:
    """Central, Data, ROM and Control phases; returns a bundle that passed every design gate.

    ``selector`` is the decision point for method selection. A data or ROM
    phase that escalates excludes its method and selection runs again.
    """
    config = config or Config()
    trace = trace if trace is not None else RunTrace(seed=config.seed)
    check_consistency(descriptor, system)
    excluded: List[str] = []
    while True:
        try:
            selection = selector(
                descriptor,
                excluded=excluded,
                bt_max_n=config.bt_max_n,
                sampling_factor=config.sampling_factor,
                default_rho=config.rho,
            )
        except DomainError as error:
            if not excluded:
                raise
            logger.error("Design failed: %s", error)
            trace.add("failure", {"reason": str(error), "step": None})
            raise PipelineError(
                f"design failed, every ROM method escalated: {error}", trace
            ) from error
        trace.add("central_output", {**selection.to_dict(descriptor), "seed": config.seed})
        try:
            data = _data_phase(system, descriptor, selection, config, trace)
            model, rom_report, rom_outcome = _rom_phase(
                system, descriptor, selection, data, config, trace
            )
        except PhaseEscalation as escalation:
            logger.warning("Excluding %s: %s", selection.rom_method, escalation)
            excluded.append(selection.rom_method)
            continue
        break

    Q_x = inverse_variance_weights(data.snap.X)
    kind = selection.controller_type
    try:
        controller, control_outcome = _control_phase(
            model, descriptor, kind, selection.rho, Q_x, config, trace
        )
    except PhaseEscalation as escalation:
        if kind != "mpc":
            raise PipelineError(f"controller design failed: {escalation}", trace) from escalation
        logger.warning("MPC design escalated, falling back to LQR")
        selection = replace(
            selection, controller_type="lqr", controller_rationale="MPC design escalated"
        )
        try:
            controller, control_outcome = _control_phase(
                model, descriptor, "lqr", selection.rho, Q_x, config, trace
            )
        except PhaseEscalation as again:
            raise PipelineError(f"controller design failed: {again}", trace) from again

    trace.add(
        "evaluation_output",
        {
            "agent_name": "Evaluation_Agent",
            "verdict": "Good",
            "condition_triggered": None,
            "timestamp": 0.0,
            "performance_acceptable": True,
            "windowed_averages": {"e_avg": None, "rho_avg": rom_report.eps_L2, "s_avg": 0.0},
            "diagnostics": {
                "phase": "design",
                "current_rom_method": METHOD_LABELS[model.method],
                "current_controller_type": CONTROLLER_LABELS[controller.kind],
                "rom_validation_passed": rom_report.passed,
                "data_quality_passed": data.quality.passed,
            },
            "routing": {
                "target_agent": None,
                "action": None,
                "reason": "Design gates passed",
                "priority": None,
                "method_change_recommended": False,
            },
            "adaptation_required": False,
        },
    )
    trace.certificates.update(
        {"rom": dict(model.certificates), "controller": controller.to_dict()}
    )
    logger.info(
        "Design complete: %s r=%d + %s (rho=%.4g)",
        model.method,
        model.r,
        controller.kind,
        controller.rho,
    )
    return Bundle(
        descriptor=descriptor,
        selection=selection,
        model=model,
        controller=controller,
        Q_x=Q_x,
        thresholds=config.monitor_thresholds(),
        params={
            "data_collection": data.outcome.params,
            "rom_construction": rom_outcome.params,
            "controller_design": control_outcome.params,
        },
        reports={
            "quality": data.quality.to_dict(),
            "rom": rom_report.to_dict(),
            "controller": controller.to_dict(),
        },
        snapshots=data.snap,
        trace=trace,
        system_spec=system_spec,
    )


def replay_design(
    trace: RunTrace,
    system: FullOrderSystem,
    descriptor: SystemDescriptor,
    config: Optional[Config] = None,
) -> Bundle:
    """Rebuild model and controller from the parameters of a trace's accepted phases."""
    config = config or Config(seed=trace.seed)
    check_consistency(descriptor, system)
    accepted = {}
    for task in ("data_collection", "rom_construction", "controller_design"):
        message = trace.last("code_agent_output", task_type=task, task_completed=True)
        if message is None:
            raise ConsistencyError(f"trace has no accepted {task} phase")
        accepted[task] = message
    central = trace.last("central_output")
    if central is None:
        raise ConsistencyError("trace has no central_output message")

    method = normalize_method(accepted["rom_construction"]["method_used"])
    kind = str(accepted["controller_design"]["method_used"]).lower()
    spec = ExcitationSpec.from_dict(accepted["data_collection"]["parameters"])
    snap = collect_snapshots(system, spec, tau_fast=descriptor.tau_fast)
    rom_params = accepted["rom_construction"]["parameters"]
    model = build_certified_model(method, system, snap, descriptor, rom_params, config)
    Q_x = inverse_variance_weights(snap.X)
    control_params = accepted["controller_design"]["parameters"]
    controller = synthesize_controller(kind, model, descriptor, Q_x, control_params, config)

    design = central["design_parameters"]
    selection = MethodSelection(
        rom_method=method,
        controller_type=kind,
        rom_rationale="replayed from trace",
        controller_rationale="replayed from trace",
        rom_order_range=tuple(design["rom_order_range"]),
        f_s=central["sampling_requirements"]["f_s_recommended_hz"],
        T_s=design.get("T_s", model.T_s),
        rho=control_params["rho"],
    )
    logger.info("Replayed design: %s r=%d + %s", method, model.r, kind)
    return Bundle(
        descriptor=descriptor,
        selection=selection,
        model=model,
        controller=controller,
        Q_x=Q_x,
        thresholds=config.monitor_thresholds(),
        params={
            "data_collection": spec.to_dict(),
            "rom_construction": dict(rom_params),
            "controller_design": dict(control_params),
        },
        snapshots=snap,
        trace=trace,
    )


# deployment


@dataclass
class DriftEvent:
    """Multiplicative drift of named full-order parameters starting at ``step``."""

    step: int
    parameters: Dict[str, float]
    ramp_steps: int = 0

    def factors_at(self, k: int) -> Dict[str, float]:
        if k < self.step:
            return {}
        if self.ramp_steps <= 0 or k >= self.step + self.ramp_steps:
            fraction = 1.0
        else:
            fraction = (k - self.step + 1) / self.ramp_steps
        return {name: 1.0 + fraction * (factor - 1.0) for name, factor in self.parameters.items()}


@dataclass
class Scenario:
    """Reference, drift, disturbance and actuator settings of one closed-loop run.

    The reference is the output reached in steady state under a constant input
    of ``reference_level * u_max`` unless ``y_ref`` gives it directly;
    ``reference_steps`` switches the level at given steps. A disturbance kicks
    the state along a sine mode shape, scaled to ``disturbance_amplitude``
    times the norm of the reference state.
    """

    name: str = "nominal"
    reference_level: float = 0.5
    y_ref: Optional[List[float]] = None
    reference_steps: List[Tuple[int, float]] = field(default_factory=list)
    drift: List[DriftEvent] = field(default_factory=list)
    disturbance_mode: Optional[int] = None
    disturbance_amplitude: float = 0.0
    disturbance_period: Optional[float] = None
    input_bounds: Optional[Tuple[float, float]] = None
    noise_std: float = 0.0
    start: str = "steady"
    steps: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.start not in ("steady", "rest"):
            raise DomainError(f"scenario start must be 'steady' or 'rest', got '{self.start}'")
        if self.noise_std < 0 or self.disturbance_amplitude < 0:
            raise DomainError("noise and disturbance amplitudes must be non-negative")

    def factors_at(self, k: int) -> Dict[str, float]:
        factors: Dict[str, float] = {}
        for event in self.drift:
            for name, value in event.factors_at(k).items():
                factors[name] = factors.get(name, 1.0) * value
        return factors

    def level_at(self, k: int) -> float:
        level = self.reference_level
        for step, value in sorted(self.reference_steps):
            if k >= step:
                level = value
        return level

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scenario":
        values = dict(data)
        values["drift"] = [
            event if isinstance(event, DriftEvent) else DriftEvent(**event)
            for event in values.get("drift", [])
        ]
        values["reference_steps"] = [tuple(item) for item in values.get("reference_steps", [])]
        if values.get("input_bounds") is not None:
            values["input_bounds"] = tuple(values["input_bounds"])
        try:
            return cls(**values)
        except TypeError as error:
            raise DomainError(f"invalid scenario: {error}") from error

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "reference_level": self.reference_level,
            "y_ref": self.y_ref,
            "reference_steps": [list(item) for item in self.reference_steps],
            "drift": [
                {"step": e.step, "parameters": dict(e.parameters), "ramp_steps": e.ramp_steps}
                for e in self.drift
            ],
            "disturbance_mode": self.disturbance_mode,
            "disturbance_amplitude": self.disturbance_amplitude,
            "disturbance_period": self.disturbance_period,
            "input_bounds": None if self.input_bounds is None else list(self.input_bounds),
            "noise_std": self.noise_std,
            "start": self.start,
            "steps": self.steps,
            "seed": self.seed,
        }


def reference_output(
    system: FullOrderSystem, descriptor: SystemDescriptor, level: float
) -> np.ndarray:
    """Output in steady state under the constant input level * u_max."""
    u = np.full(system.m, level * descriptor.u_max)
    return np.atleast_1d(system.output(steady_state(system, u)))


def mode_shape(n: int, mode: int) -> np.ndarray:
    """Unit sine mode sin(pi * mode * (i + 1) / (n + 1))."""
    shape = np.sin(math.pi * mode * np.arange(1, n + 1) / (n + 1))
    norm = float(np.linalg.norm(shape))
    if norm == 0:
        raise DomainError(f"mode {mode} vanishes on {n} nodes")
    return shape / norm


class _Plant:
    """Full-order system advanced one sampling period at a time."""

    def __init__(self, system: FullOrderSystem, dt: float, tau_fast: float):
        self.dt = dt
        self.tau_fast = tau_fast
        self.set_system(system)

    def set_system(self, system: FullOrderSystem) -> None:
        self.system = system
        self._discrete = zoh(system.A, system.B, self.dt) if isinstance(system, LtiSystem) else None

    def output(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(self.system.output(x))

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self._discrete is not None:
            A_d, B_d = self._discrete
            return A_d @ x + B_d @ u
        trajectory = simulate(
            self.system, u[None, :], x0=x, dt=self.dt, steps=1, tau_fast=self.tau_fast
        )
        return trajectory.states[:, 1]


def _propagate(model: ReducedModel, r: np.ndarray, u: np.ndarray) -> np.ndarray:
    if model.is_nonlinear:
        return rk4_step(model.vector_field, r, u, model.T_s)
    return model.step(r, u)


@dataclass
class AdaptiveRun:
    """Logs and outcome of one closed-loop run."""

    scenario: Scenario
    dt: float
    Y: np.ndarray
    U: np.ndarray
    Y_ref: np.ndarray
    metrics: np.ndarray
    verdicts: List[Dict[str, Any]]
    events: List[Dict[str, Any]]
    window_costs: List[Tuple[int, Optional[float]]]
    model: ReducedModel
    controller: Controller
    trace: RunTrace
    halted_at: Optional[int] = None
    failed_at: Optional[int] = None

    @property
    def steps(self) -> int:
        return self.Y.shape[1]

    def first_condition(self) -> Optional[str]:
        """First verdict other than Good and Indeterminate."""
        for verdict in self.verdicts:
            if verdict["kind"] not in ("Good", "Indeterminate"):
                return verdict["kind"]
        return None

    def summary(self) -> Dict[str, Any]:
        counts: Dict[str, int] = {}
        for verdict in self.verdicts:
            counts[verdict["kind"]] = counts.get(verdict["kind"], 0) + 1
        return {
            "scenario": self.scenario.name,
            "steps": self.steps,
            "windows": len(self.verdicts),
            "verdicts": counts,
            "adaptation_events": len(self.events),
            "first_condition": self.first_condition(),
            "final_rom_dimension": self.model.r,
            "final_rho": self.controller.rho,
            "halted_at": self.halted_at,
            "failed_at": self.failed_at,
        }


def default_steps(bundle: Bundle, config: Config) -> int:
    if config.evaluation_steps:
        return int(config.evaluation_steps)
    horizon = int(math.ceil(20.0 * bundle.tau_dom / bundle.model.T_s))
    return max(6 * bundle.thresholds.window, horizon)


class AdaptiveLoop:
    """Closed loop of the full-order plant, the reduced-model controller and the monitor."""

    def __init__(
        self,
        bundle: Bundle,
        system: FullOrderSystem,
        scenario: Scenario,
        config: Config,
        trace: RunTrace,
        adapt: bool = True,
    ):
        self.bundle = bundle
        self.descriptor = bundle.descriptor
        self.system = system
        self.scenario = scenario
        self.config = config
        self.trace = trace
        self.adapt = adapt
        self.model = bundle.model
        self.controller = bundle.controller
        if scenario.input_bounds is not None:
            self.controller = self.controller.with_bounds(*scenario.input_bounds)
        self.monitor = MonitorState(
            bundle.thresholds,
            y_scale=None if self.descriptor.y_max is None else np.asarray(self.descriptor.y_max),
        )
        self.rls = RlsState.from_operator(self.model.A_d, config.rls_lambda, config.rls_p0)
        self.plant = _Plant(system, self.model.T_s, self.descriptor.tau_fast)
        self.r_max = max(bundle.selection.rom_order_range[1], self.model.r)
        self.failures = {"retune": 0, "enrichment": 0}
        self.rng = np.random.default_rng(scenario.seed)
        self.factors: Dict[str, float] = {}
        self.level: Optional[float] = None
        self.target = np.zeros(self.model.p)
        self.r_ref = np.zeros(self.model.r)
        self.u_ss = np.zeros(self.model.m)
        self.halted_at: Optional[int] = None
        self.events: List[Dict[str, Any]] = []
        self.verdicts: List[Dict[str, Any]] = []
        self.window_costs: List[Tuple[int, Optional[float]]] = []
        self._set_reference(0)

        if scenario.start == "steady":
            self.x = steady_state(system, self.u_ss)
        else:
            self.x = np.asarray(system.x0, dtype=float).copy()
        self.r_hat = self.model.restrict(self.x)
        self.shadow = self.r_hat.copy()
        reference_norm = max(1.0, float(np.linalg.norm(steady_state(system, self.u_ss))))
        self.divergence_limit = config.divergence_factor * reference_norm
        self.disturbance = None
        if scenario.disturbance_amplitude > 0:
            mode = scenario.disturbance_mode or system.n // 2
            shape = mode_shape(system.n, mode)
            self.disturbance = scenario.disturbance_amplitude * reference_norm * shape
        self.disturbance_period = scenario.disturbance_period or 20.0 * self.model.T_s

    def _set_reference(self, k: int) -> None:
        level = self.scenario.level_at(k)
        if level == self.level:
            return
        self.level = level
        if self.scenario.y_ref is not None and k == 0:
            self.target = np.asarray(self.scenario.y_ref, dtype=float).reshape(self.model.p)
        else:
            self.target = reference_output(self.system, self.descriptor, level)
        self.r_ref, self.u_ss = reference_state(self.model, self.target)

    def _estimate(self, y: np.ndarray) -> np.ndarray:
        """Output feedback G y, or the projected full state when configured or G is absent."""
        if self.config.use_state_projection or self.model.G is None:
            return self.model.restrict(self.x)
        return self.model.G @ y

    def _event(self, k: int, condition: str, action: str, before, after, certificates) -> None:
        record = {
            "step": k,
            "condition": condition,
            "action": action,
            "parameters_before": before,
            "parameters_after": after,
            "certificates": certificates,
        }
        self.trace.add("adaptation_event", record)
        self.events.append(record)
        self.monitor.reset_counters()
        self.monitor.clear_window()

    def _escalate(self, source: str, reason: str) -> None:
        logger.warning("%s escalates: %s", source, reason)
        self.trace.add(
            "escalation",
            {"source_agent": source, "target_agent": "Central_Agent", "reason": reason},
        )

    def _redesign(self, model: ReducedModel, rho: float) -> Controller:
        ctrl = self.controller
        if ctrl.kind == "mpc":
            return design_mpc(
                model,
                Q_x=ctrl.Q_x,
                rho=rho,
                horizon_cap=self.config.mpc_horizon_cap,
                horizons=ctrl.horizons,
                qp_tol=ctrl.mpc.tol,
                qp_max_iter=self.config.qp_max_iter,
                u_min=ctrl.u_min,
                u_max=ctrl.u_max,
                margin_points=self.config.margin_points,
            )
        return design_lqr(model, ctrl.Q_x, rho, ctrl.u_min, ctrl.u_max, self.config.margin_points)

    def _install(self, model: ReducedModel, controller: Controller) -> None:
        """Switch to a new model and controller, re-anchoring estimates in the new coordinates."""
        old = self.model
        if model.r != old.r or model.Phi is not old.Phi:
            self.r_hat = model.restrict(old.lift(self.r_hat))
        self.shadow = self.r_hat.copy()
        self.model, self.controller = model, controller
        self.r_ref, self.u_ss = reference_state(model, self.target)
        if self.rls.r != model.r:
            self.rls = RlsState.from_operator(model.A_d, self.config.rls_lambda, self.config.rls_p0)

    def _model_state(self) -> Dict[str, Any]:
        return {
            "rom_dimension": self.model.r,
            "spectral_radius_A_d": float(np.max(np.abs(np.linalg.eigvals(self.model.A_d)))),
            "rho": self.controller.rho,
            "controller_type": self.controller.kind,
        }

    def _enrich(self, k: int, verdict) -> None:
        config = self.config
        X_recent = self.monitor.recent_snapshots()
        if X_recent is None or X_recent.shape[1] < 2:
            spec = design_excitation(
                self.model.method,
                self.descriptor,
                seed=config.seed + k,
                online=True,
                sampling_factor=config.sampling_factor,
                online_fraction=config.online_amplitude_fraction,
            )
            X_recent = collect_snapshots(
                self.plant.system, spec, x0=self.x, tau_fast=self.descriptor.tau_fast
            ).X
        before = self._model_state()
        Phi = self.model.Phi
        if self.model.method == "balanced_truncation":
            Phi = orthonormalize(Phi)
        enrichment = enrich_basis(Phi, X_recent, config.enrichment_energy, max_r=self.r_max)
        if enrichment.no_op:
            self.failures["enrichment"] += 1
            if self.failures["enrichment"] >= ENRICHMENT_FAILURE_LIMIT:
                self._escalate("Data_Agent", "basis enrichment cannot reduce the subspace residual")
                self.failures["enrichment"] = 0
            self._event(
                k, "Condition1", "basis_enrichment_skipped", before, before,
                {"capped": enrichment.capped, "residual": enrichment.residual_before},
            )
            return
        method = "pod_galerkin" if self.model.method == "balanced_truncation" else self.model.method
        try:
            model = project_onto_basis(
                self.plant.system, enrichment.Phi, self.model.T_s, method=method
            )
            model, certificate = certify_stability(
                model, self.descriptor, config.disc_margin, config.alpha_factor, config.clamp_eps
            )
            model = attach_estimator(
                model, config.estimator, config.estimator_reg, config.estimator_kappa_max
            )
            controller = self._redesign(model, self.controller.rho)
        except RomControlError as error:
            logger.error("Enrichment rejected: %s", error)
            self._escalate("ROM_Agent", f"enriched model rejected: {error}")
            self.monitor.reset_counters()
            return
        self.failures["enrichment"] = 0
        self._install(model, controller)
        self._event(
            k,
            "Condition1",
            "basis_enrichment",
            before,
            self._model_state(),
            {
                "added_modes": enrichment.added,
                "residual_before": enrichment.residual_before,
                "residual_after": enrichment.residual_after,
                **certificate,
            },
        )

    def _refit(self, k: int, verdict) -> None:
        config = self.config
        before = self._model_state()
        estimates = np.column_stack(list(self.monitor.estimates))
        inputs = np.column_stack(list(self.monitor.inputs))
        try:
            model, self.rls = rls_refit(self.model, self.rls, estimates, inputs)
            model, certificate = certify_stability(
                model, self.descriptor, config.disc_margin, config.alpha_factor, config.clamp_eps
            )
            gate = post_update_gate(
                model,
                self.controller,
                config.gm_trigger_db,
                config.pm_trigger_deg,
                config.radius_max,
                config.margin_points,
            )
            if gate.accepted:
                controller = replace(
                    self.controller,
                    margins=gate.margins,
                    closed_loop_radius=gate.closed_loop_radius,
                )
            else:
                controller = self._redesign(model, self.controller.rho)
        except RomControlError as error:
            logger.error("RLS update rejected: %s", error)
            self._escalate("ROM_Agent", f"RLS update rejected: {error}")
            self.monitor.reset_counters()
            return
        self._install(model, controller)
        self._event(
            k,
            "Condition2",
            "rls_update",
            before,
            self._model_state(),
            {
                "gate": gate.action,
                "rls_updates": self.rls.updates,
                "rls_resets": self.rls.resets,
                **certificate,
            },
        )

    def _retune(self, k: int, verdict) -> None:
        config = self.config
        before = self._model_state()
        result = retune(
            self.controller,
            verdict,
            self.model,
            self.failures["retune"],
            config.gm_trigger_db,
            config.pm_trigger_deg,
            config.radius_max,
            config.margin_points,
        )
        self.failures["retune"] = result.failures
        self.controller = result.controller
        if result.escalate:
            self._escalate("Control_Agent", f"{result.failures} consecutive retunes failed")
            self.failures["retune"] = 0
            if self.controller.kind == "lqr":
                try:
                    self.controller = design_mpc(
                        self.model,
                        Q_x=self.controller.Q_x,
                        rho=self.controller.rho,
                        horizon_cap=config.mpc_horizon_cap,
                        qp_tol=config.qp_tol,
                        qp_max_iter=config.qp_max_iter,
                        u_min=self.controller.u_min,
                        u_max=self.controller.u_max,
                        margin_points=config.margin_points,
                    )
                    logger.info("Controller switched to MPC after failed retunes")
                except RomControlError as error:
                    logger.error("MPC fallback failed: %s", error)
        self._event(k, "Condition3", "retuning", before, self._model_state(), result.to_dict())

    def _halt(self, k: int, verdict) -> None:
        self.halted_at = k
        state = self._model_state()
        self._escalate(
            "Evaluation_Agent", f"identified closed-loop radius {verdict.stats.lambda_max}"
        )
        self._event(
            k, "Emergency", "emergency_halt", state, {**state, "u": "zero"},
            {"lambda_max": verdict.stats.lambda_max, "halted": True},
        )

    def _window(self, k: int, Y: np.ndarray, Y_ref: np.ndarray) -> None:
        stats = window_stats(self.monitor)
        verdict = diagnose(self.monitor, self.model, margins=self.controller.margins, stats=stats)
        self.window_costs.append((k, _window_cost(Y, Y_ref, k, self.monitor.thresholds.window)))
        self.verdicts.append({"step": k, "kind": verdict.kind})
        labels = METHOD_LABELS[self.model.method], CONTROLLER_LABELS[self.controller.kind]
        self.trace.add("evaluation_output", verdict.to_dict(*labels))
        if not self.adapt:
            return
        if verdict.kind == "Emergency":
            self._halt(k, verdict)
        elif verdict.kind == "Condition1":
            self._enrich(k, verdict)
        elif verdict.kind == "Condition2":
            self._refit(k, verdict)
        elif verdict.kind == "Condition3":
            self._retune(k, verdict)
        elif verdict.kind == "Indeterminate" and verdict.escalate:
            self._escalate("Evaluation_Agent", "no condition matched for consecutive windows")
            self.monitor.counters["Indeterminate"] = 0

    def run(self, steps: int) -> AdaptiveRun:
        p, m = self.model.p, self.model.m
        Y = np.zeros((p, steps))
        U = np.zeros((m, steps))
        Y_ref = np.zeros((p, steps))
        metrics = np.zeros((steps, 3))
        failed_at = None
        for k in range(steps):
            factors = self.scenario.factors_at(k)
            if factors != self.factors:
                self.plant.set_system(perturb(self.system, factors) if factors else self.system)
                self.factors = factors
            self._set_reference(k)

            y = self.plant.output(self.x)
            if self.scenario.noise_std > 0:
                y = y + self.scenario.noise_std * self.rng.standard_normal(y.shape)
            self.r_hat = self._estimate(y)
            if self.halted_at is None:
                u = control_step(
                    self.controller, self.r_hat, self.r_ref, self.model, u_ff=self.u_ss
                )
            else:
                u = np.zeros(m)
            step_metrics = record_step(
                self.monitor,
                y,
                self.target,
                u,
                self.shadow,
                self.model,
                (self.controller.u_min, self.controller.u_max),
                r_meas=self.r_hat,
                x=self.x,
            )
            Y[:, k], U[:, k], Y_ref[:, k] = y, u, self.target
            metrics[k] = (step_metrics.e, step_metrics.rho, step_metrics.s)

            self.shadow = _propagate(self.model, self.shadow, u)
            try:
                x_next = self.plant.step(self.x, u)
            except DivergenceError as error:
                failed_at = k
                logger.error("Plant diverged at step %d: %s", k, error)
                break
            if self.disturbance is not None:
                phase = 2.0 * math.pi * (k + 1) * self.model.T_s / self.disturbance_period
                x_next = x_next + math.sin(phase) * self.disturbance
            if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > self.divergence_limit:
                failed_at = k
                logger.error("Plant state exceeded the divergence limit at step %d", k)
                break
            self.x = x_next

            if self.halted_at is None and self.monitor.window_ready:
                self._window(k, Y, Y_ref)

        if failed_at is not None:
            self.trace.add("failure", {"reason": "full-order state diverged", "step": failed_at})
            kept = failed_at + 1
            Y, U, Y_ref, metrics = Y[:, :kept], U[:, :kept], Y_ref[:, :kept], metrics[:kept]
        return AdaptiveRun(
            scenario=self.scenario,
            dt=self.model.T_s,
            Y=Y,
            U=U,
            Y_ref=Y_ref,
            metrics=metrics,
            verdicts=self.verdicts,
            events=self.events,
            window_costs=self.window_costs,
            model=self.model,
            controller=self.controller,
            trace=self.trace,
            halted_at=self.halted_at,
            failed_at=failed_at,
        )


def run_adaptive(
    bundle: Bundle,
    system: FullOrderSystem,
    scenario: Optional[Scenario] = None,
    steps: Optional[int] = None,
    config: Optional[Config] = None,
    trace: Optional[RunTrace] = None,
    adapt: bool = True,
) -> AdaptiveRun:
    """Simulate the full-order plant under the bundle's controller, diagnosing every window.

    With ``adapt`` false the run only monitors; the static controller is kept.
    """
    config = config or Config()
    scenario = scenario or Scenario()
    check_consistency(bundle.descriptor, system)
    trace = trace if trace is not None else RunTrace(seed=config.seed)
    steps = steps or scenario.steps or default_steps(bundle, config)
    logger.info("Closed-loop run '%s' for %d steps (adapt=%s)", scenario.name, steps, adapt)
    loop = AdaptiveLoop(bundle, system, scenario, config, trace, adapt)
    run = loop.run(steps)
    logger.info("Run '%s' finished: %s", scenario.name, run.summary())
    return run


# evaluation


def oracle_run(
    bundle: Bundle,
    system: FullOrderSystem,
    scenario: Scenario,
    steps: int,
    redesign_tol: float = 0.01,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-order LQR with the bundle's weights, redesigned as the plant drifts.

    Returns the (Y, U, Y_ref) logs of the run.
    """
    descriptor = bundle.descriptor
    T_s = bundle.model.T_s
    rho = bundle.controller.rho
    u_min, u_max = scenario.input_bounds or (descriptor.u_min, descriptor.u_max)
    Q = np.diag(np.asarray(bundle.Q_x, dtype=float))
    plant = _Plant(system, T_s, descriptor.tau_fast)
    designed: Optional[Dict[str, float]] = None
    design = None
    level = None
    x = None
    Y = np.zeros((system.p, steps))
    U = np.zeros((system.m, steps))
    Y_ref = np.zeros((system.p, steps))

    def synthesize(current: FullOrderSystem):
        A, B = linearize(current)
        C = output_matrix(current)
        A_d, B_d = zoh(A, B, T_s)
        _, K = solve_dare(A_d, B_d, Q, rho * np.eye(current.m))
        return A_d, B_d, C, K

    for k in range(steps):
        factors = scenario.factors_at(k)
        current = perturb(system, factors) if factors else system
        plant.set_system(current)
        drifted = designed is None or any(
            abs(factors.get(name, 1.0) / designed.get(name, 1.0) - 1.0) > redesign_tol
            for name in set(factors) | set(designed)
        )
        if drifted:
            design = synthesize(current)
            designed = dict(factors)
            level = None
        A_d, B_d, C, K = design
        if scenario.level_at(k) != level:
            level = scenario.level_at(k)
            target = reference_output(system, descriptor, level)
            if scenario.y_ref is not None:
                target = np.asarray(scenario.y_ref, dtype=float).reshape(system.p)
            n, m = A_d.shape[0], B_d.shape[1]
            block = np.block([[A_d - np.eye(n), B_d], [C, np.zeros((C.shape[0], m))]])
            solution, *_ = np.linalg.lstsq(block, np.concatenate([np.zeros(n), target]), rcond=None)
            x_ref, u_ss = solution[:n], solution[n:]
        if x is None:
            x = x_ref.copy() if scenario.start == "steady" else np.asarray(system.x0, dtype=float)
        u = np.clip(u_ss - K @ (x - x_ref), u_min, u_max)
        Y[:, k], U[:, k], Y_ref[:, k] = plant.output(x), u, target
        x = plant.step(x, u)
    return Y, U, Y_ref


def default_scenarios(
    bundle: Bundle, system: FullOrderSystem, config: Optional[Config] = None
) -> List[Scenario]:
    """Four nominal scenarios from rest and four with a step or ramp drift of +-perturbation."""
    config = config or Config()
    steps = default_steps(bundle, config)
    name = next(iter(system.parameters), "A") if system.parameters else "A"
    nominal = [
        Scenario(f"nominal_{level:g}", reference_level=level, start="rest", steps=steps)
        for level in (0.3, 0.5, 0.7)
    ]
    nominal.append(
        Scenario(
            "nominal_step",
            reference_level=0.3,
            reference_steps=[(steps // 2, 0.6)],
            start="rest",
            steps=steps,
        )
    )
    perturbed = []
    for factor in (1.0 + config.perturbation, 1.0 - config.perturbation):
        for ramp in (0, steps // 10):
            label = "ramp" if ramp else "step"
            perturbed.append(
                Scenario(
                    f"drift_{name}_{factor:g}_{label}",
                    reference_level=0.5,
                    drift=[DriftEvent(steps // 3, {name: factor}, ramp)],
                    start="steady",
                    steps=steps,
                )
            )
    return nominal + perturbed


def _fidelity(
    result: criteria.EvaluationResult, bundle: Bundle, system: FullOrderSystem, config: Config
) -> None:
    model, descriptor = bundle.model, bundle.descriptor
    c1 = result.criterion1
    dt = model.T_s
    steps = max(3, int(math.ceil(10.0 * bundle.tau_dom / dt)))
    pairs = []
    first = None
    for i in range(config.n_traj):
        spec = ExcitationSpec(
            kind="prbs",
            f_s=1.0 / dt,
            duration=steps * dt,
            amplitude=config.offline_amplitude_fraction * descriptor.u_bound,
            channels=system.m,
            seed=config.seed + 100 + i,
            bit_duration=max(descriptor.tau_fast, 5.0 * dt),
        )
        U = generate_signal(spec, steps)
        x0 = np.asarray(system.x0, dtype=float)
        full = simulate(system, U, x0=x0, dt=dt, steps=steps - 1, tau_fast=descriptor.tau_fast)
        R = simulate_reduced(model, U, model.restrict(x0), dt)
        pairs.append((full.outputs, model.C_r @ R))
        if first is None:
            first = (full.states, R, U)
    c1["eps_traj"], c1["eps_traj_std"] = criteria.eps_traj(pairs)
    X, R, U = first
    X_r = model.lift(R)
    c1["eps_ST"] = criteria.eps_st(X, X_r)
    c1["eps_inf_x"] = criteria.eps_inf_x(X, X_r)

    if isinstance(system, LtiSystem):
        c1["eps_inf"] = criteria.eps_inf(
            system.A, system.B, system.C, model.A_r, model.B_r, model.C_r
        )
        c1["eps_lambda"] = criteria.eps_lambda(
            np.linalg.eigvals(system.A), np.linalg.eigvals(model.A_r)
        )
        if system.n <= HANKEL_MAX_N:
            hsv = model.hsv if model.hsv is not None else hankel_singular_values(system)
            c1["hankel_energy"] = criteria.hankel_energy(hsv, model.r)
            c1["hankel_energy_ok"] = c1["hankel_energy"] > criteria.HANKEL_ENERGY_MIN
        else:
            result.mark_not_applicable(c1, "hankel_energy", f"N={system.n} above {HANKEL_MAX_N}")
        result.mark_not_applicable(c1, "linearization_consistency", "linear system")
    else:
        for name in ("eps_inf", "eps_lambda", "hankel_energy"):
            result.mark_not_applicable(c1, name, "nonlinear system")
        A_lin, _ = linearize(system)
        ratio = criteria.linearization_consistency(model.Phi, A_lin, model.A_r)
        c1["linearization_consistency"] = ratio
        c1["linearization_consistency_ok"] = ratio < criteria.LINEARIZATION_RATIO_MAX

    if descriptor.physics == "thermal" and isinstance(system, LtiSystem):
        inputs = U[: X.shape[1]].T
        X_dot = model.Phi @ (model.A_r @ R + model.B_r @ inputs)
        c1["energy_residual"] = criteria.energy_residual(X_r, inputs, system.A, system.B, dt, X_dot)
        c1["energy_residual_ok"] = c1["energy_residual"] < criteria.ENERGY_RESIDUAL_MAX
    else:
        result.mark_not_applicable(c1, "energy_residual", "not a thermal linear system")


def _performance_row(run: AdaptiveRun, bundle: Bundle) -> Dict[str, Any]:
    descriptor = bundle.descriptor
    dt = run.dt
    start = min(int(round(2.0 * bundle.tau_dom / dt)), run.steps - 1)
    W_y = None if descriptor.y_max is None else 1.0 / np.asarray(descriptor.y_max, dtype=float)
    u_min, u_max = run.scenario.input_bounds or (descriptor.u_min, descriptor.u_max)
    return {
        "name": run.scenario.name,
        "J_track": criteria.j_track(run.Y, run.Y_ref, W_y, start),
        "J_settle": criteria.j_settle(run.Y, run.Y_ref, dt),
        "OS": criteria.overshoot(run.Y, run.Y_ref[:, -1]),
        "V_hard": criteria.v_hard(run.U, u_min, u_max),
        "V_soft": criteria.v_soft(run.U, max(abs(u_min), abs(u_max)), dt),
        "adaptation_events": len(run.events),
        "first_condition": run.first_condition(),
    }


def _window_cost(Y: np.ndarray, Y_ref: np.ndarray, end: int, window: int) -> Optional[float]:
    try:
        span = slice(end + 1 - window, end + 1)
        return criteria.j_track(Y[:, span], Y_ref[:, span])
    except DomainError:
        return None


def _efficiency(
    result: criteria.EvaluationResult,
    bundle: Bundle,
    system: FullOrderSystem,
    runs: List[AdaptiveRun],
    config: Config,
) -> None:
    c3 = result.criterion3
    drifting = [run for run in runs if run.scenario.drift]
    if not drifting:
        for name in ("eta", "k_90", "R_conv", "G_final"):
            result.mark_not_applicable(c3, name, "no drift scenario")
        return
    run = drifting[0]
    scenario = run.scenario
    window = bundle.thresholds.window
    onset = min(event.step for event in scenario.drift)
    costs = [
        (end, cost)
        for end, cost in run.window_costs
        if end >= onset + window - 1 and cost is not None
    ]
    static = run_adaptive(bundle, system, scenario, run.steps, config, adapt=False)
    Y_o, _, Y_ref_o = oracle_run(bundle, system, scenario, run.steps)
    final_end = run.steps - 1
    j_static = _window_cost(static.Y, static.Y_ref, min(final_end, static.steps - 1), window)
    j_final = _window_cost(run.Y, run.Y_ref, final_end, window)
    j_star = _window_cost(Y_o, Y_ref_o, final_end, window)
    c3["scenario"] = scenario.name
    c3["J_static"], c3["J_final"], c3["J_star"] = j_static, j_final, j_star
    if len(costs) < 2 or j_star is None:
        result.mark_not_applicable(c3, "eta", "fewer than two post-drift windows")
        c3["k_90"] = c3["R_conv"] = None
    else:
        etas = criteria.eta_sequence([cost for _, cost in costs], j_star)
        k90 = criteria.k_90(etas)
        c3["eta"] = etas
        c3["k_90"] = k90
        c3["R_conv"] = criteria.r_conv(etas, k90)
        if k90 is None:
            result.flags["k_90"] = "eta never exceeded 0.9"
        if c3["R_conv"] is None:
            result.flags["R_conv"] = "undefined for k_90 in (None, 1)"
    if j_static is None or j_final is None:
        result.mark_not_applicable(c3, "G_final", "zero reference over the final window")
    else:
        c3["G_final"] = criteria.g_final(j_static, j_final)


def evaluate_criteria(
    bundle: Bundle,
    system: FullOrderSystem,
    scenarios: Optional[List[Scenario]] = None,
    config: Optional[Config] = None,
) -> criteria.EvaluationResult:
    """ROM fidelity, closed-loop performance over the scenarios and adaptation efficiency."""
    config = config or Config()
    check_consistency(bundle.descriptor, system)
    result = criteria.EvaluationResult()
    _fidelity(result, bundle, system, config)

    scenarios = scenarios or default_scenarios(bundle, system, config)
    runs = []
    for scenario in scenarios:
        run = run_adaptive(bundle, system, scenario, config=config)
        runs.append(run)
        if run.failed_at is not None:
            result.scenarios.append({"name": scenario.name, "failed_at": run.failed_at})
            result.flags[scenario.name] = f"diverged at step {run.failed_at}"
            continue
        result.scenarios.append(_performance_row(run, bundle))

    rows = [row for row in result.scenarios if "J_track" in row]
    c2 = result.criterion2
    if rows:
        settle = [row["J_settle"] for row in rows if row["J_settle"] is not None]
        for name in ("J_track", "OS", "V_hard", "V_soft"):
            c2[name] = float(np.mean([row[name] for row in rows]))
        c2["J_settle"] = float(np.mean(settle)) if settle else None
        c2["unsettled_scenarios"] = len(rows) - len(settle)
        c2["scenarios"] = len(rows)
    else:
        for name in ("J_track", "J_settle", "OS", "V_hard", "V_soft"):
            result.mark_not_applicable(c2, name, "every scenario diverged")

    _efficiency(result, bundle, system, [run for run in runs if run.failed_at is None], config)
    logger.info(
        "Evaluation complete: %d scenarios, flags %s", len(result.scenarios), sorted(result.flags)
    )
    return result

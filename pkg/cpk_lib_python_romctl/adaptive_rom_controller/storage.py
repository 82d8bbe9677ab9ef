# -*- coding: utf-8 -*-
"""Persistence of systems, design bundles, closed-loop runs and evaluation results.

A bundle directory holds JSON metadata next to ``.npz`` archives of the
numerical operators, so a reloaded bundle reproduces the saved operators
bit for bit:

    descriptor.json  selection.json  config.json  params.json  reports.json
    rom.json + rom.npz            reduced model
    controller.json + controller.npz
    snapshots.json + snapshots.npz
    system.json or system.npz     generator spec, or the matrices of a linear system
    trace.ndjson                  agent messages of the design
"""
import csv
import json
import logging
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .config import Config
from .control import Controller, Margins, design_mpc
from .criteria import EvaluationResult
from .errors import ConsistencyError, DomainError
from .excitation import ExcitationSpec, SnapshotSet
from .rom import DeimData, ReducedModel, galerkin_vector_field
from .selection import MethodSelection
from .systems import (
    FullOrderSystem,
    LtiSystem,
    SystemDescriptor,
    load_matrix_market,
    make_heat_chain,
    make_spring_mass_chain,
)
from .trace import RunTrace, jsonable
from .workflow import AdaptiveRun, Bundle, Scenario

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GENERATORS = {
    "heat_chain": make_heat_chain,
    "spring_mass_chain": make_spring_mass_chain,
}
MATRIX_MARKET_FILES = ("A.mtx", "B.mtx", "C.mtx")
ROM_ARRAYS = ("Phi", "W", "A_r", "B_r", "C_r", "A_d", "B_d", "G", "hsv")
CRITERIA_COLUMNS = ("criterion", "scenario", "metric", "value")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as stream:
            return json.load(stream)
    except json.JSONDecodeError as error:
        logger.error("Invalid JSON in %s: %s", path, error)
        raise ValueError(f"Invalid JSON file {path}: {error}") from error


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(jsonable(data), stream, indent=2, sort_keys=True)
    return path


# systems


def system_from_spec(spec: Dict[str, Any]) -> FullOrderSystem:
    """Build a system from ``{"generator": name, **parameters}``."""
    values = dict(spec)
    name = values.pop("generator", None)
    if name not in GENERATORS:
        raise DomainError(
            f"unknown system generator '{name}', expected one of {sorted(GENERATORS)}"
        )
    try:
        return GENERATORS[name](**values)
    except TypeError as error:
        raise DomainError(f"invalid parameters for {name}: {error}") from error


def load_system(path: PathLike):
    """Load a system from a directory (Matrix Market triple or system.json) or a JSON spec file.

    Returns ``(system, spec)``; ``spec`` is None for Matrix Market systems.
    """
    path = Path(path)
    if path.is_file():
        spec = read_json(path)
        return system_from_spec(spec), spec
    if not path.is_dir():
        raise FileNotFoundError(f"System path not found: {path}")
    spec_file = path / "system.json"
    if spec_file.exists():
        spec = read_json(spec_file)
        return system_from_spec(spec), spec
    missing = [name for name in MATRIX_MARKET_FILES if not (path / name).exists()]
    if missing:
        raise FileNotFoundError(f"System directory {path} lacks system.json and {missing}")
    return load_matrix_market(*(path / name for name in MATRIX_MARKET_FILES)), None


def load_descriptor(path: PathLike) -> SystemDescriptor:
    return SystemDescriptor.from_dict(read_json(path))


def load_scenario(path: PathLike) -> Scenario:
    scenario = Scenario.from_dict(read_json(path))
    if scenario.name == "nominal":
        scenario.name = Path(path).stem
    return scenario


def load_scenarios(directory: PathLike) -> List[Scenario]:
    """Every ``*.json`` scenario in ``directory``, in name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Scenario directory not found: {directory}")
    return [load_scenario(path) for path in sorted(directory.glob("*.json"))]


# reduced model and controller


def _save_model(model: ReducedModel, directory: Path) -> None:
    arrays = {name: getattr(model, name) for name in ROM_ARRAYS if getattr(model, name) is not None}
    if model.deim is not None:
        arrays.update(
            deim_Phi_f=model.deim.Phi_f,
            deim_indices=model.deim.indices,
            deim_interpolation=model.deim.interpolation,
        )
    np.savez(directory / "rom.npz", **arrays)
    write_json(
        directory / "rom.json",
        {
            "method": model.method,
            "T_s": model.T_s,
            "estimator": model.estimator,
            "T_s_adapted": model.T_s_adapted,
            "energy_captured": model.energy_captured,
            "nonlinear": model.is_nonlinear,
            "certificates": model.certificates,
        },
    )


def _load_model(directory: Path, system: Optional[FullOrderSystem]) -> ReducedModel:
    meta = read_json(directory / "rom.json")
    with np.load(directory / "rom.npz") as archive:
        arrays = {name: archive[name] for name in archive.files}
    deim = None
    if "deim_Phi_f" in arrays:
        deim = DeimData(
            Phi_f=arrays.pop("deim_Phi_f"),
            indices=arrays.pop("deim_indices"),
            interpolation=arrays.pop("deim_interpolation"),
        )
    vector_field = None
    if meta["nonlinear"]:
        if system is None:
            raise ConsistencyError("nonlinear reduced model needs its full-order system to load")
        vector_field = galerkin_vector_field(system, arrays["Phi"], deim)
    return ReducedModel(
        method=meta["method"],
        T_s=meta["T_s"],
        estimator=meta["estimator"],
        T_s_adapted=meta["T_s_adapted"],
        energy_captured=meta["energy_captured"],
        certificates=meta["certificates"],
        deim=deim,
        vector_field=vector_field,
        **arrays,
    )


def _save_controller(controller: Controller, Q_x: np.ndarray, directory: Path) -> None:
    np.savez(
        directory / "controller.npz",
        K=controller.K,
        P=controller.P,
        Q_r=controller.Q_r,
        Q_x=np.asarray(Q_x, dtype=float),
        u_min=controller.u_min,
        u_max=controller.u_max,
    )
    margins = controller.margins
    write_json(
        directory / "controller.json",
        {
            "kind": controller.kind,
            "rho": controller.rho,
            "closed_loop_radius": controller.closed_loop_radius,
            "margins": {
                "gm_db": margins.gm_db,
                "pm_deg": margins.pm_deg,
                "min_sv": margins.min_sv,
                "crossover": margins.crossover,
                "loops": [list(loop) for loop in margins.loops],
            },
            "horizons": None if controller.horizons is None else list(controller.horizons),
            "qp_tol": None if controller.mpc is None else controller.mpc.tol,
            "qp_max_iter": None if controller.mpc is None else controller.mpc.max_iter,
        },
    )


def _load_controller(directory: Path, model: ReducedModel, config: Config):
    meta = read_json(directory / "controller.json")
    with np.load(directory / "controller.npz") as archive:
        arrays = {name: archive[name] for name in archive.files}
    Q_x = arrays.pop("Q_x")
    if meta["kind"] == "mpc":
        # the condensed QP is rebuilt from the same inputs
        controller = design_mpc(
            model,
            Q_x=Q_x,
            rho=meta["rho"],
            horizons=tuple(meta["horizons"]),
            qp_tol=meta["qp_tol"],
            qp_max_iter=meta["qp_max_iter"],
            u_min=arrays["u_min"],
            u_max=arrays["u_max"],
            margin_points=config.margin_points,
        )
        return controller, Q_x
    saved = meta["margins"]
    margins = Margins(
        gm_db=saved["gm_db"],
        pm_deg=saved["pm_deg"],
        min_sv=saved["min_sv"],
        crossover=saved["crossover"],
        loops=tuple(tuple(loop) for loop in saved["loops"]),
    )
    controller = Controller(
        kind="lqr",
        K=arrays["K"],
        P=arrays["P"],
        rho=meta["rho"],
        Q_r=arrays["Q_r"],
        u_min=arrays["u_min"],
        u_max=arrays["u_max"],
        margins=margins,
        closed_loop_radius=meta["closed_loop_radius"],
        Q_x=Q_x,
    )
    return controller, Q_x


def _save_snapshots(snap: SnapshotSet, directory: Path) -> None:
    arrays = {"U": snap.U, "X": snap.X, "Y": snap.Y}
    for name in ("F", "quiet_outputs", "clean_Y"):
        if getattr(snap, name) is not None:
            arrays[name] = getattr(snap, name)
    np.savez(directory / "snapshots.npz", **arrays)
    meta = {"dt": snap.dt, "excitation": snap.excitation.to_dict()}
    write_json(directory / "snapshots.json", meta)


def _load_snapshots(directory: Path) -> Optional[SnapshotSet]:
    if not (directory / "snapshots.npz").exists():
        return None
    meta = read_json(directory / "snapshots.json")
    with np.load(directory / "snapshots.npz") as archive:
        arrays = {name: archive[name] for name in archive.files}
    return SnapshotSet(
        dt=meta["dt"], excitation=ExcitationSpec.from_dict(meta["excitation"]), **arrays
    )


def _selection_from_dict(data: Dict[str, Any]) -> MethodSelection:
    names = {item.name for item in fields(MethodSelection)}
    values = {key: value for key, value in data.items() if key in names}
    values["rom_order_range"] = tuple(values["rom_order_range"])
    values["excluded"] = tuple(values.get("excluded", ()))
    return MethodSelection(**values)


class BundleStore:
    """Save and load design bundles under a directory."""

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()

    def save(
        self, bundle: Bundle, directory: PathLike, system: Optional[FullOrderSystem] = None
    ) -> Path:
        """Write the bundle; a linear ``system`` without generator spec is stored as system.npz."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        selection = bundle.selection
        write_json(directory / "descriptor.json", bundle.descriptor.to_dict())
        write_json(
            directory / "selection.json",
            {
                "rom_method": selection.rom_method,
                "controller_type": selection.controller_type,
                "rom_rationale": selection.rom_rationale,
                "controller_rationale": selection.controller_rationale,
                "rom_order_range": list(selection.rom_order_range),
                "f_s": selection.f_s,
                "T_s": selection.T_s,
                "rho": selection.rho,
                "excluded": list(selection.excluded),
                "warnings": list(selection.warnings),
            },
        )
        write_json(directory / "config.json", self.config.to_dict())
        write_json(directory / "params.json", bundle.params)
        write_json(directory / "reports.json", bundle.reports)
        if bundle.system_spec is not None:
            write_json(directory / "system.json", bundle.system_spec)
        elif isinstance(system, LtiSystem):
            np.savez(directory / "system.npz", A=system.A, B=system.B, C=system.C)
        _save_model(bundle.model, directory)
        _save_controller(bundle.controller, bundle.Q_x, directory)
        if bundle.snapshots is not None:
            _save_snapshots(bundle.snapshots, directory)
        bundle.trace.to_ndjson(directory / "trace.ndjson")
        logger.info("Bundle saved to %s", directory)
        return directory

    def load(self, directory: PathLike, system: Optional[FullOrderSystem] = None) -> Bundle:
        """Load a bundle; ``system`` is needed only for nonlinear models without system.json."""
        directory = Path(directory)
        if not (directory / "rom.json").exists():
            raise FileNotFoundError(f"No bundle found in {directory}")
        system_spec = None
        if (directory / "system.json").exists():
            system_spec = read_json(directory / "system.json")
            if system is None:
                system = system_from_spec(system_spec)
        saved_config = read_json(directory / "config.json")
        config = Config().apply_overrides(
            {key: value for key, value in saved_config.items() if key != "debug"}
        )
        descriptor = load_descriptor(directory / "descriptor.json")
        model = _load_model(directory, system)
        controller, Q_x = _load_controller(directory, model, config)
        trace = RunTrace(seed=config.seed)
        if (directory / "trace.ndjson").exists():
            trace = RunTrace.from_ndjson(directory / "trace.ndjson", seed=config.seed)
        logger.info(
            "Bundle loaded from %s (%s r=%d + %s)",
            directory,
            model.method,
            model.r,
            controller.kind,
        )
        return Bundle(
            descriptor=descriptor,
            selection=_selection_from_dict(read_json(directory / "selection.json")),
            model=model,
            controller=controller,
            Q_x=Q_x,
            thresholds=config.monitor_thresholds(),
            params=read_json(directory / "params.json"),
            reports=read_json(directory / "reports.json"),
            snapshots=_load_snapshots(directory),
            trace=trace,
            system_spec=system_spec,
        )

    def load_system(self, directory: PathLike):
        """The full-order system recorded with a bundle, or None."""
        directory = Path(directory)
        if (directory / "system.json").exists():
            return system_from_spec(read_json(directory / "system.json"))
        if (directory / "system.npz").exists():
            with np.load(directory / "system.npz") as archive:
                return LtiSystem(A=archive["A"], B=archive["B"], C=archive["C"])
        return None


# runs and results


def save_run(run: AdaptiveRun, directory: PathLike) -> Path:
    """Write the logs, verdicts and adaptation events of one closed-loop run."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savez(
        directory / "logs.npz", Y=run.Y, U=run.U, Y_ref=run.Y_ref, metrics=run.metrics, dt=run.dt
    )
    write_json(
        directory / "run.json",
        {
            "summary": run.summary(),
            "scenario": run.scenario.to_dict(),
            "verdicts": run.verdicts,
            "events": run.events,
            "window_costs": [list(item) for item in run.window_costs],
        },
    )
    run.trace.to_ndjson(directory / "trace.ndjson")
    logger.info("Run '%s' saved to %s", run.scenario.name, directory)
    return directory


def save_criteria(result: EvaluationResult, directory: PathLike) -> Dict[str, Path]:
    """criteria.json with the full result and a flat criteria.csv for plotting."""
    directory = Path(directory)
    json_path = write_json(directory / "criteria.json", result.to_dict())
    csv_path = directory / "criteria.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=CRITERIA_COLUMNS)
        writer.writeheader()
        for row in result.rows():
            value = row["value"]
            writer.writerow({**row, "value": "" if value is None else value})
    logger.info("Criteria written to %s and %s", json_path, csv_path)
    return {"json": json_path, "csv": csv_path}


def load_criteria(directory: PathLike) -> EvaluationResult:
    path = Path(directory) / "criteria.json"
    if not path.exists():
        raise FileNotFoundError(f"No criteria.json in {directory}; run 'evaluate' first")
    data = read_json(path)
    return EvaluationResult(
        criterion1=data.get("criterion1", {}),
        criterion2=data.get("criterion2", {}),
        criterion3=data.get("criterion3", {}),
        scenarios=data.get("scenarios", []),
        flags=data.get("flags", {}),
    )

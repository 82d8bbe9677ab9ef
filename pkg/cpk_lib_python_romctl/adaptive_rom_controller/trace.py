# -*- coding: utf-8 -*-
"""Run trace: ordered agent messages validated against their JSON schemas."""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import jsonschema
import numpy as np

from .errors import ConsistencyError, ParseError

logger = logging.getLogger(__name__)

AGENTS = ["Central_Agent", "Data_Agent", "ROM_Agent", "Control_Agent", "Evaluation_Agent"]
ROM_LABELS = ["POD-Galerkin", "DMD", "balanced_truncation"]
CONTROLLER_LABELS = ["LQR", "MPC", "adaptive", "PID"]
TASK_TYPES = ["data_collection", "rom_construction", "controller_design", "performance_monitoring"]

_NUMBER_OR_NULL = {"type": ["number", "null"]}
_SHAPE = {"type": "array", "items": {"type": "integer", "minimum": 0}}
_SHAPED = {"type": "object", "required": ["shape"], "properties": {"shape": _SHAPE}}
_CODE_SUMMARY = {
    "type": "object",
    "required": ["num_iterations", "issues_resolved"],
    "properties": {
        "num_iterations": {"type": "integer", "minimum": 1, "maximum": 5},
        "issues_resolved": {"type": "array", "items": {"type": "string"}},
    },
}

SCHEMAS: Dict[str, Dict[str, Any]] = {
    "central_output": {
        "type": "object",
        "required": [
            "system_type",
            "dimensions",
            "time_constants",
            "sampling_requirements",
            "constraints",
            "method_selections",
            "design_parameters",
        ],
        "properties": {
            "system_type": {
                "enum": ["parabolic_pde", "hyperbolic_pde", "elliptic_pde", "ode_system"]
            },
            "dimensions": {
                "type": "object",
                "required": ["N", "m", "p"],
                "properties": {key: {"type": "integer", "minimum": 1} for key in ("N", "m", "p")},
            },
            "time_constants": {
                "type": "object",
                "required": ["tau_slow", "tau_fast"],
                "properties": {"tau_slow": {"type": "number"}, "tau_fast": {"type": "number"}},
            },
            "sampling_requirements": {
                "type": "object",
                "required": ["f_s_recommended_hz", "dt_s"],
            },
            "constraints": {"type": "object", "required": ["input_bounds"]},
            "method_selections": {
                "type": "object",
                "required": ["rom_method", "controller_type"],
                "properties": {
                    "rom_method": {"enum": ROM_LABELS},
                    "controller_type": {"enum": CONTROLLER_LABELS},
                },
            },
            "design_parameters": {
                "type": "object",
                "required": ["rom_order_range"],
                "properties": {
                    "rom_order_range": {"type": "array", "minItems": 2, "maxItems": 2}
                },
            },
            "seed": {"type": "integer"},
        },
    },
    "task_specification": {
        "type": "object",
        "required": ["task_type", "agent_name"],
        "properties": {
            "task_type": {"enum": TASK_TYPES},
            "agent_name": {"enum": AGENTS},
        },
    },
    "revision": {
        "type": "object",
        "required": [
            "revision_applied",
            "iteration_number",
            "revision_type",
            "changes_made",
            "escalation_recommended",
        ],
        "properties": {
            "revision_applied": {"type": "boolean"},
            "iteration_number": {"type": "integer", "minimum": 1, "maximum": 5},
            "revision_type": {
                "enum": [
                    "parameter_adjustment",
                    "logic_fix",
                    "structure_change",
                    "algorithm_change",
                ]
            },
            "changes_made": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["type", "location", "old_value", "new_value"],
                },
            },
            "escalation_recommended": {"type": "boolean"},
        },
    },
    "code_agent_output": {
        "type": "object",
        "required": ["task_type", "task_completed", "method_used", "iteration_summary"],
        "properties": {
            "task_type": {"enum": TASK_TYPES},
            "task_completed": {"type": "boolean"},
            "iteration_summary": {
                "type": "object",
                "required": ["num_iterations", "num_revisions", "convergence"],
                "properties": {
                    "num_iterations": {"type": "integer", "minimum": 1, "maximum": 5},
                    "num_revisions": {"type": "integer", "minimum": 0, "maximum": 5},
                    "convergence": {"enum": ["first_attempt", "after_revision", "escalated"]},
                },
            },
        },
    },
    "data_output": {
        "type": "object",
        "required": [
            "agent_name",
            "task_completed",
            "rom_method",
            "data_products",
            "quality_assessment",
            "sampling_info",
            "code_agent_summary",
        ],
        "properties": {
            "agent_name": {"const": "Data_Agent"},
            "rom_method": {"enum": ROM_LABELS},
            "data_products": {
                "type": "object",
                "required": ["snapshot_matrix"],
                "properties": {"snapshot_matrix": _SHAPED},
            },
            "quality_assessment": {
                "type": "object",
                "required": ["snr_db", "condition_number_correlation", "coverage"],
            },
            "sampling_info": {
                "type": "object",
                "required": ["f_s_hz", "dt_s", "excitation_type"],
            },
            "code_agent_summary": _CODE_SUMMARY,
        },
    },
    "rom_output": {
        "type": "object",
        "required": [
            "agent_name",
            "task_completed",
            "rom_method",
            "rom_dimension",
            "operators",
            "performance_metrics",
            "discretization",
            "performance_certificates",
            "code_agent_summary",
        ],
        "properties": {
            "agent_name": {"const": "ROM_Agent"},
            "rom_method": {"enum": ROM_LABELS},
            "rom_dimension": {"type": "integer", "minimum": 1},
            "operators": {
                "type": "object",
                "required": ["A_d", "B_d", "C_r"],
                "properties": {key: _SHAPED for key in ("A_d", "B_d", "C_r")},
            },
            "performance_metrics": {
                "type": "object",
                "required": [
                    "stability_margin_continuous",
                    "stability_margin_discrete",
                    "output_error_L2",
                    "speedup_factor",
                ],
            },
            "discretization": {
                "type": "object",
                "required": ["method", "T_s_used", "T_s_adapted"],
                "properties": {"method": {"const": "zero_order_hold"}},
            },
            "performance_certificates": {
                "type": "object",
                "required": ["validation_passed"],
            },
            "code_agent_summary": _CODE_SUMMARY,
        },
    },
    "control_output": {
        "type": "object",
        "required": [
            "agent_name",
            "task_completed",
            "controller_type",
            "gain_matrix",
            "design_parameters",
            "performance_metrics",
            "control_law",
            "tuning_info",
            "code_agent_summary",
        ],
        "properties": {
            "agent_name": {"const": "Control_Agent"},
            "controller_type": {"enum": CONTROLLER_LABELS},
            "gain_matrix": _SHAPED,
            "performance_metrics": {
                "type": "object",
                "required": [
                    "closed_loop_stable",
                    "stability_margin_discrete",
                    "dare_residual",
                    "gain_norm",
                    "gain_margin_db",
                    "phase_margin_deg",
                ],
                "properties": {
                    "gain_margin_db": _NUMBER_OR_NULL,
                    "phase_margin_deg": _NUMBER_OR_NULL,
                },
            },
            "code_agent_summary": _CODE_SUMMARY,
        },
    },
    "evaluation_output": {
        "type": "object",
        "required": ["agent_name", "verdict", "windowed_averages"],
        "properties": {
            "agent_name": {"const": "Evaluation_Agent"},
            "verdict": {"enum": ["Good", "No", "Emergency"]},
            "condition_triggered": {
                "enum": [
                    None,
                    "Condition1",
                    "Condition2",
                    "Condition3",
                    "Indeterminate",
                    "Emergency",
                ]
            },
            "windowed_averages": {
                "type": "object",
                "required": ["e_avg", "rho_avg", "s_avg"],
            },
            "routing": {"type": "object", "required": ["target_agent", "action"]},
        },
    },
    "adaptation_event": {
        "type": "object",
        "required": [
            "step",
            "condition",
            "action",
            "parameters_before",
            "parameters_after",
            "certificates",
        ],
        "properties": {
            "step": {"type": "integer", "minimum": 0},
            "condition": {"enum": ["Condition1", "Condition2", "Condition3", "Emergency"]},
            "parameters_before": {"type": "object"},
            "parameters_after": {"type": "object"},
            "certificates": {"type": "object"},
        },
    },
    "escalation": {
        "type": "object",
        "required": ["source_agent", "target_agent", "reason"],
        "properties": {
            "source_agent": {"enum": AGENTS},
            "target_agent": {"enum": AGENTS},
            "reason": {"type": "string"},
        },
    },
    "failure": {
        "type": "object",
        "required": ["reason"],
        "properties": {"reason": {"type": "string"}, "step": {"type": ["integer", "null"]}},
    },
}


def jsonable(value: Any) -> Any:
    """Plain JSON value: arrays to lists, numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def validate_message(message_type: str, payload: Dict[str, Any]) -> None:
    """Raise ConsistencyError when ``payload`` does not match the schema of ``message_type``."""
    if message_type not in SCHEMAS:
        raise ConsistencyError(f"unknown trace message type '{message_type}'")
    try:
        jsonschema.validate(instance=payload, schema=SCHEMAS[message_type])
    except jsonschema.ValidationError as error:
        logger.error("Trace message %s failed validation: %s", message_type, error.message)
        raise ConsistencyError(f"{message_type} message invalid: {error.message}") from error


@dataclass
class RunTrace:
    """Ordered agent messages of one run plus phase bookkeeping."""

    seed: int = 0
    messages: List[Dict[str, Any]] = field(default_factory=list)
    phase_iterations: Dict[str, int] = field(default_factory=dict)
    escalations: List[Dict[str, Any]] = field(default_factory=list)
    certificates: Dict[str, Any] = field(default_factory=dict)

    def add(self, message_type: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        """Validate and append one message; returns the stored record."""
        body = jsonable(payload)
        validate_message(message_type, body)
        record = {"sequence": len(self.messages), "message_type": message_type, **body}
        self.messages.append(record)
        if message_type == "escalation":
            self.escalations.append(record)
        logger.debug("Trace message %d: %s", record["sequence"], message_type)
        return record

    def of_type(self, message_type: str) -> List[Dict[str, Any]]:
        return [item for item in self.messages if item["message_type"] == message_type]

    def last(self, message_type: str, **match: Any) -> Optional[Dict[str, Any]]:
        """Latest message of ``message_type`` whose fields equal ``match``."""
        for item in reversed(self.messages):
            if item["message_type"] == message_type and all(
                item.get(key) == value for key, value in match.items()
            ):
                return item
        return None

    def agent_sequence(self, suffix: str = "_output") -> List[str]:
        """Agents of the functional output messages in order, consecutive repeats collapsed."""
        order: List[str] = []
        for item in self.messages:
            message_type = item["message_type"]
            if not message_type.endswith(suffix) or message_type == "code_agent_output":
                continue
            agent = item.get("agent_name", "Central_Agent")
            if not order or order[-1] != agent:
                order.append(agent)
        return order

    def summary(self) -> Dict[str, Any]:
        """Counts by message type, phase iterations and escalations."""
        counts: Dict[str, int] = {}
        for item in self.messages:
            counts[item["message_type"]] = counts.get(item["message_type"], 0) + 1
        return {
            "seed": self.seed,
            "messages": len(self.messages),
            "by_type": counts,
            "phase_iterations": dict(self.phase_iterations),
            "escalations": len(self.escalations),
            "certificates": jsonable(self.certificates),
        }

    def extend(self, other: "RunTrace") -> None:
        """Append another trace's messages, renumbering them."""
        for item in other.messages:
            body = {
                key: value
                for key, value in item.items()
                if key not in ("sequence", "message_type")
            }
            self.add(item["message_type"], body)

    def to_ndjson(self, path: Union[str, Path]) -> Path:
        """One JSON message per line."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as stream:
            for item in self.messages:
                stream.write(json.dumps(item, sort_keys=True) + "\n")
        logger.info("Trace with %d messages written to %s", len(self.messages), path)
        return path

    @classmethod
    def from_lines(cls, lines: Iterable[str], seed: Optional[int] = None) -> "RunTrace":
        """Parse and re-validate NDJSON lines.

        Phase iterations come back from the code_agent_output messages, the
        seed from the latest central_output unless ``seed`` is given.
        """
        trace = cls()
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                item = json.loads(line)
            except json.JSONDecodeError as error:
                raise ParseError(f"invalid JSON: {error.msg}", number) from error
            message_type = item.pop("message_type", None)
            item.pop("sequence", None)
            if message_type is None:
                raise ParseError("message has no message_type", number)
            record = trace.add(message_type, item)
            if message_type == "code_agent_output":
                task = record["task_type"]
                trace.phase_iterations[task] = record["iteration_summary"]["num_iterations"]
            elif message_type == "central_output" and "seed" in record:
                trace.seed = record["seed"]
        if seed is not None:
            trace.seed = seed
        return trace

    @classmethod
    def from_ndjson(cls, path: Union[str, Path], seed: Optional[int] = None) -> "RunTrace":
        with open(path, "r", encoding="utf-8") as stream:
            return cls.from_lines(stream, seed=seed)

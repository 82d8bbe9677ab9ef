# -*- coding: utf-8 -*-
"""Unit tests for trace messages, schema validation and NDJSON storage."""
import json
import math

import numpy as np
import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller.errors import ConsistencyError, ParseError
from ..adaptive_rom_controller.trace import RunTrace, jsonable, validate_message

pytestmark = pytest.mark.unit

EVALUATION = {
    "agent_name": "Evaluation_Agent",
    "verdict": "Good",
    "windowed_averages": {"e_avg": 0.01, "rho_avg": 0.02, "s_avg": 0.0},
}

ADAPTATION = {
    "step": 120,
    "condition": "Condition2",
    "action": "rls_update",
    "parameters_before": {"A_d_norm": 1.0},
    "parameters_after": {"A_d_norm": 0.9},
    "certificates": {"accepted": True},
}

ESCALATION = {
    "source_agent": "ROM_Agent",
    "target_agent": "Central_Agent",
    "reason": "rom_construction failed after 5 attempts",
}

CENTRAL = {
    "system_type": "parabolic_pde",
    "dimensions": {"N": 20, "m": 1, "p": 1},
    "time_constants": {"tau_slow": 40.0, "tau_fast": 0.1},
    "sampling_requirements": {"f_s_recommended_hz": 50.0, "dt_s": 0.02},
    "constraints": {"input_bounds": [-1.0, 1.0]},
    "method_selections": {"rom_method": "POD-Galerkin", "controller_type": "LQR"},
    "design_parameters": {"rom_order_range": [4, 8]},
    "seed": 7,
}


def phase_output(task, iterations, completed=True):
    """A code_agent_output for ``task`` after ``iterations`` attempts."""
    return {
        "task_type": task,
        "task_completed": completed,
        "method_used": "POD-Galerkin",
        "iteration_summary": {
            "num_iterations": iterations,
            "num_revisions": iterations - 1,
            "convergence": "first_attempt" if iterations == 1 else "after_revision",
        },
    }


class TestJsonable:
    """Test cases for jsonable."""

    def test_numpy_values(self):
        """Arrays become lists and numpy scalars Python numbers."""
        value = jsonable({"a": np.arange(3), "b": np.float64(1.5), "c": (1, 2)})
        assert value == {"a": [0, 1, 2], "b": 1.5, "c": [1, 2]}
        assert isinstance(value["b"], float)

    def test_non_finite(self):
        """NaN and infinity are written as null."""
        assert jsonable([math.nan, math.inf, np.array([np.inf])]) == [None, None, [None]]


class TestValidateMessage:
    """Test cases for validate_message."""

    def test_valid_adaptation_event(self):
        """A well-formed adaptation event passes."""
        validate_message("adaptation_event", ADAPTATION)

    def test_unknown_type(self):
        """Only registered message types exist."""
        with pytest.raises(ConsistencyError):
            validate_message("telemetry", {})

    def test_bad_condition(self):
        """Adaptation events name a condition or Emergency."""
        with pytest.raises(ConsistencyError) as exc_info:
            validate_message("adaptation_event", {**ADAPTATION, "condition": "Good"})
        assert "adaptation_event" in str(exc_info.value)

    def test_negative_step(self):
        """Steps are non-negative."""
        with pytest.raises(ConsistencyError):
            validate_message("adaptation_event", {**ADAPTATION, "step": -1})

    def test_failure_needs_reason(self):
        """Failure messages carry a reason."""
        with pytest.raises(ConsistencyError):
            validate_message("failure", {"step": 3})


class TestRunTrace:
    """Test cases for RunTrace."""

    def test_sequence_numbers(self):
        """Messages are numbered in insertion order."""
        trace = RunTrace(seed=7)
        first = trace.add("evaluation_output", EVALUATION)
        second = trace.add("adaptation_event", ADAPTATION)
        assert (first["sequence"], second["sequence"]) == (0, 1)
        assert second["message_type"] == "adaptation_event"

    def test_invalid_message_not_stored(self):
        """A rejected message leaves the trace unchanged."""
        trace = RunTrace()
        with pytest.raises(ConsistencyError):
            trace.add("failure", {})
        assert trace.messages == []

    def test_escalations_are_collected(self):
        """Escalation messages are also kept separately."""
        trace = RunTrace()
        trace.add("escalation", ESCALATION)
        assert len(trace.escalations) == 1
        assert trace.summary()["escalations"] == 1

    def test_agent_sequence(self):
        """Repeated agents collapse and bookkeeping messages are skipped."""
        trace = RunTrace()
        trace.add("evaluation_output", EVALUATION)
        trace.add("evaluation_output", {**EVALUATION, "verdict": "No"})
        trace.add("escalation", ESCALATION)
        assert trace.agent_sequence() == ["Evaluation_Agent"]

    def test_last_with_match(self):
        """last() filters on field values."""
        trace = RunTrace()
        trace.add("evaluation_output", EVALUATION)
        trace.add("evaluation_output", {**EVALUATION, "verdict": "No"})
        assert trace.last("evaluation_output", verdict="Good")["sequence"] == 0
        assert trace.last("failure") is None

    def test_summary_counts(self):
        """summary() counts messages by type."""
        trace = RunTrace(seed=3)
        trace.add("evaluation_output", EVALUATION)
        trace.add("adaptation_event", ADAPTATION)
        trace.phase_iterations["rom_construction"] = 2
        summary = trace.summary()
        assert summary["seed"] == 3
        assert summary["by_type"] == {"evaluation_output": 1, "adaptation_event": 1}
        assert summary["phase_iterations"] == {"rom_construction": 2}

    def test_extend_renumbers(self):
        """Merged messages continue the numbering."""
        trace = RunTrace()
        trace.add("evaluation_output", EVALUATION)
        other = RunTrace()
        other.add("adaptation_event", ADAPTATION)
        trace.extend(other)
        assert [item["sequence"] for item in trace.messages] == [0, 1]


class TestNdjson:
    """Test cases for NDJSON storage."""

    def test_round_trip(self, tmp_path):
        """Writing and reading preserves every message."""
        trace = RunTrace()
        trace.add("evaluation_output", EVALUATION)
        trace.add("adaptation_event", ADAPTATION)
        path = trace.to_ndjson(tmp_path / "run" / "trace.ndjson")
        loaded = RunTrace.from_ndjson(path)
        assert loaded.messages == trace.messages

    def test_blank_lines_skipped(self):
        """Empty lines are ignored."""
        line = '{"message_type": "failure", "reason": "diverged", "step": 4}'
        trace = RunTrace.from_lines(["", line, "   "])
        assert len(trace.messages) == 1

    def test_invalid_json_reports_line(self):
        """Malformed JSON names its line."""
        lines = ['{"message_type": "failure", "reason": "x"}', "{not json"]
        with pytest.raises(ParseError) as exc_info:
            RunTrace.from_lines(lines)
        assert exc_info.value.line_number == 2

    def test_missing_message_type(self):
        """Every line needs a message_type."""
        with pytest.raises(ParseError) as exc_info:
            RunTrace.from_lines(['{"reason": "x"}'])
        assert exc_info.value.line_number == 1

    def test_schema_checked_on_load(self):
        """Loaded messages are re-validated."""
        with pytest.raises(ConsistencyError):
            RunTrace.from_lines(['{"message_type": "failure"}'])

    def test_round_trip_restores_bookkeeping(self, tmp_path):
        """The seed and the latest iteration count per phase survive a reload."""
        trace = RunTrace(seed=7)
        trace.add("central_output", CENTRAL)
        trace.add("code_agent_output", phase_output("data_collection", 1))
        trace.add("code_agent_output", phase_output("rom_construction", 3))
        trace.add("code_agent_output", phase_output("rom_construction", 2))
        path = trace.to_ndjson(tmp_path / "trace.ndjson")
        loaded = RunTrace.from_ndjson(path)
        assert loaded.seed == 7
        assert loaded.phase_iterations == {"data_collection": 1, "rom_construction": 2}
        assert loaded.summary()["by_type"] == trace.summary()["by_type"]

    def test_explicit_seed_wins(self):
        """A seed passed to the loader overrides the recorded one."""
        line = json.dumps({"message_type": "central_output", **CENTRAL})
        assert RunTrace.from_lines([line], seed=3).seed == 3
        assert RunTrace.from_lines([line]).seed == 7

    def test_seed_defaults_to_zero(self):
        """Traces without a central_output load with seed 0."""
        line = '{"message_type": "failure", "reason": "diverged", "step": 4}'
        assert RunTrace.from_lines([line]).seed == 0

# -*- coding: utf-8 -*-
"""Validate-and-retry loop with an ordered ladder of parameter fixes."""
import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from .errors import PipelineError, RomControlError
from .trace import RunTrace

logger = logging.getLogger(__name__)

K_MAX = 5

TASK_AGENTS = {
    "data_collection": "Data_Agent",
    "rom_construction": "ROM_Agent",
    "controller_design": "Control_Agent",
}

Params = Dict[str, Any]
RunFn = Callable[[Params], Tuple[Any, Any]]


@dataclass(frozen=True)
class LadderStep:
    """One revision: ``apply(params, report)`` returns the revised parameters."""

    name: str
    apply: Callable[[Params, Any], Params]
    revision_type: str = "parameter_adjustment"


@dataclass
class Attempt:
    """One run of the phase."""

    iteration: int
    params: Params
    passed: bool
    report: Any = None
    error: Optional[str] = None


@dataclass
class RetryOutcome:
    """Accepted artifact with its report and the attempt history."""

    artifact: Any
    report: Any
    params: Params
    attempts: List[Attempt] = field(default_factory=list)
    fixes: List[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.attempts)

    @property
    def convergence(self) -> str:
        return "first_attempt" if self.iterations == 1 else "after_revision"


class PhaseEscalation(PipelineError):
    """A phase failed on every one of its attempts."""

    def __init__(self, task: str, attempts: List[Attempt], trace: Optional[RunTrace] = None):
        last = attempts[-1] if attempts else None
        detail = "" if last is None else f" (last: {last.error or 'validation failed'})"
        super().__init__(f"{task} failed after {len(attempts)} attempts{detail}", trace)
        self.task = task
        self.attempts = attempts


def _passed(report: Any) -> bool:
    passed = getattr(report, "passed", report)
    return bool(passed() if callable(passed) else passed)


def _changes(before: Params, after: Params) -> List[Dict[str, Any]]:
    changes = []
    for key in sorted(set(before) | set(after)):
        if before.get(key) != after.get(key):
            changes.append(
                {
                    "type": "parameter",
                    "location": key,
                    "old_value": str(before.get(key)),
                    "new_value": str(after.get(key)),
                }
            )
    return changes


def validate_retry(
    task: str,
    run: RunFn,
    ladder: Sequence[LadderStep],
    params: Optional[Params] = None,
    k_max: int = K_MAX,
    trace: Optional[RunTrace] = None,
    method: str = "",
) -> RetryOutcome:
    """Run ``run(params)`` until its report passes, revising ``params`` along ``ladder``.

    Domain errors raised by ``run`` count as failed attempts. The last ladder
    entry repeats once the ladder is used up; after ``k_max`` failures raises
    PhaseEscalation.
    """
    if not ladder:
        raise ValueError("validate_retry needs a non-empty ladder")
    if not 1 <= k_max <= K_MAX:
        raise ValueError(f"k_max must lie in [1, {K_MAX}], got {k_max}")
    params = dict(params or {})
    agent = TASK_AGENTS.get(task, "Central_Agent")
    attempts: List[Attempt] = []
    fixes: List[str] = []
    issues: List[str] = []
    start = time.perf_counter()
    if trace is not None:
        trace.add(
            "task_specification",
            {"task_type": task, "agent_name": agent, "method": method, "parameters": params},
        )

    for iteration in range(1, k_max + 1):
        try:
            artifact, report = run(dict(params))
            passed = _passed(report)
            attempt = Attempt(iteration, dict(params), passed, report)
        except RomControlError as error:
            logger.warning("%s attempt %d raised: %s", task, iteration, error)
            artifact, report = None, None
            attempt = Attempt(iteration, dict(params), False, None, str(error))
        attempts.append(attempt)

        if attempt.passed:
            outcome = RetryOutcome(artifact, report, dict(params), attempts, fixes)
            logger.info("%s accepted after %d attempt(s)", task, iteration)
            if trace is not None:
                trace.phase_iterations[task] = iteration
                trace.add(
                    "code_agent_output",
                    {
                        "task_type": task,
                        "task_completed": True,
                        "method_used": method,
                        "parameters": params,
                        "iteration_summary": {
                            "num_iterations": iteration,
                            "num_generations": 1,
                            "num_revisions": len(fixes),
                            "total_time_s": time.perf_counter() - start,
                            "issues_encountered": issues,
                            "convergence": outcome.convergence,
                        },
                    },
                )
            return outcome

        issues.append(attempt.error or "validation thresholds not met")
        if iteration == k_max:
            break
        step = ladder[min(iteration - 1, len(ladder) - 1)]
        revised = step.apply(dict(params), report)
        fixes.append(step.name)
        logger.info("%s attempt %d failed, applying fix '%s'", task, iteration, step.name)
        if trace is not None:
            trace.add(
                "revision",
                {
                    "revision_applied": True,
                    "iteration_number": iteration,
                    "revision_type": step.revision_type,
                    "root_cause_addressed": issues[-1],
                    "severity_level": "major",
                    "changes_made": _changes(params, revised),
                    "ready_for_revalidation": True,
                    "escalation_recommended": False,
                },
            )
        params = revised

    logger.error("%s escalated after %d attempts", task, len(attempts))
    if trace is not None:
        trace.phase_iterations[task] = len(attempts)
        trace.add(
            "code_agent_output",
            {
                "task_type": task,
                "task_completed": False,
                "method_used": method,
                "parameters": params,
                "iteration_summary": {
                    "num_iterations": len(attempts),
                    "num_generations": 1,
                    "num_revisions": len(fixes),
                    "total_time_s": time.perf_counter() - start,
                    "issues_encountered": issues,
                    "convergence": "escalated",
                },
            },
        )
        trace.add(
            "escalation",
            {
                "source_agent": agent,
                "target_agent": "Central_Agent",
                "reason": f"{task} failed after {len(attempts)} attempts: {issues[-1]}",
                "method": method,
            },
        )
    raise PhaseEscalation(task, attempts, trace)

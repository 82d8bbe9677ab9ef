# -*- coding: utf-8 -*-
"""Output formatting utilities."""
import logging
from typing import Any, Dict, List, Optional

from colorama import Fore, Style, init

# Initialize colorama
init(autoreset=True)

logger = logging.getLogger(__name__)

VERDICT_COLORS = {
    "Good": Fore.GREEN,
    "Condition1": Fore.YELLOW,
    "Condition2": Fore.YELLOW,
    "Condition3": Fore.MAGENTA,
    "Emergency": Fore.RED,
    "Indeterminate": Fore.BLUE,
}


def _number(value: Any, digits: int = 4) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, float)):
        return f"{value:.{digits}g}"
    return str(value)


class OutputFormatter:
    """Handle formatted output for the CLI."""

    def __init__(self, use_colors: bool = True):
        self.use_colors = use_colors

    def _paint(self, text: str, color: str, bright: bool = False) -> str:
        if not self.use_colors:
            return text
        return f"{color}{Style.BRIGHT if bright else ''}{text}{Style.RESET_ALL}"

    def _header(self, title: str) -> List[str]:
        return ["", self._paint(f"=== {title} ===", Fore.CYAN, bright=True), ""]

    def print_success(self, message: str):
        """Print success message with green color."""
        print(self._paint(f"✅ {message}", Fore.GREEN))

    def print_error(self, message: str):
        """Print error message with red color."""
        print(self._paint(f"❌ {message}", Fore.RED))

    def print_warning(self, message: str):
        """Print warning message with yellow color."""
        print(self._paint(f"⚠️  {message}", Fore.YELLOW))

    def print_info(self, message: str):
        """Print info message with blue color."""
        print(self._paint(f"ℹ️  {message}", Fore.CYAN))

    def print_progress(self, message: str, success: bool = True):
        """Print progress indicator."""
        if success:
            print(f"{self._paint('✓', Fore.GREEN)} {message}")
        else:
            print(f"{self._paint('✗', Fore.RED)} {message}")

    def format_bundle_summary(self, summary: Dict[str, Any], warnings: Optional[List[str]] = None):
        """Format the certified model and controller of a design bundle."""
        lines = self._header("Design Bundle")
        labels = [
            ("ROM method", "rom_method"),
            ("ROM dimension", "rom_dimension"),
            ("Controller", "controller_type"),
            ("rho", "rho"),
            ("Sampling period", "T_s"),
            ("Estimator", "estimator"),
            ("Closed-loop radius", "closed_loop_radius"),
            ("Gain margin (dB)", "gain_margin_db"),
            ("Phase margin (deg)", "phase_margin_deg"),
            ("Output error (L2)", "output_error_L2"),
            ("Trace messages", "trace_messages"),
        ]
        for label, key in labels:
            value = self._paint(_number(summary.get(key)), Fore.YELLOW)
            lines.append(f"  {label:<22}{value}")
        for warning in warnings or []:
            lines.append(self._paint(f"  ⚠️  {warning}", Fore.YELLOW))
        return "\n".join(lines)

    def format_verdict_table(self, verdicts: List[Dict[str, Any]], limit: int = 40) -> str:
        """Format the monitoring verdict of each window."""
        if not verdicts:
            return self._paint("No monitoring windows completed", Fore.YELLOW)

        lines = self._header("Monitoring Verdicts")
        lines.append(
            self._paint(f"{'Step':<10}", Fore.BLUE) + " | " + self._paint("Verdict", Fore.BLUE)
        )
        lines.append("-" * 60)
        shown = verdicts if len(verdicts) <= limit else verdicts[:limit]
        for verdict in shown:
            kind = verdict["kind"]
            lines.append(
                f"{verdict['step']:<10} | {self._paint(kind, VERDICT_COLORS.get(kind, Fore.WHITE))}"
            )
        if len(verdicts) > limit:
            lines.append(f"... and {len(verdicts) - limit} more windows")
        lines.extend(["", self._paint(f"ℹ️  {len(verdicts)} window(s) diagnosed", Fore.CYAN)])
        return "\n".join(lines)

    def format_events_table(self, events: List[Dict[str, Any]]) -> str:
        """Format the adaptation events of a run."""
        if not events:
            return self._paint("No adaptation events", Fore.GREEN)

        lines = self._header("Adaptation Events")
        lines.append(
            self._paint(f"{'Step':<10}", Fore.BLUE)
            + " | "
            + self._paint(f"{'Condition':<15}", Fore.BLUE)
            + " | "
            + self._paint("Action", Fore.BLUE)
        )
        lines.append("-" * 60)
        for event in events:
            condition = self._paint(f"{event['condition']:<15}", Fore.YELLOW)
            lines.append(f"{event['step']:<10} | {condition} | {event['action']}")
        lines.extend(["", self._paint(f"ℹ️  {len(events)} adaptation event(s)", Fore.CYAN)])
        return "\n".join(lines)

    def format_run_summary(self, summary: Dict[str, Any]) -> str:
        """Format the outcome of one closed-loop run."""
        lines = self._header(f"Run '{summary['scenario']}'")
        for key in (
            "steps",
            "windows",
            "adaptation_events",
            "first_condition",
            "final_rom_dimension",
            "final_rho",
            "halted_at",
            "failed_at",
        ):
            lines.append(f"  {key:<22}{self._paint(_number(summary.get(key)), Fore.YELLOW)}")
        counts = ", ".join(f"{kind}={count}" for kind, count in sorted(summary["verdicts"].items()))
        lines.append(f"  {'verdicts':<22}{counts or 'none'}")
        return "\n".join(lines)

    def format_criteria_table(self, result: Dict[str, Any]) -> str:
        """Format the metrics of the three evaluation criteria."""
        lines = self._header("Evaluation Criteria")
        titles = {
            "criterion1": "ROM fidelity",
            "criterion2": "Closed-loop performance",
            "criterion3": "Adaptation efficiency",
        }
        flags = result.get("flags", {})
        for name, title in titles.items():
            lines.append(self._paint(f"{title}", Fore.GREEN, bright=True))
            metrics = result.get(name, {})
            if not metrics:
                lines.append("  (no metrics)")
            for metric, value in metrics.items():
                if isinstance(value, (list, tuple)):
                    text = ", ".join(_number(item) for item in value)
                else:
                    text = _number(value)
                note = f"  ({flags[metric]})" if metric in flags else ""
                lines.append(f"  {metric:<26}{self._paint(text, Fore.YELLOW)}{note}")
            lines.append("")

        scenarios = result.get("scenarios", [])
        if scenarios:
            lines.append(
                self._paint(f"{'Scenario':<28}", Fore.BLUE)
                + " | "
                + self._paint(f"{'J_track':<10}", Fore.BLUE)
                + " | "
                + self._paint(f"{'OS':<10}", Fore.BLUE)
                + " | "
                + self._paint("Events", Fore.BLUE)
            )
            lines.append("-" * 60)
            for row in scenarios:
                if "failed_at" in row:
                    status = self._paint(f"diverged at step {row['failed_at']}", Fore.RED)
                    lines.append(f"{row['name']:<28} | {status}")
                    continue
                lines.append(
                    f"{row['name']:<28} | {_number(row.get('J_track')):<10} | "
                    f"{_number(row.get('OS')):<10} | {_number(row.get('adaptation_events'))}"
                )
            lines.extend(["", self._paint(f"ℹ️  {len(scenarios)} scenario(s)", Fore.CYAN)])
        return "\n".join(lines)

    def format_trace_summary(self, summary: Dict[str, Any]) -> str:
        """Format message counts, phase iterations and escalations of a trace."""
        lines = self._header("Trace")
        lines.append(f"  {'seed':<22}{summary['seed']}")
        lines.append(f"  {'messages':<22}{summary['messages']}")
        for message_type, count in sorted(summary["by_type"].items()):
            lines.append(f"    {message_type:<26}{count}")
        for phase, iterations in summary["phase_iterations"].items():
            lines.append(f"  {phase:<22}{iterations} iteration(s)")
        escalations = summary["escalations"]
        color = Fore.RED if escalations else Fore.GREEN
        lines.append(f"  {'escalations':<22}{self._paint(str(escalations), color)}")
        return "\n".join(lines)

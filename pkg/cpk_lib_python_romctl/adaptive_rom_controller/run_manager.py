# -*- coding: utf-8 -*-
"""Design, adaptation, evaluation and report operations behind the CLI."""
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from .config import Config
from .errors import PipelineError
from .formatters import OutputFormatter
from .storage import (
    BundleStore,
    load_criteria,
    load_descriptor,
    load_scenario,
    load_scenarios,
    load_system,
    save_criteria,
    save_run,
)
from .trace import RunTrace
from .workflow import AdaptiveRun, Bundle, evaluate_criteria, run_adaptive, run_design

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "json")


class RunManager:
    """Run the workflow operations and report them through the formatter."""

    def __init__(self, config: Config, formatter: OutputFormatter):
        self.config = config
        self.formatter = formatter
        self.store = BundleStore(config)

    def _load(self, bundle_dir: str):
        self.formatter.print_info(f"Loading bundle from {bundle_dir}...")
        system = self.store.load_system(bundle_dir)
        if system is None:
            raise FileNotFoundError(f"Bundle {bundle_dir} holds neither system.json nor system.npz")
        return self.store.load(bundle_dir, system), system

    def design(self, descriptor_path: str, system_path: str, out_dir: str) -> Bundle:
        """Run the initial design and save the certified bundle."""
        descriptor = load_descriptor(descriptor_path)
        system, spec = load_system(system_path)
        self.formatter.print_info(
            f"Designing for {descriptor.system_type} system with N={descriptor.N} states..."
        )
        trace = RunTrace(seed=self.config.seed)
        try:
            bundle = run_design(descriptor, system, self.config, trace=trace, system_spec=spec)
        except PipelineError as error:
            if error.trace is not None:
                path = error.trace.to_ndjson(Path(out_dir) / "trace.ndjson")
                self.formatter.print_warning(f"Partial trace written to {path}")
            raise

        for phase, iterations in trace.phase_iterations.items():
            self.formatter.print_progress(f"{phase}: {iterations} iteration(s)")
        self.store.save(bundle, out_dir, system)
        print(self.formatter.format_bundle_summary(bundle.summary(), bundle.selection.warnings))
        self.formatter.print_success(f"Bundle saved to {out_dir}")
        return bundle

    def adapt(
        self,
        bundle_dir: str,
        scenario_path: Optional[str] = None,
        steps: Optional[int] = None,
        out_dir: Optional[str] = None,
        static: bool = False,
    ) -> AdaptiveRun:
        """Run one closed-loop scenario with monitoring and adaptation."""
        bundle, system = self._load(bundle_dir)
        scenario = load_scenario(scenario_path) if scenario_path else None
        name = scenario.name if scenario else "nominal"
        self.formatter.print_info(f"Running scenario '{name}'...")
        trace = RunTrace(seed=self.config.seed)
        run = run_adaptive(
            bundle,
            system,
            scenario,
            steps=steps,
            config=self.config,
            trace=trace,
            adapt=not static,
        )

        print(self.formatter.format_verdict_table(run.verdicts))
        print(self.formatter.format_events_table(run.events))
        print(self.formatter.format_run_summary(run.summary()))
        target = Path(out_dir) if out_dir else Path(bundle_dir) / "runs" / run.scenario.name
        save_run(run, target)
        if run.failed_at is not None:
            self.formatter.print_error(f"Run diverged at step {run.failed_at}")
        elif run.halted_at is not None:
            self.formatter.print_warning(f"Emergency halt at step {run.halted_at}")
        else:
            self.formatter.print_success(f"Run saved to {target}")
        return run

    def evaluate(self, bundle_dir: str, scenarios_dir: Optional[str] = None):
        """Score the bundle on the three criteria and write criteria.json and criteria.csv."""
        bundle, system = self._load(bundle_dir)
        scenarios = load_scenarios(scenarios_dir) if scenarios_dir else None
        if scenarios_dir and not scenarios:
            self.formatter.print_warning(f"No scenarios in {scenarios_dir}, using the defaults")
            scenarios = None
        self.formatter.print_info("Evaluating criteria (this runs every scenario)...")
        result = evaluate_criteria(bundle, system, scenarios, self.config)

        paths = save_criteria(result, bundle_dir)
        print(self.formatter.format_criteria_table(result.to_dict()))
        for name, flag in sorted(result.flags.items()):
            self.formatter.print_warning(f"{name}: {flag}")
        self.formatter.print_success(f"Criteria written to {paths['json']} and {paths['csv']}")
        return result

    def report(self, run_dir: str, output_format: str = "json") -> str:
        """Render the saved criteria and the trace summary of a run directory."""
        if output_format not in REPORT_FORMATS:
            raise ValueError(
                f"Unknown report format '{output_format}', use one of {REPORT_FORMATS}"
            )
        run_dir = Path(run_dir)
        result = load_criteria(run_dir)
        trace_summary: Dict[str, Any] = {}
        if (run_dir / "trace.ndjson").exists():
            trace_summary = RunTrace.from_ndjson(run_dir / "trace.ndjson").summary()

        if output_format == "csv":
            text = (run_dir / "criteria.csv").read_text(encoding="utf-8")
            print(text, end="")
        else:
            text = (run_dir / "criteria.json").read_text(encoding="utf-8")
            print(text)
        if trace_summary:
            print(self.formatter.format_trace_summary(trace_summary))
        if result.flags:
            self.formatter.print_warning(f"{len(result.flags)} metric(s) flagged")
        return text

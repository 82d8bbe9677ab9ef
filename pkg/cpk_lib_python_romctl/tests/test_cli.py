# -*- coding: utf-8 -*-
"""Tests for the command line entry point, run manager and output formatting."""
import logging
from unittest.mock import patch

import pytest  # pylint: disable=import-error

from ..adaptive_rom_controller import main as main_module
from ..adaptive_rom_controller.cli import create_parser
from ..adaptive_rom_controller.config import Config
from ..adaptive_rom_controller.criteria import EvaluationResult
from ..adaptive_rom_controller.errors import PipelineError
from ..adaptive_rom_controller.formatters import OutputFormatter
from ..adaptive_rom_controller.run_manager import RunManager
from ..adaptive_rom_controller.storage import save_criteria
from ..adaptive_rom_controller.trace import RunTrace

pytestmark = pytest.mark.unit


class TestCreateParser:
    """Test cases for the argument parser."""

    def test_design_arguments(self):
        """design takes a descriptor, a system and an output directory."""
        args = create_parser().parse_args(
            ["--seed", "4", "design", "--descriptor", "d.json", "--system", "sys/", "--out", "o/"]
        )
        assert args.command == "design"
        assert args.seed == 4
        assert (args.descriptor, args.system, args.out) == ("d.json", "sys/", "o/")

    def test_adapt_defaults(self):
        """adapt runs the nominal scenario with adaptation by default."""
        args = create_parser().parse_args(["adapt", "--bundle", "run/"])
        assert args.scenario is None
        assert args.steps is None
        assert not args.static

    def test_report_format_choices(self):
        """Only csv and json reports exist."""
        with pytest.raises(SystemExit):
            create_parser().parse_args(["report", "--run", "run/", "--format", "xml"])


class TestHandleError:
    """Test cases for handle_error exit codes."""

    def test_pipeline_error(self, capsys):
        """Pipeline errors report their escalations."""
        trace = RunTrace()
        trace.add(
            "escalation",
            {"source_agent": "ROM_Agent", "target_agent": "Central_Agent", "reason": "x"},
        )
        assert main_module.handle_error(PipelineError("design failed", trace)) == 1
        assert "Escalations recorded: 1" in capsys.readouterr().err

    def test_file_not_found(self, capsys):
        """Missing files get a hint."""
        assert main_module.handle_error(FileNotFoundError("bundle.json")) == 1
        assert "exists and is readable" in capsys.readouterr().err

    def test_keyboard_interrupt(self):
        """Ctrl+C exits with 130."""
        assert main_module.handle_error(KeyboardInterrupt()) == 130

    def test_unexpected_error(self, capsys):
        """Other errors suggest debug mode."""
        assert main_module.handle_error(RuntimeError("boom")) == 1
        assert "Run with --debug" in capsys.readouterr().err


class TestMain:
    """Test cases for main."""

    def test_no_command(self, capsys):
        """A missing sub-command exits with 1."""
        with pytest.raises(SystemExit) as exc_info:
            main_module.main(["--no-color"])
        assert exc_info.value.code == 1
        assert "No command given" in capsys.readouterr().err

    @patch.object(main_module, "RunManager")
    def test_dispatch_report(self, run_manager):
        """The report command reaches the run manager."""
        main_module.main(["--no-color", "report", "--run", "run/", "--format", "csv"])
        run_manager.return_value.report.assert_called_once_with("run/", "csv")

    @patch.object(main_module, "RunManager")
    def test_dispatch_adapt(self, run_manager):
        """adapt passes the scenario, steps and static flag through."""
        main_module.main(["--no-color", "adapt", "--bundle", "b/", "--steps", "50", "--static"])
        run_manager.return_value.adapt.assert_called_once_with("b/", None, 50, None, True)

    @patch.object(main_module, "RunManager")
    def test_interrupt_exit_code(self, run_manager):
        """Interrupting a run exits with 130."""
        run_manager.return_value.evaluate.side_effect = KeyboardInterrupt
        with pytest.raises(SystemExit) as exc_info:
            main_module.main(["--no-color", "evaluate", "--bundle", "b/"])
        assert exc_info.value.code == 130

    @patch.object(main_module, "RunManager")
    def test_log_file_from_configuration(self, run_manager, tmp_path, monkeypatch):
        """The configured log file receives the root log."""
        log_path = tmp_path / "run.log"
        monkeypatch.setenv("ROMCTL_LOG_FILE", str(log_path))
        root = logging.getLogger()
        handlers = []
        try:
            main_module.main(["--no-color", "report", "--run", "run/"])
            main_module.main(["--no-color", "report", "--run", "run/"])
            handlers = [
                handler
                for handler in root.handlers
                if getattr(handler, "baseFilename", None) == str(log_path)
            ]
            assert len(handlers) == 1
            logging.getLogger("adaptive_rom_controller").warning("written to file")
            handlers[0].flush()
            assert "written to file" in log_path.read_text(encoding="utf-8")
        finally:
            for handler in handlers:
                root.removeHandler(handler)
                handler.close()
        assert run_manager.return_value.report.call_count == 2

    def test_environment_info_logged_in_debug(self, tmp_path, monkeypatch, caplog):
        """--debug logs the environment the run started from."""
        monkeypatch.setenv("ROMCTL_LOG_FILE", str(tmp_path / "debug.log"))
        with patch.object(main_module, "RunManager"), caplog.at_level(logging.DEBUG):
            main_module.main(["--no-color", "--debug", "report", "--run", "run/"])
        assert any("Environment:" in record.getMessage() for record in caplog.records)
        root = logging.getLogger()
        for handler in list(root.handlers):
            if getattr(handler, "baseFilename", None) == str(tmp_path / "debug.log"):
                root.removeHandler(handler)
                handler.close()


class TestRunManagerReport:
    """Test cases for RunManager.report."""

    @pytest.fixture
    def manager(self):
        """Run manager without colours."""
        return RunManager(Config(), OutputFormatter(use_colors=False))

    def test_unknown_format(self, manager, tmp_path):
        """Formats other than csv and json are rejected."""
        with pytest.raises(ValueError):
            manager.report(str(tmp_path), "xml")

    def test_csv_report(self, manager, tmp_path, capsys):
        """The csv report is the saved criteria.csv."""
        save_criteria(EvaluationResult(criterion2={"J_track": 2.0}), tmp_path)
        text = manager.report(str(tmp_path), "csv")
        assert text.splitlines()[1] == "criterion2,,J_track,2.0"
        assert "J_track" in capsys.readouterr().out

    def test_trace_summary(self, manager, tmp_path, capsys):
        """A trace next to the criteria is summarized."""
        save_criteria(EvaluationResult(), tmp_path)
        trace = RunTrace(seed=9)
        trace.add("failure", {"reason": "diverged", "step": 3})
        trace.to_ndjson(tmp_path / "trace.ndjson")
        manager.report(str(tmp_path))
        assert "=== Trace ===" in capsys.readouterr().out


class TestOutputFormatter:
    """Test cases for OutputFormatter."""

    def test_plain_verdict_table(self):
        """Without colours the verdict table is plain text."""
        text = OutputFormatter(use_colors=False).format_verdict_table(
            [{"step": 49, "kind": "Good"}, {"step": 59, "kind": "Condition2"}]
        )
        assert "59         | Condition2" in text
        assert "2 window(s) diagnosed" in text

    def test_empty_tables(self):
        """Empty runs say so."""
        formatter = OutputFormatter(use_colors=False)
        assert formatter.format_verdict_table([]) == "No monitoring windows completed"
        assert formatter.format_events_table([]) == "No adaptation events"

    def test_criteria_flags(self):
        """Flagged metrics show their reason."""
        result = EvaluationResult()
        result.mark_not_applicable(result.criterion1, "eps_inf", "nonlinear system")
        text = OutputFormatter(use_colors=False).format_criteria_table(result.to_dict())
        assert "n/a  (not applicable: nonlinear system)" in text
        assert "(no metrics)" in text

    def test_bundle_summary_warnings(self):
        """Selection warnings are listed under the summary."""
        text = OutputFormatter(use_colors=False).format_bundle_summary(
            {"rom_method": "pod_galerkin", "rom_dimension": 4}, ["PID designed as LQR"]
        )
        assert "PID designed as LQR" in text
        assert "pod_galerkin" in text

# -*- coding: utf-8 -*-
"""Adaptive ROM Controller - Core Module."""

from .config import Config
from .formatters import OutputFormatter
from .run_manager import RunManager
from .storage import BundleStore
from .trace import RunTrace
from .workflow import (
    Bundle,
    Scenario,
    evaluate_criteria,
    replay_design,
    run_adaptive,
    run_design,
)

__all__ = [
    "Bundle",
    "BundleStore",
    "Config",
    "OutputFormatter",
    "RunManager",
    "RunTrace",
    "Scenario",
    "evaluate_criteria",
    "replay_design",
    "run_adaptive",
    "run_design",
]

# -*- coding: utf-8 -*-
"""CPK Lib Python ROMCTL - Adaptive Reduced-Order Model Controller Package."""

from .adaptive_rom_controller import (
    workflow,
)
from .adaptive_rom_controller.config import (
    Config,
)
from .adaptive_rom_controller.run_manager import (
    RunManager,
)
from .adaptive_rom_controller.storage import (
    BundleStore,
)

run_design = workflow.run_design
run_adaptive = workflow.run_adaptive
evaluate_criteria = workflow.evaluate_criteria

__all__ = ["BundleStore", "Config", "RunManager", "evaluate_criteria", "run_adaptive", "run_design"]

"""Desk-scale studies, their configuration, SVG output and the CLI."""

from .config import ExperimentConfig
from .runners import (run_error_curve, run_fine_accuracy, run_robustness, run_s_sensitivity,
                      run_solve, run_speedup, speedup_config)

__all__ = ["ExperimentConfig", "run_error_curve", "run_fine_accuracy", "run_robustness",
           "run_s_sensitivity", "run_solve", "run_speedup", "speedup_config"]

"""
Command-line layer: config schemas and subcommand implementations.
"""

from .commands import (
    COMMANDS,
    CommandContext,
    CommandOutcome,
    cmd_se_predict,
    cmd_simulate,
    cmd_sweep_mixed,
    cmd_tune_step,
    cmd_validate,
)

__all__ = [
    "COMMANDS",
    "CommandContext",
    "CommandOutcome",
    "cmd_se_predict",
    "cmd_simulate",
    "cmd_sweep_mixed",
    "cmd_tune_step",
    "cmd_validate",
]

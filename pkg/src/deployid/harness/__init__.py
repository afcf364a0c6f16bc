"""Experiment orchestration: scenario files, pipeline commands, CLI."""

from .cli import builtin_scenario_path, main
from .commands import (cmd_fit, cmd_gen_data, cmd_report, cmd_robustness,
                       cmd_train)
from .config import (ConfigurationSpec, RobustnessSweepSpec, ScenarioConfig,
                     config_from_dict, config_to_dict, load_config,
                     replace_config, save_config)

__all__ = [
    "ConfigurationSpec", "RobustnessSweepSpec", "ScenarioConfig",
    "builtin_scenario_path", "cmd_fit", "cmd_gen_data", "cmd_report",
    "cmd_robustness", "cmd_train", "config_from_dict", "config_to_dict",
    "load_config", "main", "replace_config", "save_config",
]

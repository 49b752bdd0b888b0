from .config import COMMANDS, ConfigError, RunConfig, load_config
from .display import Display
from .engine import CommandEngine, CommandResult

__all__ = ["COMMANDS", "ConfigError", "RunConfig", "load_config", "Display", "CommandEngine", "CommandResult"]

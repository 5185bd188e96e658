"""Staged command-line pipeline: configuration, stages and the CLI."""

from .config import ConfigError, PipelineConfig, load_config, parse_config
from .stages import MissingInputError, Workspace, run_chain

__all__ = ["ConfigError", "MissingInputError", "PipelineConfig", "Workspace", "load_config",
           "parse_config", "run_chain"]

"""Discrete-event simulator for decentralized cooperation between edge servers."""

from .model import SimConfig, load_config, validate_config

__all__ = ["SimConfig", "load_config", "validate_config"]
__version__ = "0.1.0"

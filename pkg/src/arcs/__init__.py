"""Certified parameter checks and simulation for an attraction-repulsion
chemotaxis system with signal-dependent sensitivities."""
from .certifier import (AuxConstants, Certificate, Witness, certify, find_witness,
                        verify_weights)
from .config import RunConfig, parse_config, parse_config_string
from .model import Grid, SensitivitySpec, SystemState, validate_hypotheses
from .solver import SchemeConfig, run, step

__all__ = ["AuxConstants", "Certificate", "Witness", "certify", "find_witness",
           "verify_weights", "RunConfig", "parse_config", "parse_config_string", "Grid",
           "SensitivitySpec", "SystemState", "validate_hypotheses", "SchemeConfig", "run",
           "step"]
__version__ = "0.1.0"

"""Verification condition generation and solver orchestration."""

from .diagnose import Diagnostics, diagnose
from .encode import (Query, TraceStep, UnitEncoder, VerificationUnit,
                     encode_model)
from .replay import ReplayResult, SpecEval, replay, validate_verdicts
from .solver import SolverConfig, Verdict, parse_model, run_query, run_units

__all__ = [
    "Query", "TraceStep", "UnitEncoder", "VerificationUnit", "encode_model",
    "SolverConfig", "Verdict", "parse_model", "run_query", "run_units",
    "Diagnostics", "diagnose", "ReplayResult", "SpecEval", "replay",
    "validate_verdicts",
]

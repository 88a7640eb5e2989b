"""Definitional interpreter and differential fuzzing oracle."""

from .events import EventStore, singleton
from .interp import ExecResult, interpret
from .values import StructVal, HandleVal, MutVal, RefVal, freeze

__all__ = [
    "EventStore", "singleton", "ExecResult", "interpret",
    "StructVal", "HandleVal", "MutVal", "RefVal", "freeze",
]

"""Self-contained SMT solver for the verifier's query fragment."""

from .solver import Context, GiveUp, SolverError  # noqa: F401

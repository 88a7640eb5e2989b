"""Semantics-preserving model transformations, in pipeline order."""

from .refs import eliminate_refs
from .funspec import inject_fun_specs
from .globalinv import format_plan, inject_global_invariants, unify_invariant

__all__ = [
    "eliminate_refs", "inject_fun_specs", "inject_global_invariants",
    "format_plan", "unify_invariant",
]

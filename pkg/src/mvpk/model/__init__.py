"""Global model: merged code + specifications, type and borrow checked."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..errors import ModelError, SourceSpan, DUMMY_SPAN
from .types import Type, MemoryLabel
from .exp import SpecExp
from .ir import FunctionIR


@dataclass
class StructInfo:
    name: str  # qualified
    type_params: list[str]
    abilities: set[str]
    fields: list[tuple[str, Type]]
    data_invariants: list[SpecExp] = field(default_factory=list)
    span: SourceSpan = DUMMY_SPAN

    def field_type(self, fname: str) -> Type:
        for n, t in self.fields:
            if n == fname:
                return t
        raise KeyError(fname)

    def field_names(self) -> list[str]:
        return [n for n, _ in self.fields]


@dataclass
class EmitsClauseSpec:
    cond: Optional[SpecExp]
    handle: SpecExp
    msg: SpecExp


@dataclass
class FunSpec:
    requires: list[SpecExp] = field(default_factory=list)
    ensures: list[SpecExp] = field(default_factory=list)
    aborts_if: list[SpecExp] = field(default_factory=list)
    modifies: list[tuple[MemoryLabel, SpecExp]] = field(default_factory=list)
    emits: list[EmitsClauseSpec] = field(default_factory=list)
    opaque: bool = False
    suspend: bool = False
    span: SourceSpan = DUMMY_SPAN

    def is_empty(self) -> bool:
        return not (self.requires or self.ensures or self.aborts_if
                    or self.modifies or self.emits)


@dataclass
class SpecFunInfo:
    name: str  # qualified
    type_params: list[str]
    params: list[tuple[str, Type]]
    ret: Type
    body: SpecExp


@dataclass
class Invariant:
    tag: str
    kind: str  # "inductive" | "update"
    type_params: list[str]  # space "I"
    body: SpecExp
    declaring_module: str
    suspended_in: set[str] = field(default_factory=set)
    accessed: set[MemoryLabel] = field(default_factory=set)
    span: SourceSpan = DUMMY_SPAN


@dataclass
class GlobalModel:
    modules: list[str] = field(default_factory=list)
    structs: dict[str, StructInfo] = field(default_factory=dict)
    functions: dict[str, FunctionIR] = field(default_factory=dict)
    specs: dict[str, FunSpec] = field(default_factory=dict)
    spec_funs: dict[str, SpecFunInfo] = field(default_factory=dict)
    consts: dict[str, tuple[Type, object]] = field(default_factory=dict)
    invariants: list[Invariant] = field(default_factory=list)
    call_graph: dict[str, set[str]] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)

    def spec_of(self, fname: str) -> FunSpec:
        return self.specs.setdefault(fname, FunSpec())

    def struct_of_label(self, label: MemoryLabel) -> StructInfo:
        return self.structs[label.struct]


class ModelErrorGroup(Exception):
    """A batch of type/borrow errors from model construction."""

    def __init__(self, errors: list[ModelError]):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = errors


from .build import build_model  # noqa: E402
from .borrows import check_borrows  # noqa: E402

__all__ = [
    "GlobalModel", "StructInfo", "FunSpec", "SpecFunInfo", "Invariant",
    "EmitsClauseSpec", "ModelErrorGroup", "build_model", "check_borrows",
]

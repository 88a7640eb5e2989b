"""Statement-level three-address IR.

Function bodies are lowered so that every operand is a numbered temp and
every borrow is an explicit statement. Control flow is structured (no loops),
which keeps all later transformations and the VC encoding recursive.

The `origins` table assigns a site id to every borrow site; a `Mut` cell
carries the site id of the borrow it was created by, which is what the
`Mvp::is_*` predicates test.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from typing import Optional

from ..errors import SourceSpan, DUMMY_SPAN
from .types import Type, MemoryLabel
from .exp import SpecExp


# ---------------------------------------------------------------- rvalues

@dataclass
class Rvalue:
    pass


@dataclass
class Const(Rvalue):
    value: object
    ty: Type


@dataclass
class Use(Rvalue):
    src: int


@dataclass
class BinOp(Rvalue):
    op: str
    a: int
    b: int


@dataclass
class UnOp(Rvalue):
    op: str
    a: int


@dataclass
class Pack(Rvalue):
    struct: str
    targs: tuple[Type, ...]
    args: list[int]


@dataclass
class FieldGet(Rvalue):
    base: int
    field: str


@dataclass
class FieldUpdate(Rvalue):
    """Functional record update s[f = v]."""

    base: int
    field: str
    val: int


@dataclass
class BorrowLocal(Rvalue):
    local: int
    mut: bool


@dataclass
class BorrowField(Rvalue):
    ref: int
    field: str
    mut: bool


@dataclass
class BorrowGlobal(Rvalue):
    label: MemoryLabel
    addr: int
    mut: bool


@dataclass
class ReadRef(Rvalue):
    ref: int


@dataclass
class ReadGlobal(Rvalue):
    label: MemoryLabel
    addr: int


@dataclass
class Exists(Rvalue):
    label: MemoryLabel
    addr: int


@dataclass
class MoveFrom(Rvalue):
    label: MemoryLabel
    addr: int


@dataclass
class AddressOf(Rvalue):
    arg: int


@dataclass
class HavocVal(Rvalue):
    ty: Type


@dataclass
class Widen(Rvalue):
    """Machine int to unbounded num."""

    src: int


@dataclass
class Narrow(Rvalue):
    """Unbounded num back to a machine int; only emitted under a range guard."""

    src: int
    ty: Type


# Mut<T> operations (present after reference elimination).

@dataclass
class MkLocal(Rvalue):
    val: int
    site: int


@dataclass
class MkGlobal(Rvalue):
    val: int
    site: int
    label: MemoryLabel
    addr: int


@dataclass
class MutField(Rvalue):
    parent: int
    field: str
    site: int


@dataclass
class MutGet(Rvalue):
    m: int


@dataclass
class MutSet(Rvalue):
    m: int
    val: int


@dataclass
class IsOrigin(Rvalue):
    m: int
    site: int


# ---------------------------------------------------------------- statements

@dataclass
class Stmt:
    span: SourceSpan = dfield(default=DUMMY_SPAN, kw_only=True, repr=False)


@dataclass
class Assign(Stmt):
    dst: int
    rv: Rvalue
    # marks assignments produced as reference-release write-backs; data
    # invariant injection asserts on exactly these
    wb: bool = dfield(default=False, kw_only=True)


@dataclass
class WriteRef(Stmt):
    ref: int
    val: int


@dataclass
class WriteField(Stmt):
    ref: int
    field: str
    val: int


@dataclass
class SetGlobal(Stmt):
    label: MemoryLabel
    addr: int
    val: int


@dataclass
class WriteBackGlobal(Stmt):
    """Store a global-rooted Mut back to memory at its recorded address.

    `addr` is the temp the address was borrowed at; kept so permission
    checks can refer to the written location.
    """

    label: MemoryLabel
    m: int
    addr: int = -1


@dataclass
class MoveTo(Stmt):
    label: MemoryLabel
    signer: int
    val: int


@dataclass
class EmitEvent(Stmt):
    handle: int
    msg: int


@dataclass
class CondEmit(Stmt):
    """EventStore extension for the declared emits of an opaque callee."""

    handle: int
    msg: int
    cond: Optional[int]


@dataclass
class Call(Stmt):
    dsts: list[int]
    fname: str
    targs: tuple[Type, ...]
    args: list[int]


@dataclass
class Abort(Stmt):
    code: int


@dataclass
class Return(Stmt):
    vals: list[int]


@dataclass
class IfStmt(Stmt):
    cond: int
    then: list[Stmt]
    els: list[Stmt]


# Prover statements (inserted by injection stages).

@dataclass
class SpecAssume(Stmt):
    e: SpecExp


@dataclass
class SpecAssert(Stmt):
    e: SpecExp
    tag: str  # see TAGS
    note: str = ""  # e.g. invariant tag, condition origin


@dataclass
class SnapshotState(Stmt):
    label: str


@dataclass
class Havoc(Stmt):
    label: MemoryLabel
    addr: int


@dataclass
class EmitsClause:
    cond: Optional[SpecExp]
    handle: SpecExp
    msg: SpecExp


@dataclass
class EmitsChecks(Stmt):
    """Completeness and relevance checks of the emits specification."""

    clauses: list[EmitsClause]


@dataclass
class InlineMarker(Stmt):
    """Start of an inlined callee body; used for traces and suspension."""

    fname: str
    args: list[int]
    targs: tuple[Type, ...] = ()


@dataclass
class InlineEnd(Stmt):
    """End of an inlined callee body (matches the nearest InlineMarker)."""

    fname: str


@dataclass
class OpaqueCallBegin(Stmt):
    """Start of an expanded opaque call (matched by OpaqueCallMarker)."""

    fname: str


@dataclass
class OpaqueCallMarker(Stmt):
    """Records an expanded opaque call; used by global invariant injection."""

    fname: str
    targs: tuple[Type, ...]
    modified: list[tuple[MemoryLabel, int]]  # (label, addr temp)


TAGS = (
    "ensures", "aborts_if-return", "aborts_if-abort", "data-invariant",
    "modifies-permission", "emits-completeness", "emits-relevance",
    "global-invariant", "requires-at-callsite",
)


# ---------------------------------------------------------------- function

@dataclass
class FunctionIR:
    name: str  # qualified "Module::fun"
    visibility: str
    type_params: list[str]
    num_params: int
    locals: list[Type]  # type of each temp
    local_names: dict[int, str]
    rets: list[Type]
    acquires: set[str]  # qualified struct names
    body: list[Stmt]
    onreturn: list[Stmt] = dfield(default_factory=list)
    onabort: list[Stmt] = dfield(default_factory=list)
    origins: dict[int, tuple] = dfield(default_factory=dict)
    # params whose final cells are appended to the returns (in order),
    # recorded by reference elimination
    cell_params: list[int] = dfield(default_factory=list)
    # provenance of a monomorphized instance, recorded by specialization
    base_name: Optional[str] = None
    inst_targs: tuple = ()
    span: SourceSpan = DUMMY_SPAN

    def new_temp(self, ty: Type, name: str | None = None) -> int:
        t = len(self.locals)
        self.locals.append(ty)
        if name:
            self.local_names[t] = name
        return t

    def new_site(self, desc: tuple) -> int:
        site = len(self.origins)
        self.origins[site] = desc
        return site

    @property
    def module(self) -> str:
        return self.name.split("::")[0]

    def temp_name(self, t: int) -> str:
        return self.local_names.get(t, f"$t{t}")


def walk_stmts(stmts: list[Stmt]):
    for s in stmts:
        yield s
        if isinstance(s, IfStmt):
            yield from walk_stmts(s.then)
            yield from walk_stmts(s.els)


def all_stmts(fn: FunctionIR):
    yield from walk_stmts(fn.body)
    yield from walk_stmts(fn.onreturn)
    yield from walk_stmts(fn.onabort)

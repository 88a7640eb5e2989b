"""AST for MiniMove source, produced by the parser.

Every node carries a `span` pointing back into the source file. Structural
equality for round-trip checks goes through `strip(node)`, which erases spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass
from typing import Optional

from ..errors import SourceSpan, DUMMY_SPAN


@dataclass
class Node:
    span: SourceSpan = field(default=DUMMY_SPAN, kw_only=True, repr=False, compare=False)


# ---------------------------------------------------------------- types

@dataclass
class TypeNode(Node):
    pass


@dataclass
class NamedType(TypeNode):
    name: str
    targs: list[TypeNode] = field(default_factory=list)


@dataclass
class RefType(TypeNode):
    inner: TypeNode
    mut: bool


# ---------------------------------------------------------------- expressions

@dataclass
class Exp(Node):
    pass


@dataclass
class NumLit(Exp):
    value: int
    suffix: Optional[str] = None  # "u8" | "u64" | None


@dataclass
class BoolLit(Exp):
    value: bool


@dataclass
class AddressLit(Exp):
    value: int


@dataclass
class NameExp(Exp):
    name: str


@dataclass
class CallExp(Exp):
    name: str  # possibly qualified, e.g. "Signer::address_of"
    targs: list[TypeNode]
    args: list[Exp]


@dataclass
class FieldExp(Exp):
    base: Exp
    field: str


@dataclass
class PackExp(Exp):
    name: str
    targs: list[TypeNode]
    fields: list[tuple[str, Exp]]


@dataclass
class BorrowExp(Exp):
    e: Exp
    mut: bool


@dataclass
class DerefExp(Exp):
    e: Exp


@dataclass
class BinExp(Exp):
    op: str
    left: Exp
    right: Exp


@dataclass
class UnExp(Exp):
    op: str
    e: Exp


@dataclass
class IfExp(Exp):
    cond: Exp
    then: Exp
    els: Exp


@dataclass
class TupleExp(Exp):
    items: list[Exp]


@dataclass
class OldExp(Exp):
    e: Exp


@dataclass
class QuantExp(Exp):
    kind: str  # "forall" | "exists"
    var: str
    vtype: TypeNode
    where: Optional[Exp]
    body: Exp


# ---------------------------------------------------------------- statements

@dataclass
class Stmt(Node):
    pass


@dataclass
class LetStmt(Stmt):
    name: str
    ty: Optional[TypeNode]
    init: Optional[Exp]


@dataclass
class AssignStmt(Stmt):
    lhs: Exp  # NameExp, DerefExp or FieldExp chain
    rhs: Exp


@dataclass
class AssertStmt(Stmt):
    cond: Exp
    code: Exp


@dataclass
class AbortStmt(Stmt):
    code: Exp


@dataclass
class IfStmt(Stmt):
    cond: Exp
    then: list[Stmt]
    els: list[Stmt]


@dataclass
class ReturnStmt(Stmt):
    values: list[Exp]


@dataclass
class ExprStmt(Stmt):
    e: Exp


# ---------------------------------------------------------------- spec members

@dataclass
class SpecMember(Node):
    pass


@dataclass
class Requires(SpecMember):
    e: Exp


@dataclass
class Ensures(SpecMember):
    e: Exp


@dataclass
class AbortsIf(SpecMember):
    e: Exp


@dataclass
class ModifiesSpec(SpecMember):
    struct: NamedType
    addr: Exp


@dataclass
class EmitsSpec(SpecMember):
    msg: Exp
    handle: Exp
    cond: Optional[Exp]


@dataclass
class SpecLet(SpecMember):
    name: str
    e: Exp


@dataclass
class PragmaSpec(SpecMember):
    name: str


@dataclass
class DataInvariant(SpecMember):
    e: Exp


# ---------------------------------------------------------------- declarations

@dataclass
class SpecBlock(Node):
    target: str
    members: list[SpecMember]


@dataclass
class SpecFunDecl(Node):
    name: str
    type_params: list[str]
    params: list[tuple[str, TypeNode]]
    ret: TypeNode
    body: Exp


@dataclass
class InvariantDecl(Node):
    tag: Optional[str]
    is_update: bool
    type_params: list[str]
    body: Exp


@dataclass
class ConstDecl(Node):
    name: str
    ty: TypeNode
    value: Exp


@dataclass
class StructField(Node):
    name: str
    ty: TypeNode


@dataclass
class StructDecl(Node):
    name: str
    type_params: list[str]
    abilities: list[str]
    fields: list[StructField]


@dataclass
class FunDecl(Node):
    name: str
    visibility: str  # "private" | "public" | "script"
    type_params: list[str]
    params: list[tuple[str, TypeNode]]
    rets: list[TypeNode]
    acquires: list[str]
    body: list[Stmt]


@dataclass
class ModuleDecl(Node):
    name: str
    consts: list[ConstDecl]
    structs: list[StructDecl]
    funs: list[FunDecl]
    spec_blocks: list[SpecBlock]
    spec_funs: list[SpecFunDecl]
    invariants: list[InvariantDecl]


@dataclass
class Ast(Node):
    modules: list[ModuleDecl]


# ---------------------------------------------------------------- span-free view

def strip(node):
    """Nested-tuple view of an AST with all spans erased.

    Two trees are parse-equivalent iff their stripped views are equal.
    """
    if is_dataclass(node) and not isinstance(node, type):
        items = [type(node).__name__]
        for f in fields(node):
            if f.name == "span":
                continue
            items.append(strip(getattr(node, f.name)))
        return tuple(items)
    if isinstance(node, (list, tuple)):
        return tuple(strip(x) for x in node)
    return node

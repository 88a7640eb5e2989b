"""Typed specification expressions.

Spec-block `let`s and module constants are expanded during conversion, so
the only variable kinds left are function parameters, quantifier binders,
data-invariant field selections, IR temps (after injection) and `result`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from ..errors import SourceSpan, DUMMY_SPAN
from .types import Type, MemoryLabel, BOOL, NUM


@dataclass(frozen=True)
class SpecExp:
    ty: Type = field(kw_only=True)
    span: SourceSpan = field(default=DUMMY_SPAN, kw_only=True, compare=False)

    def children(self) -> tuple["SpecExp", ...]:
        return ()

    def with_children(self, kids) -> "SpecExp":
        return self


@dataclass(frozen=True)
class SConst(SpecExp):
    value: object  # int or bool


@dataclass(frozen=True)
class SVar(SpecExp):
    kind: str  # "param" | "quant" | "self_field" | "temp" | "result"
    name: object  # str, or int for temps / result index


@dataclass(frozen=True)
class SBin(SpecExp):
    op: str
    left: SpecExp
    right: SpecExp

    def children(self):
        return (self.left, self.right)

    def with_children(self, kids):
        return replace(self, left=kids[0], right=kids[1])


@dataclass(frozen=True)
class SUn(SpecExp):
    op: str
    e: SpecExp

    def children(self):
        return (self.e,)

    def with_children(self, kids):
        return replace(self, e=kids[0])


@dataclass(frozen=True)
class SField(SpecExp):
    base: SpecExp
    field_name: str

    def children(self):
        return (self.base,)

    def with_children(self, kids):
        return replace(self, base=kids[0])


@dataclass(frozen=True)
class SGlobal(SpecExp):
    label: MemoryLabel
    addr: SpecExp

    def children(self):
        return (self.addr,)

    def with_children(self, kids):
        return replace(self, addr=kids[0])


@dataclass(frozen=True)
class SExistsMem(SpecExp):
    label: MemoryLabel
    addr: SpecExp

    def children(self):
        return (self.addr,)

    def with_children(self, kids):
        return replace(self, addr=kids[0])


@dataclass(frozen=True)
class SOld(SpecExp):
    e: SpecExp
    snapshot: Optional[str] = None  # filled when injected

    def children(self):
        return (self.e,)

    def with_children(self, kids):
        return replace(self, e=kids[0])


@dataclass(frozen=True)
class SCall(SpecExp):
    fun: str  # qualified spec fun name
    targs: tuple[Type, ...]
    args: tuple[SpecExp, ...]

    def children(self):
        return self.args

    def with_children(self, kids):
        return replace(self, args=tuple(kids))


@dataclass(frozen=True)
class SQuant(SpecExp):
    kind: str  # "forall" | "exists"
    var: str
    sort: Type
    where: Optional[SpecExp]
    body: SpecExp

    def children(self):
        if self.where is None:
            return (self.body,)
        return (self.where, self.body)

    def with_children(self, kids):
        if self.where is None:
            return replace(self, body=kids[0])
        return replace(self, where=kids[0], body=kids[1])


@dataclass(frozen=True)
class SPack(SpecExp):
    struct: str
    targs: tuple[Type, ...]
    fields: tuple[tuple[str, SpecExp], ...]

    def children(self):
        return tuple(e for _, e in self.fields)

    def with_children(self, kids):
        return replace(self, fields=tuple(
            (n, k) for (n, _), k in zip(self.fields, kids)))


@dataclass(frozen=True)
class SCond(SpecExp):
    cond: SpecExp
    then: SpecExp
    els: SpecExp

    def children(self):
        return (self.cond, self.then, self.els)

    def with_children(self, kids):
        return replace(self, cond=kids[0], then=kids[1], els=kids[2])


@dataclass(frozen=True)
class SAddressOf(SpecExp):
    e: SpecExp

    def children(self):
        return (self.e,)

    def with_children(self, kids):
        return replace(self, e=kids[0])


TRUE = SConst(True, ty=BOOL)
FALSE = SConst(False, ty=BOOL)


def num(v: int) -> SConst:
    return SConst(v, ty=NUM)


# ---------------------------------------------------------------- rewriting

def transform(e: SpecExp, fn) -> SpecExp:
    """Bottom-up rewrite: fn is applied to every node after its children."""
    kids = e.children()
    if kids:
        e = e.with_children(tuple(transform(k, fn) for k in kids))
    return fn(e)


def subst_types(e: SpecExp, sub: dict) -> SpecExp:
    def fn(n):
        n = replace(n, ty=n.ty.subst(sub))
        if isinstance(n, (SGlobal, SExistsMem)):
            n = replace(n, label=n.label.subst(sub))
        if isinstance(n, (SCall, SPack)):
            n = replace(n, targs=tuple(t.subst(sub) for t in n.targs))
        if isinstance(n, SQuant):
            n = replace(n, sort=n.sort.subst(sub))
        return n
    return transform(e, fn)


def replace_vars(e: SpecExp, mapping: dict) -> SpecExp:
    """Replace SVar nodes; mapping keys are (kind, name) pairs."""
    def fn(n):
        if isinstance(n, SVar):
            return mapping.get((n.kind, n.name), n)
        return n
    return transform(e, fn)


def bind_old(e: SpecExp, snapshot: str) -> SpecExp:
    """Attach a snapshot label to every unbound old(..) node."""
    def fn(n):
        if isinstance(n, SOld) and n.snapshot is None:
            return replace(n, snapshot=snapshot)
        return n
    return transform(e, fn)


def contains_old(e: SpecExp) -> bool:
    found = [False]

    def fn(n):
        if isinstance(n, SOld):
            found[0] = True
        return n
    transform(e, fn)
    return found[0]


def walk(e: SpecExp):
    yield e
    for k in e.children():
        yield from walk(k)


def memory_labels(e: SpecExp, spec_funs: dict) -> set[MemoryLabel]:
    """Memory read by a spec expression, transitively through spec funs.

    `spec_funs` maps qualified names to objects with `.body` and `.targs`
    application handled via type substitution.
    """
    out: set[MemoryLabel] = set()
    seen: set = set()

    def visit(x: SpecExp):
        for n in walk(x):
            if isinstance(n, (SGlobal, SExistsMem)):
                out.add(n.label)
            elif isinstance(n, SCall):
                key = (n.fun, n.targs)
                if key in seen:
                    continue
                seen.add(key)
                sf = spec_funs[n.fun]
                sub = {("F", i): t for i, t in enumerate(n.targs)}
                visit(subst_types(sf.body, sub))
    visit(e)
    return out

"""Type representation, substitution and unification.

Type parameters carry a `space` so that unification between two independently
parameterized things (a generic function and a generic invariant) can produce
a substitution for both sides at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class Type:
    def subst(self, sub: dict) -> "Type":
        return self

    def type_params(self) -> set[tuple[str, int]]:
        return set()

    def is_ground(self) -> bool:
        return not self.type_params()


@dataclass(frozen=True)
class PrimType(Type):
    name: str  # u8 | u64 | bool | address | signer | num

    def __str__(self):
        return self.name


U8 = PrimType("u8")
U64 = PrimType("u64")
BOOL = PrimType("bool")
ADDRESS = PrimType("address")
SIGNER = PrimType("signer")
NUM = PrimType("num")  # spec-only unbounded signed integer

INT_BOUNDS = {U8: (1 << 8) - 1, U64: (1 << 64) - 1}
MAX_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class TypeParam(Type):
    index: int
    space: str = "F"  # "F": enclosing function/struct, "I": invariant
    name: str = ""

    def subst(self, sub):
        return sub.get((self.space, self.index), self)

    def type_params(self):
        return {(self.space, self.index)}

    def __str__(self):
        return self.name or f"#{self.space}{self.index}"


@dataclass(frozen=True)
class SkolemType(Type):
    """Fresh nominal type standing for an arbitrary instantiation."""

    index: int

    def __str__(self):
        return f"#Skolem_{self.index}"


@dataclass(frozen=True)
class StructT(Type):
    name: str  # qualified, e.g. "Account::Account"
    targs: tuple[Type, ...] = ()

    def subst(self, sub):
        return StructT(self.name, tuple(t.subst(sub) for t in self.targs))

    def type_params(self):
        out = set()
        for t in self.targs:
            out |= t.type_params()
        return out

    def __str__(self):
        if self.targs:
            return f"{self.name}<{', '.join(map(str, self.targs))}>"
        return self.name


@dataclass(frozen=True)
class RefT(Type):
    inner: Type
    mut: bool

    def subst(self, sub):
        return RefT(self.inner.subst(sub), self.mut)

    def type_params(self):
        return self.inner.type_params()

    def __str__(self):
        return ("&mut " if self.mut else "&") + str(self.inner)


@dataclass(frozen=True)
class MutT(Type):
    """The Mut<T> cell type introduced by reference elimination."""

    inner: Type

    def subst(self, sub):
        return MutT(self.inner.subst(sub))

    def type_params(self):
        return self.inner.type_params()

    def __str__(self):
        return f"Mut<{self.inner}>"


@dataclass(frozen=True)
class EventHandleT(Type):
    msg: Type

    def subst(self, sub):
        return EventHandleT(self.msg.subst(sub))

    def type_params(self):
        return self.msg.type_params()

    def __str__(self):
        return f"EventHandle<{self.msg}>"


@dataclass(frozen=True)
class MemoryLabel:
    """A region of global memory: a key structure plus type arguments."""

    struct: str
    targs: tuple[Type, ...] = ()

    def subst(self, sub) -> "MemoryLabel":
        return MemoryLabel(self.struct,
                           tuple(t.subst(sub) for t in self.targs))

    def type_params(self):
        out = set()
        for t in self.targs:
            out |= t.type_params()
        return out

    def is_ground(self):
        return not self.type_params()

    def __str__(self):
        return str(StructT(self.struct, self.targs))

    def sort_key(self):
        return str(self)


def unify(a: Type, b: Type, sub: dict | None = None) -> dict | None:
    """Syntactic unification; TypeParams on either side are variables.

    Returns the (extended) substitution or None. Skolem types unify only
    with themselves.
    """
    sub = dict(sub) if sub else {}
    a = a.subst(sub)
    b = b.subst(sub)
    if a == b:
        return sub
    if isinstance(a, TypeParam):
        sub[(a.space, a.index)] = b
        return sub
    if isinstance(b, TypeParam):
        sub[(b.space, b.index)] = a
        return sub
    if isinstance(a, StructT) and isinstance(b, StructT):
        if a.name != b.name or len(a.targs) != len(b.targs):
            return None
        for x, y in zip(a.targs, b.targs):
            sub = unify(x, y, sub)
            if sub is None:
                return None
        return sub
    return None


def resolve_subst(sub: dict) -> dict:
    """Make a substitution idempotent by resolving chained bindings."""
    out = dict(sub)
    for _ in range(len(out) + 1):
        nxt = {k: t.subst(out) for k, t in out.items()}
        if nxt == out:
            break
        out = nxt
    return out


def deep_subst(t: Type, sub: dict) -> Type:
    return t.subst(resolve_subst(sub))


def unify_labels(a: MemoryLabel, b: MemoryLabel,
                 sub: dict | None = None) -> dict | None:
    return unify(StructT(a.struct, a.targs), StructT(b.struct, b.targs), sub)


def is_int_type(t: Type) -> bool:
    return t in (U8, U64, NUM)

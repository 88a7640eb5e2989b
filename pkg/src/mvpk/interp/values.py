"""Runtime values of the interpreter.

Aggregate updates are functional (copy on write), so snapshots of memory
for abort atomicity are plain dict copies.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from ..model.types import Type


@dataclass(frozen=True)
class StructVal:
    struct: str  # qualified name
    targs: tuple[Type, ...]
    fields: tuple[tuple[str, object], ...]  # declaration order

    def get(self, fname: str):
        for n, v in self.fields:
            if n == fname:
                return v
        raise KeyError(fname)

    def set(self, fname: str, val) -> "StructVal":
        return replace(self, fields=tuple(
            (n, val if n == fname else v) for n, v in self.fields))


@dataclass(frozen=True)
class HandleVal:
    """An event handle; identity is the guid."""

    guid: int


@dataclass(frozen=True)
class MutVal:
    """A Mut<T> cell: packed value, origin site and (for globals) address."""

    value: object
    site: int
    addr: Optional[int] = None


@dataclass(frozen=True)
class RefVal:
    """A reference (pre-elimination): a rooted access path.

    root is ("frame", Frame, temp) or ("global", MemoryLabel, addr).
    """

    root: tuple
    path: tuple[str, ...] = ()

    def extend(self, fname: str) -> "RefVal":
        return RefVal(self.root, self.path + (fname,))


def freeze(v):
    """Canonical hashable form of a value (for event multisets)."""
    if isinstance(v, StructVal):
        return (v.struct, v.targs,
                tuple((n, freeze(x)) for n, x in v.fields))
    if isinstance(v, HandleVal):
        return ("handle", v.guid)
    return v

"""Borrow discipline and acquires checking.

The reference language is restrictive enough (no loops, structured control
flow) that a linear scan over the statements in execution order, with
borrow lifetimes approximated by definition/last-use intervals, gives an
adequate and conservative checker:

* at most one live mutable borrow per overlapping access path;
* a mutable reference passed to a call is consumed (affine);
* no call may acquire a memory label while a borrow of that label is live;
* declared ``acquires`` lists must be exact;
* functions must not return mutable references.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import BorrowError, DUMMY_SPAN
from .types import RefT
from . import ir as I


def check_borrows(model) -> None:
    from . import ModelErrorGroup
    errors: list[BorrowError] = []
    for fn in model.functions.values():
        _check_fun(model, fn, errors)
    _check_acquires(model, errors)
    if errors:
        seen = set()
        unique = []
        for e in errors:
            key = (e.message, e.span)
            if key not in seen:
                seen.add(key)
                unique.append(e)
        raise ModelErrorGroup(unique)


@dataclass
class _Borrow:
    temp: int
    def_i: int
    root: tuple  # ("local", t) | ("global", label) | ("param", t) | ("call", i)
    path: tuple[str, ...]
    mut: bool
    parents: list[int]
    span: object
    last_use: int = -1
    children: list[int] = field(default_factory=list)
    consumed_at: int | None = None

    def end(self, borrows: dict[int, "_Borrow"]) -> int:
        e = max(self.last_use, self.def_i)
        for c in self.children:
            e = max(e, borrows[c].end(borrows))
        if self.consumed_at is not None:
            e = max(e, self.consumed_at)
        return e


def _rv_uses(rv: I.Rvalue) -> list[int]:
    if isinstance(rv, I.Use):
        return [rv.src]
    if isinstance(rv, I.BinOp):
        return [rv.a, rv.b]
    if isinstance(rv, I.UnOp):
        return [rv.a]
    if isinstance(rv, I.Pack):
        return list(rv.args)
    if isinstance(rv, (I.FieldGet, I.FieldUpdate)):
        out = [rv.base]
        if isinstance(rv, I.FieldUpdate):
            out.append(rv.val)
        return out
    if isinstance(rv, I.BorrowLocal):
        return [rv.local]
    if isinstance(rv, I.BorrowField):
        return [rv.ref]
    if isinstance(rv, (I.BorrowGlobal, I.Exists, I.MoveFrom)):
        return [rv.addr]
    if isinstance(rv, I.ReadRef):
        return [rv.ref]
    if isinstance(rv, I.AddressOf):
        return [rv.arg]
    if isinstance(rv, (I.Widen, I.Narrow)):
        return [rv.src]
    if isinstance(rv, I.MkLocal):
        return [rv.val]
    if isinstance(rv, I.MkGlobal):
        return [rv.val, rv.addr]
    if isinstance(rv, I.MutField):
        return [rv.parent]
    if isinstance(rv, I.MutGet):
        return [rv.m]
    if isinstance(rv, I.MutSet):
        return [rv.m, rv.val]
    if isinstance(rv, I.IsOrigin):
        return [rv.m]
    return []


def _stmt_uses(s: I.Stmt) -> list[int]:
    if isinstance(s, I.Assign):
        return _rv_uses(s.rv)
    if isinstance(s, I.WriteRef):
        return [s.ref, s.val]
    if isinstance(s, I.WriteField):
        return [s.ref, s.val]
    if isinstance(s, I.SetGlobal):
        return [s.addr, s.val]
    if isinstance(s, I.WriteBackGlobal):
        return [s.m] + ([s.addr] if s.addr >= 0 else [])
    if isinstance(s, I.MoveTo):
        return [s.signer, s.val]
    if isinstance(s, I.EmitEvent):
        return [s.handle, s.msg]
    if isinstance(s, I.CondEmit):
        return [s.handle, s.msg] + ([] if s.cond is None else [s.cond])
    if isinstance(s, I.Havoc):
        return [s.addr]
    if isinstance(s, I.Call):
        return list(s.args)
    if isinstance(s, I.Abort):
        return [s.code]
    if isinstance(s, I.Return):
        return list(s.vals)
    if isinstance(s, I.IfStmt):
        return [s.cond]
    return []


def _check_fun(model, fn: I.FunctionIR, errors: list[BorrowError]) -> None:
    for rt in fn.rets:
        if isinstance(rt, RefT) and rt.mut:
            errors.append(BorrowError(
                f"function {fn.name} returns a mutable reference",
                fn.span))

    # statements in execution order, each with its branch context: the
    # chain of (if-statement id, side) it sits under
    seq: list[I.Stmt] = []
    ctxs: list[tuple] = []

    def build(stmts, ctx):
        for s in stmts:
            seq.append(s)
            ctxs.append(ctx)
            if isinstance(s, I.IfStmt):
                build(s.then, ctx + ((id(s), 0),))
                build(s.els, ctx + ((id(s), 1),))

    build(fn.body, ())
    borrows: dict[int, _Borrow] = {}
    def_ctx: dict[int, tuple] = {}
    for t in range(fn.num_params):
        if isinstance(fn.locals[t], RefT):
            borrows[t] = _Borrow(t, -1, ("param", t), (),
                                 fn.locals[t].mut, [], fn.span)
            def_ctx[t] = ()

    # temps used anywhere other than as the base of a field extension;
    # purely-extended borrows are "internal" and represented by their leaves
    used_directly: set[int] = set()
    for s in seq:
        if isinstance(s, I.Assign) and isinstance(s.rv, I.BorrowField):
            continue
        for u in _stmt_uses(s):
            used_directly.add(u)

    # first pass: collect borrow definitions and last uses
    for i, s in enumerate(seq):
        if isinstance(s, I.Assign) and isinstance(
                s.rv, (I.BorrowLocal, I.BorrowGlobal, I.BorrowField, I.Use)):
            def_ctx.setdefault(s.dst, ctxs[i])
        if isinstance(s, I.Call):
            for d in s.dsts:
                def_ctx.setdefault(d, ctxs[i])
        if isinstance(s, I.Assign):
            rv = s.rv
            if isinstance(rv, I.BorrowLocal):
                borrows[s.dst] = _Borrow(s.dst, i, ("local", rv.local), (),
                                         rv.mut, [], s.span)
            elif isinstance(rv, I.BorrowGlobal):
                borrows[s.dst] = _Borrow(s.dst, i, ("global", rv.label), (),
                                         rv.mut, [], s.span)
            elif isinstance(rv, I.BorrowField):
                p = borrows.get(rv.ref)
                if p is not None:
                    borrows[s.dst] = _Borrow(
                        s.dst, i, p.root, p.path + (rv.field,), rv.mut,
                        [rv.ref], s.span)
                    p.children.append(s.dst)
            elif isinstance(rv, I.Use) and rv.src in borrows:
                # a reference copy shares its source's identity; branch
                # merges accumulate several parents
                p = borrows[rv.src]
                if s.dst in borrows:
                    borrows[s.dst].parents.append(rv.src)
                else:
                    borrows[s.dst] = _Borrow(s.dst, i, p.root, p.path,
                                             p.mut, [rv.src], s.span)
                p.children.append(s.dst)
            elif isinstance(s.rv, I.Call):  # pragma: no cover - not an rvalue
                pass
        if isinstance(s, I.Call):
            for d in s.dsts:
                if isinstance(fn.locals[d], RefT):
                    borrows[d] = _Borrow(d, i, ("call", i), (),
                                         fn.locals[d].mut, [], s.span)
        for u in _stmt_uses(s):
            if u in borrows:
                borrows[u].last_use = i

    # consumption of mutable references by calls
    for i, s in enumerate(seq):
        if isinstance(s, I.Call):
            for a in s.args:
                b = borrows.get(a)
                if b is not None and b.mut:
                    if b.consumed_at is not None:
                        errors.append(BorrowError(
                            "mutable reference used after being passed "
                            "to a call", s.span))
                    b.consumed_at = i

    def live(b: _Borrow, i: int) -> bool:
        return b.def_i < i <= b.end(borrows)

    def overlap(a: _Borrow, b: _Borrow) -> bool:
        if a.root != b.root:
            return False
        n = min(len(a.path), len(b.path))
        return a.path[:n] == b.path[:n]

    def exclusive(a: _Borrow, b: _Borrow) -> bool:
        ca = def_ctx.get(a.temp, ())
        cb = def_ctx.get(b.temp, ())
        for (ia, sa), (ib, sb) in zip(ca, cb):
            if ia != ib:
                return False
            if sa != sb:
                return True
        return False

    def is_ancestor(a: _Borrow, b: _Borrow) -> bool:
        seen = set()
        stack = list(b.parents)
        while stack:
            t = stack.pop()
            if t == a.temp:
                return True
            if t in seen:
                continue
            seen.add(t)
            stack.extend(borrows[t].parents)
        return False

    # second pass: conflicts; internal borrows (only ever extended into
    # field borrows) are skipped since their leaves carry the full path
    def internal(b: _Borrow) -> bool:
        return (b.temp not in used_directly and b.children
                and all(borrows[c].path != b.path for c in b.children))

    order = sorted(borrows.values(), key=lambda b: b.def_i)
    bad: set[int] = set()
    for b in order:
        if b.def_i < 0 or internal(b):
            continue
        if any(a in bad for a in _ancestors(b, borrows)):
            continue
        for other in order:
            if other.temp == b.temp or other.def_i >= b.def_i:
                continue
            if internal(other) or not live(other, b.def_i):
                continue
            if is_ancestor(other, b) or is_ancestor(b, other):
                continue
            if exclusive(other, b):
                continue
            if overlap(other, b) and (other.mut or b.mut):
                errors.append(BorrowError(
                    f"conflicting borrow: {_root_str(fn, b.root)} is "
                    f"already borrowed", b.span))
                bad.add(b.temp)
                break

    for i, s in enumerate(seq):
        # calls acquiring a label invalidate live borrows of that label
        if isinstance(s, I.Call):
            callee = model.functions.get(s.fname)
            acq = callee.acquires if callee is not None else set()
            for b in borrows.values():
                if (b.root[0] == "global" and b.root[1].struct in acq
                        and live(b, i)):
                    errors.append(BorrowError(
                        f"call to {s.fname} acquires {b.root[1]} while a "
                        f"reference into it is held", s.span))
        if isinstance(s, I.Assign) and isinstance(s.rv, I.MoveFrom):
            for b in borrows.values():
                if (b.root[0] == "global"
                        and b.root[1] == s.rv.label and live(b, i)):
                    errors.append(BorrowError(
                        f"move_from<{s.rv.label}> while a reference into "
                        f"it is held", s.span))
        # references rooted in global memory must not escape
        if isinstance(s, I.Return):
            for v in s.vals:
                b = borrows.get(v)
                if b is not None and b.root[0] == "global":
                    errors.append(BorrowError(
                        "cannot return a reference into global memory",
                        s.span))
        # writing a borrowed local, or reading a mutably borrowed one
        if isinstance(s, I.Assign) and s.dst not in borrows:
            for b in borrows.values():
                if b.root == ("local", s.dst) and live(b, i):
                    errors.append(BorrowError(
                        f"cannot assign to {fn.temp_name(s.dst)} while it "
                        f"is borrowed", s.span))
        for u in _stmt_uses(s):
            if u in borrows:
                continue
            if (isinstance(s, I.Assign)
                    and isinstance(s.rv, I.BorrowLocal)):
                continue
            for b in borrows.values():
                if b.root == ("local", u) and b.mut and live(b, i):
                    errors.append(BorrowError(
                        f"cannot use {fn.temp_name(u)} while it is "
                        f"mutably borrowed", s.span))


def _ancestors(b: _Borrow, borrows: dict[int, _Borrow]):
    out = [b.temp]
    stack = list(b.parents)
    while stack:
        t = stack.pop()
        if t in out:
            continue
        out.append(t)
        stack.extend(borrows[t].parents)
    return out


def _root_str(fn: I.FunctionIR, root: tuple) -> str:
    if root[0] == "local":
        return fn.temp_name(root[1])
    if root[0] == "param":
        return fn.temp_name(root[1])
    if root[0] == "global":
        return f"global<{root[1]}>"
    return "a call result"


def _check_acquires(model, errors: list[BorrowError]) -> None:
    for fn in model.functions.values():
        needed: set[str] = set()
        spans: dict[str, object] = {}
        for s in I.all_stmts(fn):
            if isinstance(s, I.Assign) and isinstance(
                    s.rv, (I.BorrowGlobal, I.MoveFrom)):
                needed.add(s.rv.label.struct)
                spans.setdefault(s.rv.label.struct, s.span)
            elif isinstance(s, I.Call):
                callee = model.functions.get(s.fname)
                if callee is not None:
                    for name in callee.acquires:
                        needed.add(name)
                        spans.setdefault(name, s.span)
        for name in sorted(needed - fn.acquires):
            errors.append(BorrowError(
                f"function {fn.name} uses global memory {name} but does "
                f"not declare `acquires {name.split('::')[-1]}`",
                spans.get(name, fn.span)))
        for name in sorted(fn.acquires - needed):
            errors.append(BorrowError(
                f"function {fn.name} declares `acquires "
                f"{name.split('::')[-1]}` but never acquires it", fn.span))

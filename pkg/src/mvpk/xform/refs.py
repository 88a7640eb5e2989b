"""Reference elimination: produce an alias-free program.

Immutable references become plain values. Mutable references become
read-update-write cycles over Mut cells: borrows create cells, reads and
writes go through Mvp::get/Mvp::set, and when the last reference dies the
carried value is written back to its origin, with Mvp::is_* case splits
when the origin is dynamic. Functions taking mutable references return the
final cells so callers can perform the write-back.

Whole call components in which every release point has a statically unique
origin skip the cell machinery entirely and work on plain values.
"""

from __future__ import annotations

import copy

from ..analysis import BorrowGraph, Edge, borrow_graph
from ..errors import InternalError
from ..model import GlobalModel
from ..model import ir as I
from ..model.borrows import _rv_uses, _stmt_uses
from ..model.types import MutT, RefT


def eliminate_refs(model: GlobalModel) -> GlobalModel:
    """Return a transformed copy of the model with no reference types."""
    out = copy.deepcopy(model)
    for fn in out.functions.values():
        _eliminate_immutable(fn)
    graphs = {name: borrow_graph(out, fn)
              for name, fn in out.functions.items()}
    tracked = _tracked_functions(out, graphs)
    mut_params = {name: [t for t in range(fn.num_params)
                         if isinstance(fn.locals[t], RefT)]
                  for name, fn in out.functions.items()}
    for name, fn in out.functions.items():
        _eliminate_mutable(fn, graphs[name], name in tracked, mut_params)
    return out


# ---------------------------------------------------------------- phase A

def _eliminate_immutable(fn: I.FunctionIR) -> None:
    old = list(fn.locals)

    def imm(t: int) -> bool:
        return isinstance(old[t], RefT) and not old[t].mut

    def rewrite(block: list[I.Stmt]) -> list[I.Stmt]:
        out: list[I.Stmt] = []
        for s in block:
            if isinstance(s, I.IfStmt):
                s.then = rewrite(s.then)
                s.els = rewrite(s.els)
                out.append(s)
                continue
            if isinstance(s, I.Assign):
                rv = s.rv
                if isinstance(rv, I.BorrowLocal) and not rv.mut:
                    s.rv = I.Use(rv.local)
                elif isinstance(rv, I.BorrowGlobal) and not rv.mut:
                    s.rv = I.ReadGlobal(rv.label, rv.addr)
                elif isinstance(rv, I.BorrowField) and not rv.mut:
                    if isinstance(old[rv.ref], RefT) and old[rv.ref].mut:
                        # value snapshot of the mutable parent, then select
                        v = fn.new_temp(old[rv.ref].inner)
                        old.append(fn.locals[v])
                        out.append(I.Assign(v, I.ReadRef(rv.ref),
                                            span=s.span))
                        s.rv = I.FieldGet(v, rv.field)
                    else:
                        s.rv = I.FieldGet(rv.ref, rv.field)
                elif isinstance(rv, I.ReadRef) and imm(rv.ref):
                    s.rv = I.Use(rv.ref)
            out.append(s)
        return out

    fn.body = rewrite(fn.body)
    fn.locals = [t.inner if isinstance(t, RefT) and not t.mut else t
                 for t in fn.locals]
    fn.rets = [t.inner if isinstance(t, RefT) and not t.mut else t
               for t in fn.rets]


# ---------------------------------------------------------------- tracking

def _tracked_functions(model: GlobalModel,
                       graphs: dict[str, BorrowGraph]) -> set[str]:
    """Functions whose cells need origin tracking: any function with a
    dynamic release point, closed over calls that pass mutable refs."""
    neighbors: dict[str, set[str]] = {f: set() for f in model.functions}
    for name, fn in model.functions.items():
        for s in I.all_stmts(fn):
            if isinstance(s, I.Call) and s.fname in model.functions:
                if any(isinstance(fn.locals[a], RefT) for a in s.args):
                    neighbors[name].add(s.fname)
                    neighbors[s.fname].add(name)
    tracked = {f for f, g in graphs.items() if g.has_dynamic_release()}
    work = list(tracked)
    while work:
        f = work.pop()
        for n in neighbors[f]:
            if n not in tracked:
                tracked.add(n)
                work.append(n)
    return tracked


# ---------------------------------------------------------------- phase B

def _eliminate_mutable(fn: I.FunctionIR, graph: BorrowGraph, tracked: bool,
                       mut_params: dict[str, list[int]]) -> None:
    old = list(fn.locals)

    def is_cell(t: int) -> bool:
        return t < len(old) and isinstance(old[t], RefT)

    own_params = [t for t in range(fn.num_params) if is_cell(t)]

    for site, e in graph.sites.items():
        if e.kind == "local":
            fn.origins[site] = ("local", e.local)
        elif e.kind == "global":
            fn.origins[site] = ("global", e.label, e.addr)
        elif e.kind == "field":
            fn.origins[site] = ("field", e.parent, e.fname)

    def new_temp(ty) -> int:
        return fn.new_temp(ty)

    # cells that are moved into another reference temp never write back
    # themselves; their copy carries the obligation
    moved: set[int] = set()
    for s in I.all_stmts(fn):
        if (isinstance(s, I.Assign) and isinstance(s.rv, I.Use)
                and is_cell(s.dst) and is_cell(s.rv.src)):
            moved.add(s.rv.src)

    # ---------------- statement rewriting

    def rewrite(block: list[I.Stmt]) -> list[I.Stmt]:
        out: list[I.Stmt] = []
        for s in block:
            if isinstance(s, I.IfStmt):
                s.then = rewrite(s.then)
                s.els = rewrite(s.els)
                out.append(s)
                continue
            if isinstance(s, I.Assign):
                rv = s.rv
                if isinstance(rv, I.BorrowLocal):
                    site = _site_for(graph, s.dst, "local", rv.local)
                    s.rv = (I.MkLocal(rv.local, site) if tracked
                            else I.Use(rv.local))
                elif isinstance(rv, I.BorrowGlobal):
                    site = _site_for(graph, s.dst, "global", rv.addr)
                    if tracked:
                        v = new_temp(old[s.dst].inner)
                        out.append(I.Assign(
                            v, I.ReadGlobal(rv.label, rv.addr),
                            span=s.span))
                        s.rv = I.MkGlobal(v, site, rv.label, rv.addr)
                    else:
                        s.rv = I.ReadGlobal(rv.label, rv.addr)
                elif isinstance(rv, I.BorrowField):
                    site = _site_for(graph, s.dst, "field", rv.field)
                    s.rv = (I.MutField(rv.ref, rv.field, site) if tracked
                            else I.FieldGet(rv.ref, rv.field))
                elif isinstance(rv, I.ReadRef):
                    s.rv = I.MutGet(rv.ref) if tracked else I.Use(rv.ref)
                out.append(s)
            elif isinstance(s, I.WriteRef):
                if tracked:
                    out.append(I.Assign(s.ref, I.MutSet(s.ref, s.val),
                                        span=s.span))
                else:
                    out.append(I.Assign(s.ref, I.Use(s.val), span=s.span))
            elif isinstance(s, I.WriteField):
                if tracked:
                    v = new_temp(old[s.ref].inner)
                    u = new_temp(old[s.ref].inner)
                    out.append(I.Assign(v, I.MutGet(s.ref), span=s.span))
                    out.append(I.Assign(
                        u, I.FieldUpdate(v, s.field, s.val), span=s.span))
                    out.append(I.Assign(s.ref, I.MutSet(s.ref, u),
                                        span=s.span))
                else:
                    out.append(I.Assign(
                        s.ref, I.FieldUpdate(s.ref, s.field, s.val),
                        span=s.span))
            else:
                out.append(s)
        return out

    # calls: receive updated cells back into the argument temps
    def extend_calls(block: list[I.Stmt]):
        for s in block:
            if isinstance(s, I.IfStmt):
                extend_calls(s.then)
                extend_calls(s.els)
            elif isinstance(s, I.Call) and s.fname in mut_params:
                back = [s.args[i] for i in mut_params[s.fname]]
                s.dsts = list(s.dsts) + back

    # returns: yield the final parameter cells to the caller
    def extend_returns(block: list[I.Stmt]):
        for s in block:
            if isinstance(s, I.IfStmt):
                extend_returns(s.then)
                extend_returns(s.els)
            elif isinstance(s, I.Return):
                s.vals = list(s.vals) + list(own_params)

    fn.body = rewrite(fn.body)
    extend_calls(fn.body)
    extend_returns(fn.body)

    # ---------------- write-backs at release points

    def writeback_code(c: int, span) -> list[I.Stmt]:
        alts = sorted(graph.alternatives(c), key=lambda e: e.site)
        if not alts:
            return []
        code: list[I.Stmt] = []
        for e in alts:
            wb: list[I.Stmt] = []
            if e.kind == "local":
                if tracked:
                    wb.append(I.Assign(e.local, I.MutGet(c), wb=True,
                                       span=span))
                else:
                    wb.append(I.Assign(e.local, I.Use(c), wb=True,
                                       span=span))
            elif e.kind == "param":
                wb.append(I.Assign(e.local, I.Use(c), wb=True, span=span))
            elif e.kind == "field":
                if tracked:
                    v = new_temp(old[c].inner)
                    u = new_temp(old[e.parent].inner)
                    w = new_temp(old[e.parent].inner)
                    wb.append(I.Assign(v, I.MutGet(c), span=span))
                    wb.append(I.Assign(u, I.MutGet(e.parent), span=span))
                    wb.append(I.Assign(
                        w, I.FieldUpdate(u, e.fname, v), span=span))
                    wb.append(I.Assign(e.parent, I.MutSet(e.parent, w),
                                       wb=True, span=span))
                else:
                    wb.append(I.Assign(
                        e.parent, I.FieldUpdate(e.parent, e.fname, c),
                        wb=True, span=span))
            elif e.kind == "global":
                if tracked:
                    wb.append(I.WriteBackGlobal(e.label, c, e.addr,
                                                span=span))
                else:
                    wb.append(I.SetGlobal(e.label, e.addr, c, span=span))
            else:  # pragma: no cover
                raise InternalError(f"unknown origin kind {e.kind}")
            if len(alts) > 1:
                from ..model.types import BOOL
                t = new_temp(BOOL)
                code.append(I.Assign(t, I.IsOrigin(c, e.site), span=span))
                code.append(I.IfStmt(t, wb, [], span=span))
            else:
                code.extend(wb)
        return code

    cells = [t for t in sorted(graph.preds) if graph.alternatives(t)
             and t not in moved and t >= fn.num_params]
    for c in reversed(cells):
        _insert_writebacks(fn, c, writeback_code)

    # ---------------- signature rewriting

    def conv(t):
        if isinstance(t, RefT) and t.mut:
            return MutT(t.inner) if tracked else t.inner
        return t

    fn.locals = [conv(t) for t in fn.locals]
    fn.rets = [conv(t) for t in fn.rets] + [fn.locals[p]
                                            for p in own_params]
    fn.cell_params = list(own_params)


def _site_for(graph: BorrowGraph, dst: int, kind: str, key) -> int:
    for e in graph.alternatives(dst):
        if e.kind != kind:
            continue
        if kind == "local" and e.local == key:
            return e.site
        if kind == "global" and e.addr == key:
            return e.site
        if kind == "field" and e.fname == key:
            return e.site
    raise InternalError(f"no borrow site recorded for temp {dst}")


# ---------------------------------------------------------------- release

def _insert_writebacks(fn: I.FunctionIR, c: int, make_code) -> None:
    def touches(s: I.Stmt) -> bool:
        if isinstance(s, I.IfStmt):
            return any(map(touches, s.then)) or any(map(touches, s.els))
        if isinstance(s, I.Assign) and s.dst == c:
            return True
        return c in _stmt_uses(s)

    def find_release(block: list[I.Stmt]):
        idxs = [i for i, s in enumerate(block) if touches(s)]
        if not idxs:
            return None
        if len(idxs) == 1 and isinstance(block[idxs[0]], I.IfStmt):
            s = block[idxs[0]]
            tin = any(map(touches, s.then))
            ein = any(map(touches, s.els))
            if tin and not ein:
                return find_release(s.then) or (block, idxs[0])
            if ein and not tin:
                return find_release(s.els) or (block, idxs[0])
        return (block, idxs[-1])

    home = find_release(fn.body)
    if home is None:
        return
    block, idx = home

    order = {id(s): i for i, s in enumerate(I.walk_stmts(fn.body))}
    def_pos = min((order[id(s)] for s in I.walk_stmts(fn.body)
                   if isinstance(s, I.Assign) and s.dst == c),
                  default=-1)
    rel_stmt = block[idx]
    rel_pos = max(order[id(s)] for s in I.walk_stmts([rel_stmt]))

    # write-backs before any Return reachable while the cell is live
    def patch_returns(b: list[I.Stmt]):
        i = 0
        while i < len(b):
            s = b[i]
            if isinstance(s, I.IfStmt):
                patch_returns(s.then)
                patch_returns(s.els)
            elif (isinstance(s, I.Return)
                  and def_pos < order[id(s)] <= rel_pos):
                code = make_code(c, s.span)
                b[i:i] = code
                i += len(code)
            i += 1

    patch_returns(fn.body)
    if not _ends_control(rel_stmt):
        block[idx + 1:idx + 1] = make_code(c, rel_stmt.span)


def _ends_control(s: I.Stmt) -> bool:
    if isinstance(s, (I.Return, I.Abort)):
        return True
    if isinstance(s, I.IfStmt):
        def ends(b):
            return any(_ends_control(x) for x in b)
        return ends(s.then) and ends(s.els)
    return False

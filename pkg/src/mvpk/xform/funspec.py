"""Function and data specification injection.

Turns the declarative per-function specs (requires / ensures / aborts_if /
modifies / emits) and struct data invariants into assume/assert statements
on the alias-free IR, and expands every call site either by inlining the
(already injected) callee with its asserts demoted to assumes, or by its
specification when the callee is opaque.

Functions are processed callees-first, so the stored body of a function is
simultaneously the unit that gets verified and the template for inlining.
"""

from __future__ import annotations

import copy
from dataclasses import replace as drep

from ..analysis import _topo_order
from ..errors import InternalError, OpaqueSpecMissing
from ..model import FunSpec, GlobalModel
from ..model import abort_codes
from ..model import exp as E
from ..model import ir as I
from ..model.types import (
    ADDRESS, BOOL, INT_BOUNDS, NUM, U64, MemoryLabel, MutT, StructT, Type)


def inject_fun_specs(model: GlobalModel,
                     relaxed_aborts: bool = False) -> GlobalModel:
    """Return a transformed copy with all function specs injected.

    Expects the reference-eliminated model. The `relaxed_aborts` option
    drops the abort-path coverage assert, so declared aborts conditions
    may be partial and are only enforced on function return.
    """
    out = copy.deepcopy(model)
    for fname in _topo_order(out.call_graph):
        _Injector(out, out.functions[fname], relaxed_aborts).run()
    return out


# ---------------------------------------------------------------- helpers

def _or_all(exprs: list[E.SpecExp]) -> E.SpecExp:
    acc = exprs[0]
    for e in exprs[1:]:
        acc = E.SBin("||", acc, e, ty=BOOL, span=acc.span.merge(e.span))
    return acc


def _neg(e: E.SpecExp) -> E.SpecExp:
    return E.SUn("!", e, ty=BOOL, span=e.span)


def _temp(t: int, ty: Type, span=None) -> E.SVar:
    if span is None:
        return E.SVar("temp", t, ty=ty)
    return E.SVar("temp", t, ty=ty, span=span)


def _reads_memory(e: E.SpecExp, spec_funs) -> bool:
    return bool(E.memory_labels(e, spec_funs))


def _map_two_state(e: E.SpecExp, pre: dict, post: dict,
                   snapshot: str | None) -> E.SpecExp:
    """Map variables in a two-state condition.

    Occurrences under `old(..)` resolve through `pre` and get bound to
    `snapshot`; all others resolve through `post`.
    """
    if isinstance(e, E.SOld):
        return drep(e, e=E.replace_vars(e.e, pre), snapshot=snapshot)
    kids = e.children()
    if kids:
        e = e.with_children(tuple(
            _map_two_state(k, pre, post, snapshot) for k in kids))
    if isinstance(e, E.SVar):
        return post.get((e.kind, e.name), e)
    return e


def normalize_single_exit(fn: I.FunctionIR) -> None:
    """Rewrite the body so at most one Return exists, as the last statement.

    Early returns set a `done` flag and dedicated return temps; statements
    control could skip are guarded on !done.
    """
    returns = [s for s in I.walk_stmts(fn.body) if isinstance(s, I.Return)]
    if not returns:
        return
    if len(returns) == 1 and fn.body and fn.body[-1] is returns[0]:
        return
    ret_temps = [fn.new_temp(t) for t in fn.rets]
    done = fn.new_temp(BOOL)

    def rewrite(block: list[I.Stmt]) -> tuple[list[I.Stmt], bool]:
        out: list[I.Stmt] = []
        for i, s in enumerate(block):
            if isinstance(s, I.Return):
                for rt, v in zip(ret_temps, s.vals):
                    out.append(I.Assign(rt, I.Use(v), span=s.span))
                out.append(I.Assign(done, I.Const(True, BOOL), span=s.span))
                return out, True  # the rest of the block is unreachable
            if isinstance(s, I.IfStmt):
                s.then, tr = rewrite(s.then)
                s.els, er = rewrite(s.els)
                out.append(s)
                if tr or er:
                    rest, _ = rewrite(block[i + 1:])
                    if rest:
                        g = fn.new_temp(BOOL)
                        out.append(I.Assign(g, I.UnOp("!", done),
                                            span=s.span))
                        out.append(I.IfStmt(g, rest, [], span=s.span))
                    return out, True
                continue
            out.append(s)
        return out, False

    body, _ = rewrite(fn.body)
    span = fn.span
    fn.body = ([I.Assign(done, I.Const(False, BOOL), span=span)] + body
               + [I.Return(ret_temps, span=span)])


def make_explicit_aborts(fn: I.FunctionIR) -> None:
    """Make every implicit abort an explicit guarded Abort statement.

    Machine arithmetic is recomputed over unbounded `num` with explicit
    range/zero guards; global memory primitives get existence guards.
    """

    def abort_with(code: int, span) -> list[I.Stmt]:
        c = fn.new_temp(U64)
        return [I.Assign(c, I.Const(code, U64), span=span),
                I.Abort(c, span=span)]

    def guard(cond: int, code: int, span) -> I.IfStmt:
        return I.IfStmt(cond, abort_with(code, span), [], span=span)

    def missing_guard(out, label, addr, span):
        ex = fn.new_temp(BOOL)
        nx = fn.new_temp(BOOL)
        out.append(I.Assign(ex, I.Exists(label, addr), span=span))
        out.append(I.Assign(nx, I.UnOp("!", ex), span=span))
        out.append(guard(nx, abort_codes.MISSING_DATA, span))

    def rewrite(block: list[I.Stmt]) -> list[I.Stmt]:
        out: list[I.Stmt] = []
        for s in block:
            if isinstance(s, I.IfStmt):
                s.then = rewrite(s.then)
                s.els = rewrite(s.els)
                out.append(s)
                continue
            if isinstance(s, I.MoveTo):
                ex = fn.new_temp(BOOL)
                out.append(I.Assign(ex, I.Exists(s.label, s.signer),
                                    span=s.span))
                out.append(guard(ex, abort_codes.ALREADY_EXISTS, s.span))
                out.append(s)
                continue
            if not isinstance(s, I.Assign):
                out.append(s)
                continue
            rv = s.rv
            ty = fn.locals[s.dst]
            if isinstance(rv, (I.ReadGlobal, I.MoveFrom)):
                missing_guard(out, rv.label, rv.addr, s.span)
                out.append(s)
            elif (isinstance(rv, I.BinOp)
                  and rv.op in ("+", "-", "*", "/", "%")
                  and ty in INT_BOUNDS):
                span = s.span
                wa = fn.new_temp(NUM)
                wb = fn.new_temp(NUM)
                out.append(I.Assign(wa, I.Widen(rv.a), span=span))
                out.append(I.Assign(wb, I.Widen(rv.b), span=span))
                if rv.op in ("/", "%"):
                    z = fn.new_temp(NUM)
                    zb = fn.new_temp(BOOL)
                    out.append(I.Assign(z, I.Const(0, NUM), span=span))
                    out.append(I.Assign(zb, I.BinOp("==", wb, z),
                                        span=span))
                    out.append(guard(zb, abort_codes.ARITHMETIC, span))
                if rv.op == "-":
                    lt = fn.new_temp(BOOL)
                    out.append(I.Assign(lt, I.BinOp("<", wa, wb),
                                        span=span))
                    out.append(guard(lt, abort_codes.ARITHMETIC, span))
                wr = fn.new_temp(NUM)
                out.append(I.Assign(wr, I.BinOp(rv.op, wa, wb), span=span))
                if rv.op in ("+", "*"):
                    mx = fn.new_temp(NUM)
                    ov = fn.new_temp(BOOL)
                    out.append(I.Assign(mx, I.Const(INT_BOUNDS[ty], NUM),
                                        span=span))
                    out.append(I.Assign(ov, I.BinOp(">", wr, mx),
                                        span=span))
                    out.append(guard(ov, abort_codes.ARITHMETIC, span))
                out.append(I.Assign(s.dst, I.Narrow(wr, ty), wb=s.wb,
                                    span=span))
            else:
                out.append(s)
        return out

    fn.body = rewrite(fn.body)


# ---------------------------------------------------------------- splicing

class _Splicer:
    """Renames an inlined callee fragment into the caller's namespace."""

    def __init__(self, offset: int, sub: dict, site_map: dict,
                 snap_prefix: str):
        self.offset = offset
        self.sub = sub
        self.site_map = site_map
        self.snap_prefix = snap_prefix

    def t(self, temp: int) -> int:
        return temp + self.offset

    def snap(self, label: str) -> str:
        return f"{self.snap_prefix}{label}"

    def ty(self, ty: Type) -> Type:
        return ty.subst(self.sub)

    def label(self, label: MemoryLabel) -> MemoryLabel:
        return label.subst(self.sub)

    def spec(self, e: E.SpecExp) -> E.SpecExp:
        e = E.subst_types(e, self.sub)

        def fix(n):
            if isinstance(n, E.SVar) and n.kind == "temp":
                return drep(n, name=self.t(n.name))
            if isinstance(n, E.SOld) and n.snapshot is not None:
                return drep(n, snapshot=self.snap(n.snapshot))
            return n
        return E.transform(e, fix)

    def rv(self, rv: I.Rvalue) -> I.Rvalue:
        t, ty, lab = self.t, self.ty, self.label
        if isinstance(rv, I.Const):
            return I.Const(rv.value, ty(rv.ty))
        if isinstance(rv, I.Use):
            return I.Use(t(rv.src))
        if isinstance(rv, I.BinOp):
            return I.BinOp(rv.op, t(rv.a), t(rv.b))
        if isinstance(rv, I.UnOp):
            return I.UnOp(rv.op, t(rv.a))
        if isinstance(rv, I.Pack):
            return I.Pack(rv.struct, tuple(ty(x) for x in rv.targs),
                          [t(a) for a in rv.args])
        if isinstance(rv, I.FieldGet):
            return I.FieldGet(t(rv.base), rv.field)
        if isinstance(rv, I.FieldUpdate):
            return I.FieldUpdate(t(rv.base), rv.field, t(rv.val))
        if isinstance(rv, I.ReadGlobal):
            return I.ReadGlobal(lab(rv.label), t(rv.addr))
        if isinstance(rv, I.Exists):
            return I.Exists(lab(rv.label), t(rv.addr))
        if isinstance(rv, I.MoveFrom):
            return I.MoveFrom(lab(rv.label), t(rv.addr))
        if isinstance(rv, I.AddressOf):
            return I.AddressOf(t(rv.arg))
        if isinstance(rv, I.HavocVal):
            return I.HavocVal(ty(rv.ty))
        if isinstance(rv, I.Widen):
            return I.Widen(t(rv.src))
        if isinstance(rv, I.Narrow):
            return I.Narrow(t(rv.src), ty(rv.ty))
        if isinstance(rv, I.MkLocal):
            return I.MkLocal(t(rv.val), self.site_map[rv.site])
        if isinstance(rv, I.MkGlobal):
            return I.MkGlobal(t(rv.val), self.site_map[rv.site],
                              lab(rv.label), t(rv.addr))
        if isinstance(rv, I.MutField):
            return I.MutField(t(rv.parent), rv.field,
                              self.site_map[rv.site])
        if isinstance(rv, I.MutGet):
            return I.MutGet(t(rv.m))
        if isinstance(rv, I.MutSet):
            return I.MutSet(t(rv.m), t(rv.val))
        if isinstance(rv, I.IsOrigin):
            return I.IsOrigin(t(rv.m), self.site_map[rv.site])
        raise InternalError(
            f"cannot splice rvalue {type(rv).__name__}")

    def stmt(self, s: I.Stmt) -> I.Stmt:
        t, lab = self.t, self.label
        sp = s.span
        if isinstance(s, I.Assign):
            return I.Assign(t(s.dst), self.rv(s.rv), wb=s.wb, span=sp)
        if isinstance(s, I.SetGlobal):
            return I.SetGlobal(lab(s.label), t(s.addr), t(s.val), span=sp)
        if isinstance(s, I.WriteBackGlobal):
            return I.WriteBackGlobal(lab(s.label), t(s.m),
                                     t(s.addr) if s.addr >= 0 else -1,
                                     span=sp)
        if isinstance(s, I.MoveTo):
            return I.MoveTo(lab(s.label), t(s.signer), t(s.val), span=sp)
        if isinstance(s, I.EmitEvent):
            return I.EmitEvent(t(s.handle), t(s.msg), span=sp)
        if isinstance(s, I.CondEmit):
            return I.CondEmit(t(s.handle), t(s.msg),
                              None if s.cond is None else t(s.cond),
                              span=sp)
        if isinstance(s, I.Abort):
            return I.Abort(t(s.code), span=sp)
        if isinstance(s, I.Return):
            return I.Return([t(v) for v in s.vals], span=sp)
        if isinstance(s, I.IfStmt):
            return I.IfStmt(t(s.cond), [self.stmt(x) for x in s.then],
                            [self.stmt(x) for x in s.els], span=sp)
        if isinstance(s, I.SpecAssume):
            return I.SpecAssume(self.spec(s.e), span=sp)
        if isinstance(s, I.SpecAssert):
            # proven in the callee's own verification unit
            return I.SpecAssume(self.spec(s.e), span=sp)
        if isinstance(s, I.SnapshotState):
            return I.SnapshotState(self.snap(s.label), span=sp)
        if isinstance(s, I.Havoc):
            return I.Havoc(lab(s.label), t(s.addr), span=sp)
        if isinstance(s, I.EmitsChecks):
            return I.EmitsChecks([
                I.EmitsClause(
                    None if c.cond is None else self.spec(c.cond),
                    self.spec(c.handle), self.spec(c.msg))
                for c in s.clauses], span=sp)
        if isinstance(s, I.InlineMarker):
            return I.InlineMarker(s.fname, [t(a) for a in s.args],
                                  tuple(self.ty(x) for x in s.targs),
                                  span=sp)
        if isinstance(s, I.InlineEnd):
            return I.InlineEnd(s.fname, span=sp)
        if isinstance(s, I.OpaqueCallBegin):
            return I.OpaqueCallBegin(s.fname, span=sp)
        if isinstance(s, I.OpaqueCallMarker):
            return I.OpaqueCallMarker(
                s.fname, tuple(self.ty(x) for x in s.targs),
                [(lab(l), t(a)) for l, a in s.modified], span=sp)
        raise InternalError(f"cannot splice {type(s).__name__}")


# ---------------------------------------------------------------- injector

class _Injector:
    def __init__(self, model: GlobalModel, fn: I.FunctionIR, relaxed: bool):
        self.model = model
        self.fn = fn
        self.relaxed = relaxed
        self.spec = model.specs.get(fn.name, FunSpec())
        self.inline_count = 0
        self.snap_count = 0
        self.pre_map: dict = {}
        self.post_map: dict = {}
        self.exit_prep: list[I.Stmt] = []

    # ------------------------------------------------ driver

    def run(self):
        fn = self.fn
        normalize_single_exit(fn)
        make_explicit_aborts(fn)
        entry = self.make_param_snaps()
        fn.body = self.expand_calls(fn.body)
        self.make_result_map()

        if self.needs_pre_snapshot():
            entry.append(I.SnapshotState("PRE", span=fn.span))
        for r in self.spec.requires:
            entry.append(I.SpecAssume(self.own(r, self.pre_map),
                                      span=r.span))
        entry.extend(self.entry_data_invariants())
        fn.body[:0] = entry

        self.inject_data_invariants()
        if self.spec.modifies:
            self.inject_modifies()

        exit_stmts: list[I.Stmt] = list(self.exit_prep)
        for e in self.spec.ensures:
            ce = _map_two_state(e, self.pre_map, self.post_map, "PRE")
            exit_stmts.append(I.SpecAssert(ce, "ensures", span=e.span))
        if self.spec.aborts_if:
            cond = self.aborts_condition()
            if cond is not None:
                exit_stmts.append(I.SpecAssert(
                    _neg(cond), "aborts_if-return", span=self.spec.span))
                if not self.relaxed:
                    fn.onabort.append(I.SpecAssert(
                        cond, "aborts_if-abort", span=self.spec.span))
        if self.spec.emits:
            clauses = [I.EmitsClause(
                None if c.cond is None else self.own(c.cond, self.pre_map),
                self.own(c.handle, self.pre_map),
                self.own(c.msg, self.pre_map)) for c in self.spec.emits]
            exit_stmts.append(I.EmitsChecks(clauses, span=self.spec.span))
        if exit_stmts:
            if fn.body and isinstance(fn.body[-1], I.Return):
                fn.body[-1:-1] = exit_stmts
            # a function that never returns gets no return-path asserts

    # ------------------------------------------------ spec conversion

    def make_param_snaps(self) -> list[I.Stmt]:
        """Copy parameters into fresh entry temps; spec conditions refer
        to these, so later reassignment of a parameter is harmless."""
        fn = self.fn
        out: list[I.Stmt] = []
        for p in range(fn.num_params):
            ty = fn.locals[p]
            name = fn.temp_name(p)
            if isinstance(ty, MutT):
                v = fn.new_temp(ty.inner, name)
                out.append(I.Assign(v, I.MutGet(p), span=fn.span))
                self.pre_map[("param", name)] = _temp(v, ty.inner)
            else:
                v = fn.new_temp(ty, name)
                out.append(I.Assign(v, I.Use(p), span=fn.span))
                self.pre_map[("param", name)] = _temp(v, ty)
        return out

    def make_result_map(self):
        """Map `result` and mutable-reference parameters for ensures."""
        fn = self.fn
        self.post_map = dict(self.pre_map)
        ret = fn.body[-1] if fn.body else None
        if not isinstance(ret, I.Return):
            return  # the function never returns; no post-state to speak of
        split = len(ret.vals) - len(fn.cell_params)
        for i, v in enumerate(ret.vals[:split]):
            self.post_map[("result", i)] = _temp(v, fn.locals[v])
        for p, v in zip(fn.cell_params, ret.vals[split:]):
            ty = fn.locals[v]
            name = fn.temp_name(p)
            if isinstance(ty, MutT):
                w = fn.new_temp(ty.inner, name)
                self.exit_prep.append(I.Assign(w, I.MutGet(v),
                                               span=fn.span))
                self.post_map[("param", name)] = _temp(w, ty.inner)
            else:
                self.post_map[("param", name)] = _temp(v, ty)

    def own(self, e: E.SpecExp, mapping: dict) -> E.SpecExp:
        return E.replace_vars(e, mapping)

    def needs_pre_snapshot(self) -> bool:
        sf = self.model.spec_funs
        if any(E.contains_old(e) for e in self.spec.ensures):
            return True
        return any(_reads_memory(a, sf) for a in self.spec.aborts_if)

    def aborts_condition(self) -> E.SpecExp | None:
        """Disjunction of aborts_if clauses, memory reads in the pre-state."""
        sf = self.model.spec_funs
        clauses = []
        for a in self.spec.aborts_if:
            c = self.own(a, self.pre_map)
            if _reads_memory(a, sf):
                c = E.SOld(c, "PRE", ty=BOOL, span=a.span)
            clauses.append(c)
        return _or_all(clauses) if clauses else None

    # ------------------------------------------------ call expansion

    def expand_calls(self, block: list[I.Stmt]) -> list[I.Stmt]:
        out: list[I.Stmt] = []
        for s in block:
            if isinstance(s, I.IfStmt):
                s.then = self.expand_calls(s.then)
                s.els = self.expand_calls(s.els)
                out.append(s)
            elif isinstance(s, I.Call):
                out.extend(self.expand_one(s))
            else:
                out.append(s)
        return out

    def expand_one(self, s: I.Call) -> list[I.Stmt]:
        callee = self.model.functions[s.fname]
        cspec = self.model.specs.get(s.fname, FunSpec())
        sub = {("F", i): t for i, t in enumerate(s.targs)}
        pre_stmts: list[I.Stmt] = []
        post_stmts: list[I.Stmt] = []
        pre, post = self.callsite_maps(s, callee, pre_stmts, post_stmts)

        def at(e: E.SpecExp) -> E.SpecExp:
            return E.replace_vars(E.subst_types(e, sub), pre)

        stmts = pre_stmts
        for r in cspec.requires:
            stmts.append(I.SpecAssert(at(r), "requires-at-callsite",
                                      note=s.fname, span=s.span))
        if cspec.opaque:
            stmts.extend(self.expand_opaque(
                s, cspec, sub, at, pre, post, post_stmts))
        else:
            stmts.extend(self.expand_inline(s, callee))
        return stmts

    def callsite_maps(self, s: I.Call, callee: I.FunctionIR,
                      pre_stmts: list[I.Stmt],
                      post_stmts: list[I.Stmt]) -> tuple[dict, dict]:
        """Variable maps for the callee's spec at this call site.

        The pre map resolves parameters to argument values; the post map
        additionally resolves results and routes mutable-reference
        parameters to the returned cells. Cell reads are materialized
        into `pre_stmts` / `post_stmts`.
        """
        fn = self.fn
        pre: dict = {}
        for i in range(callee.num_params):
            a = s.args[i]
            ty = fn.locals[a]
            name = callee.temp_name(i)
            if isinstance(ty, MutT):
                v = fn.new_temp(ty.inner)
                pre_stmts.append(I.Assign(v, I.MutGet(a), span=s.span))
                pre[("param", name)] = _temp(v, ty.inner)
            else:
                pre[("param", name)] = _temp(a, ty)
        post = dict(pre)
        split = len(s.dsts) - len(callee.cell_params)
        for i, d in enumerate(s.dsts[:split]):
            post[("result", i)] = _temp(d, fn.locals[d])
        for p, d in zip(callee.cell_params, s.dsts[split:]):
            ty = fn.locals[d]
            name = callee.temp_name(p)
            if isinstance(ty, MutT):
                w = fn.new_temp(ty.inner)
                post_stmts.append(I.Assign(w, I.MutGet(d), span=s.span))
                post[("param", name)] = _temp(w, ty.inner)
            else:
                post[("param", name)] = _temp(d, ty)
        return pre, post

    # ---------------- inline

    def expand_inline(self, s: I.Call,
                      callee: I.FunctionIR) -> list[I.Stmt]:
        fn = self.fn
        self.inline_count += 1
        sub = {("F", i): t for i, t in enumerate(s.targs)}
        offset = len(fn.locals)
        for t, ty in enumerate(callee.locals):
            nt = fn.new_temp(ty.subst(sub))
            if t in callee.local_names:
                fn.local_names[nt] = callee.local_names[t]
        site_map: dict[int, int] = {}
        for site, desc in callee.origins.items():
            if desc[0] == "local":
                nd = ("local", desc[1] + offset)
            elif desc[0] == "global":
                nd = ("global", desc[1].subst(sub), desc[2] + offset)
            else:
                nd = ("field", desc[1] + offset, desc[2])
            site_map[site] = fn.new_site(nd)
        sp = _Splicer(offset, sub, site_map,
                      f"{s.fname}#{self.inline_count}:")
        body = [sp.stmt(x) for x in callee.body]
        abort_assumes = [sp.spec(a.e) for a in callee.onabort
                         if isinstance(a, I.SpecAssert)]
        body = _route_aborts(body, abort_assumes)
        # the callee is single-exit: its final Return becomes dst moves
        if body and isinstance(body[-1], I.Return):
            ret = body.pop()
            for d, v in zip(s.dsts, ret.vals):
                body.append(I.Assign(d, I.Use(v), span=s.span))
        out = [I.InlineMarker(s.fname, list(s.args), s.targs, span=s.span)]
        for i in range(callee.num_params):
            out.append(I.Assign(offset + i, I.Use(s.args[i]), span=s.span))
        out.extend(body)
        out.append(I.InlineEnd(s.fname, span=s.span))
        return out

    # ---------------- opaque

    def expand_opaque(self, s: I.Call, cspec: FunSpec, sub: dict,
                      at, pre: dict, post: dict,
                      post_stmts: list[I.Stmt]) -> list[I.Stmt]:
        fn = self.fn
        stmts: list[I.Stmt] = [I.OpaqueCallBegin(s.fname, span=s.span)]
        callee_mods = [(label.subst(sub), at(a))
                       for label, a in cspec.modifies]
        if self.spec.modifies:
            if not cspec.modifies and self.callee_writes(s.fname, sub):
                raise OpaqueSpecMissing(
                    f"opaque function {s.fname} needs a `modifies` "
                    f"declaration to be called from "
                    f"{fn.name}, which declares one", s.span)
            for label, addr in callee_mods:
                stmts.append(I.SpecAssert(
                    self.permission_expr(label, addr),
                    "modifies-permission", note=s.fname, span=s.span))
        snap = None
        if any(E.contains_old(e) for e in cspec.ensures):
            self.snap_count += 1
            snap = f"CALL{self.snap_count}"
            stmts.append(I.SnapshotState(snap, span=s.span))
        if cspec.aborts_if:
            cond = _or_all([at(a) for a in cspec.aborts_if])
            t = fn.new_temp(BOOL)
            stmts.append(I.Assign(t, I.HavocVal(BOOL), span=s.span))
            stmts.append(I.SpecAssume(
                E.SBin("==", _temp(t, BOOL), cond, ty=BOOL), span=s.span))
            c = fn.new_temp(U64)
            stmts.append(I.IfStmt(
                t, [I.Assign(c, I.HavocVal(U64), span=s.span),
                    I.Abort(c, span=s.span)], [], span=s.span))
        marker_mods: list[tuple[MemoryLabel, int]] = []
        for label, addr in callee_mods:
            at = self.lower_spec(stmts, addr, ADDRESS, s.span)
            stmts.append(I.Havoc(label, at, span=s.span))
            marker_mods.append((label, at))
        for d in s.dsts:
            stmts.append(I.Assign(d, I.HavocVal(fn.locals[d]), span=s.span))
        stmts.extend(post_stmts)
        for cl in cspec.emits:
            h = self.lower_spec(stmts, at(cl.handle),
                                cl.handle.ty.subst(sub), s.span)
            m = self.lower_spec(stmts, at(cl.msg), cl.msg.ty.subst(sub),
                                s.span)
            c = None
            if cl.cond is not None:
                c = self.lower_spec(stmts, at(cl.cond), BOOL, s.span)
            stmts.append(I.CondEmit(h, m, c, span=s.span))
        for e in cspec.ensures:
            ce = _map_two_state(E.subst_types(e, sub), pre, post, snap)
            stmts.append(I.SpecAssume(ce, span=s.span))
        stmts.append(I.OpaqueCallMarker(s.fname, s.targs, marker_mods,
                                        span=s.span))
        return stmts

    def callee_writes(self, fname: str, sub: dict) -> bool:
        from ..analysis import memory_usage
        return bool(memory_usage(self.model)[fname].modified)

    def lower_spec(self, stmts: list[I.Stmt], e: E.SpecExp, ty: Type,
                   span) -> int:
        """Materialize a spec expression as a code temp."""
        fn = self.fn
        if isinstance(e, E.SConst):
            t = fn.new_temp(e.ty)
            stmts.append(I.Assign(t, I.Const(e.value, e.ty), span=span))
            return t
        if isinstance(e, E.SVar) and e.kind == "temp":
            return e.name
        t = fn.new_temp(ty)
        stmts.append(I.Assign(t, I.HavocVal(ty), span=span))
        stmts.append(I.SpecAssume(E.SBin("==", _temp(t, ty), e, ty=BOOL),
                                  span=span))
        return t

    # ------------------------------------------------ modifies

    def permission_expr(self, label: MemoryLabel,
                        target: E.SpecExp) -> E.SpecExp:
        """target address is covered by this function's modifies clauses."""
        opts = []
        for clabel, addr in self.spec.modifies:
            if clabel == label:
                opts.append(E.SBin("==", target,
                                   self.own(addr, self.pre_map), ty=BOOL))
        return _or_all(opts) if opts else E.FALSE

    def inject_modifies(self):
        fn = self.fn

        def check(label, addr_temp, span) -> I.SpecAssert:
            target = _temp(addr_temp, fn.locals[addr_temp])
            return I.SpecAssert(self.permission_expr(label, target),
                                "modifies-permission", span=span)

        def rewrite(block: list[I.Stmt]) -> list[I.Stmt]:
            out: list[I.Stmt] = []
            for s in block:
                if isinstance(s, I.IfStmt):
                    s.then = rewrite(s.then)
                    s.els = rewrite(s.els)
                elif isinstance(s, I.MoveTo):
                    out.append(check(s.label, s.signer, s.span))
                elif isinstance(s, I.SetGlobal):
                    out.append(check(s.label, s.addr, s.span))
                elif isinstance(s, I.WriteBackGlobal) and s.addr >= 0:
                    out.append(check(s.label, s.addr, s.span))
                elif (isinstance(s, I.Assign)
                      and isinstance(s.rv, I.MoveFrom)):
                    out.append(check(s.rv.label, s.rv.addr, s.span))
                out.append(s)
            return out

        fn.body = rewrite(fn.body)

    # ------------------------------------------------ data invariants

    def struct_invs(self, ty: Type, target: E.SpecExp) -> list[E.SpecExp]:
        if not isinstance(ty, StructT):
            return []
        info = self.model.structs.get(ty.name)
        if info is None or not info.data_invariants:
            return []
        sub = {("F", i): t for i, t in enumerate(ty.targs)}

        def fix(n):
            if isinstance(n, E.SVar) and n.kind == "self_field":
                return E.SField(target, n.name, ty=n.ty)
            return n
        return [E.transform(E.subst_types(inv, sub), fix)
                for inv in info.data_invariants]

    def entry_data_invariants(self) -> list[I.Stmt]:
        fn = self.fn
        out: list[I.Stmt] = []
        for p in range(fn.num_params):
            ty = fn.locals[p]
            inner = ty.inner if isinstance(ty, MutT) else ty
            tgt = self.pre_map[("param", fn.temp_name(p))]
            for inv in self.struct_invs(inner, tgt):
                out.append(I.SpecAssume(inv, span=fn.span))
        return out

    def inject_data_invariants(self):
        fn = self.fn

        def value_asserts(ty, temp, span) -> list[I.Stmt]:
            inner = ty.inner if isinstance(ty, MutT) else ty
            invs_probe = self.struct_invs(inner, E.TRUE)
            if not invs_probe:
                return []
            pre: list[I.Stmt] = []
            if isinstance(ty, MutT):
                v = fn.new_temp(inner)
                pre.append(I.Assign(v, I.MutGet(temp), span=span))
                tgt = _temp(v, inner)
            else:
                tgt = _temp(temp, inner)
            return pre + [I.SpecAssert(inv, "data-invariant", span=span)
                          for inv in self.struct_invs(inner, tgt)]

        def value_assumes(ty, temp, span) -> list[I.Stmt]:
            tgt = _temp(temp, ty)
            return [I.SpecAssume(inv, span=span)
                    for inv in self.struct_invs(ty, tgt)]

        def rewrite(block: list[I.Stmt]) -> list[I.Stmt]:
            out: list[I.Stmt] = []
            for s in block:
                if isinstance(s, I.IfStmt):
                    s.then = rewrite(s.then)
                    s.els = rewrite(s.els)
                    out.append(s)
                    continue
                if isinstance(s, (I.SetGlobal, I.MoveTo)):
                    out.extend(value_asserts(fn.locals[s.val], s.val,
                                             s.span))
                    out.append(s)
                    continue
                if isinstance(s, I.WriteBackGlobal):
                    out.extend(value_asserts(fn.locals[s.m], s.m, s.span))
                    out.append(s)
                    continue
                out.append(s)
                if not isinstance(s, I.Assign):
                    continue
                ty = fn.locals[s.dst]
                if isinstance(s.rv, I.Pack):
                    out.extend(value_asserts(ty, s.dst, s.span))
                elif isinstance(s.rv, (I.ReadGlobal, I.MoveFrom)):
                    out.extend(value_assumes(ty, s.dst, s.span))
                elif s.wb:
                    out.extend(value_asserts(ty, s.dst, s.span))
            return out

        fn.body = rewrite(fn.body)


def _route_aborts(block: list[I.Stmt],
                  assumes: list[E.SpecExp]) -> list[I.Stmt]:
    """Prepend the callee's (proven) abort conditions to each abort edge."""
    if not assumes:
        return block
    out: list[I.Stmt] = []
    for s in block:
        if isinstance(s, I.IfStmt):
            s.then = _route_aborts(s.then, assumes)
            s.els = _route_aborts(s.els, assumes)
        elif isinstance(s, I.Abort):
            out.extend(I.SpecAssume(a, span=s.span) for a in assumes)
        out.append(s)
    return out

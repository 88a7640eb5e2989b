"""Verification condition generation.

Each monomorphic function becomes one VerificationUnit; the unit's body
is executed symbolically (the injected IR is effectively passified:
branches merge environments through `ite`, memory is threaded as
functional arrays), and every tagged `spec assert` yields one standalone
SMT-LIB problem that is satisfiable exactly when the assert can fail.

Encoding choices:
  - machine integers are unbounded Ints with explicit range assumptions
    (overflow aborts were already made explicit upstream);
  - each ground structure instantiation becomes its own datatype sort,
    each ground memory label its own pair of arrays address -> struct
    value / address -> bool existence;
  - Mut cells are a record of (value, site, addr);
  - event stores are encoded by finite counting over the events the unit
    actually emits and the events its `emits` clauses expect.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from ..errors import DUMMY_SPAN, EncodeError, SourceSpan
from ..model import GlobalModel, SpecFunInfo
from ..model import exp as E
from ..model import ir as I
from ..model.types import (
    ADDRESS, BOOL, NUM, SIGNER, U8, U64, EventHandleT, MemoryLabel, MutT,
    PrimType, SkolemType, StructT, Type, TypeParam, INT_BOUNDS)
from ..mono import StructRegistry


# ---------------------------------------------------------------- shapes


@dataclass
class TraceStep:
    """One line of the execution trace shown with a diagnostic."""

    fname: str
    span: SourceSpan
    params: list[tuple[str, str, Type]] = field(default_factory=list)
    # (display name, model constant, declared type)


@dataclass
class Query:
    """One solver problem checking one tagged assertion."""

    unit: str
    index: int
    tag: str
    note: str
    span: SourceSpan
    site_span: SourceSpan | None
    text: str
    trace: list[TraceStep]
    probes: dict
    skolemized: bool


@dataclass
class VerificationUnit:
    name: str
    fn: I.FunctionIR
    skolemized: bool
    queries: list[Query] = field(default_factory=list)


def encode_model(model: GlobalModel) -> list[VerificationUnit]:
    """Encode every function of a monomorphic model."""
    registry = StructRegistry(model)
    units = []
    for name in sorted(model.functions):
        enc = UnitEncoder(model, model.functions[name], registry)
        units.append(enc.encode())
    return units


# ---------------------------------------------------------------- helpers


def _quote(name: str) -> str:
    return f"|{name}|"


def _lit(value, ty) -> str:
    if ty == BOOL or isinstance(value, bool):
        return "true" if value else "false"
    v = int(value)
    return str(v) if v >= 0 else f"(- {-v})"


def _skolem_in(t: Type) -> bool:
    if isinstance(t, SkolemType):
        return True
    if isinstance(t, StructT):
        return any(_skolem_in(x) for x in t.targs)
    if isinstance(t, MutT):
        return _skolem_in(t.inner)
    if isinstance(t, EventHandleT):
        return _skolem_in(t.msg)
    return False


class _Branch:
    """Saved symbolic state for merging the arms of an IfStmt."""

    def __init__(self, enc: "UnitEncoder"):
        self.env = dict(enc.env)
        self.mem = dict(enc.mem)
        self.snapshots = dict(enc.snapshots)
        self.live = enc.live


# ---------------------------------------------------------------- encoder


class UnitEncoder:
    def __init__(self, model: GlobalModel, fn: I.FunctionIR,
                 registry: StructRegistry):
        self.model = model
        self.fn = fn
        self.registry = registry
        self.decls: list[str] = []
        self.assumes: list[str] = []      # (assert ...) lines, in order
        self.sorts_done: dict[str, bool] = {}
        self.env: dict[int, str] = {}
        self.mem: dict[str, tuple[str, str]] = {}   # label str -> (val, ex)
        self.base_mem: dict[str, tuple[str, str]] = {}
        self.label_of: dict[str, MemoryLabel] = {}
        self.snapshots: dict[str, dict] = {}
        self.events: list[tuple[str, str, str, str]] = []
        self.aborts: list[tuple[str, str, SourceSpan]] = []
        self.live = "true"
        self.counter = itertools.count()
        self.probe_assumes: list[str] = []
        self.queries: list[Query] = []
        self._pending: list[tuple[Query, str, int]] = []
        self.trace: list[TraceStep] = []
        self.probes: dict = {"params": {}, "memory": []}
        self.skolemized = False

    # -------------------------------------------------- sorts & fresh

    def sort(self, t: Type) -> str:
        if isinstance(t, PrimType):
            return "Bool" if t == BOOL else "Int"
        if isinstance(t, (SkolemType, EventHandleT)):
            self.skolemized |= isinstance(t, SkolemType)
            return "Int"
        if isinstance(t, StructT):
            return self.struct_sort(t.name, t.targs)
        if isinstance(t, MutT):
            return self.mut_sort(t.inner)
        if isinstance(t, TypeParam):
            raise EncodeError(f"residual type parameter {t} in {self.fn.name}",
                              self.fn.span)
        raise EncodeError(f"cannot encode type {t}", self.fn.span)

    def struct_sort(self, name: str, targs: tuple[Type, ...]) -> str:
        info = self.registry.resolve(name, targs)
        key = info.name
        if key not in self.sorts_done:
            self.sorts_done[key] = True        # break recursion up front
            fields = [(f, self.sort(ft)) for f, ft in info.fields]
            body = " ".join(f"({_quote(key + '#' + f)} {s})"
                            for f, s in fields)
            self.decls.append(
                f"(declare-datatypes (({_quote(key)} 0)) "
                f"((({_quote('mk$' + key)} {body}))))")
        return _quote(key)

    def mut_sort(self, inner: Type) -> str:
        isort = self.sort(inner)
        key = f"Mut<{inner}>"
        if key not in self.sorts_done:
            self.sorts_done[key] = True
            self.decls.append(
                f"(declare-datatypes (({_quote(key)} 0)) "
                f"((({_quote('mk$' + key)} ({_quote(key + '#val')} {isort}) "
                f"({_quote(key + '#site')} Int) "
                f"({_quote(key + '#addr')} Int)))))")
        return _quote(key)

    def fresh(self, sort: str, hint: str = "v") -> str:
        name = _quote(f"{hint}!{next(self.counter)}")
        self.decls.append(f"(declare-const {name} {sort})")
        return name

    def define(self, term: str, ty: Type, hint: str = "v") -> str:
        if len(term) <= 40 and "(" not in term:
            return term
        name = _quote(f"{hint}!{next(self.counter)}")
        self.decls.append(f"(define-fun {name} () {self.sort(ty)} {term})")
        return name

    def assume(self, term: str):
        if term != "true":
            self.assumes.append(f"(assert {term})")

    # -------------------------------------------------- range guards

    def range_guard(self, term: str, t: Type) -> str:
        parts = self._range_parts(term, t)
        if not parts:
            return "true"
        if len(parts) == 1:
            return parts[0]
        return f"(and {' '.join(parts)})"

    def _range_parts(self, term: str, t: Type) -> list[str]:
        if t in (U8, U64):
            return [f"(and (<= 0 {term}) (<= {term} {INT_BOUNDS[t]}))"]
        if t in (ADDRESS, SIGNER) or isinstance(t, EventHandleT):
            return [f"(<= 0 {term})"]
        if isinstance(t, StructT):
            info = self.registry.resolve(t.name, t.targs)
            out = []
            for f, ft in info.fields:
                acc = f"({_quote(info.name + '#' + f)} {term})"
                out += self._range_parts(acc, ft)
            return out
        if isinstance(t, MutT):
            key = f"Mut<{t.inner}>"
            out = self._range_parts(f"({_quote(key + '#val')} {term})",
                                    t.inner)
            out.append(f"(<= 0 ({_quote(key + '#addr')} {term}))")
            return out
        return []

    def havoc_value(self, t: Type, hint: str = "h") -> str:
        name = self.fresh(self.sort(t), hint)
        self.assume(self.range_guard(name, t))
        return name

    # -------------------------------------------------- memory

    def label_key(self, label: MemoryLabel) -> str:
        if not label.is_ground():
            raise EncodeError(f"residual type parameter in {label}",
                              self.fn.span)
        key = str(label)
        if key not in self.mem:
            ssort = self.struct_sort(label.struct, label.targs)
            val = _quote(f"mem${key}")
            ex = _quote(f"ex${key}")
            self.decls.append(f"(declare-const {val} (Array Int {ssort}))")
            self.decls.append(f"(declare-const {ex} (Array Int Bool))")
            guard = self.range_guard(f"(select {val} $a)",
                                     StructT(label.struct, label.targs))
            if guard != "true":
                self.assume(f"(forall (($a Int)) (=> (<= 0 $a) {guard}))")
            self.mem[key] = (val, ex)
            self.base_mem[key] = (val, ex)
            self.label_of[key] = label
        return key

    def mem_of(self, label: MemoryLabel, state: dict | None = None) -> tuple:
        key = self.label_key(label)
        state = self.mem if state is None else state
        return state.get(key, self.base_mem[key])

    def upd_mem(self, label: MemoryLabel, val_arr: str | None,
                ex_arr: str | None):
        key = self.label_key(label)
        old_val, old_ex = self.mem[key]
        if val_arr is not None:
            self.mem[key] = (f"(ite {self.live} {val_arr} {old_val})"
                             if self.live != "true" else val_arr,
                             self.mem[key][1])
        if ex_arr is not None:
            self.mem[key] = (self.mem[key][0],
                             f"(ite {self.live} {ex_arr} {old_ex})"
                             if self.live != "true" else ex_arr)

    # -------------------------------------------------- entry

    def encode(self) -> VerificationUnit:
        fn = self.fn
        if any(_skolem_in(t) for t in fn.locals):
            self.skolemized = True
        self.trace.append(TraceStep(fn.name, fn.span))
        for i in range(fn.num_params):
            ty = fn.locals[i]
            name = _quote(f"t{i}${fn.temp_name(i)}")
            self.decls.append(f"(declare-const {name} {self.sort(ty)})")
            self.assume(self.range_guard(name, ty))
            self.env[i] = name
            self.probes["params"][i] = name
            self.trace[0].params.append((fn.temp_name(i), name, ty))
        self.exec_block(fn.body)
        self.exec_block(fn.onreturn)
        self._encode_onabort()
        self._memory_probes()
        self._finalize()
        return VerificationUnit(fn.name, fn, self.skolemized, self.queries)

    def _memory_probes(self):
        """Named initial-memory cells so models can be replayed."""
        addrs: dict[str, str] = {}          # display id -> term
        for i in range(self.fn.num_params):
            if self.fn.locals[i] in (ADDRESS, SIGNER):
                addrs[f"t{i}"] = self.env[i]
        for s in I.all_stmts(self.fn):
            if isinstance(s, I.Assign) and isinstance(s.rv, I.Const) \
                    and s.rv.ty == ADDRESS:
                addrs[str(s.rv.value)] = _lit(s.rv.value, ADDRESS)
        for key in sorted(self.base_mem):
            val, ex = self.base_mem[key]
            label = self.label_of[key]
            sty = StructT(label.struct, label.targs)
            for aid, aterm in sorted(addrs.items()):
                pname = _quote(f"probe${key}${aid}$exists")
                self.decls.append(f"(declare-const {pname} Bool)")
                self.probe_assumes.append(
                    f"(assert (= {pname} (select {ex} {aterm})))")
                cells = self._probe_fields(
                    f"(select {val} {aterm})", sty, f"probe${key}${aid}")
                self.probes["memory"].append(
                    {"label": key, "mlabel": label, "addr": aid,
                     "exists": pname, "fields": cells})

    def _probe_fields(self, term: str, t: Type, prefix: str) -> dict:
        out: dict = {}
        if isinstance(t, StructT):
            info = self.registry.resolve(t.name, t.targs)
            for f, ft in info.fields:
                acc = f"({_quote(info.name + '#' + f)} {term})"
                if isinstance(ft, StructT):
                    out[f] = self._probe_fields(acc, ft, f"{prefix}${f}")
                else:
                    pname = _quote(f"{prefix}${f}")
                    self.decls.append(
                        f"(declare-const {pname} {self.sort(ft)})")
                    self.probe_assumes.append(
                        f"(assert (= {pname} {acc}))")
                    out[f] = pname
        return out

    # -------------------------------------------------- queries

    def make_query(self, cond: str, tag: str, note: str, span: SourceSpan,
                   site_span: SourceSpan | None = None):
        """Emit one problem: satisfiable iff `cond` can fail while live.

        Only the assumptions accumulated so far belong to the query
        (assumptions from later statements could mask the failure); the
        final text is materialized in `_finalize` once all declarations
        and replay probes exist.
        """
        goal = f"(assert (and {self.live} (not {cond})))" \
            if self.live != "true" else f"(assert (not {cond}))"
        q = Query(
            unit=self.fn.name, index=len(self.queries), tag=tag,
            note=note, span=span, site_span=site_span, text="",
            trace=[TraceStep(t.fname, t.span, list(t.params))
                   for t in self.trace],
            probes={}, skolemized=False)
        self.queries.append(q)
        self._pending.append((q, goal, len(self.assumes)))

    def _finalize(self):
        probes = {"params": dict(self.probes["params"]),
                  "memory": list(self.probes["memory"])}
        for q, goal, n_assumes in self._pending:
            lines = (["(set-logic ALL)"] + self.decls
                     + self.assumes[:n_assumes] + self.probe_assumes
                     + [goal, "(check-sat)", "(get-model)"])
            q.text = "\n".join(lines) + "\n"
            q.probes = probes
            q.skolemized = self.skolemized

    def _encode_onabort(self):
        for s in self.fn.onabort:
            if not isinstance(s, I.SpecAssert):
                continue
            cond = self.spec(s.e)
            for (path, _code, span) in self.aborts:
                saved = self.live
                self.live = path
                self.make_query(cond, s.tag, s.note, s.span, site_span=span)
                self.live = saved

    # -------------------------------------------------- execution

    def exec_block(self, stmts: list[I.Stmt]):
        for s in stmts:
            self.exec_stmt(s)

    def exec_stmt(self, s: I.Stmt):
        if isinstance(s, I.Assign):
            term, ty = self.eval_rv(s.rv, self.fn.locals[s.dst])
            self.env[s.dst] = self.define(term, ty, f"t{s.dst}")
            if isinstance(s.rv, I.MoveFrom):
                _, ex = self.mem_of(s.rv.label)
                self.upd_mem(s.rv.label, None,
                             f"(store {ex} {self.env[s.rv.addr]} false)")
        elif isinstance(s, I.IfStmt):
            self._exec_if(s)
        elif isinstance(s, I.SetGlobal):
            val, ex = self.mem_of(s.label)
            addr = self.env[s.addr]
            self.upd_mem(s.label,
                         f"(store {val} {addr} {self.env[s.val]})",
                         f"(store {ex} {addr} true)")
        elif isinstance(s, I.MoveTo):
            val, ex = self.mem_of(s.label)
            addr = self.env[s.signer]
            self.upd_mem(s.label,
                         f"(store {val} {addr} {self.env[s.val]})",
                         f"(store {ex} {addr} true)")
        elif isinstance(s, I.WriteBackGlobal):
            val, ex = self.mem_of(s.label)
            m = self.env[s.m]
            key = f"Mut<{self.fn.locals[s.m].inner}>"
            addr = f"({_quote(key + '#addr')} {m})"
            v = f"({_quote(key + '#val')} {m})"
            self.upd_mem(s.label, f"(store {val} {addr} {v})",
                         f"(store {ex} {addr} true)")
        elif isinstance(s, I.Havoc):
            label = s.label
            val, ex = self.mem_of(label)
            addr = self.env[s.addr]
            h = self.havoc_value(StructT(label.struct, label.targs))
            b = self.fresh("Bool", "hx")
            self.upd_mem(label, f"(store {val} {addr} {h})",
                         f"(store {ex} {addr} {b})")
        elif isinstance(s, I.EmitEvent):
            self._emit(s.handle, s.msg, None)
        elif isinstance(s, I.CondEmit):
            self._emit(s.handle, s.msg, s.cond)
        elif isinstance(s, I.Abort):
            self.aborts.append((self.live, self.env[s.code], s.span))
            self.live = "false"
        elif isinstance(s, I.Return):
            self.live = "false"
        elif isinstance(s, I.SpecAssume):
            cond = self.spec(s.e)
            if self.live == "true":
                self.assume(cond)
            else:
                self.assume(f"(=> {self.live} {cond})")
        elif isinstance(s, I.SpecAssert):
            self.make_query(self.spec(s.e), s.tag, s.note, s.span)
        elif isinstance(s, I.SnapshotState):
            self.snapshots[s.label] = dict(self.mem)
        elif isinstance(s, I.EmitsChecks):
            self._emits_checks(s)
        elif isinstance(s, I.InlineMarker):
            self.trace.append(TraceStep(s.fname, s.span))
        elif isinstance(s, I.OpaqueCallBegin):
            self.trace.append(TraceStep(s.fname, s.span))
        elif isinstance(s, (I.InlineEnd, I.OpaqueCallMarker)):
            pass
        elif isinstance(s, I.Call):
            raise EncodeError(
                f"residual call to {s.fname} in {self.fn.name}", s.span)
        else:
            raise EncodeError(
                f"cannot encode {type(s).__name__} (pipeline incomplete?)",
                getattr(s, "span", self.fn.span))

    def _exec_if(self, s: I.IfStmt):
        cond = self.env[s.cond]
        before = _Branch(self)
        live_in = self.live
        # then arm
        self.live = self.define(f"(and {live_in} {cond})", BOOL, "live") \
            if live_in != "true" else cond
        self.exec_block(s.then)
        then_state = _Branch(self)
        # else arm
        self.env = dict(before.env)
        self.mem = dict(before.mem)
        self.snapshots = dict(before.snapshots)
        ncond = f"(not {cond})"
        self.live = self.define(f"(and {live_in} {ncond})", BOOL, "live") \
            if live_in != "true" else ncond
        self.exec_block(s.els)
        # merge
        for k in set(then_state.env) | set(self.env):
            a, b = then_state.env.get(k), self.env.get(k)
            if a is None or b is None:
                self.env[k] = a if b is None else b
            elif a != b:
                self.env[k] = self.define(
                    f"(ite {cond} {a} {b})", self.fn.locals[k], f"t{k}")
        for k in set(then_state.mem) | set(self.mem):
            a, b = then_state.mem.get(k), self.mem.get(k)
            if a is None or b is None:
                self.mem[k] = a if b is None else b
            elif a != b:
                self.mem[k] = (
                    a[0] if a[0] == b[0] else f"(ite {cond} {a[0]} {b[0]})",
                    a[1] if a[1] == b[1] else f"(ite {cond} {a[1]} {b[1]})")
        for k in set(then_state.snapshots) | set(self.snapshots):
            a = then_state.snapshots.get(k)
            b = self.snapshots.get(k)
            if a is None or b is None:
                self.snapshots[k] = a if b is None else b
            else:
                merged = {}
                for lk in set(a) | set(b):
                    pa, pb = a.get(lk), b.get(lk)
                    if pa is None or pb is None:
                        merged[lk] = pa if pb is None else pb
                    elif pa == pb:
                        merged[lk] = pa
                    else:
                        merged[lk] = (
                            f"(ite {cond} {pa[0]} {pb[0]})",
                            f"(ite {cond} {pa[1]} {pb[1]})")
                self.snapshots[k] = merged
        self.live = self.define(
            f"(or {then_state.live} {self.live})", BOOL, "live")

    def _emit(self, handle: int, msg: int, cond: int | None):
        hterm, hty = self.env[handle], self.fn.locals[handle]
        if isinstance(hty, MutT):
            hterm = f"({_quote(f'Mut<{hty.inner}>#val')} {hterm})"
        guard = self.live
        if cond is not None:
            guard = self.define(f"(and {guard} {self.env[cond]})", BOOL,
                                "eg") if guard != "true" else self.env[cond]
        msg_ty = self.fn.locals[msg]
        self.events.append((guard, hterm, self.env[msg],
                            self.sort(msg_ty)))

    # -------------------------------------------------- emits checks

    def _emits_checks(self, s: I.EmitsChecks):
        expected = []
        for c in s.clauses:
            guard = "true" if c.cond is None else self.spec(c.cond)
            h = self.spec(c.handle)
            hty = self._spec_ty(c.handle)
            if isinstance(hty, MutT):
                h = f"({_quote(f'Mut<{hty.inner}>#val')} {h})"
            m = self.spec(c.msg)
            expected.append((guard, h, m, self.sort(self._spec_ty(c.msg)),
                             c))
        actual = list(self.events)

        def count(pool, h, m, sort):
            terms = []
            for (g, h2, m2, sort2) in pool:
                if sort2 != sort:
                    continue
                terms.append(
                    f"(ite (and {g} (= {h2} {h}) (= {m2} {m})) 1 0)")
            if not terms:
                return "0"
            return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"

        for (g, h, m, sort, _src) in actual:
            cond = (f"(=> {g} (<= {count(actual, h, m, sort)} "
                    f"{count(expected, h, m, sort)}))")
            self.make_query(cond, "emits-completeness", "", s.span)
        for (g, h, m, sort, c) in expected:
            cond = (f"(=> (and {self.live} {g}) "
                    f"(<= {count(expected, h, m, sort)} "
                    f"{count(actual, h, m, sort)}))")
            span = getattr(c.handle, "span", s.span) or s.span
            self.make_query(cond, "emits-relevance", "", span)

    # -------------------------------------------------- rvalues

    def eval_rv(self, rv: I.Rvalue, dst_ty: Type) -> tuple[str, Type]:
        env = self.env
        if isinstance(rv, I.Const):
            return _lit(rv.value, rv.ty), rv.ty
        if isinstance(rv, I.Use):
            return env[rv.src], dst_ty
        if isinstance(rv, I.BinOp):
            return self._binop(rv.op, rv.a, rv.b, dst_ty)
        if isinstance(rv, I.UnOp):
            return f"(not {env[rv.a]})", BOOL
        if isinstance(rv, I.Pack):
            info = self.registry.resolve(rv.struct, rv.targs)
            self.struct_sort(rv.struct, rv.targs)
            args = " ".join(env[a] for a in rv.args)
            return f"({_quote('mk$' + info.name)} {args})", \
                StructT(rv.struct, rv.targs)
        if isinstance(rv, I.FieldGet):
            base_ty = self.fn.locals[rv.base]
            info = self.registry.resolve(base_ty.name, base_ty.targs)
            self.struct_sort(base_ty.name, base_ty.targs)
            fty = dict(info.fields)[rv.field]
            return (f"({_quote(info.name + '#' + rv.field)} "
                    f"{env[rv.base]})"), fty
        if isinstance(rv, I.FieldUpdate):
            base_ty = self.fn.locals[rv.base]
            info = self.registry.resolve(base_ty.name, base_ty.targs)
            self.struct_sort(base_ty.name, base_ty.targs)
            args = []
            for f, _ft in info.fields:
                if f == rv.field:
                    args.append(env[rv.val])
                else:
                    args.append(f"({_quote(info.name + '#' + f)} "
                                f"{env[rv.base]})")
            return f"({_quote('mk$' + info.name)} {' '.join(args)})", base_ty
        if isinstance(rv, I.ReadGlobal):
            val, _ = self.mem_of(rv.label)
            return f"(select {val} {env[rv.addr]})", \
                StructT(rv.label.struct, rv.label.targs)
        if isinstance(rv, I.Exists):
            _, ex = self.mem_of(rv.label)
            return f"(select {ex} {env[rv.addr]})", BOOL
        if isinstance(rv, I.MoveFrom):
            val, _ = self.mem_of(rv.label)
            return f"(select {val} {env[rv.addr]})", \
                StructT(rv.label.struct, rv.label.targs)
        if isinstance(rv, I.AddressOf):
            return env[rv.arg], ADDRESS
        if isinstance(rv, I.HavocVal):
            return self.havoc_value(rv.ty), rv.ty
        if isinstance(rv, I.Widen):
            return env[rv.src], NUM
        if isinstance(rv, I.Narrow):
            return env[rv.src], rv.ty
        if isinstance(rv, I.MkLocal):
            inner = self.fn.locals[rv.val]
            self.mut_sort(inner)
            return (f"({_quote(f'mk$Mut<{inner}>')} {env[rv.val]} "
                    f"{rv.site} 0)"), MutT(inner)
        if isinstance(rv, I.MkGlobal):
            inner = self.fn.locals[rv.val]
            self.mut_sort(inner)
            return (f"({_quote(f'mk$Mut<{inner}>')} {env[rv.val]} "
                    f"{rv.site} {env[rv.addr]})"), MutT(inner)
        if isinstance(rv, I.MutField):
            pty = self.fn.locals[rv.parent]
            inner = pty.inner
            info = self.registry.resolve(inner.name, inner.targs)
            fty = dict(info.fields)[rv.field]
            self.mut_sort(fty)
            pval = f"({_quote(f'Mut<{inner}>#val')} {env[rv.parent]})"
            facc = f"({_quote(info.name + '#' + rv.field)} {pval})"
            return (f"({_quote(f'mk$Mut<{fty}>')} {facc} {rv.site} 0)"), \
                MutT(fty)
        if isinstance(rv, I.MutGet):
            mty = self.fn.locals[rv.m]
            return f"({_quote(f'Mut<{mty.inner}>#val')} {env[rv.m]})", \
                mty.inner
        if isinstance(rv, I.MutSet):
            mty = self.fn.locals[rv.m]
            key = f"Mut<{mty.inner}>"
            m = env[rv.m]
            return (f"({_quote('mk$' + key)} {env[rv.val]} "
                    f"({_quote(key + '#site')} {m}) "
                    f"({_quote(key + '#addr')} {m}))"), mty
        if isinstance(rv, I.IsOrigin):
            mty = self.fn.locals[rv.m]
            return (f"(= ({_quote(f'Mut<{mty.inner}>#site')} {env[rv.m]}) "
                    f"{rv.site})"), BOOL
        raise EncodeError(
            f"cannot encode rvalue {type(rv).__name__} "
            f"(references not eliminated?)", DUMMY_SPAN)

    def _binop(self, op: str, a: int, b: int, dst_ty: Type):
        ta = self.env[a]
        tb = self.env[b]
        if op in ("+", "-", "*"):
            return f"({op} {ta} {tb})", dst_ty
        if op in ("/", "%"):
            return self._divmod(op, ta, tb), dst_ty
        if op in ("<", "<=", ">", ">="):
            return f"({op} {ta} {tb})", BOOL
        if op == "==":
            return f"(= {ta} {tb})", BOOL
        if op == "!=":
            return f"(not (= {ta} {tb}))", BOOL
        if op == "&&":
            return f"(and {ta} {tb})", BOOL
        if op == "||":
            return f"(or {ta} {tb})", BOOL
        raise EncodeError(f"cannot encode operator {op}", DUMMY_SPAN)

    def _divmod(self, op: str, a: str, b: str) -> str:
        q = self.fresh("Int", "q")
        r = self.fresh("Int", "r")
        self.assume(f"(=> (not (= {b} 0)) "
                    f"(and (= {a} (+ (* {b} {q}) {r})) "
                    f"(<= 0 {r}) (< {r} {b})))")
        return q if op == "/" else r

    # -------------------------------------------------- spec expressions

    def spec(self, e: E.SpecExp, bind: dict | None = None,
             state: dict | None = None) -> str:
        term, _ = self._spec(e, bind or {}, state)
        return term

    def _spec_ty(self, e: E.SpecExp) -> Type:
        return e.ty

    def _spec(self, e: E.SpecExp, bind: dict, state: dict | None):
        rec = lambda x, b=bind, st=state: self._spec(x, b, st)[0]  # noqa
        if isinstance(e, E.SConst):
            return _lit(e.value, e.ty), e.ty
        if isinstance(e, E.SVar):
            key = (e.kind, e.name)
            if key in bind:
                return bind[key], e.ty
            if e.kind == "temp":
                return self.env[e.name], self.fn.locals[e.name]
            raise EncodeError(
                f"unresolved spec variable {e.name} ({e.kind}) "
                f"in {self.fn.name}", e.span)
        if isinstance(e, E.SBin):
            return self._spec_bin(e, bind, state)
        if isinstance(e, E.SUn):
            if e.op == "!":
                return f"(not {rec(e.e)})", BOOL
            raise EncodeError(f"cannot encode operator {e.op}", e.span)
        if isinstance(e, E.SField):
            base, bty = self._spec(e.base, bind, state)
            if isinstance(bty, MutT):
                base = f"({_quote(f'Mut<{bty.inner}>#val')} {base})"
                bty = bty.inner
            info = self.registry.resolve(bty.name, bty.targs)
            self.struct_sort(bty.name, bty.targs)
            fty = dict(info.fields)[e.field_name]
            return f"({_quote(info.name + '#' + e.field_name)} {base})", fty
        if isinstance(e, E.SGlobal):
            val, _ = self.mem_of(e.label, state)
            return f"(select {val} {rec(e.addr)})", \
                StructT(e.label.struct, e.label.targs)
        if isinstance(e, E.SExistsMem):
            _, ex = self.mem_of(e.label, state)
            return f"(select {ex} {rec(e.addr)})", BOOL
        if isinstance(e, E.SOld):
            snap = self.snapshots.get(e.snapshot) if e.snapshot else None
            if e.snapshot is not None and snap is None:
                # snapshot never materialized: treat as the initial state
                snap = self.base_mem
            return self._spec(e.e, bind, snap if snap is not None
                              else self.base_mem)
        if isinstance(e, E.SCall):
            return self._spec_call(e, bind, state)
        if isinstance(e, E.SQuant):
            return self._spec_quant(e, bind, state)
        if isinstance(e, E.SPack):
            info = self.registry.resolve(e.struct, e.targs)
            self.struct_sort(e.struct, e.targs)
            by_name = dict(e.fields)
            args = " ".join(rec(by_name[f]) for f, _ in info.fields)
            return f"({_quote('mk$' + info.name)} {args})", \
                StructT(e.struct, e.targs)
        if isinstance(e, E.SCond):
            return (f"(ite {rec(e.cond)} {rec(e.then)} {rec(e.els)})",
                    e.then.ty)
        if isinstance(e, E.SAddressOf):
            return rec(e.e), ADDRESS
        raise EncodeError(f"cannot encode {type(e).__name__}", e.span)

    def _spec_bin(self, e: E.SBin, bind, state):
        a, ta = self._spec(e.left, bind, state)
        b, _ = self._spec(e.right, bind, state)
        op = e.op
        if op in ("+", "-", "*"):
            return f"({op} {a} {b})", NUM
        if op in ("/", "%"):
            return self._divmod(op, a, b), NUM
        if op in ("<", "<=", ">", ">="):
            return f"({op} {a} {b})", BOOL
        if op == "==":
            if ta == BOOL:
                return f"(= {a} {b})", BOOL
            return f"(= {a} {b})", BOOL
        if op == "!=":
            return f"(not (= {a} {b}))", BOOL
        if op == "&&":
            return f"(and {a} {b})", BOOL
        if op == "||":
            return f"(or {a} {b})", BOOL
        if op == "==>":
            return f"(=> {a} {b})", BOOL
        raise EncodeError(f"cannot encode operator {op}", e.span)

    def _spec_call(self, e: E.SCall, bind, state):
        sf: SpecFunInfo = self.model.spec_funs[e.fun]
        sub = {("F", i): t for i, t in enumerate(e.targs)}
        body = E.subst_types(sf.body, sub)
        inner_bind = dict(bind)
        for (pname, _pty), arg in zip(sf.params, e.args):
            inner_bind[("param", pname)] = self._spec(arg, bind, state)[0]
        term, _ = self._spec(body, inner_bind, state)
        return term, sf.ret.subst(sub) if hasattr(sf.ret, "subst") else sf.ret

    def _spec_quant(self, e: E.SQuant, bind, state):
        var = _quote(f"q${e.var}${next(self.counter)}")
        inner = dict(bind)
        inner[("quant", e.var)] = var
        guard_parts = []
        g = self.range_guard(var, e.sort) if not isinstance(e.sort, StructT) \
            else "true"
        if g != "true":
            guard_parts.append(g)
        if e.where is not None:
            guard_parts.append(self._spec(e.where, inner, state)[0])
        body, _ = self._spec(e.body, inner, state)
        sort = self.sort(e.sort)
        if e.kind == "forall":
            if guard_parts:
                body = f"(=> (and {' '.join(guard_parts)}) {body})" \
                    if len(guard_parts) > 1 else \
                    f"(=> {guard_parts[0]} {body})"
            return f"(forall (({var} {sort})) {body})", BOOL
        parts = guard_parts + [body]
        inner_body = parts[0] if len(parts) == 1 \
            else f"(and {' '.join(parts)})"
        return f"(exists (({var} {sort})) {inner_body})", BOOL

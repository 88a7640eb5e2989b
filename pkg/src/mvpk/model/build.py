"""AST -> GlobalModel: name resolution, type checking, lowering to IR.

Code bodies become three-address IR with explicit borrows; specification
expressions become typed SpecExp trees with spec-block lets and module
constants expanded.
"""

from __future__ import annotations

from ..errors import ModelError, DUMMY_SPAN
from ..frontend import ast as A
from . import exp as E
from . import ir as I
from .types import (
    ADDRESS, BOOL, EventHandleT, MAX_U64, MemoryLabel, NUM, RefT, SIGNER,
    StructT, Type, TypeParam, U8, U64, unify, resolve_subst,
)

_ARITH = {"+", "-", "*", "/", "%"}
_CMP = {"<", "<=", ">", ">="}
_EQ = {"==", "!="}
_BOOLOP = {"&&", "||"}

_BUILTIN_FUNS = {
    "borrow_global", "borrow_global_mut", "exists", "move_to", "move_from",
    "global", "Signer::address_of", "Event::emit_event", "emit_event",
}


def _is_num(t: Type) -> bool:
    return t in (U8, U64, NUM)


class _Bail(Exception):
    pass


def build_model(ast: A.Ast, sources: dict[str, str] | None = None):
    b = Builder(ast)
    model = b.run()
    model.sources = dict(sources or {})
    return model


class Builder:
    def __init__(self, ast: A.Ast):
        self.ast = ast
        self.model = None
        self.errors: list[ModelError] = []
        self.fun_decls: dict[str, A.FunDecl] = {}
        self.fun_modules: dict[str, str] = {}

    def err(self, msg, span=DUMMY_SPAN):
        self.errors.append(ModelError(msg, span))

    def bail(self, msg, span=DUMMY_SPAN):
        self.err(msg, span)
        raise _Bail()

    def run(self):
        from . import GlobalModel, ModelErrorGroup
        self.model = GlobalModel()
        m = self.model
        for mod in self.ast.modules:
            if mod.name in m.modules:
                self.err(f"duplicate module {mod.name}", mod.span)
            m.modules.append(mod.name)
        for mod in self.ast.modules:
            self.declare_module(mod)
        for mod in self.ast.modules:
            self.define_structs(mod)
        for mod in self.ast.modules:
            for fd in mod.funs:
                try:
                    self.lower_fun(mod.name, fd)
                except _Bail:
                    pass
        for mod in self.ast.modules:
            try:
                self.define_specs(mod)
            except _Bail:
                pass
        self.build_call_graph()
        if self.errors:
            raise ModelErrorGroup(self.errors)
        return m

    # ------------------------------------------------------------ declaring

    def declare_module(self, mod: A.ModuleDecl):
        m = self.model
        for s in mod.structs:
            q = f"{mod.name}::{s.name}"
            if q in m.structs:
                self.err(f"duplicate struct {q}", s.span)
            from . import StructInfo
            m.structs[q] = StructInfo(q, list(s.type_params),
                                      set(s.abilities), [], span=s.span)
        for c in mod.consts:
            q = f"{mod.name}::{c.name}"
            ty = self.resolve_type(c.ty, mod.name, {}, span=c.span)
            val = self.const_value(c.value, ty)
            m.consts[q] = (ty, val)
        for sf in mod.spec_funs:
            q = f"{mod.name}::{sf.name}"
            tenv = {n: i for i, n in enumerate(sf.type_params)}
            params = [(n, self.resolve_type(t, mod.name, tenv, spec=True))
                      for n, t in sf.params]
            ret = self.resolve_type(sf.ret, mod.name, tenv, spec=True)
            from . import SpecFunInfo
            m.spec_funs[q] = SpecFunInfo(q, list(sf.type_params), params,
                                         ret, E.TRUE)
        for fd in mod.funs:
            q = f"{mod.name}::{fd.name}"
            if q in self.fun_decls:
                self.err(f"duplicate function {q}", fd.span)
            self.fun_decls[q] = fd
            self.fun_modules[q] = mod.name

    def const_value(self, e: A.Exp, ty: Type):
        if isinstance(e, A.NumLit) and _is_num(ty):
            return e.value
        if isinstance(e, A.BoolLit) and ty == BOOL:
            return e.value
        if isinstance(e, A.AddressLit) and ty == ADDRESS:
            return e.value
        self.err("const initializer must be a literal of the declared type",
                 e.span)
        return 0

    def define_structs(self, mod: A.ModuleDecl):
        for s in mod.structs:
            q = f"{mod.name}::{s.name}"
            info = self.model.structs[q]
            tenv = {n: i for i, n in enumerate(s.type_params)}
            for f in s.fields:
                try:
                    ty = self.resolve_type(f.ty, mod.name, tenv, span=f.span)
                except _Bail:
                    continue
                if isinstance(ty, RefT):
                    self.err("reference types cannot appear in structure "
                             "fields", f.span)
                    continue
                if any(n == f.name for n, _ in info.fields):
                    self.err(f"duplicate field {f.name}", f.span)
                info.fields.append((f.name, ty))

    # ------------------------------------------------------------ types

    def resolve_type(self, t: A.TypeNode, module: str, tenv: dict[str, int],
                     space: str = "F", spec: bool = False,
                     span=None) -> Type:
        if isinstance(t, A.RefType):
            return RefT(self.resolve_type(t.inner, module, tenv, space, spec),
                        t.mut)
        assert isinstance(t, A.NamedType)
        prim = {"u8": U8, "u64": U64, "bool": BOOL, "address": ADDRESS,
                "signer": SIGNER}.get(t.name)
        if prim is not None:
            if t.targs:
                self.bail(f"type {t.name} takes no arguments", t.span)
            return prim
        if t.name == "num":
            if not spec:
                self.bail("type num is only available in specifications",
                          t.span)
            return NUM
        if t.name in tenv and not t.targs:
            return TypeParam(tenv[t.name], space, t.name)
        if t.name == "EventHandle" or t.name.endswith("::EventHandle"):
            if len(t.targs) != 1:
                self.bail("EventHandle takes one type argument", t.span)
            return EventHandleT(
                self.resolve_type(t.targs[0], module, tenv, space, spec))
        q = self.resolve_struct_name(t.name, module, t.span)
        info = self.model.structs[q]
        targs = tuple(self.resolve_type(a, module, tenv, space, spec)
                      for a in t.targs)
        if len(targs) != len(info.type_params):
            self.bail(f"struct {q} expects {len(info.type_params)} type "
                      f"argument(s), got {len(targs)}", t.span)
        return StructT(q, targs)

    def resolve_struct_name(self, name: str, module: str, span) -> str:
        if "::" in name:
            if name in self.model.structs:
                return name
        else:
            q = f"{module}::{name}"
            if q in self.model.structs:
                return q
        self.bail(f"unknown struct {name}", span)

    def resolve_fun_name(self, name: str, module: str, span) -> str:
        if "::" in name:
            if name in self.fun_decls:
                return name
        else:
            q = f"{module}::{name}"
            if q in self.fun_decls:
                return q
        self.bail(f"unknown function {name}", span)

    def field_type(self, st: StructT, fname: str, span) -> Type:
        info = self.model.structs[st.name]
        try:
            ft = info.field_type(fname)
        except KeyError:
            self.bail(f"struct {st.name} has no field {fname}", span)
        sub = {("F", i): t for i, t in enumerate(st.targs)}
        return ft.subst(sub)

    def key_label(self, st: Type, span) -> MemoryLabel:
        if not isinstance(st, StructT):
            self.bail("global memory is indexed by a structure type", span)
        info = self.model.structs[st.name]
        if "key" not in info.abilities:
            self.bail(f"struct {st.name} lacks the key ability", span)
        return MemoryLabel(st.name, st.targs)

    # ------------------------------------------------------------ functions

    def lower_fun(self, module: str, fd: A.FunDecl):
        q = f"{module}::{fd.name}"
        tenv = {n: i for i, n in enumerate(fd.type_params)}
        fn = I.FunctionIR(q, fd.visibility, list(fd.type_params), 0, [], {},
                          [], set(), [], span=fd.span)
        env = {}
        for pn, pt in fd.params:
            ty = self.resolve_type(pt, module, tenv, span=fd.span)
            t = fn.new_temp(ty, pn)
            if pn in env:
                self.err(f"duplicate parameter {pn}", fd.span)
            env[pn] = t
        fn.num_params = len(fd.params)
        fn.rets = [self.resolve_type(rt, module, tenv, span=fd.span)
                   for rt in fd.rets]
        for acq in fd.acquires:
            name = self.resolve_struct_name(acq, module, fd.span)
            if "key" not in self.model.structs[name].abilities:
                self.err(f"acquires names non-key struct {name}", fd.span)
            fn.acquires.add(name)
        self.model.functions[q] = fn
        lower = FnLower(self, fn, module, tenv, env)
        lower.block(fd.body, fn.body)
        if fn.rets and not _always_exits(fn.body):
            self.err(f"function {q} must return on all paths", fd.span)
        if not fn.rets and not _always_exits(fn.body):
            fn.body.append(I.Return([], span=fd.span))

    # ------------------------------------------------------------ specs

    def define_specs(self, mod: A.ModuleDecl):
        m = self.model
        for sf in mod.spec_funs:
            q = f"{mod.name}::{sf.name}"
            info = m.spec_funs[q]
            tenv = {n: i for i, n in enumerate(sf.type_params)}
            ctx = SpecLower(self, mod.name, tenv)
            ctx.env = {n: E.SVar("param", n, ty=t) for n, t in info.params}
            info.body = ctx.convert(sf.body, want=info.ret)
        for sb in mod.spec_blocks:
            self.define_spec_block(mod, sb)
        for idx, inv in enumerate(mod.invariants):
            tenv = {n: i for i, n in enumerate(inv.type_params)}
            ctx = SpecLower(self, mod.name, tenv, space="I",
                            allow_old=inv.is_update)
            body = ctx.convert(inv.body, want=BOOL)
            from . import Invariant
            tag = inv.tag or f"inv{idx}"
            m.invariants.append(Invariant(
                tag, "update" if inv.is_update else "inductive",
                list(inv.type_params), body, mod.name, span=inv.span))

    def define_spec_block(self, mod: A.ModuleDecl, sb: A.SpecBlock):
        m = self.model
        fq = f"{mod.name}::{sb.target}"
        sq = fq
        if fq in m.functions:
            self.define_fun_spec(mod, sb, fq)
        elif sq in m.structs:
            self.define_struct_spec(mod, sb, sq)
        else:
            self.err(f"spec target {sb.target} is neither a function nor "
                     f"a struct", sb.span)

    def define_struct_spec(self, mod, sb, sq):
        info = self.model.structs[sq]
        tenv = {n: i for i, n in enumerate(info.type_params)}
        for mem in sb.members:
            if not isinstance(mem, A.DataInvariant):
                self.err("struct spec blocks may only contain invariants",
                         mem.span)
                continue
            ctx = SpecLower(self, mod.name, tenv)
            ctx.env = {n: E.SVar("self_field", n, ty=t)
                       for n, t in info.fields}
            info.data_invariants.append(ctx.convert(mem.e, want=BOOL))

    def define_fun_spec(self, mod, sb, fq):
        fn = self.model.functions[fq]
        spec = self.model.spec_of(fq)
        spec.span = sb.span
        tenv = {n: i for i, n in enumerate(fn.type_params)}
        base_env = {}
        for t in range(fn.num_params):
            name = fn.temp_name(t)
            ty = fn.locals[t]
            if isinstance(ty, RefT):
                ty = ty.inner
            base_env[name] = E.SVar("param", name, ty=ty)

        def ctx(allow_old=False):
            c = SpecLower(self, mod.name, tenv, allow_old=allow_old)
            c.env = dict(env)
            c.result_types = list(fn.rets)
            return c

        env = dict(base_env)
        for mem in sb.members:
            try:
                if isinstance(mem, A.SpecLet):
                    env[mem.name] = ctx().convert(mem.e)
                elif isinstance(mem, A.Requires):
                    spec.requires.append(ctx().convert(mem.e, want=BOOL))
                elif isinstance(mem, A.Ensures):
                    spec.ensures.append(ctx(True).convert(mem.e, want=BOOL))
                elif isinstance(mem, A.AbortsIf):
                    spec.aborts_if.append(ctx().convert(mem.e, want=BOOL))
                elif isinstance(mem, A.ModifiesSpec):
                    st = self.resolve_type(mem.struct, mod.name, tenv,
                                           span=mem.span)
                    label = self.key_label(st, mem.span)
                    spec.modifies.append(
                        (label, ctx().convert(mem.addr, want=ADDRESS)))
                elif isinstance(mem, A.EmitsSpec):
                    c = ctx()
                    handle = c.convert(mem.handle)
                    if not isinstance(handle.ty, EventHandleT):
                        self.bail("emits target is not an event handle",
                                  mem.span)
                    msg = c.convert(mem.msg, want=handle.ty.msg)
                    cond = (c.convert(mem.cond, want=BOOL)
                            if mem.cond is not None else None)
                    from . import EmitsClauseSpec
                    spec.emits.append(EmitsClauseSpec(cond, handle, msg))
                elif isinstance(mem, A.PragmaSpec):
                    if mem.name == "opaque":
                        spec.opaque = True
                    elif mem.name == "suspend_invariants":
                        spec.suspend = True
                    else:
                        self.err(f"unknown pragma {mem.name}", mem.span)
                elif isinstance(mem, A.DataInvariant):
                    self.err("data invariants belong in struct spec blocks",
                             mem.span)
                else:
                    self.err("unsupported spec member", mem.span)
            except _Bail:
                pass

    # ------------------------------------------------------------ call graph

    def build_call_graph(self):
        m = self.model
        for q, fn in m.functions.items():
            callees = set()
            for s in I.all_stmts(fn):
                if isinstance(s, I.Call):
                    callees.add(s.fname)
            m.call_graph[q] = callees


def _always_exits(stmts: list[I.Stmt]) -> bool:
    for s in stmts:
        if isinstance(s, (I.Return, I.Abort)):
            return True
        if isinstance(s, I.IfStmt):
            if _always_exits(s.then) and _always_exits(s.els):
                return True
    return False


# ================================================================ FnLower

class FnLower:
    """Lowers one function body; `stmts` is the block under construction."""

    def __init__(self, b: Builder, fn: I.FunctionIR, module: str,
                 tenv: dict[str, int], env: dict[str, int]):
        self.b = b
        self.fn = fn
        self.module = module
        self.tenv = tenv
        self.env = env
        self.stmts: list[I.Stmt] = fn.body

    def ty(self, t: int) -> Type:
        return self.fn.locals[t]

    def emit(self, s: I.Stmt):
        self.stmts.append(s)

    def assign(self, rv: I.Rvalue, ty: Type, span, name=None) -> int:
        t = self.fn.new_temp(ty, name)
        self.emit(I.Assign(t, rv, span=span))
        return t

    # ------------------------------------------------------------ blocks

    def block(self, stmts: list[A.Stmt], into: list[I.Stmt]):
        saved, self.stmts = self.stmts, into
        saved_env = dict(self.env)
        for s in stmts:
            try:
                self.stmt(s)
            except _Bail:
                break
        self.env = saved_env
        self.stmts = saved

    def stmt(self, s: A.Stmt):
        b = self.b
        if isinstance(s, A.LetStmt):
            if s.init is None:
                b.bail("let requires an initializer", s.span)
            want = None
            if s.ty is not None:
                want = b.resolve_type(s.ty, self.module, self.tenv,
                                      span=s.span)
            t = self.exp(s.init, want)
            if want is not None and self.ty(t) != want:
                b.bail(f"let type mismatch: {self.ty(t)} vs {want}", s.span)
            # bind a stable named temp so reassignment works
            named = self.fn.new_temp(self.ty(t), s.name)
            self.emit(I.Assign(named, I.Use(t), span=s.span))
            self.env[s.name] = named
        elif isinstance(s, A.AssignStmt):
            self.assign_stmt(s)
        elif isinstance(s, A.AssertStmt):
            cond = self.exp(s.cond, BOOL)
            code = self.exp(s.code, U64)
            neg = self.assign(I.UnOp("!", cond), BOOL, s.span)
            self.emit(I.IfStmt(neg, [I.Abort(code, span=s.span)], [],
                               span=s.span))
        elif isinstance(s, A.AbortStmt):
            code = self.exp(s.code, U64)
            self.emit(I.Abort(code, span=s.span))
        elif isinstance(s, A.IfStmt):
            cond = self.exp(s.cond, BOOL)
            then: list[I.Stmt] = []
            els: list[I.Stmt] = []
            self.block(s.then, then)
            self.block(s.els, els)
            self.emit(I.IfStmt(cond, then, els, span=s.span))
        elif isinstance(s, A.ReturnStmt):
            if len(s.values) != len(self.fn.rets):
                self.b.bail(
                    f"return arity mismatch: expected {len(self.fn.rets)}",
                    s.span)
            vals = [self.exp(v, rt) for v, rt in zip(s.values, self.fn.rets)]
            for v, rt in zip(vals, self.fn.rets):
                if self.ty(v) != rt:
                    self.b.bail(f"return type mismatch: {self.ty(v)} vs {rt}",
                                s.span)
            self.emit(I.Return(vals, span=s.span))
        elif isinstance(s, A.ExprStmt):
            if not isinstance(s.e, A.CallExp):
                self.b.bail("expression statements must be calls", s.span)
            self.call(s.e, as_stmt=True)
        else:
            raise AssertionError(s)

    # ------------------------------------------------------------ assignment

    def assign_stmt(self, s: A.AssignStmt):
        place = self.lower_place(s.lhs)
        kind = place[0]
        if kind == "local":
            _, t = place
            rhs = self.exp(s.rhs, self.ty(t))
            if self.ty(rhs) != self.ty(t):
                self.b.bail("assignment type mismatch", s.span)
            self.emit(I.Assign(t, I.Use(rhs), span=s.span))
            return
        _, base, fields = place
        if kind == "localpath":
            self.local_path_update(base, fields, s)
            return
        assert kind == "ref"
        r = base
        while len(fields) > 1:
            rt = self.ty(r)
            ft = self.b.field_type(rt.inner, fields[0], s.span)
            r = self.assign(I.BorrowField(r, fields[0], True),
                            RefT(ft, True), s.span)
            fields = fields[1:]
        rt = self.ty(r)
        if not isinstance(rt, RefT) or not rt.mut:
            self.b.bail("cannot write through an immutable reference", s.span)
        if fields:
            ft = self.b.field_type(rt.inner, fields[0], s.span)
            rhs = self.exp(s.rhs, ft)
            if self.ty(rhs) != ft:
                self.b.bail("assignment type mismatch", s.span)
            self.emit(I.WriteField(r, fields[0], rhs, span=s.span))
        else:
            rhs = self.exp(s.rhs, rt.inner)
            if self.ty(rhs) != rt.inner:
                self.b.bail("assignment type mismatch", s.span)
            self.emit(I.WriteRef(r, rhs, span=s.span))

    def local_path_update(self, base: int, fields: list[str], s):
        # s.f.g = v  ==>  functional updates bottom-up
        chain = [base]
        ty = self.ty(base)
        for f in fields[:-1]:
            nxt = self.assign(I.FieldGet(chain[-1], f),
                              self.b.field_type(ty, f, s.span), s.span)
            chain.append(nxt)
            ty = self.ty(nxt)
        last_ty = self.b.field_type(ty, fields[-1], s.span)
        rhs = self.exp(s.rhs, last_ty)
        if self.ty(rhs) != last_ty:
            self.b.bail("assignment type mismatch", s.span)
        val = rhs
        for i in range(len(fields) - 1, -1, -1):
            holder = chain[i]
            val = self.assign(I.FieldUpdate(holder, fields[i], val),
                              self.ty(holder), s.span)
        self.emit(I.Assign(base, I.Use(val), span=s.span))

    def lower_place(self, e: A.Exp):
        """Classify an assignment target.

        Returns ("local", temp), ("localpath", temp, fields) or
        ("ref", temp, fields).
        """
        fields: list[str] = []
        while isinstance(e, A.FieldExp):
            fields.insert(0, e.field)
            e = e.base
        if isinstance(e, A.DerefExp):
            r = self.exp(e.e)
            if not isinstance(self.ty(r), RefT):
                self.b.bail("cannot dereference a non-reference", e.span)
            return ("ref", r, fields)
        if isinstance(e, A.NameExp):
            if e.name not in self.env:
                self.b.bail(f"unknown variable {e.name}", e.span)
            t = self.env[e.name]
            if isinstance(self.ty(t), RefT):
                return ("ref", t, fields)
            if not fields:
                return ("local", t)
            return ("localpath", t, fields)
        if isinstance(e, A.CallExp) and e.name in ("borrow_global_mut",):
            r = self.exp(e)
            return ("ref", r, fields)
        self.b.bail("invalid assignment target", e.span)

    # ------------------------------------------------------------ expressions

    def exp(self, e: A.Exp, want: Type | None = None) -> int:
        b = self.b
        if isinstance(e, A.NumLit):
            ty = {"u8": U8, "u64": U64, None: None}[e.suffix]
            if ty is None:
                ty = want if want in (U8, U64) else U64
            if e.value > (255 if ty == U8 else MAX_U64):
                b.bail("integer literal out of range", e.span)
            return self.assign(I.Const(e.value, ty), ty, e.span)
        if isinstance(e, A.BoolLit):
            return self.assign(I.Const(e.value, BOOL), BOOL, e.span)
        if isinstance(e, A.AddressLit):
            return self.assign(I.Const(e.value, ADDRESS), ADDRESS, e.span)
        if isinstance(e, A.NameExp):
            if e.name in self.env:
                return self.env[e.name]
            cq = self.const_ref(e.name)
            if cq is not None:
                ty, val = self.b.model.consts[cq] if cq != "MAX_U64" \
                    else (U64, MAX_U64)
                return self.assign(I.Const(val, ty), ty, e.span)
            b.bail(f"unknown variable {e.name}", e.span)
        if isinstance(e, A.CallExp):
            t = self.call(e, want=want)
            if t is None:
                b.bail("call has no value", e.span)
            return t
        if isinstance(e, A.FieldExp):
            base = self.exp(e.base)
            bty = self.ty(base)
            if isinstance(bty, RefT):
                base = self.assign(I.ReadRef(base), bty.inner, e.span)
                bty = bty.inner
            if not isinstance(bty, StructT):
                b.bail("field access on non-struct", e.span)
            ft = b.field_type(bty, e.field, e.span)
            return self.assign(I.FieldGet(base, e.field), ft, e.span)
        if isinstance(e, A.PackExp):
            return self.pack(e)
        if isinstance(e, A.BorrowExp):
            return self.borrow(e)
        if isinstance(e, A.DerefExp):
            r = self.exp(e.e)
            rt = self.ty(r)
            if not isinstance(rt, RefT):
                b.bail("cannot dereference a non-reference", e.span)
            return self.assign(I.ReadRef(r), rt.inner, e.span)
        if isinstance(e, A.UnExp):
            a = self.exp(e.e, BOOL)
            if self.ty(a) != BOOL:
                b.bail("! expects a bool", e.span)
            return self.assign(I.UnOp("!", a), BOOL, e.span)
        if isinstance(e, A.BinExp):
            return self.binop(e, want)
        if isinstance(e, A.IfExp):
            cond = self.exp(e.cond, BOOL)
            if self.ty(cond) != BOOL:
                b.bail("condition must be bool", e.span)
            then_blk: list[I.Stmt] = []
            els_blk: list[I.Stmt] = []
            saved = self.stmts
            self.stmts = then_blk
            tv = self.exp(e.then, want)
            self.stmts = els_blk
            ev = self.exp(e.els, want or self.ty(tv))
            self.stmts = saved
            if self.ty(tv) != self.ty(ev):
                b.bail("branches of if have different types", e.span)
            dst = self.fn.new_temp(self.ty(tv))
            then_blk.append(I.Assign(dst, I.Use(tv), span=e.span))
            els_blk.append(I.Assign(dst, I.Use(ev), span=e.span))
            self.emit(I.IfStmt(cond, then_blk, els_blk, span=e.span))
            return dst
        if isinstance(e, (A.OldExp, A.QuantExp, A.TupleExp)):
            b.bail("specification-only expression in code", e.span)
        b.bail(f"unsupported expression {type(e).__name__}", e.span)

    def const_ref(self, name: str) -> str | None:
        if name == "MAX_U64":
            return "MAX_U64"
        q = name if "::" in name else f"{self.module}::{name}"
        if q in self.b.model.consts:
            return q
        return None

    def binop(self, e: A.BinExp, want):
        b = self.b
        if e.op in _BOOLOP:
            # short-circuit via a branch so RHS aborts stay conditional
            left = self.exp(e.left, BOOL)
            if self.ty(left) != BOOL:
                b.bail("bool operator on non-bool", e.span)
            dst = self.fn.new_temp(BOOL)
            rhs_blk: list[I.Stmt] = []
            saved = self.stmts
            self.stmts = rhs_blk
            right = self.exp(e.right, BOOL)
            if self.ty(right) != BOOL:
                b.bail("bool operator on non-bool", e.span)
            rhs_blk.append(I.Assign(dst, I.Use(right), span=e.span))
            self.stmts = saved
            short_blk = [I.Assign(dst, I.Const(e.op == "||", BOOL),
                                  span=e.span)]
            if e.op == "&&":
                self.emit(I.IfStmt(left, rhs_blk, short_blk, span=e.span))
            else:
                self.emit(I.IfStmt(left, short_blk, rhs_blk, span=e.span))
            return dst
        lwant = want if (e.op in _ARITH and want in (U8, U64)) else None
        a = self.exp(e.left, lwant)
        bt = self.exp(e.right, self.ty(a))
        ta, tb = self.ty(a), self.ty(bt)
        if e.op in _ARITH or e.op in _CMP:
            if ta != tb or ta not in (U8, U64):
                b.bail(f"operator {e.op} expects matching integer operands, "
                       f"got {ta} and {tb}", e.span)
            ty = ta if e.op in _ARITH else BOOL
            return self.assign(I.BinOp(e.op, a, bt), ty, e.span)
        if e.op in _EQ:
            if ta != tb or isinstance(ta, RefT):
                b.bail(f"cannot compare {ta} and {tb}", e.span)
            return self.assign(I.BinOp(e.op, a, bt), BOOL, e.span)
        raise AssertionError(e.op)

    def pack(self, e: A.PackExp):
        b = self.b
        q = b.resolve_struct_name(e.name, self.module, e.span)
        info = b.model.structs[q]
        targs = tuple(b.resolve_type(t, self.module, self.tenv, span=e.span)
                      for t in e.targs)
        if len(targs) != len(info.type_params):
            b.bail(f"struct {q} expects {len(info.type_params)} type "
                   f"argument(s)", e.span)
        st = StructT(q, targs)
        given = dict(e.fields)
        if set(given) != set(info.field_names()):
            b.bail(f"pack of {q} must bind exactly its fields", e.span)
        args = []
        for fname, _ in info.fields:
            ft = b.field_type(st, fname, e.span)
            v = self.exp(given[fname], ft)
            if self.ty(v) != ft:
                b.bail(f"field {fname} type mismatch", e.span)
            args.append(v)
        return self.assign(I.Pack(q, targs, args), st, e.span)

    def borrow(self, e: A.BorrowExp):
        b = self.b
        target = e.e
        fields: list[str] = []
        while True:
            if isinstance(target, A.FieldExp):
                fields.insert(0, target.field)
                target = target.base
            elif isinstance(target, A.DerefExp):
                target = target.e
            else:
                break
        if isinstance(target, A.NameExp) and target.name in self.env:
            base = self.env[target.name]
            bty = self.ty(base)
            if isinstance(bty, RefT):
                if e.mut and not bty.mut:
                    b.bail("cannot mutably borrow from an immutable "
                           "reference", e.span)
                if not fields:
                    b.bail("cannot re-borrow a reference", e.span)
                r = base
            else:
                r = self.assign(I.BorrowLocal(base, e.mut),
                                RefT(bty, e.mut), e.span)
        elif isinstance(target, A.CallExp) and target.name in (
                "borrow_global", "borrow_global_mut"):
            r = self.exp(target)
            if e.mut and not self.ty(r).mut:
                b.bail("cannot mutably borrow from an immutable reference",
                       e.span)
        else:
            b.bail("borrow target must be a local, a field path, or a "
                   "global borrow", e.span)
        for f in fields:
            rt = self.ty(r)
            ft = b.field_type(rt.inner, f, e.span)
            if isinstance(ft, RefT):
                b.bail("field is a reference", e.span)
            r = self.assign(I.BorrowField(r, f, e.mut), RefT(ft, e.mut),
                            e.span)
        if not isinstance(self.ty(r), RefT):
            b.bail("borrow did not produce a reference", e.span)
        return r

    # ------------------------------------------------------------ calls

    def call(self, e: A.CallExp, want=None, as_stmt=False):
        b = self.b
        name = e.name
        if name in ("borrow_global", "borrow_global_mut", "exists",
                    "move_from", "move_to", "global"):
            return self.builtin_mem(e, as_stmt)
        if name == "Signer::address_of":
            if len(e.args) != 1:
                b.bail("address_of expects one argument", e.span)
            a = self.exp(e.args[0])
            ty = self.ty(a)
            if isinstance(ty, RefT) and ty.inner == SIGNER:
                a = self.assign(I.ReadRef(a), SIGNER, e.span)
            elif ty != SIGNER:
                b.bail("address_of expects a signer", e.span)
            return self.assign(I.AddressOf(a), ADDRESS, e.span)
        if name in ("Event::emit_event", "emit_event"):
            if len(e.args) != 2:
                b.bail("emit_event expects (handle, message)", e.span)
            h = self.exp(e.args[0])
            hty = self.ty(h)
            if not (isinstance(hty, RefT) and hty.mut
                    and isinstance(hty.inner, EventHandleT)):
                b.bail("emit_event expects a &mut EventHandle", e.span)
            msg = self.exp(e.args[1], hty.inner.msg)
            if self.ty(msg) != hty.inner.msg:
                b.bail("event message type mismatch", e.span)
            if not as_stmt:
                b.bail("emit_event is a statement", e.span)
            self.emit(I.EmitEvent(h, msg, span=e.span))
            return None
        return self.user_call(e, as_stmt)

    def builtin_mem(self, e: A.CallExp, as_stmt):
        b = self.b
        if e.name == "global":
            b.bail("global<T>(a) is specification-only", e.span)
        if len(e.targs) != 1:
            b.bail(f"{e.name} expects one type argument", e.span)
        st = b.resolve_type(e.targs[0], self.module, self.tenv, span=e.span)
        label = b.key_label(st, e.span)
        if e.name == "move_to":
            if len(e.args) != 2:
                b.bail("move_to expects (signer, value)", e.span)
            s = self.exp(e.args[0])
            sty = self.ty(s)
            if isinstance(sty, RefT) and sty.inner == SIGNER:
                s = self.assign(I.ReadRef(s), SIGNER, e.span)
            elif sty != SIGNER:
                b.bail("move_to expects a signer", e.span)
            v = self.exp(e.args[1], st)
            if self.ty(v) != st:
                b.bail("move_to value type mismatch", e.span)
            if not as_stmt:
                b.bail("move_to is a statement", e.span)
            self.emit(I.MoveTo(label, s, v, span=e.span))
            return None
        if len(e.args) != 1:
            b.bail(f"{e.name} expects one address argument", e.span)
        a = self.exp(e.args[0], ADDRESS)
        if self.ty(a) != ADDRESS:
            b.bail(f"{e.name} expects an address", e.span)
        if e.name == "exists":
            return self.assign(I.Exists(label, a), BOOL, e.span)
        if e.name == "move_from":
            return self.assign(I.MoveFrom(label, a), st, e.span)
        mut = e.name == "borrow_global_mut"
        return self.assign(I.BorrowGlobal(label, a, mut), RefT(st, mut),
                           e.span)

    def user_call(self, e: A.CallExp, as_stmt):
        b = self.b
        q = b.resolve_fun_name(e.name, self.module, e.span)
        callee = b.fun_decls[q]
        cmod = self.fun_modules_of(q)
        ctenv = {n: i for i, n in enumerate(callee.type_params)}
        ptypes = [b.resolve_type(t, cmod, ctenv, space="C")
                  for _, t in callee.params]
        rtypes = [b.resolve_type(t, cmod, ctenv, space="C")
                  for t in callee.rets]
        args = [self.exp(a) for a in e.args]
        if len(args) != len(ptypes):
            b.bail(f"call to {q} expects {len(ptypes)} argument(s)", e.span)
        if e.targs:
            targs = tuple(b.resolve_type(t, self.module, self.tenv,
                                         span=e.span) for t in e.targs)
            if len(targs) != len(callee.type_params):
                b.bail(f"call to {q} expects {len(callee.type_params)} "
                       f"type argument(s)", e.span)
        else:
            sub: dict = {}
            for a, pt in zip(args, ptypes):
                got = unify(pt, self.ty(a), sub)
                if got is None:
                    b.bail(f"cannot infer type arguments for call to {q}",
                           e.span)
                sub = got
            sub = resolve_subst(sub)
            targs = []
            for i in range(len(callee.type_params)):
                if ("C", i) not in sub:
                    b.bail(f"cannot infer type argument "
                           f"{callee.type_params[i]} for call to {q}", e.span)
                targs.append(sub[("C", i)])
            targs = tuple(targs)
        sub = {("C", i): t for i, t in enumerate(targs)}
        ptypes = [t.subst(sub) for t in ptypes]
        rtypes = [t.subst(sub) for t in rtypes]
        for a, pt in zip(args, ptypes):
            if self.ty(a) != pt:
                b.bail(f"argument type mismatch in call to {q}: "
                       f"{self.ty(a)} vs {pt}", e.span)
        if len(rtypes) > 1 and not as_stmt:
            b.bail("calls with multiple results can only be statements",
                   e.span)
        dsts = [self.fn.new_temp(rt) for rt in rtypes]
        self.emit(I.Call(dsts, q, targs, args, span=e.span))
        if len(dsts) == 1:
            return dsts[0]
        return None

    def fun_modules_of(self, q: str) -> str:
        return self.b.fun_modules[q]


# ================================================================ SpecLower

class SpecLower:
    """Converts spec-language AST expressions into typed SpecExp trees."""

    def __init__(self, b: Builder, module: str, tenv: dict[str, int],
                 space: str = "F", allow_old: bool = False):
        self.b = b
        self.module = module
        self.tenv = tenv
        self.space = space
        self.allow_old = allow_old
        self.env: dict[str, E.SpecExp] = {}
        self.result_types: list[Type] = []

    def rtype(self, t: A.TypeNode) -> Type:
        return self.b.resolve_type(t, self.module, self.tenv,
                                   space=self.space, spec=True, span=t.span)

    def convert(self, e: A.Exp, want: Type | None = None) -> E.SpecExp:
        out = self._convert(e)
        if want is not None and not self.compat(out.ty, want):
            self.b.bail(f"specification expression has type {out.ty}, "
                        f"expected {want}", e.span)
        return out

    def compat(self, got: Type, want: Type) -> bool:
        if got == want:
            return True
        return _is_num(got) and _is_num(want)

    def _convert(self, e: A.Exp) -> E.SpecExp:
        b = self.b
        if isinstance(e, A.NumLit):
            return E.SConst(e.value, ty=NUM, span=e.span)
        if isinstance(e, A.BoolLit):
            return E.SConst(e.value, ty=BOOL, span=e.span)
        if isinstance(e, A.AddressLit):
            return E.SConst(e.value, ty=ADDRESS, span=e.span)
        if isinstance(e, A.NameExp):
            if e.name in self.env:
                return self.env[e.name]
            if e.name == "result":
                if len(self.result_types) != 1:
                    b.bail("result is only available for single-result "
                           "functions", e.span)
                return E.SVar("result", 0, ty=self.result_types[0],
                              span=e.span)
            if e.name == "MAX_U64":
                return E.SConst(MAX_U64, ty=NUM, span=e.span)
            q = e.name if "::" in e.name else f"{self.module}::{e.name}"
            if q in b.model.consts:
                ty, val = b.model.consts[q]
                cty = NUM if ty in (U8, U64) else ty
                return E.SConst(val, ty=cty, span=e.span)
            b.bail(f"unknown name {e.name} in specification", e.span)
        if isinstance(e, A.OldExp):
            if not self.allow_old:
                b.bail("old(..) is not allowed in this condition", e.span)
            inner = self._convert(e.e)
            return E.SOld(inner, ty=inner.ty, span=e.span)
        if isinstance(e, A.FieldExp):
            base = self._convert(e.base)
            if not isinstance(base.ty, StructT):
                b.bail("field access on non-struct", e.span)
            ft = b.field_type(base.ty, e.field, e.span)
            return E.SField(base, e.field, ty=ft, span=e.span)
        if isinstance(e, A.UnExp):
            a = self.convert(e.e, BOOL)
            return E.SUn("!", a, ty=BOOL, span=e.span)
        if isinstance(e, A.BinExp):
            return self.bin(e)
        if isinstance(e, A.IfExp):
            c = self.convert(e.cond, BOOL)
            t = self._convert(e.then)
            f = self._convert(e.els)
            if not self.compat(t.ty, f.ty):
                b.bail("branches of if have different types", e.span)
            ty = NUM if _is_num(t.ty) else t.ty
            return E.SCond(c, t, f, ty=ty, span=e.span)
        if isinstance(e, A.QuantExp):
            sort = self.rtype(e.vtype)
            if sort not in (ADDRESS, NUM, U64, U8, BOOL):
                b.bail(f"cannot quantify over {sort}", e.span)
            saved = self.env.get(e.var)
            self.env[e.var] = E.SVar("quant", e.var, ty=sort, span=e.span)
            where = self.convert(e.where, BOOL) if e.where is not None \
                else None
            body = self.convert(e.body, BOOL)
            if saved is None:
                self.env.pop(e.var, None)
            else:
                self.env[e.var] = saved
            return E.SQuant(e.kind, e.var, sort, where, body, ty=BOOL,
                            span=e.span)
        if isinstance(e, A.PackExp):
            q = b.resolve_struct_name(e.name, self.module, e.span)
            info = b.model.structs[q]
            targs = tuple(self.rtype(t) for t in e.targs)
            if len(targs) != len(info.type_params):
                b.bail(f"struct {q} expects {len(info.type_params)} type "
                       f"argument(s)", e.span)
            st = StructT(q, targs)
            given = dict(e.fields)
            if set(given) != set(info.field_names()):
                b.bail(f"pack of {q} must bind exactly its fields", e.span)
            fields = []
            for fname, _ in info.fields:
                ft = b.field_type(st, fname, e.span)
                fields.append((fname, self.convert(given[fname], ft)))
            return E.SPack(q, targs, tuple(fields), ty=st, span=e.span)
        if isinstance(e, A.CallExp):
            return self.callexp(e)
        b.bail(f"unsupported specification expression "
               f"{type(e).__name__}", e.span)

    def bin(self, e: A.BinExp) -> E.SpecExp:
        b = self.b
        if e.op in _BOOLOP:
            l = self.convert(e.left, BOOL)
            r = self.convert(e.right, BOOL)
            return E.SBin(e.op, l, r, ty=BOOL, span=e.span)
        l = self._convert(e.left)
        r = self._convert(e.right)
        if e.op in _ARITH:
            if not (_is_num(l.ty) and _is_num(r.ty)):
                b.bail(f"operator {e.op} expects numbers", e.span)
            return E.SBin(e.op, l, r, ty=NUM, span=e.span)
        if e.op in _CMP:
            if not (_is_num(l.ty) and _is_num(r.ty)):
                b.bail(f"operator {e.op} expects numbers", e.span)
            return E.SBin(e.op, l, r, ty=BOOL, span=e.span)
        if e.op in _EQ:
            if not self.compat(l.ty, r.ty) and not self.compat(r.ty, l.ty):
                b.bail(f"cannot compare {l.ty} and {r.ty}", e.span)
            return E.SBin(e.op, l, r, ty=BOOL, span=e.span)
        raise AssertionError(e.op)

    def callexp(self, e: A.CallExp) -> E.SpecExp:
        b = self.b
        if e.name in ("global", "exists"):
            if len(e.targs) != 1 or len(e.args) != 1:
                b.bail(f"{e.name}<T>(addr) expects one type and one address",
                       e.span)
            st = self.rtype(e.targs[0])
            label = b.key_label(st, e.span)
            addr = self.convert(e.args[0], ADDRESS)
            if e.name == "global":
                return E.SGlobal(label, addr, ty=st, span=e.span)
            return E.SExistsMem(label, addr, ty=BOOL, span=e.span)
        if e.name == "Signer::address_of":
            if len(e.args) != 1:
                b.bail("address_of expects one argument", e.span)
            a = self._convert(e.args[0])
            if a.ty != SIGNER:
                b.bail("address_of expects a signer", e.span)
            return E.SAddressOf(a, ty=ADDRESS, span=e.span)
        q = e.name if "::" in e.name else f"{self.module}::{e.name}"
        if q in b.model.spec_funs:
            sf = b.model.spec_funs[q]
            targs = tuple(self.rtype(t) for t in e.targs)
            if len(targs) != len(sf.type_params):
                b.bail(f"spec fun {q} expects {len(sf.type_params)} type "
                       f"argument(s)", e.span)
            if len(e.args) != len(sf.params):
                b.bail(f"spec fun {q} expects {len(sf.params)} argument(s)",
                       e.span)
            sub = {("F", i): t for i, t in enumerate(targs)}
            args = []
            for a, (_, pt) in zip(e.args, sf.params):
                args.append(self.convert(a, pt.subst(sub)))
            return E.SCall(q, targs, tuple(args), ty=sf.ret.subst(sub),
                           span=e.span)
        b.bail(f"unknown specification function {e.name}", e.span)

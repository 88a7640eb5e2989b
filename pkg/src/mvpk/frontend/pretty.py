"""Pretty printer for the source AST.

`parse_source(pretty_print(ast))` is structurally equal to `ast` (spans
excluded); golden snapshots of transformed code use the IR printer instead.
"""

from __future__ import annotations

from . import ast as A

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3,
         ">=": 3, "+": 4, "-": 4, "*": 5, "/": 5, "%": 5}
_UNARY_PREC = 6


def pretty_print(ast: A.Ast) -> str:
    out: list[str] = []
    for m in ast.modules:
        _module(out, m)
    return "\n".join(out) + "\n"


def _module(out, m: A.ModuleDecl):
    out.append(f"module {m.name} {{")
    for c in m.consts:
        out.append(f"  const {c.name}: {ptype(c.ty)} = {pexp(c.value)};")
    for s in m.structs:
        _struct(out, s)
    for f in m.funs:
        _fun(out, f)
    for sb in m.spec_blocks:
        _spec_block(out, sb)
    for sf in m.spec_funs:
        params = ", ".join(f"{n}: {ptype(t)}" for n, t in sf.params)
        tp = _tparams(sf.type_params)
        out.append(f"  spec fun {sf.name}{tp}({params}): {ptype(sf.ret)} {{")
        out.append(f"    {pexp(sf.body)}")
        out.append("  }")
    for inv in m.invariants:
        kw = "invariant update" if inv.is_update else "invariant"
        tp = _tparams(inv.type_params)
        tag = f" [{inv.tag}]" if inv.tag else ""
        out.append(f"  {kw}{tp}{tag} {pexp(inv.body)};")
    out.append("}")


def _tparams(tps: list[str]) -> str:
    return f"<{', '.join(tps)}>" if tps else ""


def _struct(out, s: A.StructDecl):
    has = f" has {', '.join(s.abilities)}" if s.abilities else ""
    out.append(f"  struct {s.name}{_tparams(s.type_params)}{has} {{")
    for f in s.fields:
        out.append(f"    {f.name}: {ptype(f.ty)},")
    out.append("  }")


def _fun(out, f: A.FunDecl):
    vis = {"private": "", "public": "public ", "script": "public(script) "}
    params = ", ".join(f"{n}: {ptype(t)}" for n, t in f.params)
    ret = ""
    if len(f.rets) == 1:
        ret = f": {ptype(f.rets[0])}"
    elif f.rets:
        ret = f": ({', '.join(ptype(t) for t in f.rets)})"
    acq = f" acquires {', '.join(f.acquires)}" if f.acquires else ""
    out.append(f"  {vis[f.visibility]}fun {f.name}{_tparams(f.type_params)}"
               f"({params}){ret}{acq} {{")
    _stmts(out, f.body, "    ")
    out.append("  }")


def _spec_block(out, sb: A.SpecBlock):
    out.append(f"  spec {sb.target} {{")
    for mem in sb.members:
        out.append("    " + _spec_member(mem))
    out.append("  }")


def _spec_member(mem: A.SpecMember) -> str:
    if isinstance(mem, A.Requires):
        return f"requires {pexp(mem.e)};"
    if isinstance(mem, A.Ensures):
        return f"ensures {pexp(mem.e)};"
    if isinstance(mem, A.AbortsIf):
        return f"aborts_if {pexp(mem.e)};"
    if isinstance(mem, A.ModifiesSpec):
        return f"modifies global<{ptype(mem.struct)}>({pexp(mem.addr)});"
    if isinstance(mem, A.EmitsSpec):
        s = f"emits {pexp(mem.msg)} to {pexp(mem.handle)}"
        if mem.cond is not None:
            s += f" if {pexp(mem.cond)}"
        return s + ";"
    if isinstance(mem, A.SpecLet):
        return f"let {mem.name} = {pexp(mem.e)};"
    if isinstance(mem, A.PragmaSpec):
        return f"pragma {mem.name};"
    if isinstance(mem, A.DataInvariant):
        return f"invariant {pexp(mem.e)};"
    raise AssertionError(mem)


def _stmts(out, stmts: list[A.Stmt], ind: str):
    for s in stmts:
        _stmt(out, s, ind)


def _stmt(out, s: A.Stmt, ind: str):
    if isinstance(s, A.LetStmt):
        ty = f": {ptype(s.ty)}" if s.ty else ""
        init = f" = {pexp(s.init)}" if s.init is not None else ""
        out.append(f"{ind}let {s.name}{ty}{init};")
    elif isinstance(s, A.AssignStmt):
        out.append(f"{ind}{pexp(s.lhs)} = {pexp(s.rhs)};")
    elif isinstance(s, A.AssertStmt):
        out.append(f"{ind}assert({pexp(s.cond)}, {pexp(s.code)});")
    elif isinstance(s, A.AbortStmt):
        out.append(f"{ind}abort {pexp(s.code)};")
    elif isinstance(s, A.IfStmt):
        out.append(f"{ind}if ({pexp(s.cond)}) {{")
        _stmts(out, s.then, ind + "  ")
        if s.els:
            out.append(f"{ind}}} else {{")
            _stmts(out, s.els, ind + "  ")
        out.append(f"{ind}}}")
    elif isinstance(s, A.ReturnStmt):
        if not s.values:
            out.append(f"{ind}return;")
        elif len(s.values) == 1:
            out.append(f"{ind}return {pexp(s.values[0])};")
        else:
            vals = ", ".join(pexp(v) for v in s.values)
            out.append(f"{ind}return ({vals});")
    elif isinstance(s, A.ExprStmt):
        out.append(f"{ind}{pexp(s.e)};")
    else:
        raise AssertionError(s)


def ptype(t: A.TypeNode) -> str:
    if isinstance(t, A.RefType):
        return ("&mut " if t.mut else "&") + ptype(t.inner)
    assert isinstance(t, A.NamedType)
    if t.targs:
        return f"{t.name}<{', '.join(ptype(a) for a in t.targs)}>"
    return t.name


def pexp(e: A.Exp, prec: int = 0) -> str:
    s, p = _pexp(e)
    if p < prec:
        return f"({s})"
    return s


def _pexp(e: A.Exp) -> tuple[str, int]:
    top = 100
    if isinstance(e, A.NumLit):
        return str(e.value) + (e.suffix or ""), top
    if isinstance(e, A.BoolLit):
        return ("true" if e.value else "false"), top
    if isinstance(e, A.AddressLit):
        return f"0x{e.value:x}", top
    if isinstance(e, A.NameExp):
        return e.name, top
    if isinstance(e, A.CallExp):
        ta = f"<{', '.join(ptype(t) for t in e.targs)}>" if e.targs else ""
        return f"{e.name}{ta}({', '.join(pexp(a) for a in e.args)})", top
    if isinstance(e, A.FieldExp):
        return f"{pexp(e.base, _UNARY_PREC + 1)}.{e.field}", top
    if isinstance(e, A.PackExp):
        ta = f"<{', '.join(ptype(t) for t in e.targs)}>" if e.targs else ""
        fs = ", ".join(f"{n}: {pexp(v)}" for n, v in e.fields)
        return f"{e.name}{ta}{{{fs}}}", top
    if isinstance(e, A.BorrowExp):
        op = "&mut " if e.mut else "&"
        return f"{op}{pexp(e.e, _UNARY_PREC)}", _UNARY_PREC
    if isinstance(e, A.DerefExp):
        return f"*{pexp(e.e, _UNARY_PREC)}", _UNARY_PREC
    if isinstance(e, A.UnExp):
        return f"!{pexp(e.e, _UNARY_PREC)}", _UNARY_PREC
    if isinstance(e, A.BinExp):
        p = _PREC[e.op]
        left = pexp(e.left, p)
        right = pexp(e.right, p + 1)
        return f"{left} {e.op} {right}", p
    if isinstance(e, A.IfExp):
        return (f"if ({pexp(e.cond)}) {pexp(e.then, 1)} "
                f"else {pexp(e.els, 1)}"), 0
    if isinstance(e, A.TupleExp):
        return f"({', '.join(pexp(x) for x in e.items)})", top
    if isinstance(e, A.OldExp):
        return f"old({pexp(e.e)})", top
    if isinstance(e, A.QuantExp):
        w = f" where {pexp(e.where)}" if e.where is not None else ""
        return f"{e.kind} {e.var}: {ptype(e.vtype)}{w}: {pexp(e.body, 1)}", 0
    raise AssertionError(e)

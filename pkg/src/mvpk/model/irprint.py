"""Deterministic textual rendering of the statement IR.

Used by `--dump-stage` and by the golden transformation tests; the format
follows the paper-style notation (Mvp::get/set, s[f = v], ...).
"""

from __future__ import annotations

from . import exp as E
from . import ir as I
from .types import MutT


def _site_name(fn: I.FunctionIR, site: int) -> str:
    desc = fn.origins.get(site)
    if desc is None:
        return f"SITE_{site}"
    base = fn.name.split("::")[-1].upper()
    if desc[0] == "local":
        return f"{base}_{fn.temp_name(desc[1])}"
    if desc[0] == "field":
        parent_ty = fn.locals[desc[1]]
        inner = parent_ty.inner if isinstance(parent_ty, MutT) else parent_ty
        sname = str(inner).split("::")[-1].split("<")[0]
        return f"{sname}_{desc[2]}"
    return f"{base}_G{site}"


def print_function(fn: I.FunctionIR) -> str:
    lines: list[str] = []
    tps = f"<{', '.join(fn.type_params)}>" if fn.type_params else ""
    params = ", ".join(f"{fn.temp_name(t)}: {fn.locals[t]}"
                       for t in range(fn.num_params))
    rets = ""
    if fn.rets:
        rs = ", ".join(str(t) for t in fn.rets)
        rets = f": ({rs})" if len(fn.rets) > 1 else f": {rs}"
    acq = ""
    if fn.acquires:
        acq = " acquires " + ", ".join(
            s.split("::")[-1] for s in sorted(fn.acquires))
    vis = {"private": "", "public": "public ",
           "script": "public(script) "}.get(fn.visibility, "")
    lines.append(f"{vis}fun {fn.name}{tps}({params}){rets}{acq} {{")
    _print_block(fn, fn.body, lines, 1)
    if fn.onreturn:
        lines.append("  onreturn {")
        _print_block(fn, fn.onreturn, lines, 2)
        lines.append("  }")
    if fn.onabort:
        lines.append("  onabort {")
        _print_block(fn, fn.onabort, lines, 2)
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines)


def _print_block(fn, stmts, lines, depth):
    for s in stmts:
        _print_stmt(fn, s, lines, depth)


def _print_stmt(fn: I.FunctionIR, s: I.Stmt, lines: list[str], depth: int):
    pad = "  " * depth
    t = lambda x: fn.temp_name(x)  # noqa: E731
    if isinstance(s, I.Assign):
        lines.append(f"{pad}{t(s.dst)} := {_rv(fn, s.rv)}")
    elif isinstance(s, I.WriteRef):
        lines.append(f"{pad}*{t(s.ref)} := {t(s.val)}")
    elif isinstance(s, I.WriteField):
        lines.append(f"{pad}{t(s.ref)}.{s.field} := {t(s.val)}")
    elif isinstance(s, I.SetGlobal):
        lines.append(f"{pad}global<{s.label}>({t(s.addr)}) := {t(s.val)}")
    elif isinstance(s, I.WriteBackGlobal):
        lines.append(f"{pad}writeback global<{s.label}>({t(s.m)})")
    elif isinstance(s, I.MoveTo):
        lines.append(f"{pad}move_to<{s.label}>({t(s.signer)}, {t(s.val)})")
    elif isinstance(s, I.EmitEvent):
        lines.append(f"{pad}emit {t(s.msg)} to {t(s.handle)}")
    elif isinstance(s, I.CondEmit):
        cond = "" if s.cond is None else f" if {t(s.cond)}"
        lines.append(f"{pad}emit {t(s.msg)} to {t(s.handle)}{cond}")
    elif isinstance(s, I.Call):
        targs = f"<{', '.join(map(str, s.targs))}>" if s.targs else ""
        dsts = ", ".join(t(d) for d in s.dsts)
        args = ", ".join(t(a) for a in s.args)
        head = f"{dsts} := " if s.dsts else ""
        lines.append(f"{pad}{head}call {s.fname}{targs}({args})")
    elif isinstance(s, I.Abort):
        lines.append(f"{pad}abort {t(s.code)}")
    elif isinstance(s, I.Return):
        vals = ", ".join(t(v) for v in s.vals)
        lines.append(f"{pad}return {vals}".rstrip())
    elif isinstance(s, I.IfStmt):
        lines.append(f"{pad}if ({t(s.cond)}) {{")
        _print_block(fn, s.then, lines, depth + 1)
        if s.els:
            lines.append(f"{pad}}} else {{")
            _print_block(fn, s.els, lines, depth + 1)
        lines.append(f"{pad}}}")
    elif isinstance(s, I.SpecAssume):
        lines.append(f"{pad}spec assume {print_exp(s.e, fn)}")
    elif isinstance(s, I.SpecAssert):
        note = f" // {s.note}" if s.note else ""
        lines.append(f"{pad}spec assert [{s.tag}] {print_exp(s.e, fn)}{note}")
    elif isinstance(s, I.SnapshotState):
        lines.append(f"{pad}snapshot {s.label}")
    elif isinstance(s, I.Havoc):
        lines.append(f"{pad}havoc global<{s.label}>({t(s.addr)})")
    elif isinstance(s, I.EmitsChecks):
        lines.append(f"{pad}check emits {{")
        for c in s.clauses:
            cond = "" if c.cond is None else f" if {print_exp(c.cond, fn)}"
            lines.append(f"{pad}  emits {print_exp(c.msg, fn)} to "
                         f"{print_exp(c.handle, fn)}{cond}")
        lines.append(f"{pad}}}")
    elif isinstance(s, I.InlineMarker):
        args = ", ".join(t(a) for a in s.args)
        lines.append(f"{pad}// inlined {s.fname}({args})")
    elif isinstance(s, I.InlineEnd):
        lines.append(f"{pad}// end of {s.fname}")
    elif isinstance(s, I.OpaqueCallBegin):
        lines.append(f"{pad}// opaque call to {s.fname}")
    elif isinstance(s, I.OpaqueCallMarker):
        lines.append(f"{pad}// end of opaque {s.fname}")
    else:  # pragma: no cover
        lines.append(f"{pad}?{type(s).__name__}")


def _rv(fn: I.FunctionIR, rv: I.Rvalue) -> str:
    t = lambda x: fn.temp_name(x)  # noqa: E731
    if isinstance(rv, I.Const):
        v = rv.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if str(rv.ty) == "address":
            return f"0x{v:x}"
        if str(rv.ty) in ("u8", "u64"):
            return f"{v}{rv.ty}"
        return str(v)
    if isinstance(rv, I.Use):
        return t(rv.src)
    if isinstance(rv, I.BinOp):
        return f"{t(rv.a)} {rv.op} {t(rv.b)}"
    if isinstance(rv, I.UnOp):
        return f"{rv.op}{t(rv.a)}"
    if isinstance(rv, I.Pack):
        targs = f"<{', '.join(map(str, rv.targs))}>" if rv.targs else ""
        return f"pack {rv.struct}{targs}({', '.join(t(a) for a in rv.args)})"
    if isinstance(rv, I.FieldGet):
        return f"{t(rv.base)}.{rv.field}"
    if isinstance(rv, I.FieldUpdate):
        return f"{t(rv.base)}[{rv.field} = {t(rv.val)}]"
    if isinstance(rv, I.BorrowLocal):
        return f"&{'mut ' if rv.mut else ''}{t(rv.local)}"
    if isinstance(rv, I.BorrowField):
        return f"&{'mut ' if rv.mut else ''}{t(rv.ref)}.{rv.field}"
    if isinstance(rv, I.BorrowGlobal):
        b = "borrow_global_mut" if rv.mut else "borrow_global"
        return f"{b}<{rv.label}>({t(rv.addr)})"
    if isinstance(rv, I.ReadRef):
        return f"*{t(rv.ref)}"
    if isinstance(rv, I.ReadGlobal):
        return f"global<{rv.label}>({t(rv.addr)})"
    if isinstance(rv, I.Exists):
        return f"exists<{rv.label}>({t(rv.addr)})"
    if isinstance(rv, I.MoveFrom):
        return f"move_from<{rv.label}>({t(rv.addr)})"
    if isinstance(rv, I.AddressOf):
        return f"Signer::address_of({t(rv.arg)})"
    if isinstance(rv, I.HavocVal):
        return f"havoc<{rv.ty}>()"
    if isinstance(rv, I.Widen):
        return f"widen({t(rv.src)})"
    if isinstance(rv, I.Narrow):
        return f"narrow<{rv.ty}>({t(rv.src)})"
    if isinstance(rv, I.MkLocal):
        return f"Mvp::mklocal({t(rv.val)}, {_site_name(fn, rv.site)})"
    if isinstance(rv, I.MkGlobal):
        return (f"Mvp::mkglobal({t(rv.val)}, {rv.label}, {t(rv.addr)})")
    if isinstance(rv, I.MutField):
        return f"Mvp::field({t(rv.parent)}, {_site_name(fn, rv.site)})"
    if isinstance(rv, I.MutGet):
        return f"Mvp::get({t(rv.m)})"
    if isinstance(rv, I.MutSet):
        return f"Mvp::set({t(rv.m)}, {t(rv.val)})"
    if isinstance(rv, I.IsOrigin):
        desc = fn.origins.get(rv.site, ("?",))
        pred = {"local": "is_local", "field": "is_field",
                "global": "is_global"}.get(desc[0], "is_origin")
        return f"Mvp::{pred}({t(rv.m)}, {_site_name(fn, rv.site)})"
    return f"?{type(rv).__name__}"  # pragma: no cover


# ---------------------------------------------------------------- spec exps

def print_exp(e: E.SpecExp, fn: I.FunctionIR | None = None) -> str:
    p = lambda x: print_exp(x, fn)  # noqa: E731
    if isinstance(e, E.SConst):
        v = e.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if str(e.ty) == "address":
            return f"0x{v:x}"
        return str(v)
    if isinstance(e, E.SVar):
        if e.kind == "result":
            return "result"
        if e.kind == "temp":
            return fn.temp_name(e.name) if fn else f"$t{e.name}"
        return str(e.name)
    if isinstance(e, E.SBin):
        return f"({p(e.left)} {e.op} {p(e.right)})"
    if isinstance(e, E.SUn):
        return f"{e.op}{p(e.e)}"
    if isinstance(e, E.SField):
        return f"{p(e.base)}.{e.field_name}"
    if isinstance(e, E.SGlobal):
        return f"global<{e.label}>({p(e.addr)})"
    if isinstance(e, E.SExistsMem):
        return f"exists<{e.label}>({p(e.addr)})"
    if isinstance(e, E.SOld):
        tag = f"[{e.snapshot}]" if e.snapshot else ""
        return f"old{tag}({p(e.e)})"
    if isinstance(e, E.SCall):
        targs = f"<{', '.join(map(str, e.targs))}>" if e.targs else ""
        return f"{e.fun}{targs}({', '.join(map(p, e.args))})"
    if isinstance(e, E.SQuant):
        w = f" where {p(e.where)}" if e.where is not None else ""
        return (f"({e.kind} {e.var}: {e.sort}{w}: {p(e.body)})")
    if isinstance(e, E.SPack):
        targs = f"<{', '.join(map(str, e.targs))}>" if e.targs else ""
        fs = ", ".join(f"{n}: {p(v)}" for n, v in e.fields)
        return f"{e.struct}{targs}{{{fs}}}"
    if isinstance(e, E.SCond):
        return (f"(if {p(e.cond)} then {p(e.then)} "
                f"else {p(e.els)})")
    if isinstance(e, E.SAddressOf):
        return f"Signer::address_of({p(e.e)})"
    return f"?{type(e).__name__}"  # pragma: no cover


def print_program(functions: dict[str, I.FunctionIR]) -> str:
    return "\n\n".join(print_function(functions[k])
                       for k in sorted(functions))

"""Replaying solver counterexamples in the interpreter.

A ``violated`` verdict comes with a model: concrete parameter values and
initial-memory cells read off the replay probes. Running the function on
those inputs with the definitional interpreter and re-evaluating the
failed condition concretely confirms the violation is real. A model that
fails to reproduce (possible, since quantifier instantiation in the
solver is incomplete for ``sat``) is reported as unconfirmed so the
caller can downgrade the verdict.

Replay runs the reference-eliminated stage of the program — the last
stage with unmodified execution semantics — using the instantiation
recorded on the monomorphized unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import GlobalModel, StructInfo
from ..model import exp as E
from ..model import ir as I
from ..model.types import (
    ADDRESS, BOOL, NUM, SIGNER, U8, U64, EventHandleT, MemoryLabel,
    PrimType, StructT, Type)
from ..interp.events import EventStore
from ..interp.interp import ExecResult, Interp, _Abort, interpret
from ..interp.values import HandleVal, StructVal
from .encode import Query
from .solver import Verdict


class Unevaluable(Exception):
    """A spec expression could not be evaluated on the concrete state."""


@dataclass
class ReplayResult:
    status: str                      # "confirmed" | "unconfirmed" | "skipped"
    detail: str = ""
    result: ExecResult | None = None


# ---------------------------------------------------------------- inputs

_INT_PRIMS = (U8, U64, NUM, ADDRESS, SIGNER)


def _model_value(model: dict, const: str, ty: Type):
    """Concrete value of a model constant; unconstrained cells default."""
    v = model.get(const.strip("|"))
    if ty == BOOL:
        return bool(v) if v is not None else False
    return int(v) if v is not None else 0


def _struct_value(model: dict, struct: StructInfo, targs: tuple,
                  fields: dict, structs: dict) -> StructVal:
    """Assemble a StructVal from the probe-field constant map."""
    sub = {("F", i): t for i, t in enumerate(targs)}
    vals = []
    for fname, fty in struct.fields:
        fty = fty.subst(sub)
        cell = fields.get(fname)
        if isinstance(fty, StructT):
            inner = _struct_value(model, structs[fty.name], fty.targs,
                                  cell or {}, structs)
            vals.append((fname, inner))
        elif isinstance(fty, EventHandleT):
            vals.append((fname, HandleVal(
                _model_value(model, cell or "", fty))))
        else:
            vals.append((fname, _model_value(model, cell or "", fty)))
    return StructVal(struct.name, targs, tuple(vals))


def build_inputs(fn: I.FunctionIR, query: Query, model: dict,
                 program: GlobalModel):
    """(args, memory, param bindings) reconstructed from the probes."""
    args = []
    binds: dict = {}
    for i in range(fn.num_params):
        ty = fn.locals[i]
        const = query.probes["params"].get(i)
        if isinstance(ty, (PrimType, )) or ty in _INT_PRIMS:
            v = _model_value(model, const or "", ty)
        elif isinstance(ty, EventHandleT):
            v = HandleVal(_model_value(model, const or "", ty))
        else:
            raise Unevaluable(f"parameter of type {ty} not replayable")
        args.append(v)
        binds[("param", fn.temp_name(i))] = v

    memory: dict = {}
    shadow: dict = {}
    for cell in query.probes["memory"]:
        label: MemoryLabel = cell["mlabel"]
        aid = cell["addr"]
        if aid.startswith("t") and aid[1:].isdigit():
            addr = args[int(aid[1:])]
        else:
            addr = int(aid)
        info = program.structs[label.struct]
        val = _struct_value(
            model, info, label.targs, cell["fields"], program.structs)
        # the model constrains the cell's contents even where nothing
        # exists (the memory array is total); spec clauses may read it
        shadow[(label, addr)] = val
        if _model_value(model, cell["exists"], BOOL):
            memory[(label, addr)] = val
    return args, memory, shadow, binds


# ---------------------------------------------------------------- spec eval

class SpecEval:
    """Concrete evaluation of spec expressions over interpreter state."""

    def __init__(self, program: GlobalModel, pre: dict, post: dict,
                 bind: dict, results: tuple | None = None,
                 shadow: dict | None = None):
        self.program = program
        self.pre = pre
        self.post = post
        self.shadow = shadow or {}
        self.bind = dict(bind)
        self.results = results or ()
        pool = {a for (_, a) in pre} | {a for (_, a) in post} | {0}
        pool |= {v for k, v in self.bind.items()
                 if k[0] == "param" and isinstance(v, int)}
        self.addr_pool = sorted(pool)

    def ev(self, e: E.SpecExp, old: bool = False):
        if isinstance(e, E.SConst):
            return e.value
        if isinstance(e, E.SVar):
            key = {"param": ("param", e.name), "quant": ("quant", e.name),
                   "self_field": ("self", e.name)}.get(e.kind)
            if key is not None and key in self.bind:
                return self.bind[key]
            if e.kind == "result":
                return self.results[e.name]
            raise Unevaluable(f"unbound spec variable {e.kind}:{e.name}")
        if isinstance(e, E.SBin):
            return self._bin(e, old)
        if isinstance(e, E.SUn):
            if e.op == "!":
                return not self.ev(e.e, old)
            raise Unevaluable(f"operator {e.op}")
        if isinstance(e, E.SField):
            base = self.ev(e.base, old)
            if not isinstance(base, StructVal):
                raise Unevaluable("field access on non-struct")
            return base.get(e.field_name)
        if isinstance(e, E.SGlobal):
            mem = self.pre if old else self.post
            key = (e.label, self.ev(e.addr, old))
            if key in mem:
                return mem[key]
            if key in self.shadow:
                return self.shadow[key]
            raise Unevaluable(f"global {e.label} absent at {key[1]}")
        if isinstance(e, E.SExistsMem):
            mem = self.pre if old else self.post
            return (e.label, self.ev(e.addr, old)) in mem
        if isinstance(e, E.SOld):
            return self.ev(e.e, old=True)
        if isinstance(e, E.SCall):
            return self._call(e, old)
        if isinstance(e, E.SQuant):
            return self._quant(e, old)
        if isinstance(e, E.SPack):
            return StructVal(e.struct, e.targs, tuple(
                (n, self.ev(x, old)) for n, x in e.fields))
        if isinstance(e, E.SCond):
            return (self.ev(e.then, old) if self.ev(e.cond, old)
                    else self.ev(e.els, old))
        if isinstance(e, E.SAddressOf):
            return self.ev(e.e, old)
        raise Unevaluable(type(e).__name__)

    def _bin(self, e: E.SBin, old: bool):
        op = e.op
        # short-circuit so guards protect partial operands
        if op == "&&":
            return self.ev(e.left, old) and self.ev(e.right, old)
        if op == "||":
            return self.ev(e.left, old) or self.ev(e.right, old)
        if op == "==>":
            return (not self.ev(e.left, old)) or self.ev(e.right, old)
        a = self.ev(e.left, old)
        b = self.ev(e.right, old)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op in ("/", "%"):
            if not isinstance(b, int) or b <= 0:
                raise Unevaluable("division by non-positive divisor")
            return a // b if op == "/" else a % b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        raise Unevaluable(f"operator {op}")

    def _call(self, e: E.SCall, old: bool):
        sf = self.program.spec_funs[e.fun]
        sub = {("F", i): t for i, t in enumerate(e.targs)}
        body = E.subst_types(sf.body, sub)
        argvals = [self.ev(a, old) for a in e.args]
        saved = self.bind
        self.bind = dict(saved)
        try:
            for (pname, _), v in zip(sf.params, argvals):
                self.bind[("param", pname)] = v
            return self.ev(body, old)
        finally:
            self.bind = saved

    def _quant(self, e: E.SQuant, old: bool):
        if e.sort == ADDRESS:
            domain = self.addr_pool
        elif e.sort == BOOL:
            domain = [False, True]
        elif e.sort == U8:
            domain = range(256)
        else:
            raise Unevaluable(f"quantifier over {e.sort}")
        key = ("quant", e.var)
        saved = self.bind.get(key, _MISSING)
        try:
            results = []
            for v in domain:
                self.bind[key] = v
                if e.where is not None and not self.ev(e.where, old):
                    continue
                results.append(bool(self.ev(e.body, old)))
            return all(results) if e.kind == "forall" else any(results)
        finally:
            if saved is _MISSING:
                self.bind.pop(key, None)
            else:
                self.bind[key] = saved


_MISSING = object()


# ---------------------------------------------------------------- replay

def validate_verdicts(verdicts: list[Verdict], mono: GlobalModel,
                      refs: GlobalModel) -> list[Verdict]:
    """Downgrade violations whose counterexample does not reproduce.

    Quantifier handling in the solver is incomplete for ``sat``, so a
    reported model can be spurious; a violation that fails to replay
    becomes ``unknown``. Units that cannot be replayed at all (skolem
    instantiations, non-replayable parameter types) keep their verdict.
    """
    out = []
    for v in verdicts:
        if v.status == "violated":
            r = replay(v, mono, refs)
            if r.status == "unconfirmed":
                v = Verdict(v.query, "unknown",
                            detail="counterexample did not reproduce: "
                                   + r.detail)
        out.append(v)
    return out


def replay(verdict: Verdict, mono: GlobalModel,
           refs: GlobalModel) -> ReplayResult:
    """Re-run a violated verdict's model concretely and check the tag."""
    q = verdict.query
    if verdict.status != "violated":
        return ReplayResult("skipped", "verdict is not a violation")
    if q.skolemized:
        return ReplayResult("skipped", "unit has skolemized type parameters")
    fn = mono.functions[q.unit]
    base = fn.base_name or q.unit
    targs = tuple(fn.inst_targs)
    if base not in refs.functions:
        return ReplayResult("skipped", f"no executable source for {base}")
    try:
        args, memory, shadow, binds = build_inputs(fn, q, verdict.model, refs)
    except Unevaluable as exc:
        return ReplayResult("unconfirmed", str(exc))
    try:
        res = interpret(refs, base, targs, list(args), memory=memory)
    except Exception as exc:                       # interpreter bug surfaces
        return ReplayResult("unconfirmed", f"interpreter error: {exc}")
    spec = mono.specs.get(q.unit) or refs.specs.get(base)
    ev = SpecEval(refs, memory, res.memory, binds,
                  results=res.returns or (), shadow=shadow)
    try:
        ok, detail = _check_tag(q, verdict, spec, ev, res, mono)
    except Unevaluable as exc:
        return ReplayResult("unconfirmed", str(exc), res)
    if ok is None:
        return ReplayResult("skipped", detail, res)
    status = "confirmed" if ok else "unconfirmed"
    return ReplayResult(status, detail, res)


def _check_tag(q: Query, verdict: Verdict, spec, ev: SpecEval,
               res: ExecResult, mono: GlobalModel):
    tag = q.tag
    if tag == "aborts_if-abort":
        if not res.aborted:
            return False, "execution did not abort"
        covered = [c for c in (spec.aborts_if if spec else [])
                   if ev.ev(c, old=True)]
        if covered:
            return False, "an aborts_if condition covers the abort"
        return True, f"aborted with code {res.abort_code}, no clause holds"
    if tag == "aborts_if-return":
        if res.aborted:
            return False, "execution aborted"
        holds = [c for c in (spec.aborts_if if spec else [])
                 if ev.ev(c, old=True)]
        if not holds:
            return False, "no aborts_if condition holds"
        return True, "returned although an aborts_if condition holds"
    if tag == "ensures":
        if res.aborted:
            return False, "execution aborted before the post-condition"
        for c in (spec.ensures if spec else []):
            if c.span == q.span and not ev.ev(c):
                return True, "post-condition evaluates to false"
        return False, "post-condition holds on the replayed state"
    if tag == "global-invariant":
        return _check_invariant(q, ev, res, mono)
    if tag == "data-invariant":
        return _check_data_invariant(ev, res, mono)
    if tag == "modifies-permission":
        return _check_modifies(spec, ev, res)
    if tag in ("emits-completeness", "emits-relevance"):
        return _check_emits(tag, spec, ev, res)
    return None, f"tag {tag} is not replayable"


def _find_invariant(note: str, mono: GlobalModel):
    name = note.removesuffix(" base case")
    base = name.split("<")[0]
    targs: tuple = ()
    if "<" in name:
        prims = {"u8": U8, "u64": U64, "bool": BOOL, "address": ADDRESS,
                 "num": NUM}
        inside = name[name.index("<") + 1:name.rindex(">")]
        try:
            targs = tuple(prims[t.strip()] for t in inside.split(","))
        except KeyError:
            return None
    for inv in mono.invariants:
        if inv.tag == base:
            sub = {("I", i): t for i, t in enumerate(targs)}
            return E.subst_types(inv.body, sub)
    return None


def _check_invariant(q: Query, ev: SpecEval, res: ExecResult,
                     mono: GlobalModel):
    body = _find_invariant(q.note, mono)
    if body is None:
        raise Unevaluable(f"invariant {q.note} not found or not ground")
    if res.aborted:
        # an abort rolls memory back; the intermediate state at the
        # failing assert is not observable from the transaction result
        return False, "execution aborted; intermediate state unobservable"
    if not ev.ev(body):
        return True, "invariant evaluates to false on the final state"
    return False, "invariant holds on the replayed final state"


def _check_data_invariant(ev: SpecEval, res: ExecResult, mono: GlobalModel):
    if res.aborted:
        return False, "execution aborted; packed value unobservable"
    values = list(res.returns or ()) + list(res.memory.values())
    seen = []
    while values:
        v = values.pop()
        if not isinstance(v, StructVal):
            continue
        values.extend(x for _, x in v.fields)
        info = mono.structs.get(v.struct)
        if info is None:
            continue
        sub = {("F", i): t for i, t in enumerate(v.targs)}
        for inv in info.data_invariants:
            bind = dict(ev.bind)
            bind.update({("self", n): x for n, x in v.fields})
            inner = SpecEval(ev.program, ev.pre, ev.post, bind)
            if not inner.ev(E.subst_types(inv, sub)):
                seen.append(v.struct)
    if seen:
        return True, f"data invariant fails on a value of {seen[0]}"
    return False, "all reachable values satisfy their data invariants"


def _check_modifies(spec, ev: SpecEval, res: ExecResult):
    if res.aborted:
        return False, "execution aborted; no writes are observable"
    changed = [k for k in set(ev.pre) | set(res.memory)
               if ev.pre.get(k) != res.memory.get(k)]
    allowed = set()
    for label, addr in (spec.modifies if spec else []):
        allowed.add((label, ev.ev(addr, old=True)))
    uncovered = [k for k in changed if k not in allowed]
    if uncovered:
        label, addr = uncovered[0]
        return True, f"modified {label} at {addr} without permission"
    return False, "all modified locations are covered by modifies clauses"


def _check_emits(tag: str, spec, ev: SpecEval, res: ExecResult):
    if res.aborted:
        return False, "execution aborted; no events are observable"
    from ..interp.events import EventStore
    expected = EventStore()
    for c in (spec.emits if spec else []):
        if c.cond is not None and not ev.ev(c.cond):
            continue
        handle = ev.ev(c.handle)
        guid = handle.guid if isinstance(handle, HandleVal) else handle
        expected.extend(guid, ev.ev(c.msg))
    if tag == "emits-completeness":
        if not expected.includes(res.events):
            return True, "an emitted event is not covered by emits clauses"
        return False, "all emitted events are covered"
    if not res.events.includes(expected):
        return True, "a declared emits event was not emitted"
    return False, "all declared events were emitted"

"""Definitional interpreter for the statement IR.

Runs both the freshly built model and the outputs of the transformation
stages (which introduce Mut cells and explicit global read/write-backs).
The interpreter is the ground truth for semantic preservation: every
transformation must leave its observable ExecResult unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..errors import InterpBug
from ..model import ir as I
from ..model import abort_codes
from ..model.types import INT_BOUNDS, NUM, BOOL, U8, U64, Type, MemoryLabel
from .events import EventStore
from .values import StructVal, HandleVal, MutVal, RefVal, freeze

MAX_CALL_DEPTH = 200


@dataclass
class ExecResult:
    returns: Optional[tuple]  # None iff aborted
    abort_code: Optional[int]
    memory: dict  # final memory, (MemoryLabel, addr) -> StructVal
    events: EventStore  # delta emitted by this execution

    @property
    def aborted(self) -> bool:
        return self.abort_code is not None

    def key(self, label_fn=None):
        """Canonical comparable form; label_fn normalizes memory labels."""
        lf = label_fn or (lambda l: l)
        mem = sorted((str(lf(l)), a, freeze(v))
                     for (l, a), v in self.memory.items())
        rets = (None if self.returns is None
                else tuple(freeze(v) for v in self.returns))
        ev = sorted(self.events.items())
        return (rets, self.abort_code, tuple(mem), tuple(ev))


class _Abort(Exception):
    def __init__(self, code: int):
        self.code = code


class _Return(Exception):
    def __init__(self, vals: tuple):
        self.vals = vals


@dataclass
class Frame:
    fn: I.FunctionIR
    regs: list
    tsub: dict = field(default_factory=dict)

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other


class Interp:
    """One Interp instance executes a single transaction."""

    def __init__(self, program, memory: dict, events: EventStore):
        self.program = program  # has .functions and .structs
        self.memory = memory
        self.events = events
        self.depth = 0

    # ------------------------------------------------------------ driver

    def call_function(self, fname: str, targs: tuple[Type, ...], args: list):
        self.depth += 1
        if self.depth > MAX_CALL_DEPTH:
            raise InterpBug(f"call depth exceeded in {fname}")
        try:
            fn = self.program.functions[fname]
            frame = Frame(fn, [None] * len(fn.locals),
                          {("F", i): t for i, t in enumerate(targs)})
            for i, a in enumerate(args):
                frame.regs[i] = a
            try:
                self.exec_block(frame, fn.body)
            except _Return as r:
                return r.vals
            raise InterpBug(f"function {fname} fell off the end")
        finally:
            self.depth -= 1

    # ------------------------------------------------------------ statements

    def exec_block(self, frame: Frame, stmts: list[I.Stmt]):
        for s in stmts:
            self.exec_stmt(frame, s)

    def exec_stmt(self, frame: Frame, s: I.Stmt):
        if isinstance(s, I.Assign):
            frame.regs[s.dst] = self.eval_rv(frame, s.rv,
                                             frame.fn.locals[s.dst])
        elif isinstance(s, I.IfStmt):
            cond = frame.regs[s.cond]
            self.exec_block(frame, s.then if cond else s.els)
        elif isinstance(s, I.WriteRef):
            self.write_ref(frame.regs[s.ref], frame.regs[s.val])
        elif isinstance(s, I.WriteField):
            r = frame.regs[s.ref]
            if not isinstance(r, RefVal):
                raise InterpBug("write through non-reference")
            self.write_ref(r.extend(s.field), frame.regs[s.val])
        elif isinstance(s, I.SetGlobal):
            label = self.ground(frame, s.label)
            self.memory[(label, frame.regs[s.addr])] = frame.regs[s.val]
        elif isinstance(s, I.WriteBackGlobal):
            m = frame.regs[s.m]
            if not isinstance(m, MutVal) or m.addr is None:
                raise InterpBug("global write-back of a non-global Mut")
            label = self.ground(frame, s.label)
            self.memory[(label, m.addr)] = m.value
        elif isinstance(s, I.MoveTo):
            label = self.ground(frame, s.label)
            addr = frame.regs[s.signer]
            if (label, addr) in self.memory:
                raise _Abort(abort_codes.ALREADY_EXISTS)
            self.memory[(label, addr)] = frame.regs[s.val]
        elif isinstance(s, I.EmitEvent):
            h = frame.regs[s.handle]
            if isinstance(h, RefVal):
                h = self.read_ref(h)
            elif isinstance(h, MutVal):
                h = h.value
            if not isinstance(h, HandleVal):
                raise InterpBug("emit through a non-handle")
            self.events.extend(h.guid, freeze(frame.regs[s.msg]))
        elif isinstance(s, I.Call):
            callee_targs = tuple(t.subst(frame.tsub) for t in s.targs)
            args = [frame.regs[a] for a in s.args]
            vals = self.call_function(s.fname, callee_targs, args)
            for d, v in zip(s.dsts, vals):
                frame.regs[d] = v
        elif isinstance(s, I.Abort):
            raise _Abort(frame.regs[s.code])
        elif isinstance(s, I.Return):
            raise _Return(tuple(frame.regs[v] for v in s.vals))
        elif isinstance(s, I.CondEmit):
            if s.cond is None or frame.regs[s.cond]:
                h = frame.regs[s.handle]
                if isinstance(h, RefVal):
                    h = self.read_ref(h)
                elif isinstance(h, MutVal):
                    h = h.value
                self.events.extend(h.guid, freeze(frame.regs[s.msg]))
        elif isinstance(s, (I.InlineMarker, I.InlineEnd, I.OpaqueCallBegin,
                            I.OpaqueCallMarker,
                            I.SnapshotState, I.SpecAssume, I.SpecAssert,
                            I.EmitsChecks)):
            pass  # verification metadata only
        else:
            raise InterpBug(f"cannot interpret {type(s).__name__}")

    # ------------------------------------------------------------ rvalues

    def eval_rv(self, frame: Frame, rv: I.Rvalue, dst_ty: Type):
        regs = frame.regs
        if isinstance(rv, I.Const):
            return rv.value
        if isinstance(rv, I.Use):
            return regs[rv.src]
        if isinstance(rv, I.BinOp):
            return self.binop(rv.op, regs[rv.a], regs[rv.b],
                              dst_ty if rv.op in ("+", "-", "*", "/", "%")
                              else frame.fn.locals[rv.a])
        if isinstance(rv, I.UnOp):
            return not regs[rv.a]
        if isinstance(rv, I.Pack):
            info = self.program.structs[rv.struct]
            targs = tuple(t.subst(frame.tsub) for t in rv.targs)
            return StructVal(rv.struct, targs, tuple(
                (n, regs[a]) for (n, _), a in zip(info.fields, rv.args)))
        if isinstance(rv, I.FieldGet):
            return regs[rv.base].get(rv.field)
        if isinstance(rv, I.FieldUpdate):
            return regs[rv.base].set(rv.field, regs[rv.val])
        if isinstance(rv, I.BorrowLocal):
            return RefVal(("frame", frame, rv.local))
        if isinstance(rv, I.BorrowField):
            r = regs[rv.ref]
            if not isinstance(r, RefVal):
                raise InterpBug("field borrow from non-reference")
            return r.extend(rv.field)
        if isinstance(rv, I.BorrowGlobal):
            label = self.ground(frame, rv.label)
            key = (label, regs[rv.addr])
            if key not in self.memory:
                raise _Abort(abort_codes.MISSING_DATA)
            return RefVal(("global", label, regs[rv.addr]))
        if isinstance(rv, I.ReadRef):
            return self.read_ref(regs[rv.ref])
        if isinstance(rv, I.ReadGlobal):
            label = self.ground(frame, rv.label)
            key = (label, regs[rv.addr])
            if key not in self.memory:
                raise _Abort(abort_codes.MISSING_DATA)
            return self.memory[key]
        if isinstance(rv, I.Exists):
            label = self.ground(frame, rv.label)
            return (label, regs[rv.addr]) in self.memory
        if isinstance(rv, I.MoveFrom):
            label = self.ground(frame, rv.label)
            key = (label, regs[rv.addr])
            if key not in self.memory:
                raise _Abort(abort_codes.MISSING_DATA)
            return self.memory.pop(key)
        if isinstance(rv, I.AddressOf):
            return regs[rv.arg]
        if isinstance(rv, I.Widen):
            return regs[rv.src]
        if isinstance(rv, I.Narrow):
            v = regs[rv.src]
            if not 0 <= v <= INT_BOUNDS[rv.ty]:
                raise InterpBug("narrow out of range (missing guard)")
            return v
        if isinstance(rv, I.MkLocal):
            return MutVal(regs[rv.val], rv.site)
        if isinstance(rv, I.MkGlobal):
            return MutVal(regs[rv.val], rv.site, regs[rv.addr])
        if isinstance(rv, I.MutField):
            p = regs[rv.parent]
            return MutVal(p.value.get(rv.field), rv.site)
        if isinstance(rv, I.MutGet):
            return regs[rv.m].value
        if isinstance(rv, I.MutSet):
            m = regs[rv.m]
            return MutVal(regs[rv.val], m.site, m.addr)
        if isinstance(rv, I.IsOrigin):
            return regs[rv.m].site == rv.site
        raise InterpBug(f"cannot interpret rvalue {type(rv).__name__}")

    def binop(self, op: str, a, b, ty: Type):
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op in ("/", "%") and b == 0:
            raise _Abort(abort_codes.ARITHMETIC)
        r = {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
             "/": lambda: a // b, "%": lambda: a % b}[op]()
        if ty in INT_BOUNDS and not 0 <= r <= INT_BOUNDS[ty]:
            raise _Abort(abort_codes.ARITHMETIC)
        return r

    # ------------------------------------------------------------ helpers

    def ground(self, frame: Frame, label: MemoryLabel) -> MemoryLabel:
        label = label.subst(frame.tsub)
        if not label.is_ground():
            raise InterpBug(f"non-ground memory label {label} at runtime")
        return label

    def read_ref(self, r):
        if not isinstance(r, RefVal):
            raise InterpBug("read through non-reference")
        kind = r.root[0]
        if kind == "boxed":
            v = r.root[1][0]
        elif kind == "frame":
            _, frame, temp = r.root
            v = frame.regs[temp]
        else:
            _, label, addr = r.root
            key = (label, addr)
            if key not in self.memory:
                raise InterpBug("dangling global reference")
            v = self.memory[key]
        for f in r.path:
            v = v.get(f)
        return v

    def write_ref(self, r, val):
        if not isinstance(r, RefVal):
            raise InterpBug("write through non-reference")

        def update(v, path, val):
            if not path:
                return val
            return v.set(path[0], update(v.get(path[0]), path[1:], val))

        kind = r.root[0]
        if kind == "boxed":
            r.root[1][0] = update(r.root[1][0], r.path, val)
        elif kind == "frame":
            _, frame, temp = r.root
            frame.regs[temp] = update(frame.regs[temp], r.path, val)
        else:
            _, label, addr = r.root
            key = (label, addr)
            if key not in self.memory:
                raise InterpBug("dangling global reference")
            self.memory[key] = update(self.memory[key], r.path, val)


def interpret(program, fname: str, targs: tuple[Type, ...], args: list,
              memory: dict | None = None,
              events: EventStore | None = None) -> ExecResult:
    """Run one transaction; aborts leave memory and events untouched."""
    pre_memory = dict(memory or {})
    pre_events = (events or EventStore()).copy()
    work_memory = dict(pre_memory)
    interp = Interp(program, work_memory, pre_events.copy())
    from ..model.types import RefT
    fn = program.functions[fname]
    args = [RefVal(("boxed", [a]))
            if isinstance(fn.locals[i], RefT) and not isinstance(a, RefVal)
            else a
            for i, a in enumerate(args)]
    try:
        vals = interp.call_function(fname, targs, args)
    except _Abort as a:
        return ExecResult(None, a.code, pre_memory, EventStore())
    delta = interp.events.subtract(pre_events)
    return ExecResult(vals, None, interp.memory, delta)

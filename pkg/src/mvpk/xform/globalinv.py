"""Fine-grained global invariant injection.

Inductive invariants are assumed at function entry when the function's
accessed memory overlaps the invariant's footprint, and asserted after
every step that can invalidate them: global write-backs, `move_to`,
`move_from`, expanded opaque calls, and inlined calls to functions that
suspend verification (the whole inlined region counts as one step).
Update invariants additionally get a state snapshot before the step.

Generic functions and generic invariants are related by unifying their
memory labels; each successful unification injects a specialized instance
of the invariant (the instance may still mention the function's own type
parameters, which monomorphization resolves later).

Runs after function-spec injection, which established the markers this
pass keys on.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from ..analysis import compute_clusters, memory_usage
from ..errors import DUMMY_SPAN, InternalError
from ..model import GlobalModel, Invariant
from ..model import exp as E
from ..model import ir as I
from ..model.types import (
    ADDRESS, BOOL, MemoryLabel, SkolemType, unify_labels, resolve_subst)


GENESIS_PREFIX = "$genesis$"


def inject_global_invariants(model: GlobalModel,
                             targets: set[str] | None = None) -> GlobalModel:
    """Return a transformed copy with global invariants woven in.

    `targets` restricts which modules' invariants are verified (their
    base-case units are emitted); all invariants are still available as
    assumptions. Defaults to every module in the model.
    """
    out = copy.deepcopy(model)
    compute_clusters(out, targets)  # legality + suspended_in footprints
    usage = memory_usage(out)
    plan: dict[str, dict] = {}
    for fname in sorted(out.functions):
        injector = _InvInjector(out, out.functions[fname], usage)
        plan[fname] = injector.run()
    targets = targets if targets is not None else set(out.modules)
    for inv in out.invariants:
        if inv.kind == "inductive" and inv.declaring_module in targets:
            fn = _genesis_unit(inv)
            out.functions[fn.name] = fn
            out.call_graph[fn.name] = set()
    out.inv_plan = plan
    return out


def format_plan(model: GlobalModel) -> str:
    """Deterministic rendering of the verification plan for --dump-stage."""
    plan = getattr(model, "inv_plan", {})
    lines: list[str] = []
    for fname in sorted(plan):
        entry = plan[fname]
        lines.append(f"function {fname}:")
        if entry["suspended"]:
            lines.append("  suspends invariant verification")
        for tag in entry["assumed"]:
            lines.append(f"  assume {tag} at entry")
        for line, tag in entry["asserted"]:
            lines.append(f"  assert {tag} after line {line}")
        if not (entry["suspended"] or entry["assumed"]
                or entry["asserted"]):
            lines.append("  (no applicable invariants)")
    return "\n".join(lines)


# ---------------------------------------------------------------- instances

@dataclass
class _Instance:
    """One invariant specialized against a function's memory footprint."""

    inv: Invariant
    body: E.SpecExp
    labels: set[MemoryLabel]
    display: str
    snap_count: int = 0


def unify_invariant(inv: Invariant,
                    fun_labels: set[MemoryLabel]) -> list[_Instance]:
    """Instances of `inv` relevant to a function with the given footprint.

    Pairwise unification of the invariant's memory labels against the
    function's; each successful unification specializes the invariant's
    own type parameters (bindings of the function's parameters are left
    to monomorphization).
    """
    seen: dict = {}
    for il in sorted(inv.accessed, key=MemoryLabel.sort_key):
        for fl in sorted(fun_labels, key=MemoryLabel.sort_key):
            sub = unify_labels(il, fl)
            if sub is None:
                continue
            sub_i = {k: t for k, t in resolve_subst(sub).items()
                     if k[0] == "I"}
            body = E.subst_types(inv.body, sub_i)
            if body in seen:
                continue
            display = inv.tag
            if inv.type_params:
                shown = [str(sub_i.get(("I", i), name))
                         for i, name in enumerate(inv.type_params)]
                display += f"<{', '.join(shown)}>"
            seen[body] = _Instance(
                inv, body, {l.subst(sub_i) for l in inv.accessed}, display)
    return list(seen.values())


def _overlaps(labels: set[MemoryLabel], step: set[MemoryLabel]) -> bool:
    return any(unify_labels(a, b) is not None
               for a in labels for b in step)


# ---------------------------------------------------------------- injector

class _InvInjector:
    def __init__(self, model: GlobalModel, fn: I.FunctionIR, usage):
        self.model = model
        self.fn = fn
        self.usage = usage
        self.asserted: list[tuple[int, str]] = []
        spec = model.specs.get(fn.name)
        self.suspended = bool(spec is not None and spec.suspend)
        labels = usage[fn.name].accessed
        self.instances: list[_Instance] = []
        for inv in model.invariants:
            self.instances.extend(unify_invariant(inv, labels))

    def run(self) -> dict:
        assumed: list[str] = []
        if not self.suspended and self.instances:
            entry = []
            for inst in self.instances:
                if inst.inv.kind != "inductive":
                    continue
                entry.append(I.SpecAssume(inst.body, span=self.fn.span))
                assumed.append(inst.display)
            self.fn.body = entry + self.rewrite(self.fn.body)
        return {"suspended": self.suspended, "assumed": assumed,
                "asserted": self.asserted}

    # ---------------- scanning

    def _suspends(self, fname: str) -> bool:
        spec = self.model.specs.get(fname)
        return bool(spec is not None and spec.suspend)

    def rewrite(self, block: list[I.Stmt]) -> list[I.Stmt]:
        out: list[I.Stmt] = []
        i = 0
        while i < len(block):
            s = block[i]
            if isinstance(s, I.IfStmt):
                s.then = self.rewrite(s.then)
                s.els = self.rewrite(s.els)
                out.append(s)
            elif (isinstance(s, I.InlineMarker)
                  and self._suspends(s.fname)):
                j = _find_inline_end(block, i)
                sub = {("F", k): t for k, t in enumerate(s.targs)}
                labels = {l.subst(sub)
                          for l in self.usage[s.fname].modified}
                self.step(out, block[i:j + 1], labels, s.span)
                i = j
            elif isinstance(s, I.OpaqueCallBegin):
                j = _find_opaque_end(block, i)
                labels = {lab for lab, _ in block[j].modified}
                self.step(out, block[i:j + 1], labels, s.span)
                i = j
            elif isinstance(s, (I.SetGlobal, I.WriteBackGlobal, I.MoveTo)):
                self.step(out, [s], {s.label}, s.span)
            elif isinstance(s, I.Assign) and isinstance(s.rv, I.MoveFrom):
                self.step(out, [s], {s.rv.label}, s.span)
            else:
                out.append(s)
            i += 1
        return out

    def step(self, out: list[I.Stmt], region: list[I.Stmt],
             labels: set[MemoryLabel], span):
        """Emit one invalidating step with its snapshots and asserts."""
        relevant = [inst for inst in self.instances
                    if _overlaps(inst.labels, labels)]
        snaps: dict[int, str] = {}
        for k, inst in enumerate(relevant):
            if inst.inv.kind != "update":
                continue
            inst.snap_count += 1
            label = f"{inst.inv.tag}_BEFORE"
            if inst.snap_count > 1:
                label += f"_{inst.snap_count}"
            snaps[k] = label
            out.append(I.SnapshotState(label, span=span))
        out.extend(region)
        for k, inst in enumerate(relevant):
            body = inst.body
            if inst.inv.kind == "update":
                body = E.bind_old(body, snaps[k])
            out.append(I.SpecAssert(body, "global-invariant",
                                    note=inst.display, span=span))
            self.asserted.append((span.line, inst.display))


def _find_inline_end(block: list[I.Stmt], start: int) -> int:
    fname = block[start].fname
    for j in range(start + 1, len(block)):
        s = block[j]
        if isinstance(s, I.InlineEnd) and s.fname == fname:
            return j
    raise InternalError(f"unterminated inline region for {fname}")


def _find_opaque_end(block: list[I.Stmt], start: int) -> int:
    fname = block[start].fname
    for j in range(start + 1, len(block)):
        s = block[j]
        if isinstance(s, I.OpaqueCallMarker) and s.fname == fname:
            return j
    raise InternalError(f"unterminated opaque region for {fname}")


# ---------------------------------------------------------------- base case

def _genesis_unit(inv: Invariant) -> I.FunctionIR:
    """Standalone unit asserting the invariant over empty global memory."""
    sk = {("I", i): SkolemType(i) for i in range(len(inv.type_params))}
    body = E.subst_types(inv.body, sk)
    labels = sorted({l.subst(sk) for l in inv.accessed},
                    key=MemoryLabel.sort_key)
    stmts: list[I.Stmt] = []
    for label in labels:
        addr = E.SVar("quant", "$a", ty=ADDRESS)
        empty = E.SQuant(
            "forall", "$a", ADDRESS, None,
            E.SUn("!", E.SExistsMem(label, addr, ty=BOOL), ty=BOOL),
            ty=BOOL)
        stmts.append(I.SpecAssume(empty, span=inv.span))
    stmts.append(I.SpecAssert(body, "global-invariant",
                              note=f"{inv.tag} base case", span=inv.span))
    stmts.append(I.Return([], span=inv.span))
    module = inv.declaring_module
    return I.FunctionIR(
        name=f"{module}::{GENESIS_PREFIX}{inv.tag}",
        visibility="private", type_params=[], num_params=0, locals=[],
        local_names={}, rets=[], acquires=set(), body=stmts, span=inv.span)

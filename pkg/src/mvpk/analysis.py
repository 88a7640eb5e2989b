"""Interprocedural analyses feeding the transformations.

* memory usage: accessed/modified memory labels per function (fixpoint over
  the acyclic call graph) and per global invariant;
* borrow graphs: how reference temporaries derive from locals, globals and
  fields, used to drive reference elimination;
* clusters: which functions must be verified against which invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import RecursionError_, SuspensionError
from .model import GlobalModel, Invariant
from .model import ir as I
from .model.exp import memory_labels
from .model.types import MemoryLabel, RefT, unify_labels


# ---------------------------------------------------------------- usage

@dataclass
class MemoryUsage:
    accessed: set[MemoryLabel] = field(default_factory=set)
    modified: set[MemoryLabel] = field(default_factory=set)


def _topo_order(call_graph: dict[str, set[str]]) -> list[str]:
    """Callees before callers; raises on recursion."""
    order: list[str] = []
    state: dict[str, int] = {}  # 1 = visiting, 2 = done

    def visit(f: str, chain: list[str]):
        if state.get(f) == 2:
            return
        if state.get(f) == 1:
            cycle = chain[chain.index(f):] + [f]
            raise RecursionError_(
                "recursive functions are not supported: "
                + " -> ".join(cycle))
        state[f] = 1
        for g in sorted(call_graph.get(f, ())):
            visit(g, chain + [f])
        state[f] = 2
        order.append(f)

    for f in sorted(call_graph):
        visit(f, [])
    return order


def memory_usage(model: GlobalModel) -> dict[str, MemoryUsage]:
    """Accessed/modified labels per function, transitive through callees.

    Labels of generic functions may mention the function's type parameters;
    propagation into callers substitutes the call's type arguments. Also
    fills in the `accessed` footprint of every invariant on the model.
    """
    usage: dict[str, MemoryUsage] = {}
    for fname in _topo_order(model.call_graph):
        fn = model.functions[fname]
        u = MemoryUsage()
        for s in I.all_stmts(fn):
            if isinstance(s, I.Assign):
                rv = s.rv
                if isinstance(rv, (I.BorrowGlobal, I.ReadGlobal, I.Exists)):
                    u.accessed.add(rv.label)
                if isinstance(rv, I.BorrowGlobal) and rv.mut:
                    u.modified.add(rv.label)
                if isinstance(rv, I.MoveFrom):
                    u.accessed.add(rv.label)
                    u.modified.add(rv.label)
                if isinstance(rv, I.MkGlobal):
                    u.accessed.add(rv.label)
                    u.modified.add(rv.label)
            elif isinstance(s, (I.MoveTo, I.SetGlobal, I.WriteBackGlobal,
                                I.Havoc)):
                u.accessed.add(s.label)
                u.modified.add(s.label)
            elif isinstance(s, I.Call):
                cu = usage[s.fname]
                sub = {("F", i): t for i, t in enumerate(s.targs)}
                u.accessed |= {l.subst(sub) for l in cu.accessed}
                u.modified |= {l.subst(sub) for l in cu.modified}
        usage[fname] = u
    for inv in model.invariants:
        inv.accessed = memory_labels(inv.body, model.spec_funs)
    return usage


# ---------------------------------------------------------------- borrows

@dataclass(frozen=True)
class Edge:
    """One way a reference temp may have been derived.

    kind is "local" (root: local id), "global" (root: MemoryLabel plus the
    address temp) or "field" (extends parent temp by a field).
    """

    kind: str
    site: int
    local: int = -1
    label: MemoryLabel | None = None
    addr: int = -1
    parent: int = -1
    fname: str = ""


@dataclass
class BorrowGraph:
    fn: I.FunctionIR
    # per reference temp: the set of immediate derivations (copies flattened)
    preds: dict[int, frozenset[Edge]] = field(default_factory=dict)
    sites: dict[int, Edge] = field(default_factory=dict)
    param_refs: set[int] = field(default_factory=set)

    def alternatives(self, temp: int) -> frozenset[Edge]:
        return self.preds.get(temp, frozenset())

    def is_unique(self, temp: int) -> bool:
        return len(self.alternatives(temp)) <= 1

    def has_dynamic_release(self) -> bool:
        return any(len(a) > 1 for a in self.preds.values())


def borrow_graph(model: GlobalModel, fn: I.FunctionIR) -> BorrowGraph:
    """Dataflow over the structured body: each reference temp maps to the
    set of borrow edges it may carry at runtime. Copies (including the
    branch merges produced by conditional borrows) union their sources."""
    g = BorrowGraph(fn)
    next_site = [0]

    def mk_site(edge_kind, **kw) -> Edge:
        e = Edge(edge_kind, next_site[0], **kw)
        g.sites[e.site] = e
        next_site[0] += 1
        return e

    for t in range(fn.num_params):
        if isinstance(fn.locals[t], RefT):
            g.param_refs.add(t)
            g.preds[t] = frozenset()

    sets: dict[int, set[Edge]] = {}

    def add(dst: int, edges: set[Edge]):
        sets.setdefault(dst, set()).update(edges)

    def scan(stmts):
        for s in stmts:
            if isinstance(s, I.IfStmt):
                scan(s.then)
                scan(s.els)
                continue
            if not isinstance(s, I.Assign):
                continue
            rv = s.rv
            if isinstance(rv, I.BorrowLocal):
                add(s.dst, {mk_site("local", local=rv.local,
                                    fname=fn.temp_name(rv.local))})
            elif isinstance(rv, I.BorrowGlobal):
                add(s.dst, {mk_site("global", label=rv.label,
                                    addr=rv.addr)})
            elif isinstance(rv, I.BorrowField):
                add(s.dst, {mk_site("field", parent=rv.ref,
                                    fname=rv.field)})
            elif isinstance(rv, I.Use) and isinstance(
                    fn.locals[s.dst], RefT):
                src = rv.src
                if src in g.param_refs:
                    add(s.dst, {Edge("param", -1, local=src)})
                else:
                    add(s.dst, set(sets.get(src, set())))

    scan(fn.body)
    for t, es in sets.items():
        if any(e.kind == "param" for e in es) and len(es) > 1:
            from .errors import BorrowError
            raise BorrowError(
                "a reference rooted in a parameter cannot be merged with "
                "other borrows", fn.span)
        g.preds[t] = frozenset(es)
    return g


# ---------------------------------------------------------------- clusters

@dataclass
class Cluster:
    invariant: Invariant
    functions: set[str]


def _touches(modified: set[MemoryLabel], accessed: set[MemoryLabel]) -> bool:
    for m in modified:
        for a in accessed:
            if unify_labels(m, a) is not None:
                return True
    return False


def compute_clusters(model: GlobalModel,
                     targets: set[str] | None = None) -> list[Cluster]:
    """For each invariant declared in a target module, the set of functions
    that must be verified for it: all functions whose modified memory can
    unify with the invariant's footprint, closed under adding the callers
    of any function in which the invariant is suspended."""
    usage = memory_usage(model)
    targets = targets if targets is not None else set(model.modules)

    callers: dict[str, set[str]] = {f: set() for f in model.functions}
    for f, gs in model.call_graph.items():
        for g_ in gs:
            callers.setdefault(g_, set()).add(f)

    for fname, spec in model.specs.items():
        if spec.suspend:
            fn = model.functions[fname]
            if fn.visibility in ("script", "public"):
                raise SuspensionError(
                    f"function {fname} has external callers and cannot "
                    f"suspend invariant verification", spec.span)

    out: list[Cluster] = []
    for inv in model.invariants:
        if inv.declaring_module not in targets:
            continue
        funs = {f for f, u in usage.items()
                if _touches(u.modified, inv.accessed)}
        # suspension: move the obligation to call sites
        changed = True
        while changed:
            changed = False
            for f in sorted(funs):
                spec = model.specs.get(f)
                if spec is not None and spec.suspend:
                    inv.suspended_in.add(f)
                    for c in callers.get(f, ()):
                        if c not in funs:
                            funs.add(c)
                            changed = True
        out.append(Cluster(inv, funs))
    return out

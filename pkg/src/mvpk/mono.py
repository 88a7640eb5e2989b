"""Monomorphization: specialize away generic types.

Generic functions are verified for a computed set of type instantiations:
the skolemized "arbitrary type" instance plus every instantiation under
which two of the function's memory labels can overlap (computed by
pairwise unification of modified against modified+accessed labels, closed
under mutual unification of the resulting vectors). Residual parameters
are replaced by skolem types with no special properties.

Runs after spec and invariant injection, so the labels mentioned by
injected specifications participate in the computation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .analysis import memory_usage
from .model import FunSpec, GlobalModel, StructInfo
from .model import exp as E
from .model import ir as I
from .model.types import (
    MemoryLabel, SkolemType, StructT, Type, TypeParam, resolve_subst,
    unify, unify_labels)


# ---------------------------------------------------------------- vectors

def _params_in(t: Type, order: list):
    """Collect type parameters of `t` in depth-first appearance order."""
    if isinstance(t, TypeParam):
        key = (t.space, t.index)
        if key not in order:
            order.append(key)
    elif isinstance(t, StructT):
        for x in t.targs:
            _params_in(x, order)


def _canon(vec: tuple[Type, ...]) -> tuple[Type, ...]:
    """Rename residual parameters by order of first appearance."""
    order: list = []
    for t in vec:
        _params_in(t, order)
    sub = {key: TypeParam(i) for i, key in enumerate(order)}
    return tuple(t.subst(sub) for t in vec)


def _unify_vectors(a: tuple[Type, ...],
                   b: tuple[Type, ...]) -> tuple[Type, ...] | None:
    """Most general common instance of two instantiation vectors.

    The vectors quantify their parameters independently, so b's are
    renamed apart before unification.
    """
    order: list = []
    for t in b:
        _params_in(t, order)
    apart = {key: TypeParam(1000 + i, "G") for i, key in enumerate(order)}
    b = tuple(t.subst(apart) for t in b)
    sub: dict | None = {}
    for x, y in zip(a, b):
        sub = unify(x, y, sub)
        if sub is None:
            return None
    sub = resolve_subst(sub)
    return _canon(tuple(t.subst(sub) for t in a))


def skolemize(vec: tuple[Type, ...]) -> tuple[Type, ...]:
    """Replace residual type parameters with fresh skolem types."""
    order: list = []
    for t in vec:
        _params_in(t, order)
    sub = {key: SkolemType(i) for i, key in enumerate(order)}
    return tuple(t.subst(sub) for t in vec)


# ---------------------------------------------------------------- analysis

def _spec_labels(model: GlobalModel, fn: I.FunctionIR) -> set[MemoryLabel]:
    labels: set[MemoryLabel] = set()
    for s in I.all_stmts(fn):
        if isinstance(s, (I.SpecAssume, I.SpecAssert)):
            labels |= E.memory_labels(s.e, model.spec_funs)
        elif isinstance(s, I.EmitsChecks):
            for c in s.clauses:
                for e in (c.cond, c.handle, c.msg):
                    if e is not None:
                        labels |= E.memory_labels(e, model.spec_funs)
    return labels


def compute_instantiations(model: GlobalModel,
                           fname: str) -> list[tuple[Type, ...]]:
    """Instantiation vectors (pre-skolemization) to verify for `fname`.

    Always contains the identity vector; plus, for every pair of labels
    that unify, the corresponding partial instantiation; closed under
    pairwise unification of members.
    """
    fn = model.functions[fname]
    n = len(fn.type_params)
    if n == 0:
        return [()]
    usage = memory_usage(model)[fname]
    modified = set(usage.modified)
    accessed = set(usage.accessed) | _spec_labels(model, fn)
    identity = tuple(TypeParam(i, "F", fn.type_params[i]) for i in range(n))
    vecs = {_canon(identity)}
    for m in sorted(modified, key=MemoryLabel.sort_key):
        for m2 in sorted(modified | accessed, key=MemoryLabel.sort_key):
            if m == m2:
                continue
            sub = unify_labels(m, m2)
            if sub is None:
                continue
            sub = resolve_subst(sub)
            vecs.add(_canon(tuple(t.subst(sub) for t in identity)))
    # closure: common instances of any two members are members
    changed = True
    while changed:
        changed = False
        for a in list(vecs):
            for b in list(vecs):
                u = _unify_vectors(a, b)
                if u is not None and u not in vecs:
                    vecs.add(u)
                    changed = True
    return sorted(vecs, key=lambda v: tuple(map(str, v)))


# ---------------------------------------------------------------- naming

def mangle(fname: str, targs: tuple[Type, ...]) -> str:
    if not targs:
        return fname
    return f"{fname}<{', '.join(map(str, targs))}>"


# ---------------------------------------------------------------- rewrite

def _subst_spec(spec: FunSpec, sub: dict) -> FunSpec:
    out = copy.deepcopy(spec)
    out.requires = [E.subst_types(e, sub) for e in out.requires]
    out.ensures = [E.subst_types(e, sub) for e in out.ensures]
    out.aborts_if = [E.subst_types(e, sub) for e in out.aborts_if]
    out.modifies = [(l.subst(sub), E.subst_types(a, sub))
                    for l, a in out.modifies]
    for c in out.emits:
        c.handle = E.subst_types(c.handle, sub)
        c.msg = E.subst_types(c.msg, sub)
        if c.cond is not None:
            c.cond = E.subst_types(c.cond, sub)
    return out


def _subst_function(fn: I.FunctionIR, sub: dict, instantiate) -> None:
    """Apply a ground substitution through a whole function in place.

    `instantiate` maps (callee name, ground targs) to the name of the
    specialized callee, creating it on demand.
    """
    fn.locals = [t.subst(sub) for t in fn.locals]
    fn.rets = [t.subst(sub) for t in fn.rets]
    for site, desc in fn.origins.items():
        if desc[0] == "global":
            fn.origins[site] = ("global", desc[1].subst(sub), desc[2])

    def fix_rv(rv: I.Rvalue):
        if isinstance(rv, I.Const):
            rv.ty = rv.ty.subst(sub)
        elif isinstance(rv, I.Pack):
            rv.targs = tuple(t.subst(sub) for t in rv.targs)
        elif isinstance(rv, (I.BorrowGlobal, I.ReadGlobal, I.Exists,
                             I.MoveFrom)):
            rv.label = rv.label.subst(sub)
        elif isinstance(rv, I.MkGlobal):
            rv.label = rv.label.subst(sub)
        elif isinstance(rv, (I.HavocVal, I.Narrow)):
            rv.ty = rv.ty.subst(sub)

    for s in I.all_stmts(fn):
        if isinstance(s, I.Assign):
            fix_rv(s.rv)
        elif isinstance(s, (I.SetGlobal, I.WriteBackGlobal, I.MoveTo,
                            I.Havoc)):
            s.label = s.label.subst(sub)
        elif isinstance(s, I.Call):
            s.targs = tuple(t.subst(sub) for t in s.targs)
            s.fname = instantiate(s.fname, s.targs)
            s.targs = ()
        elif isinstance(s, (I.SpecAssume, I.SpecAssert)):
            s.e = E.subst_types(s.e, sub)
        elif isinstance(s, I.EmitsChecks):
            for c in s.clauses:
                c.handle = E.subst_types(c.handle, sub)
                c.msg = E.subst_types(c.msg, sub)
                if c.cond is not None:
                    c.cond = E.subst_types(c.cond, sub)
        elif isinstance(s, I.InlineMarker):
            s.targs = tuple(t.subst(sub) for t in s.targs)
        elif isinstance(s, I.OpaqueCallMarker):
            s.targs = tuple(t.subst(sub) for t in s.targs)
            s.modified = [(l.subst(sub), a) for l, a in s.modified]


def specialize(model: GlobalModel) -> GlobalModel:
    """Monomorphic copy of the model.

    Non-generic functions are kept (with any remaining generic calls
    redirected to specialized instances); each generic function is
    replaced by its computed instantiations with residual parameters
    skolemized. The result contains no type parameters.
    """
    out = copy.deepcopy(model)
    src_funs = out.functions
    src_specs = dict(out.specs)
    out.functions = {}
    out.specs = {}
    registry: dict[tuple[str, tuple[Type, ...]], str] = {}

    def instantiate(fname: str, targs: tuple[Type, ...]) -> str:
        key = (fname, targs)
        if key in registry:
            return registry[key]
        new_name = mangle(fname, targs)
        registry[key] = new_name
        fn = copy.deepcopy(src_funs[fname])
        fn.name = new_name
        fn.type_params = []
        fn.base_name = fname
        fn.inst_targs = targs
        sub = {("F", i): t for i, t in enumerate(targs)}
        _subst_function(fn, sub, instantiate)
        out.functions[new_name] = fn
        spec = src_specs.get(fname)
        if spec is not None:
            out.specs[new_name] = _subst_spec(spec, sub)
        return new_name

    for fname in sorted(src_funs):
        fn = src_funs[fname]
        if not fn.type_params:
            instantiate(fname, ())
        else:
            for vec in compute_instantiations(model, fname):
                instantiate(fname, skolemize(vec))

    out.call_graph = {
        name: {s.fname for s in I.all_stmts(fn) if isinstance(s, I.Call)}
        for name, fn in out.functions.items()}
    return out


# ---------------------------------------------------------------- structs

@dataclass
class StructRegistry:
    """Memoized ground structure instances for the backend encoding."""

    model: GlobalModel
    _cache: dict = field(default_factory=dict)

    def resolve(self, name: str, targs: tuple[Type, ...]) -> StructInfo:
        key = (name, targs)
        if key not in self._cache:
            base = self.model.structs[name]
            sub = {("F", i): t for i, t in enumerate(targs)}
            info = StructInfo(
                name=mangle(name, targs), type_params=[],
                abilities=set(base.abilities),
                fields=[(n, t.subst(sub)) for n, t in base.fields],
                data_invariants=[E.subst_types(e, sub)
                                 for e in base.data_invariants],
                span=base.span)
            self._cache[key] = info
        return self._cache[key]

"""Ground decision procedure for the SMT-LIB subset emitted by the encoder.

The input logic is linear integer arithmetic plus arrays (select/store),
algebraic datatypes (records only), and quantifiers over Int. Solving
proceeds by reduction:

  1. inline 0-ary `define-fun`s,
  2. instantiate universals over the ground Int terms of the problem and
     skolemize existentials (sound for `unsat`; `sat` answers are expected
     to be validated by the caller, e.g. through counterexample replay),
  3. flatten datatype values into per-field scalars and normalize
     select-over-store/ite into scalar terms,
  4. Ackermannize the remaining selects on base arrays,
  5. lift integer `ite` into fresh constants,
  6. DPLL over the boolean abstraction with an exact-arithmetic LIA
     check (Fourier-Motzkin with origin tracking for conflict clauses,
     branch-and-bound for integrality).

Everything is exact (`fractions.Fraction`); no floating point.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from .sexpr import show

INT = "Int"
BOOL = "Bool"

_BOOL_OPS = ("and", "or", "not", "=>")
_CMP_OPS = ("=", "<=", "<", ">=", ">")


class SolverError(Exception):
    pass


class GiveUp(Exception):
    """Raised when the problem leaves the supported fragment."""


def _is_numeral(a) -> bool:
    return isinstance(a, str) and (a.isdigit()
                                   or (a[:1] == "-" and a[1:].isdigit()))


def _unquote(name: str) -> str:
    if name.startswith("|") and name.endswith("|"):
        return name[1:-1]
    return name


# ---------------------------------------------------------------- context


class Context:
    """Declarations and assertions accumulated from the command stream."""

    def __init__(self):
        self.decls: dict[str, object] = {}       # const name -> sort
        self.defs: dict[str, tuple] = {}         # name -> (sort, body)
        self.def_order: list[str] = []
        self.datatypes: dict[str, list] = {}     # sort -> [(field, sort)]
        self.constructors: dict[str, str] = {}   # ctor name -> sort
        self.accessors: dict[str, tuple] = {}    # field -> (sort, idx, fsort)
        self.asserts: list = []
        self.status: str | None = None
        self.model: "Model | None" = None
        self.inline_cache: dict = {}
        self._sort_memo: dict = {}

    # ---------------- commands

    def execute(self, cmd) -> str | None:
        if not isinstance(cmd, tuple) or not cmd:
            raise SolverError(f"bad command: {show(list(cmd))}")
        head = cmd[0]
        if head in ("set-logic", "set-option", "set-info", "exit"):
            return None
        if head == "declare-const":
            self.decls[_unquote(cmd[1])] = self._sort(cmd[2])
            return None
        if head == "declare-fun":
            if cmd[2] != ():
                raise GiveUp("uninterpreted functions with arguments")
            self.decls[_unquote(cmd[1])] = self._sort(cmd[3])
            return None
        if head == "define-fun":
            if cmd[2] != ():
                raise GiveUp("define-fun with arguments")
            name = _unquote(cmd[1])
            self.defs[name] = (self._sort(cmd[3]), cmd[4])
            self.def_order.append(name)
            return None
        if head == "declare-datatypes":
            self._declare_datatypes(cmd)
            return None
        if head == "assert":
            self.asserts.append(cmd[1])
            return None
        if head == "check-sat":
            self.status = check(self)
            return self.status
        if head == "get-model":
            if self.status == "sat" and self.model is not None:
                return self.model.render(self)
            return "(error \"model is not available\")"
        raise SolverError(f"unsupported command: {head}")

    def _declare_datatypes(self, cmd):
        names = [_unquote(d[0]) for d in cmd[1]]
        for name, body in zip(names, cmd[2]):
            if len(body) != 1:
                raise GiveUp("datatypes with multiple constructors")
            ctor = body[0]
            fields = [( _unquote(f[0]), self._sort(f[1])) for f in ctor[1:]]
            self.datatypes[name] = fields
            self.constructors[_unquote(ctor[0])] = name
            for idx, (fname, fsort) in enumerate(fields):
                self.accessors[fname] = (name, idx, fsort)

    def _sort(self, s):
        if isinstance(s, tuple):
            if s and s[0] == "Array":
                return ("Array", self._sort(s[1]), self._sort(s[2]))
            raise SolverError(f"bad sort: {show(list(s))}")
        return _unquote(s)

    # ---------------- sort inference

    def sort_of(self, t, env=None) -> object:
        if isinstance(t, tuple) and not env:
            hit = self._sort_memo.get(id(t))
            if hit is not None:
                return hit[1]
            res = self._sort_of(t, env)
            self._sort_memo[id(t)] = (t, res)
            return res
        return self._sort_of(t, env)

    def _sort_of(self, t, env=None) -> object:
        env = env or {}
        if isinstance(t, str):
            name = _unquote(t)
            if name in env:
                return env[name]
            if name in ("true", "false"):
                return BOOL
            if _is_numeral(name):
                return INT
            if name in self.decls:
                return self.decls[name]
            if name in self.defs:
                return self.defs[name][0]
            raise SolverError(f"unknown symbol: {t}")
        head = _unquote(t[0])
        if head in _BOOL_OPS + _CMP_OPS + ("distinct", "forall", "exists"):
            return BOOL
        if head in ("+", "-", "*", "div", "mod", "abs"):
            return INT
        if head == "ite":
            return self.sort_of(t[2], env)
        if head == "select":
            arr = self.sort_of(t[1], env)
            return arr[2]
        if head == "store":
            return self.sort_of(t[1], env)
        if head in self.constructors:
            return self.constructors[head]
        if head in self.accessors:
            return self.accessors[head][2]
        if head == "let":
            raise GiveUp("let bindings")
        raise SolverError(f"unknown application: {head}")


# ---------------------------------------------------------------- inlining


def _inline(ctx: Context, t, seen=(), cache=None):
    """Inline 0-ary defines; each definition expands to one shared object
    so downstream passes can memoize on object identity."""
    if cache is None:
        cache = ctx.inline_cache
    if isinstance(t, str):
        name = _unquote(t)
        if name in ctx.defs:
            if name in cache:
                return cache[name]
            if name in seen:
                raise SolverError(f"recursive define-fun: {name}")
            out = _inline(ctx, ctx.defs[name][1], seen + (name,), cache)
            cache[name] = out
            return out
        return t
    if t and isinstance(t[0], str) and _unquote(t[0]) in ("forall",
                                                          "exists"):
        # keep the binding list intact, inline only in the body
        return (t[0], t[1]) + tuple(_inline(ctx, x, seen, cache)
                                    for x in t[2:])
    return tuple([t[0]] + [_inline(ctx, x, seen, cache) for x in t[1:]])


def _subst(t, env: dict):
    if isinstance(t, str):
        return env.get(_unquote(t), t)
    head = _unquote(t[0])
    if head in ("forall", "exists"):
        bound = {_unquote(b[0]) for b in t[1]}
        inner = {k: v for k, v in env.items() if k not in bound}
        return (t[0], t[1], _subst(t[2], inner))
    return tuple([t[0]] + [_subst(x, env) for x in t[1:]])


# ---------------------------------------------------------------- quantifiers


def _ground_ints(ctx: Context, terms) -> list:
    """Candidate instantiation terms for universal Int variables.

    Ground terms used as select indexes are the relevant ones (array
    cells are the only thing quantifiers range over in the emitted
    problems); all Int constants and numerals are the fallback.
    """
    indexes: list = []
    others: list = []
    seen: set = set()
    visited: set = set()

    def add(pool, x):
        if x not in seen:
            seen.add(x)
            pool.append(x)

    def ground(t):
        if isinstance(t, str):
            return not (_unquote(t) in ctx.defs) \
                and (_is_numeral(t) or ctx.decls.get(_unquote(t)) == INT)
        return all(ground(x) for x in t[1:])

    def walk(t, bound):
        if isinstance(t, str):
            if _is_numeral(t):
                add(others, t)
            return
        if id(t) in visited:
            return
        visited.add(id(t))
        head = _unquote(t[0])
        if head in ("forall", "exists"):
            walk(t[2], bound | {_unquote(b[0]) for b in t[1]})
            return
        if head == "select" and ground(t[2]) \
                and not _mentions(t[2], bound):
            add(indexes, t[2])
        if head == "store" and ground(t[2]) \
                and not _mentions(t[2], bound):
            add(indexes, t[2])
        for x in t[1:]:
            walk(x, bound)

    for t in terms:
        walk(t, set())
    for name, sort in ctx.decls.items():
        if sort == INT:
            add(others, name)
    if indexes:
        return indexes
    if not others:
        add(others, "0")
    return others


def _mentions(t, names: set) -> bool:
    if isinstance(t, str):
        return _unquote(t) in names
    return any(_mentions(x, names) for x in t[1:])


class _Quant:
    """Quantifier elimination by instantiation/skolemization."""

    def __init__(self, ctx: Context):
        self.ctx = ctx
        self.counter = itertools.count()
        self.skolems: list[str] = []
        self.skcache: dict = {}
        self._nnf_memo: dict = {}
        self._quant_memo: dict = {}

    def run(self, asserts: list) -> list:
        # Iterate to a fixpoint: skolem constants introduced by negated
        # universals in one round appear as select indexes in that
        # round's output, and so become instantiation candidates for the
        # next round.
        source = asserts
        out = asserts
        for _ in range(4):
            cands = _ground_ints(self.ctx, source)
            self.skolems = []
            self._nnf_memo = {}
            out = [self.nnf(t, True, cands, {}) for t in asserts]
            new = _ground_ints(self.ctx, out)
            if set(new) == set(cands):
                break
            source = out
        return out

    def _has_quant(self, t) -> bool:
        if isinstance(t, str):
            return False
        hit = self._quant_memo.get(id(t))
        if hit is not None:
            return hit[1]
        if _unquote(t[0]) in ("forall", "exists"):
            res = True
        else:
            res = any(self._has_quant(x) for x in t[1:])
        self._quant_memo[id(t)] = (t, res)
        return res

    def skolem(self, key, sort) -> str:
        # memoized so re-processing the same existential across fixpoint
        # rounds reuses the constant (otherwise rounds never converge)
        if key not in self.skcache:
            name = f"$sk!{next(self.counter)}"
            self.ctx.decls[name] = sort
            self.skolems.append(name)
            self.skcache[key] = name
        return self.skcache[key]

    def nnf(self, t, pos: bool, cands: list, env: dict):
        if isinstance(t, str):
            return t if pos else ("not", t)
        key = (id(t), pos)
        hit = self._nnf_memo.get(key)
        if hit is not None:
            return hit[1]
        res = self._nnf(t, pos, cands, env)
        self._nnf_memo[key] = (t, res)
        return res

    def _nnf(self, t, pos: bool, cands: list, env: dict):
        head = _unquote(t[0])
        if head == "not":
            return self.nnf(t[1], not pos, cands, env)
        if head == "and" or head == "or":
            kids = [self.nnf(x, pos, cands, env) for x in t[1:]]
            op = head if pos else ("or" if head == "and" else "and")
            return tuple([op] + kids)
        if head == "=>":
            left = self.nnf(t[1], not pos, cands, env)
            right = self.nnf(t[2], pos, cands, env)
            return ("or", left, right) if pos else ("and", left, right)
        if head == "ite" and self.ctx.sort_of(t[2], env) == BOOL:
            c = t[1]
            yes = ("and", c, t[2])
            no = ("and", ("not", c), t[3])
            return self.nnf(("or", yes, no), pos, cands, env)
        if head in ("forall", "exists"):
            universal = (head == "forall") == pos
            binders = [( _unquote(b[0]), self.ctx._sort(b[1]))
                       for b in t[1]]
            body = t[2]
            if universal:
                for _, s in binders:
                    if s not in (INT, BOOL):
                        raise GiveUp(f"quantifier over sort {s}")
                insts = []
                combos = itertools.product(
                    *[cands if s == INT else ("true", "false")
                      for _, s in binders])
                for combo in combos:
                    sub = {n: v for (n, _), v in zip(binders, combo)}
                    insts.append(self.nnf(_subst(body, sub), pos,
                                          cands, env))
                if not insts:
                    return "true" if pos else "false"
                op = "and" if pos else "or"
                return tuple([op] + insts)
            sub = {n: self.skolem((t, n), s) for n, s in binders}
            return self.nnf(_subst(body, sub), pos, cands, env)
        if head == "=" and self.ctx.sort_of(t[1], env) == BOOL:
            both = ("and", ("=>", t[1], t[2]), ("=>", t[2], t[1]))
            return self.nnf(both, pos, cands, env)
        return t if pos else ("not", t)


# ---------------------------------------------------------------- flattening


class _Flattener:
    """Scalarize datatypes and arrays; lift integer ite; fold constants."""

    def __init__(self, ctx: Context):
        self.ctx = ctx
        self.side: list = []                  # extra boolean constraints
        self.lifted: dict = {}                # (c, a, b) -> const name
        self.selects: dict = {}               # (base, idx) -> const name
        self.select_info: dict = {}           # const -> (base, idx, sort)
        self.scalar_decls: dict[str, object] = {}
        self.counter = itertools.count()
        self._memo: dict = {}                 # id(term) -> (term, result)

    # ---- scalar helpers (with light constant folding)

    def _const_val(self, t):
        if _is_numeral(t) if isinstance(t, str) else False:
            return int(t)
        return None

    def mk_not(self, a):
        if a == "true":
            return "false"
        if a == "false":
            return "true"
        if isinstance(a, tuple) and a[0] == "not":
            return a[1]
        return ("not", a)

    def mk_and(self, *xs):
        out = []
        for x in xs:
            if x == "false":
                return "false"
            if x != "true":
                out.append(x)
        if not out:
            return "true"
        return out[0] if len(out) == 1 else tuple(["and"] + out)

    def mk_or(self, *xs):
        out = []
        for x in xs:
            if x == "true":
                return "true"
            if x != "false":
                out.append(x)
        if not out:
            return "false"
        return out[0] if len(out) == 1 else tuple(["or"] + out)

    def mk_cmp(self, op, a, b):
        va, vb = self._const_val(a), self._const_val(b)
        if va is not None and vb is not None:
            res = {"=": va == vb, "<=": va <= vb, "<": va < vb,
                   ">=": va >= vb, ">": va > vb}[op]
            return "true" if res else "false"
        return (op, a, b)

    def mk_arith(self, op, args):
        vals = [self._const_val(a) for a in args]
        if all(v is not None for v in vals):
            if op == "+":
                return str(sum(vals))
            if op == "-":
                r = vals[0] if len(vals) > 1 else -vals[0]
                for v in vals[1:]:
                    r -= v
                return str(r)
            if op == "*":
                r = 1
                for v in vals:
                    r *= v
                return str(r)
        return tuple([op] + args)

    def lift_ite(self, c, a, b, sort):
        if c == "true":
            return a
        if c == "false":
            return b
        if a == b:
            return a
        key = (c, a, b)
        if key not in self.lifted:
            name = f"$ite!{next(self.counter)}"
            self.scalar_decls[name] = sort
            self.side.append(self.mk_and(
                self.mk_or(self.mk_not(c), ("=", name, a)),
                self.mk_or(c, ("=", name, b))))
            self.lifted[key] = name
        return self.lifted[key]

    # ---- values: scalar term, or tuple of flattened field values

    def _split_const(self, name: str, sort):
        """A constant of datatype sort becomes per-field constants."""
        fields = self.ctx.datatypes[sort]
        return tuple(self.flat_const(f"{name}@{fname}", fsort)
                     for fname, fsort in fields)

    def flat_const(self, name: str, sort):
        if sort in self.ctx.datatypes:
            return self._split_const(name, sort)
        self.scalar_decls[name] = sort
        return name

    def flat(self, t, sort=None):
        if isinstance(t, tuple):
            hit = self._memo.get(id(t))
            if hit is not None:
                return hit[1]
            res = self._flat(t)
            self._memo[id(t)] = (t, res)
            return res
        return self._flat(t)

    def _flat(self, t):
        if isinstance(t, str):
            name = _unquote(t)
            if name in ("true", "false") or _is_numeral(name):
                return name
            dsort = self.ctx.decls.get(name)
            if dsort in self.ctx.datatypes:
                return self._split_const(name, dsort)
            if isinstance(dsort, tuple) and dsort[0] == "Array":
                return ("array", name, dsort)
            if dsort is None:
                raise SolverError(f"unknown symbol: {t}")
            self.scalar_decls[name] = dsort
            return name
        head = _unquote(t[0])
        if head in self.ctx.constructors:
            fields = self.ctx.datatypes[self.ctx.constructors[head]]
            return tuple(self.flat(x) for x, _ in zip(t[1:], fields))
        if head in self.ctx.accessors:
            _, idx, _ = self.ctx.accessors[head]
            val = self.flat(t[1])
            return val[idx]
        if head == "not":
            return self.mk_not(self.flat(t[1]))
        if head == "and":
            return self.mk_and(*[self.flat(x) for x in t[1:]])
        if head == "or":
            return self.mk_or(*[self.flat(x) for x in t[1:]])
        if head == "=>":
            args = [self.flat(x) for x in t[1:]]
            return self.mk_or(*[self.mk_not(a) for a in args[:-1]],
                              args[-1])
        if head == "=":
            return self._eq(self.flat(t[1]), self.flat(t[2]),
                            self.ctx.sort_of(t[1]))
        if head == "distinct":
            args = [self.flat(x) for x in t[1:]]
            sort = self.ctx.sort_of(t[1])
            pairs = [self.mk_not(self._eq(a, b, sort))
                     for a, b in itertools.combinations(args, 2)]
            return self.mk_and(*pairs)
        if head in ("<=", "<", ">=", ">"):
            return self.mk_cmp(head, self.flat(t[1]), self.flat(t[2]))
        if head in ("+", "-", "*"):
            return self.mk_arith(head, [self.flat(x) for x in t[1:]])
        if head in ("div", "mod"):
            raise GiveUp("div/mod (callers lower these)")
        if head == "ite":
            return self._ite(self.flat(t[1]), t[2], t[3],
                             self.ctx.sort_of(t[2]))
        if head == "select":
            return self.sel(t[1], self.flat(t[2]))
        if head == "store":
            raise GiveUp("array store outside a select context")
        raise SolverError(f"unknown application: {head}")

    def _eq(self, a, b, sort):
        if isinstance(a, tuple) and a and a[0] not in _CMP_OPS \
                and sort in self.ctx.datatypes:
            fields = self.ctx.datatypes[sort]
            parts = [self._eq(x, y, fs)
                     for (x, y), (_, fs) in zip(zip(a, b), fields)]
            return self.mk_and(*parts)
        if sort == BOOL:
            return self.mk_and(self.mk_or(self.mk_not(a), b),
                               self.mk_or(self.mk_not(b), a))
        return self.mk_cmp("=", a, b)

    def _ite(self, c, rawa, rawb, sort):
        if c == "true":
            return self.flat(rawa)
        if c == "false":
            return self.flat(rawb)
        a, b = self.flat(rawa), self.flat(rawb)
        return self._merge(c, a, b, sort)

    def _merge(self, c, a, b, sort):
        if sort in self.ctx.datatypes:
            fields = self.ctx.datatypes[sort]
            return tuple(self._merge(c, x, y, fs)
                         for (x, y), (_, fs) in zip(zip(a, b), fields))
        if sort == BOOL:
            return self.mk_or(self.mk_and(c, a),
                              self.mk_and(self.mk_not(c), b))
        return self.lift_ite(c, a, b, sort)

    # ---- arrays

    def sel(self, arr, idx):
        """Resolve a select against a store/ite chain over a base array."""
        if isinstance(arr, str):
            name = _unquote(arr)
            sort = self.ctx.decls.get(name)
            if not (isinstance(sort, tuple) and sort[0] == "Array"):
                raise SolverError(f"select on non-array: {arr}")
            return self._base_select(name, idx, sort[2])
        head = _unquote(arr[0])
        if head == "store":
            jdx = self.flat(arr[2])
            hit = self.mk_cmp("=", idx, jdx)
            if hit == "true":
                return self.flat(arr[3])
            if hit == "false":
                return self.sel(arr[1], idx)
            elem = self.ctx.sort_of(arr[3])
            return self._merge(hit, self.flat(arr[3]),
                               self.sel(arr[1], idx), elem)
        if head == "ite":
            c = self.flat(arr[1])
            if c == "true":
                return self.sel(arr[2], idx)
            if c == "false":
                return self.sel(arr[3], idx)
            elem = self.ctx.sort_of(arr)[2]
            return self._merge(c, self.sel(arr[2], idx),
                               self.sel(arr[3], idx), elem)
        raise SolverError(f"unsupported array term: {show(list(arr))}")

    def _base_select(self, base: str, idx, elem):
        if elem in self.ctx.datatypes:
            fields = self.ctx.datatypes[elem]
            return tuple(self._base_select(f"{base}@{fname}", idx, fsort)
                         for fname, fsort in fields)
        key = (base, idx)
        if key not in self.selects:
            name = f"{base}!{len(self.selects)}"
            self.selects[key] = name
            self.select_info[name] = (base, idx, elem)
            self.scalar_decls[name] = elem
        return self.selects[key]

    def ackermann(self) -> list:
        """Functional-consistency axioms for selects on the same base."""
        by_base: dict[str, list] = {}
        for (base, idx), name in self.selects.items():
            by_base.setdefault(base, []).append((idx, name))
        out = []
        for apps in by_base.values():
            for (i1, n1), (i2, n2) in itertools.combinations(apps, 2):
                out.append(self.mk_or(
                    self.mk_not(self.mk_cmp("=", i1, i2)),
                    ("=", n1, n2)))
        return out


# ---------------------------------------------------------------- boolean


class _Cnf:
    """Tseitin conversion of flattened formulas to clauses over atoms."""

    def __init__(self):
        self.atom_ids: dict = {}
        self.atoms: list = []
        self.clauses: list[list[int]] = []
        self.memo: dict = {}

    def atom(self, t) -> int:
        if t not in self.atom_ids:
            self.atom_ids[t] = len(self.atoms) + 1
            self.atoms.append(t)
        return self.atom_ids[t]

    def lit(self, t) -> int:
        """Literal for a formula, adding defining clauses as needed."""
        if t == "true":
            v = self.atom("true")
            self.clauses.append([v])
            return v
        if t == "false":
            v = self.atom("true")
            self.clauses.append([v])
            return -v
        if isinstance(t, str):
            return self.atom(t)
        head = t[0]
        if head == "not":
            return -self.lit(t[1])
        if head in ("and", "or"):
            hit = self.memo.get(id(t))
            if hit is not None:
                return hit[1]
            kids = [self.lit(x) for x in t[1:]]
            v = self.atom(("$def", len(self.atoms)))
            if head == "and":
                for k in kids:
                    self.clauses.append([-v, k])
                self.clauses.append([v] + [-k for k in kids])
            else:
                self.clauses.append([-v] + kids)
                for k in kids:
                    self.clauses.append([v, -k])
            self.memo[id(t)] = (t, v)
            return v
        return self.atom(t)           # comparison atom

    def add(self, t):
        self.clauses.append([self.lit(t)])


def _dpll(num_vars: int, clauses: list[list[int]]):
    """Plain DPLL with unit propagation; returns an assignment or None."""
    assign: dict[int, bool] = {}
    watch: dict[int, list] = {}
    for c in clauses:
        for l in c:
            watch.setdefault(l, []).append(c)

    def value(l):
        v = assign.get(abs(l))
        if v is None:
            return None
        return v if l > 0 else not v

    trail: list[int] = []

    def propagate(start: int):
        i = start
        while i < len(trail):
            lit = trail[i]
            for c in watch.get(-lit, ()):
                unassigned = None
                satisfied = False
                for l in c:
                    v = value(l)
                    if v is True:
                        satisfied = True
                        break
                    if v is None:
                        if unassigned is not None:
                            unassigned = "many"
                            break
                        unassigned = l
                if satisfied or unassigned == "many":
                    continue
                if unassigned is None:
                    return False
                assign[abs(unassigned)] = unassigned > 0
                trail.append(unassigned)
            i += 1
        return True

    def search() -> bool:
        # seed: unit clauses
        for c in clauses:
            if len(c) == 1 and value(c[0]) is None:
                assign[abs(c[0])] = c[0] > 0
                trail.append(c[0])
            elif len(c) == 1 and value(c[0]) is False:
                return False
        if not propagate(0):
            return False
        return branch()

    def branch() -> bool:
        var = None
        for v in range(1, num_vars + 1):
            if v not in assign:
                var = v
                break
        if var is None:
            return True
        for choice in (True, False):
            mark = len(trail)
            assign[var] = choice
            trail.append(var if choice else -var)
            if propagate(mark) and branch():
                return True
            while len(trail) > mark:
                del assign[abs(trail.pop())]
        return False

    return assign if search() else None


# ---------------------------------------------------------------- LIA


class _Lin:
    """Linear form: coeffs (var -> Fraction) plus constant."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=Fraction(0)):
        self.coeffs = coeffs or {}
        self.const = const

    @staticmethod
    def of(t) -> "_Lin":
        if isinstance(t, str):
            if _is_numeral(t):
                return _Lin({}, Fraction(int(t)))
            return _Lin({t: Fraction(1)})
        head = t[0]
        if head == "+":
            out = _Lin()
            for x in t[1:]:
                out = out.add(_Lin.of(x))
            return out
        if head == "-":
            if len(t) == 2:
                return _Lin.of(t[1]).scale(Fraction(-1))
            out = _Lin.of(t[1])
            for x in t[2:]:
                out = out.add(_Lin.of(x).scale(Fraction(-1)))
            return out
        if head == "*":
            out = _Lin({}, Fraction(1))
            for x in t[1:]:
                out = out.mul(_Lin.of(x))
            return out
        raise GiveUp(f"non-arithmetic term in atom: {show([head])}")

    def add(self, other: "_Lin") -> "_Lin":
        coeffs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs.get(v, Fraction(0)) + c
            if coeffs[v] == 0:
                del coeffs[v]
        return _Lin(coeffs, self.const + other.const)

    def scale(self, k: Fraction) -> "_Lin":
        if k == 0:
            return _Lin()
        return _Lin({v: c * k for v, c in self.coeffs.items()},
                    self.const * k)

    def mul(self, other: "_Lin") -> "_Lin":
        if not self.coeffs:
            return other.scale(self.const)
        if not other.coeffs:
            return self.scale(other.const)
        raise GiveUp("non-linear multiplication")

    def key(self):
        return (tuple(sorted(self.coeffs.items())), self.const)


def _atom_constraint(t, positive: bool):
    """Constraint triples (op, lin, negated?) for a comparison atom.

    op is "<=" (lin <= 0), "=" (lin == 0) or "!=".
    """
    op, a, b = t[0], _Lin.of(t[1]), _Lin.of(t[2])
    diff = a.add(b.scale(Fraction(-1)))          # a - b
    one = _Lin({}, Fraction(1))
    if op == "=":
        return ("=", diff) if positive else ("!=", diff)
    flip = {"<=": ">", "<": ">=", ">=": "<", ">": "<="}
    if not positive:
        op = flip[op]
    if op == "<=":
        return ("<=", diff)
    if op == "<":
        return ("<=", diff.add(one))             # a < b  ->  a - b + 1 <= 0
    if op == ">=":
        return ("<=", diff.scale(Fraction(-1)))
    return ("<=", diff.scale(Fraction(-1)).add(one))


class _LiaResult:
    def __init__(self, kind, model=None, core=None):
        self.kind = kind                          # "sat" | "unsat" | "unknown"
        self.model = model or {}
        self.core = core or set()


def _lia_check(constraints, depth=40) -> _LiaResult:
    """Integer feasibility of (op, lin, origin) constraints.

    Disequalities are handled lazily: the remaining system is solved
    first and a disequality is split into its two strict sides only when
    the sample found actually violates it.  Splitting every disequality
    up front is exponential in their number.
    """
    diseqs = [(lin, orig) for op, lin, orig in constraints if op == "!="]
    base = [c for c in constraints if c[0] != "!="]
    res = _lia_solve(base, depth)
    if res.kind != "sat":
        return res

    def value(lin):
        return lin.const + sum(c * res.model.get(v, Fraction(0))
                               for v, c in lin.coeffs.items())

    broken = next((i for i, (lin, _) in enumerate(diseqs)
                   if value(lin) == 0), None)
    if broken is None:
        return res
    lin, orig = diseqs[broken]
    rest = [("!=", d, o) for j, (d, o) in enumerate(diseqs) if j != broken]
    one = _Lin({}, Fraction(1))
    left = _lia_check(
        base + rest + [("<=", lin.add(one), orig)], depth)
    if left.kind == "sat":
        return left
    right = _lia_check(
        base + rest + [("<=", lin.scale(Fraction(-1)).add(one), orig)],
        depth)
    if right.kind == "sat" or right.kind == "unknown":
        return right
    if left.kind == "unknown":
        return left
    return _LiaResult("unsat", core=left.core | right.core)


def _lia_solve(constraints, depth) -> _LiaResult:
    """Feasibility of equality/inequality constraints (no ``!=``)."""
    # equalities: gaussian substitution
    subst: dict[str, tuple[_Lin, frozenset]] = {}
    ineqs: list = []
    pending = list(constraints)
    while pending:
        op, lin, orig = pending.pop(0)
        lin, orig2 = _apply_subst(lin, subst)
        orig = orig | orig2
        if not lin.coeffs:
            if (op == "=" and lin.const != 0) or \
                    (op == "<=" and lin.const > 0):
                return _LiaResult("unsat", core=set(orig))
            continue
        if op == "=":
            units = [(v, c) for v, c in sorted(lin.coeffs.items())
                     if abs(c) == 1]
            if units:
                var, coef = units[0]
                rest = _Lin({v: c for v, c in lin.coeffs.items()
                             if v != var}, lin.const)
                subst[var] = (rest.scale(Fraction(-1) / coef), orig)
                # re-normalize everything already processed
                pending = [("<=", l, o) for _, l, o in ineqs] + pending
                ineqs = []
            else:
                import math
                g = math.gcd(*[abs(c.numerator) for c in
                               lin.coeffs.values()]) \
                    if all(c.denominator == 1 for c in lin.coeffs.values()) \
                    else 0
                if g and lin.const.denominator == 1 \
                        and lin.const.numerator % g != 0:
                    return _LiaResult("unsat", core=set(orig))
                ineqs.append(("<=", lin, orig))
                ineqs.append(("<=", lin.scale(Fraction(-1)), orig))
        else:
            ineqs.append(("<=", lin, orig))

    res = _fm(ineqs, depth)
    if res.kind != "sat":
        return res
    model = dict(res.model)
    for var in reversed(list(subst)):
        lin, _ = subst[var]
        val = lin.const + sum(c * model.get(v, Fraction(0))
                              for v, c in lin.coeffs.items())
        if val != int(val):
            return _LiaResult("unknown")
        model[var] = val
    return _LiaResult("sat", model=model)


def _apply_subst(lin: _Lin, subst) -> tuple[_Lin, frozenset]:
    origins: frozenset = frozenset()
    changed = True
    while changed:
        changed = False
        for var, (rep, orig) in subst.items():
            if var in lin.coeffs:
                coef = lin.coeffs[var]
                rest = _Lin({v: c for v, c in lin.coeffs.items()
                             if v != var}, lin.const)
                lin = rest.add(rep.scale(coef))
                origins |= orig
                changed = True
                break
    return lin, origins


def _fm(ineqs, depth) -> _LiaResult:
    """Fourier-Motzkin with sample reconstruction and branch-and-bound."""
    # dedupe
    seen = {}
    work = []
    for op, lin, orig in ineqs:
        k = lin.key()
        if k in seen:
            continue
        seen[k] = True
        work.append((lin, orig))

    stages = []          # (var, constraints at elimination time)
    cur = work
    while True:
        vars_here = sorted({v for lin, _ in cur for v in lin.coeffs})
        if not vars_here:
            break
        # cheapest variable first
        def cost(v):
            lo = sum(1 for lin, _ in cur if lin.coeffs.get(v, 0) < 0)
            hi = sum(1 for lin, _ in cur if lin.coeffs.get(v, 0) > 0)
            return lo * hi
        var = min(vars_here, key=lambda v: (cost(v), v))
        lowers, uppers, rest = [], [], []
        for lin, orig in cur:
            c = lin.coeffs.get(var, Fraction(0))
            if c < 0:
                lowers.append((lin, orig))
            elif c > 0:
                uppers.append((lin, orig))
            else:
                rest.append((lin, orig))
        stages.append((var, lowers + uppers))
        nxt = list(rest)
        for (l, lo), (u, uo) in itertools.product(lowers, uppers):
            cl = -l.coeffs[var]
            cu = u.coeffs[var]
            comb = l.scale(cu).add(u.scale(cl))
            if not comb.coeffs:
                if comb.const > 0:
                    return _LiaResult("unsat", core=set(lo | uo))
                continue
            k = comb.key()
            if k in seen:
                continue
            seen[k] = True
            nxt.append((comb, lo | uo))
        cur = nxt
        if len(cur) > 8000:
            return _LiaResult("unknown")
    for lin, orig in cur:
        if lin.const > 0:
            return _LiaResult("unsat", core=set(orig))

    # reconstruct sample, innermost eliminated variable first
    model: dict[str, Fraction] = {}

    def ev(lin):
        # variables never staged were unconstrained once this stage's
        # variable got eliminated; any value works, fix them at zero
        return lin.const + sum(
            c * model.setdefault(v, Fraction(0))
            for v, c in lin.coeffs.items() if v != var)

    fractional = None
    for var, cons in reversed(stages):
        lo, hi = None, None
        for lin, _ in cons:
            c = lin.coeffs[var]
            bound = -ev(lin) / c
            if c > 0:
                hi = bound if hi is None else min(hi, bound)
            else:
                lo = bound if lo is None else max(lo, bound)
        val = _pick(lo, hi)
        if val is None:                           # no integer in window
            mid = _mid(lo, hi)
            model[var] = mid
            fractional = fractional or (var, mid)
        else:
            model[var] = Fraction(val)
    if fractional is None:
        return _LiaResult("sat", model=model)
    if depth <= 0:
        return _LiaResult("unknown")
    var, s = fractional
    import math
    down = _Lin({var: Fraction(1)}, Fraction(-math.floor(s)))
    up = _Lin({var: Fraction(-1)}, Fraction(math.ceil(s)))
    left = _fm(ineqs + [("<=", down, frozenset())], depth - 1)
    if left.kind == "sat":
        return left
    right = _fm(ineqs + [("<=", up, frozenset())], depth - 1)
    if right.kind != "unsat":
        return right
    if left.kind == "unknown":
        return left
    return _LiaResult("unsat", core=left.core | right.core)


def _pick(lo, hi):
    import math
    l = 0 if lo is None else math.ceil(lo)
    if lo is None and hi is not None:
        l = min(0, math.floor(hi))
    h = l if hi is None else math.floor(hi)
    if hi is None:
        h = max(l, 0)
    if l > h:
        return None
    return 0 if l <= 0 <= h else l


def _mid(lo, hi):
    if lo is None:
        return hi - 1
    if hi is None:
        return lo + 1
    return (lo + hi) / 2


# ---------------------------------------------------------------- model


class Model:
    def __init__(self, bools: dict, ints: dict, flattener: "_Flattener",
                 cnf: "_Cnf"):
        self.bools = bools                         # scalar name -> bool
        self.ints = ints                           # scalar name -> int
        self.fl = flattener
        self.cnf = cnf

    def value(self, name: str, sort):
        if sort == BOOL:
            return self.bools.get(name, False)
        return self.ints.get(name, 0)

    def eval_flat(self, t):
        """Evaluate a flattened scalar term under the model."""
        if isinstance(t, str):
            if t == "true":
                return True
            if t == "false":
                return False
            if _is_numeral(t):
                return int(t)
            sort = self.fl.scalar_decls.get(t, INT)
            return self.value(t, sort)
        head = t[0]
        args = [self.eval_flat(x) for x in t[1:]]
        if head == "not":
            return not args[0]
        if head == "and":
            return all(args)
        if head == "or":
            return any(args)
        if head == "=":
            return args[0] == args[1]
        if head in ("<=", "<", ">=", ">"):
            import operator
            return {"<=": operator.le, "<": operator.lt,
                    ">=": operator.ge, ">": operator.gt}[head](*args)
        if head == "+":
            return sum(args)
        if head == "-":
            if len(args) == 1:
                return -args[0]
            r = args[0]
            for a in args[1:]:
                r -= a
            return r
        if head == "*":
            r = 1
            for a in args:
                r *= a
            return r
        raise SolverError(f"cannot evaluate: {show([head])}")

    def eval_term(self, ctx: Context, t):
        """Evaluate an original (unflattened) term semantically.

        Datatype values come back as field dicts; arrays are resolved
        against the Ackermann table built while solving (unconstrained
        cells default to zero/false).
        """
        t = _inline(ctx, t)
        return self._ev(ctx, t)

    def _ev(self, ctx: Context, t):
        if isinstance(t, str):
            name = _unquote(t)
            if name == "true":
                return True
            if name == "false":
                return False
            if _is_numeral(name):
                return int(name)
            sort = ctx.decls.get(name)
            if sort in ctx.datatypes:
                return {f: self.eval_term(ctx, f"{name}@{f}")
                        for f, _ in ctx.datatypes[sort]}
            if isinstance(sort, tuple) and sort[0] == "Array":
                return ("arr", name)
            return self.value(name, sort or INT)
        head = _unquote(t[0])
        if head in ctx.constructors:
            fields = ctx.datatypes[ctx.constructors[head]]
            return {f: self._ev(ctx, x)
                    for (f, _), x in zip(fields, t[1:])}
        if head in ctx.accessors:
            return self._ev(ctx, t[1])[head]
        if head == "ite":
            return self._ev(ctx, t[2] if self._ev(ctx, t[1]) else t[3])
        if head == "select":
            return self._ev_select(ctx, t[1], self._ev(ctx, t[2]))
        if head == "not":
            return not self._ev(ctx, t[1])
        if head == "and":
            return all(self._ev(ctx, x) for x in t[1:])
        if head == "or":
            return any(self._ev(ctx, x) for x in t[1:])
        if head == "=>":
            return (not self._ev(ctx, t[1])) or self._ev(ctx, t[2])
        if head == "=":
            return self._ev(ctx, t[1]) == self._ev(ctx, t[2])
        if head in ("<=", "<", ">=", ">", "+", "-", "*"):
            return self.eval_flat(
                tuple([head] + [_wrap(self._ev(ctx, x)) for x in t[1:]]))
        raise SolverError(f"cannot evaluate: {head}")

    def _ev_select(self, ctx: Context, arr, idx):
        if isinstance(arr, tuple) and _unquote(arr[0]) == "store":
            if self._ev(ctx, arr[2]) == idx:
                return self._ev(ctx, arr[3])
            return self._ev_select(ctx, arr[1], idx)
        if isinstance(arr, tuple) and _unquote(arr[0]) == "ite":
            chosen = arr[2] if self._ev(ctx, arr[1]) else arr[3]
            return self._ev_select(ctx, chosen, idx)
        base = _unquote(arr) if isinstance(arr, str) else None
        if base is None:
            raise SolverError("cannot evaluate array term")
        elem = ctx.decls[base][2]
        return self._base_cell(ctx, base, idx, elem)

    def _base_cell(self, ctx: Context, base: str, idx, elem):
        if elem in ctx.datatypes:
            return {f: self._base_cell(ctx, f"{base}@{f}", idx, fs)
                    for f, fs in ctx.datatypes[elem]}
        for (b, idx_term), const in self.fl.selects.items():
            if b == base and self.eval_flat(idx_term) == idx:
                return self.value(const, elem)
        return False if elem == BOOL else 0

    def render(self, ctx: Context) -> str:
        lines = ["("]
        items = []
        for name in sorted(ctx.decls):
            sort = ctx.decls[name]
            if sort in (INT, BOOL) and not name.startswith("$"):
                items.append((name, sort, self.value(name, sort)))
        for name in ctx.def_order:
            sort, body = ctx.defs[name]
            if sort in (INT, BOOL):
                try:
                    items.append((name, sort, self.eval_term(ctx, body)))
                except (SolverError, GiveUp):
                    pass
        for name, sort, val in items:
            shown = _show_value(val, sort)
            lines.append(f"  (define-fun |{name}| () {sort} {shown})")
        lines.append(")")
        return "\n".join(lines)


def _wrap(val) -> str:
    if val is True:
        return "true"
    if val is False:
        return "false"
    return str(val)


def _show_value(val, sort) -> str:
    if sort == BOOL:
        return "true" if val else "false"
    v = int(val)
    return str(v) if v >= 0 else f"(- {-v})"


# ---------------------------------------------------------------- check


def check(ctx: Context) -> str:
    try:
        asserts = [_inline(ctx, t) for t in ctx.asserts]
        asserts = _Quant(ctx).run(asserts)
        fl = _Flattener(ctx)
        formulas = [fl.flat(t) for t in asserts]
        formulas += fl.side
        formulas += fl.ackermann()
    except GiveUp:
        return "unknown"

    cnf = _Cnf()
    for f in formulas:
        if f == "false":
            return "unsat"
        if f != "true":
            cnf.add(f)

    unknown_seen = False
    while True:
        assign = _dpll(len(cnf.atoms), cnf.clauses)
        if assign is None:
            return "unknown" if unknown_seen else "unsat"
        # collect theory constraints from the assignment
        constraints = []
        lit_of: dict[int, int] = {}
        bools: dict[str, bool] = {}
        for t, pid in cnf.atom_ids.items():
            val = assign.get(pid)
            if val is None:
                continue
            if isinstance(t, str):
                if t != "true":
                    bools[t] = val
                continue
            if t[0] == "$def":
                continue
            try:
                cons = _atom_constraint(t, val)
            except GiveUp:
                return "unknown"
            origin = frozenset([pid if val else -pid])
            constraints.append((cons[0], cons[1], origin))
            lit_of[pid] = pid if val else -pid
        res = _lia_check(constraints)
        if res.kind == "sat":
            ints = {v: int(x) for v, x in res.model.items()}
            # reuse the flattener that produced the formulas so select
            # constants resolve consistently during model evaluation
            ctx.model = Model(bools, ints, fl, cnf)
            return "sat"
        if res.kind == "unknown":
            unknown_seen = True
            core = {lit for lit in lit_of.values()}
        else:
            core = res.core or set(lit_of.values())
        block = [-lit for lit in core]
        if not block:
            return "unknown" if unknown_seen else "unsat"
        cnf.clauses.append(block)

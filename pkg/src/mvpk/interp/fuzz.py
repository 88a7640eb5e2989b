"""Differential fuzzing of the transformation pipeline.

Generates random well-typed, borrow-heavy modules, runs every entry
function on random inputs under the definitional interpreter, and checks
that each transformation stage preserves the observable ExecResult
(returns, abort code, final memory, emitted events).

Programs are correct by construction: the generator tracks the local
environment and only emits borrow patterns the checker accepts, so any
build or borrow error is itself reported as a finding.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from ..frontend import parse_source
from ..model import build_model, check_borrows, GlobalModel
from ..model.types import MemoryLabel
from .interp import interpret
from .values import StructVal

ADDRS = [1, 2, 3]


# ---------------------------------------------------------------- stages

def _stage_refs(model: GlobalModel) -> GlobalModel:
    from ..xform.refs import eliminate_refs
    return eliminate_refs(model)


def _stage_spec(model: GlobalModel) -> GlobalModel:
    from ..xform.funspec import inject_fun_specs
    return inject_fun_specs(model)


def _stage_mono(model: GlobalModel) -> GlobalModel:
    from ..mono import specialize
    return specialize(model)


STAGES = {"refs": _stage_refs, "spec": _stage_spec, "mono": _stage_mono}
DEFAULT_STAGES = ("refs", "spec", "mono")


# ---------------------------------------------------------------- generator

@dataclass
class _Fun:
    name: str
    params: list[tuple[str, str]]  # (name, surface type)
    rets: list[str]
    body: list[str] = field(default_factory=list)
    acquires: set[str] = field(default_factory=set)
    public: bool = False

    def render(self) -> str:
        ps = ", ".join(f"{n}: {t}" for n, t in self.params)
        rs = ""
        if len(self.rets) == 1:
            rs = f": {self.rets[0]}"
        elif self.rets:
            rs = ": (" + ", ".join(self.rets) + ")"
        acq = " acquires " + ", ".join(sorted(self.acquires)) \
            if self.acquires else ""
        vis = "public " if self.public else ""
        lines = [f"    {vis}fun {self.name}({ps}){rs}{acq} {{"]
        lines += [f"        {l}" for l in self.body]
        lines.append("    }")
        return "\n".join(lines)


class _Gen:
    """Emits one random module; mutable state tracks the current scope."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.counter = 0

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"

    # -------------------------------------------------- expressions

    def u64_atom(self, env: dict[str, str]) -> str:
        r = self.rng
        names = [n for n, t in env.items() if t == "u64"]
        if names and r.random() < 0.6:
            return r.choice(names)
        if r.random() < 0.05:
            return str(r.choice([2 ** 64 - 1, 2 ** 64 - 2]))
        return str(r.randrange(0, 50))

    def u64_exp(self, env: dict[str, str], depth: int = 2) -> str:
        r = self.rng
        if depth == 0 or r.random() < 0.4:
            return self.u64_atom(env)
        op = r.choice(["+", "+", "+", "-", "*", "/", "%"])
        a = self.u64_exp(env, depth - 1)
        b = self.u64_exp(env, depth - 1)
        return f"({a} {op} {b})"

    def bool_exp(self, env: dict[str, str], depth: int = 1) -> str:
        r = self.rng
        names = [n for n, t in env.items() if t == "bool"]
        k = r.random()
        if names and k < 0.3:
            return r.choice(names)
        if k < 0.4:
            return r.choice(["true", "false"])
        if depth > 0 and k < 0.55:
            a = self.bool_exp(env, depth - 1)
            b = self.bool_exp(env, depth - 1)
            return f"({a} {r.choice(['&&', '||'])} {b})"
        if depth > 0 and k < 0.6:
            return f"!{self.bool_exp(env, depth - 1)}"
        op = r.choice(["<", "<=", ">", ">=", "==", "!="])
        return f"({self.u64_atom(env)} {op} {self.u64_atom(env)})"

    def addr_exp(self, env: dict[str, str]) -> str:
        r = self.rng
        names = [n for n, t in env.items() if t == "address"]
        signers = [n for n, t in env.items() if t == "&signer"]
        choices = names + [f"Signer::address_of({s})" for s in signers]
        if choices and r.random() < 0.7:
            return r.choice(choices)
        return f"0x{r.choice(ADDRS):x}"

    # -------------------------------------------------- statements

    def session(self, fn: _Fun, env: dict[str, str], helpers: list[_Fun]):
        """One self-contained unit: borrows opened here end here."""
        r = self.rng
        kind = r.choice(["let", "let", "local", "cond", "struct",
                         "global", "global", "move", "call"])
        if kind == "let":
            n = self.fresh("x")
            fn.body.append(f"let {n} = {self.u64_exp(env)};")
            env[n] = "u64"
        elif kind == "local":
            names = [n for n, t in env.items() if t == "u64"]
            if not names:
                return self.session(fn, env, helpers)
            x = r.choice(names)
            rn = self.fresh("r")
            fn.body.append(f"let {rn} = &mut {x};")
            fixed = dict(env)
            del fixed[x]
            fn.body.append(f"*{rn} = {self.u64_exp(fixed, 1)};")
            if r.random() < 0.5:
                n = self.fresh("x")
                fn.body.append(f"let {n} = *{rn} + 1;")
                env[n] = "u64"
        elif kind == "cond":
            names = [n for n, t in env.items() if t == "u64"]
            if len(names) < 2:
                return self.session(fn, env, helpers)
            x, y = r.sample(names, 2)
            rn = self.fresh("r")
            cond = self.bool_exp(env)
            fn.body.append(
                f"let {rn} = if ({cond}) &mut {x} else &mut {y};")
            fn.body.append(f"*{rn} = *{rn} + {r.randrange(1, 9)};")
        elif kind == "struct":
            p = self.fresh("p")
            fn.body.append(f"let {p} = P {{ x: {self.u64_exp(env)}, "
                           f"y: {self.u64_exp(env)} }};")
            if r.random() < 0.5:
                fn.body.append(f"{p}.x = {self.u64_exp(env, 1)};")
            else:
                rn = self.fresh("r")
                fld = r.choice(["x", "y"])
                fn.body.append(f"let {rn} = &mut {p}.{fld};")
                fn.body.append(f"*{rn} = *{rn} + {r.randrange(1, 9)};")
            n = self.fresh("x")
            fn.body.append(f"let {n} = {p}.x + {p}.y;")
            env[n] = "u64"
        elif kind == "global":
            fn.acquires.add("R")
            a = self.addr_exp(env)
            style = r.random()
            if style < 0.35:
                g = self.fresh("g")
                fn.body.append(f"if (exists<R>({a})) {{")
                fn.body.append(f"    let {g} = borrow_global_mut<R>({a});")
                fn.body.append(f"    {g}.a = {self.u64_exp(env, 1)};")
                fn.body.append("}")
            elif style < 0.6:
                g = self.fresh("g")
                b = self.addr_exp(env)
                cond = self.bool_exp(env)
                fn.body.append(f"let {g} = if ({cond}) "
                               f"borrow_global_mut<R>({a}) else "
                               f"borrow_global_mut<R>({b});")
                fn.body.append(f"{g}.b = {g}.a + {r.randrange(1, 5)};")
            elif style < 0.8:
                g = self.fresh("g")
                n = self.fresh("x")
                fn.body.append(f"let {g} = borrow_global<R>({a});")
                fn.body.append(f"let {n} = {g}.a + {g}.b;")
                env[n] = "u64"
            else:
                g = self.fresh("g")
                fn.body.append(f"let {g} = borrow_global_mut<R>({a});")
                fn.body.append(f"{g}.a = {self.u64_exp(env, 1)};")
                fn.body.append(f"{g}.b = {g}.b + 1;")
        elif kind == "move":
            signers = [n for n, t in env.items() if t == "&signer"]
            if signers and r.random() < 0.5:
                s = r.choice(signers)
                fn.body.append(
                    f"move_to<R>({s}, R {{ a: {self.u64_exp(env, 1)}, "
                    f"b: {self.u64_exp(env, 1)} }});")
            else:
                fn.acquires.add("R")
                v = self.fresh("v")
                n = self.fresh("x")
                fn.body.append(
                    f"let {v} = move_from<R>({self.addr_exp(env)});")
                fn.body.append(f"let {n} = {v}.a + {v}.b;")
                env[n] = "u64"
        elif kind == "call":
            if not helpers:
                return self.session(fn, env, helpers)
            h = r.choice(helpers)
            fn.acquires |= h.acquires
            # choose borrowed locals first so no other argument can
            # mention a local that is mutably borrowed by this call
            arg_env = dict(env)
            borrowed: dict[int, str] = {}
            for i, (_, t) in enumerate(h.params):
                if t == "&mut u64":
                    names = [n for n, ty in arg_env.items() if ty == "u64"]
                    if not names:
                        return
                    x = r.choice(names)
                    del arg_env[x]
                    borrowed[i] = x
            args = []
            for i, (_, t) in enumerate(h.params):
                if i in borrowed:
                    args.append(f"&mut {borrowed[i]}")
                elif t == "u64":
                    args.append(self.u64_exp(arg_env, 1))
                elif t == "bool":
                    args.append(self.bool_exp(arg_env))
                elif t == "address":
                    args.append(self.addr_exp(arg_env))
            call = f"Fz::{h.name}({', '.join(args)})"
            if len(h.rets) == 1:
                n = self.fresh("x")
                fn.body.append(f"let {n} = {call};")
                env[n] = h.rets[0]
            else:
                fn.body.append(f"{call};")

    # -------------------------------------------------- functions

    def helper(self) -> _Fun:
        r = self.rng
        kind = r.choice(["value", "mutref", "global"])
        name = self.fresh("h")
        if kind == "value":
            fn = _Fun(name, [("a", "u64"), ("b", "u64")], ["u64"])
            env = {"a": "u64", "b": "u64"}
            for _ in range(r.randrange(1, 3)):
                self.session(fn, env, [])
            fn.body.append(f"return {self.u64_exp(env)};")
        elif kind == "mutref":
            fn = _Fun(name, [("m", "&mut u64"), ("d", "u64")], [])
            fn.body.append(f"*m = *m {r.choice(['+', '-', '*'])} d;")
            if r.random() < 0.5:
                fn.body.append(f"*m = *m + {r.randrange(1, 5)};")
            fn.body.append("return;")
        else:
            fn = _Fun(name, [("a", "address"), ("d", "u64")], ["u64"],
                      acquires={"R"})
            env = {"a": "address", "d": "u64"}
            g = self.fresh("g")
            if r.random() < 0.5:
                fn.body.append(f"let {g} = borrow_global_mut<R>(a);")
                fn.body.append(f"{g}.a = {g}.a + d;")
                fn.body.append(f"return {g}.b;")
            else:
                fn.body.append(f"let {g} = borrow_global<R>(a);")
                fn.body.append(f"return {g}.a + d;")
        return fn

    def entry(self, helpers: list[_Fun]) -> _Fun:
        r = self.rng
        name = self.fresh("main")
        params = [("s", "&signer"), ("a1", "address"),
                  ("u1", "u64"), ("u2", "u64"), ("c", "bool")]
        fn = _Fun(name, params, [], public=True)
        env = dict(params)
        for _ in range(r.randrange(3, 7)):
            self.session(fn, env, helpers)
        rets = [n for n, t in env.items() if t == "u64"][:2]
        fn.rets = ["u64"] * len(rets)
        if len(rets) > 1:
            fn.body.append("return (" + ", ".join(rets) + ");")
        elif rets:
            fn.body.append(f"return {rets[0]};")
        else:
            fn.body.append("return;")
        return fn

    def module(self) -> tuple[str, list[str]]:
        r = self.rng
        helpers = [self.helper() for _ in range(r.randrange(1, 4))]
        entries = [self.entry(helpers) for _ in range(r.randrange(1, 3))]
        parts = ["module Fz {",
                 "    struct R has key { a: u64, b: u64 }",
                 "    struct P has copy, drop { x: u64, y: u64 }",
                 ""]
        parts += [f.render() for f in helpers + entries]
        parts.append("}")
        return "\n".join(parts), [f"Fz::{f.name}" for f in entries]


# ---------------------------------------------------------------- driver

def _random_memory(rng: random.Random) -> dict:
    label = MemoryLabel("Fz::R", ())
    mem = {}
    for a in ADDRS:
        if rng.random() < 0.7:
            mem[(label, a)] = StructVal("Fz::R", (), (
                ("a", rng.randrange(0, 100)), ("b", rng.randrange(0, 100))))
    return mem


def _random_args(rng: random.Random, fn) -> list:
    from ..model.types import RefT, BOOL, ADDRESS
    args = []
    for i in range(fn.num_params):
        ty = fn.locals[i]
        if isinstance(ty, RefT) or ty == ADDRESS:  # &signer or address
            args.append(rng.choice(ADDRS))
        elif ty == BOOL:
            args.append(rng.random() < 0.5)
        else:
            args.append(rng.choice([0, 1, rng.randrange(0, 60),
                                    2 ** 64 - 1]))
    return args


def fuzz_one(seed: int, index: int, stages=DEFAULT_STAGES,
             runs: int = 3) -> list[dict]:
    """Generate program `index` of `seed` and differentially test it.

    Returns a list of divergence records (empty means the program agreed
    across all stages on all sampled inputs).
    """
    rng = random.Random((seed << 20) | index)
    src, entries = _Gen(rng).module()
    findings: list[dict] = []

    def finding(kind, **kw):
        findings.append({"kind": kind, "seed": seed, "program": index, **kw})

    try:
        model = build_model(parse_source(src, "fuzz.mvm"),
                            {"fuzz.mvm": src})
        check_borrows(model)
    except Exception as e:  # generator must stay within the language
        finding("build-error", error=str(e), source=src)
        return findings

    staged: list[tuple[str, GlobalModel]] = []
    cur = model
    for name in stages:
        try:
            cur = STAGES[name](cur)
        except Exception as e:
            finding("stage-crash", stage=name, error=str(e), source=src)
            return findings
        staged.append((name, cur))

    for fname in entries:
        for _ in range(runs):
            mem = _random_memory(rng)
            args = _random_args(rng, model.functions[fname])
            try:
                base = interpret(model, fname, (), list(args), mem).key()
            except Exception as e:
                finding("interp-crash", stage="build", function=fname,
                        args=args, error=str(e), source=src)
                continue
            for sname, smodel in staged:
                try:
                    got = interpret(smodel, fname, (), list(args),
                                    mem).key()
                except Exception as e:
                    finding("interp-crash", stage=sname, function=fname,
                            args=args, error=str(e), source=src)
                    continue
                if got != base:
                    finding("divergence", stage=sname, function=fname,
                            args=args, expected=repr(base),
                            actual=repr(got), source=src)
    return findings


def run_fuzz(seed: int, count: int, stages=DEFAULT_STAGES,
             report=None) -> list[dict]:
    """Run `count` generated programs for one seed; returns all findings.

    `report`, if given, is called with each finding as it appears (the
    CLI uses it to stream JSON lines).
    """
    all_findings: list[dict] = []
    for i in range(count):
        for f in fuzz_one(seed, i, stages):
            all_findings.append(f)
            if report is not None:
                report(f)
    return all_findings


def finding_to_json(f: dict) -> str:
    slim = {k: v for k, v in f.items() if k != "source"}
    return json.dumps(slim, sort_keys=True)

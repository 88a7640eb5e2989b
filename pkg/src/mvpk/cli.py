"""Command line driver.

Subcommands:

* ``verify`` — run the full pipeline on one or more ``.mvm`` files and
  print diagnostics (stderr) or stage dumps (stdout).
* ``check`` — parse, type check and borrow check only.
* ``fuzz`` — differential fuzzing of the transformation stages against
  the definitional interpreter.

Exit codes: 0 everything proven (or dump/check succeeded), 1 violations
(or a program that fails checking), 2 undecided queries, 3 usage or
infrastructure errors.
"""

from __future__ import annotations

import argparse
import sys

from .errors import MvpkError, SolverCrash, SolverNotFound
from .frontend import ast as A
from .frontend.parser import parse_source
from .model import GlobalModel, ModelErrorGroup, build_model, check_borrows
from .model.irprint import print_function
from .xform.refs import eliminate_refs
from .xform.funspec import inject_fun_specs
from .xform.globalinv import inject_global_invariants
from .mono import specialize
from .backend import (SolverConfig, diagnose, encode_model, run_units,
                      validate_verdicts)
from .interp.fuzz import finding_to_json, run_fuzz

STAGES = ("refs", "spec", "inv", "mono")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="mvpk", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="verify modules")
    v.add_argument("paths", nargs="+")
    v.add_argument("--target-module", action="append", default=None,
                   metavar="M", help="verify only this module (repeatable)")
    v.add_argument("--dump-stage", choices=STAGES,
                   help="print the model after this stage and exit")
    v.add_argument("--solver", help="solver executable (default: bundled)")
    v.add_argument("--timeout", type=float, default=30.0,
                   help="per-query timeout in seconds (default 30)")
    v.add_argument("--jobs", type=int, default=0,
                   help="parallel solver processes (default: automatic)")
    v.add_argument("--relaxed-aborts", action="store_true",
                   help="do not require aborts_if clauses to be complete")
    v.add_argument("--keep-smt", metavar="DIR",
                   help="write the generated problems into DIR")
    v.add_argument("--no-solver", action="store_true",
                   help="generate verification conditions without solving")

    c = sub.add_parser("check", help="parse and type check only")
    c.add_argument("paths", nargs="+")

    f = sub.add_parser("fuzz", help="differential fuzzing of the stages")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--count", type=int, default=100,
                   help="programs per seed (default 100)")
    return p


# ---------------------------------------------------------------- loading

def load_model(paths: list[str]) -> GlobalModel:
    """Parse and check all files into one global model."""
    modules = []
    sources = {}
    for path in paths:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        sources[path] = text
        modules.extend(parse_source(text, path).modules)
    model = build_model(A.Ast(modules), sources)
    check_borrows(model)
    return model


def _print_errors(exc) -> None:
    if isinstance(exc, ModelErrorGroup):
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def _dump(model: GlobalModel) -> str:
    return "\n".join(print_function(model.functions[n])
                     for n in sorted(model.functions))


# ---------------------------------------------------------------- verify

def _cmd_verify(args) -> int:
    try:
        model = load_model(args.paths)
    except OSError as exc:
        print(f"mvpk: {exc}", file=sys.stderr)
        return 3
    except (MvpkError, ModelErrorGroup) as exc:
        _print_errors(exc)
        return 1

    targets = set(args.target_module) if args.target_module else None
    unknown_targets = (targets or set()) - set(model.modules)
    if unknown_targets:
        print(f"mvpk: unknown target module(s): "
              f"{', '.join(sorted(unknown_targets))}", file=sys.stderr)
        return 3

    try:
        refs = eliminate_refs(model)
        spec = inject_fun_specs(refs, relaxed_aborts=args.relaxed_aborts)
        inv = inject_global_invariants(spec, targets=targets)
        mono = specialize(inv)
    except (MvpkError, ModelErrorGroup) as exc:
        _print_errors(exc)
        return 1

    if args.dump_stage:
        staged = {"refs": refs, "spec": spec, "inv": inv, "mono": mono}
        print(_dump(staged[args.dump_stage]))
        return 0

    units = encode_model(mono)
    if targets is not None:
        units = [u for u in units
                 if u.name.split("::")[0] in targets]

    if args.no_solver:
        for u in units:
            for q in u.queries:
                print(f"; {q.unit} [{q.tag}] {q.note}".rstrip())
                print(q.text)
        if args.keep_smt:
            _write_smt(units, args.keep_smt)
        return 0

    config = SolverConfig(path=args.solver, timeout=args.timeout,
                          jobs=args.jobs, keep_smt=args.keep_smt)
    try:
        verdicts = run_units(units, config)
    except (SolverNotFound, SolverCrash) as exc:
        print(f"mvpk: {exc}", file=sys.stderr)
        return 3
    verdicts = validate_verdicts(verdicts, mono, refs)
    result = diagnose(verdicts, model)
    print(result.text, end="", file=sys.stderr)
    return result.exit_code


def _write_smt(units, directory: str) -> None:
    import os
    import re
    os.makedirs(directory, exist_ok=True)
    for u in units:
        for q in u.queries:
            safe = re.sub(r"[^A-Za-z0-9_.-]+", "_",
                          f"{q.unit}.{q.index}.{q.tag}")
            with open(os.path.join(directory, safe + ".smt2"), "w",
                      encoding="utf-8") as f:
                f.write(q.text)


# ---------------------------------------------------------------- check

def _cmd_check(args) -> int:
    try:
        load_model(args.paths)
    except OSError as exc:
        print(f"mvpk: {exc}", file=sys.stderr)
        return 3
    except (MvpkError, ModelErrorGroup) as exc:
        _print_errors(exc)
        return 1
    return 0


# ---------------------------------------------------------------- fuzz

def _cmd_fuzz(args) -> int:
    def report(finding):
        print(finding_to_json(finding))

    findings = run_fuzz(args.seed, args.count, report=report)
    print(f"fuzz: seed {args.seed}, {args.count} programs, "
          f"{len(findings)} finding(s)", file=sys.stderr)
    return 1 if findings else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"verify": _cmd_verify, "check": _cmd_check,
               "fuzz": _cmd_fuzz}[args.command]
    try:
        return handler(args)
    except BrokenPipeError:
        # reader went away (e.g. piping a dump through `head`)
        try:
            sys.stdout.close()
        except OSError:
            pass
        return 0


if __name__ == "__main__":
    sys.exit(main())

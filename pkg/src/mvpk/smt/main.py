"""Command line front end for the bundled solver (`mvpk-solve`).

Reads an SMT-LIB script from the file given as the sole argument (or
from stdin) and prints the `check-sat` verdict, followed by the model if
the script requests one. The first token of output is always one of
``sat``, ``unsat`` or ``unknown``.
"""

from __future__ import annotations

import sys

from .sexpr import SexprError, parse_all
from .solver import Context, GiveUp, SolverError


def run_script(text: str) -> str:
    ctx = Context()
    out: list[str] = []
    for cmd in parse_all(text):
        res = ctx.execute(_to_tuple(cmd))
        if res is not None:
            out.append(res)
    return "\n".join(out)


def _to_tuple(e):
    return tuple(_to_tuple(x) for x in e) if isinstance(e, list) else e


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        if argv:
            with open(argv[0], encoding="utf-8") as f:
                text = f.read()
        else:
            text = sys.stdin.read()
    except OSError as exc:
        print("unknown")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        output = run_script(text)
    except (SexprError, SolverError, GiveUp, RecursionError) as exc:
        print("unknown")
        print(f"error: {exc}", file=sys.stderr)
        return 0
    if output:
        print(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())

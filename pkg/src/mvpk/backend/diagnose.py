"""Rendering verdicts as source-anchored diagnostics.

Each violation prints a message keyed by the assert tag, an excerpt of
the offending source line with an underline, and the execution trace
with parameter valuations taken from the solver model::

    error: abort not covered by any of the `aborts_if` clauses
       -- account.mvm:30:5
       |
    12 |         let b = &mut borrow_global_mut<Account>(a).balance;
       |                      ----------------- abort happened here
       |
       =     at account.mvm:5: Account::withdraw
       =         a = 0x2
       =         amount = 7u64

Output is deterministic: verdicts are rendered in (unit name, query
index) order regardless of solver completion order.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DUMMY_SPAN, SourceSpan
from ..model import GlobalModel
from ..model.types import (ADDRESS, BOOL, NUM, SIGNER, U8, U64,
                           EventHandleT, Type)
from .encode import Query
from .solver import Verdict


@dataclass
class Diagnostics:
    text: str
    exit_code: int                   # 0 proven, 1 violations, 2 unknowns


def _message(q: Query) -> str:
    tag = q.tag
    if tag == "aborts_if-abort":
        return "abort not covered by any of the `aborts_if` clauses"
    if tag == "aborts_if-return":
        return ("function does not abort although an `aborts_if` "
                "condition holds")
    if tag == "ensures":
        return "post-condition does not hold"
    if tag == "data-invariant":
        return "data invariant does not hold"
    if tag == "modifies-permission":
        return ("function modifies memory not covered by its "
                "`modifies` clauses")
    if tag == "emits-completeness":
        return "emitted event not covered by any `emits` clause"
    if tag == "emits-relevance":
        return "`emits` clause event is not emitted"
    if tag == "global-invariant":
        return f"global memory invariant `{q.note}` does not hold"
    if tag == "requires-at-callsite":
        return f"precondition of `{q.note}` does not hold at the call site"
    return f"verification condition `{tag}` does not hold"


_UNDERLINE_LABEL = {
    "aborts_if-abort": "abort happened here",
    "aborts_if-return": "function returns here",
    "ensures": "post-condition declared here",
    "data-invariant": "value packed here",
    "modifies-permission": "memory modified here",
    "emits-completeness": "event emitted here",
    "emits-relevance": "`emits` clause declared here",
    "global-invariant": "invariant does not hold here",
    "requires-at-callsite": "call happens here",
}


def format_value(value, ty: Type) -> str:
    if value is None:
        return "?"
    if ty == BOOL:
        return "true" if value else "false"
    if ty == SIGNER:
        return f"signer{{{hex(int(value))}}}"
    if ty == ADDRESS:
        return hex(int(value))
    if ty == U8:
        return f"{int(value)}u8"
    if ty == U64:
        return f"{int(value)}u64"
    if ty == NUM:
        return str(int(value))
    if isinstance(ty, EventHandleT):
        return f"handle{{{int(value)}}}"
    return str(value)


def _source_line(model: GlobalModel, span: SourceSpan) -> str | None:
    text = model.sources.get(span.file)
    if text is None:
        return None
    lines = text.splitlines()
    if not 1 <= span.line <= len(lines):
        return None
    return lines[span.line - 1]


def _excerpt(model: GlobalModel, span: SourceSpan, label: str) -> list[str]:
    line = _source_line(model, span)
    if line is None:
        return []
    gutter = len(str(span.line))
    pad = " " * gutter
    width = max(1, min(span.end - span.start,
                       len(line) - span.column + 1))
    marker = " " * (span.column - 1) + "-" * width
    return [
        f"{pad} |",
        f"{span.line} | {line}",
        f"{pad} | {marker} {label}",
        f"{pad} |",
    ]


def _render_violation(v: Verdict, model: GlobalModel) -> str:
    q = v.query
    out = [f"error: {_message(q)}",
           f"   -- {q.span}"]
    site = q.site_span or q.span
    if site is not DUMMY_SPAN:
        out.extend(_excerpt(model, site,
                            _UNDERLINE_LABEL.get(q.tag, "here")))
    for step in q.trace:
        out.append(f"   =     at {step.span.file}:{step.span.line}: "
                   f"{step.fname}")
        for display, const, ty in step.params:
            val = v.model.get(const.strip("|"))
            out.append(f"   =         {display} = "
                       f"{format_value(val, ty)}")
    return "\n".join(out)


def _render_unknown(v: Verdict) -> str:
    q = v.query
    why = v.detail or "solver returned unknown"
    return (f"warning: could not decide `{q.tag}` for {q.unit} "
            f"({q.span}): {why}")


def diagnose(verdicts: list[Verdict], model: GlobalModel) -> Diagnostics:
    """All diagnostics plus the process exit code for these verdicts."""
    ordered = sorted(verdicts, key=lambda v: (v.query.unit, v.query.index))
    blocks = []
    n_violated = n_unknown = 0
    for v in ordered:
        if v.status == "violated":
            n_violated += 1
            blocks.append(_render_violation(v, model))
        elif v.status == "unknown":
            n_unknown += 1
            blocks.append(_render_unknown(v))
    if not blocks:
        return Diagnostics("verification successful\n", 0)
    tail = [f"verification failed: {n_violated} violation(s), "
            f"{n_unknown} undecided"]
    code = 1 if n_violated else 2
    return Diagnostics("\n\n".join(blocks) + "\n\n" + tail[0] + "\n", code)

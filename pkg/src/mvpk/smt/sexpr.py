"""S-expression reader for the SMT-LIB subset the solver accepts."""

from __future__ import annotations


class SexprError(Exception):
    pass


def tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            yield text[i:j + 1]
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            yield text[i:j + 1]
            i = j + 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();|":
                j += 1
            yield text[i:j]
            i = j


def parse_all(text: str) -> list:
    """Parse a sequence of top-level s-expressions (atoms are strings)."""
    stack: list[list] = [[]]
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SexprError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SexprError("unbalanced '('")
    return stack[0]


def show(e) -> str:
    if isinstance(e, list):
        return "(" + " ".join(show(x) for x in e) + ")"
    return e

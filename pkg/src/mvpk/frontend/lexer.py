"""Hand-written lexer for MiniMove (`.mvm` files, UTF-8, `//` comments)."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError, SourceSpan

KEYWORDS = {
    "module", "struct", "fun", "public", "has", "let", "if", "else",
    "return", "assert", "abort", "acquires", "spec", "requires", "ensures",
    "aborts_if", "modifies", "emits", "invariant", "old",
    "forall", "exists", "where", "pragma", "const", "true", "false", "mut",
}

PUNCT = [
    "::", "==", "!=", "<=", ">=", "&&", "||",
    "{", "}", "(", ")", "[", "]", "<", ">", ",", ";", ":", ".", "&",
    "!", "=", "+", "-", "*", "/", "%",
]


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "num", "addr", "eof", a keyword, or a punctuation
    text: str
    value: int | None
    suffix: str | None
    span: SourceSpan


def tokenize(text: str, file: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(start, start_line, start_col, end):
        return SourceSpan(file, start, end, start_line, start_col)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start, sl, sc = i, line, col
        if c.isalpha() or c == "_":
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            col += i - start
            kind = word if word in KEYWORDS else "ident"
            toks.append(Token(kind, word, None, None, span(start, sl, sc, i)))
            continue
        if c.isdigit():
            if text.startswith("0x", i) or text.startswith("0X", i):
                i += 2
                h = i
                while i < n and (text[i] in "0123456789abcdefABCDEF"):
                    i += 1
                if i == h:
                    raise ParseError("invalid address literal",
                                     span(start, sl, sc, i))
                col += i - start
                toks.append(Token("addr", text[start:i],
                                  int(text[h:i], 16), None,
                                  span(start, sl, sc, i)))
                continue
            while i < n and text[i].isdigit():
                i += 1
            value = int(text[start:i])
            suffix = None
            for s in ("u64", "u8"):
                if text.startswith(s, i):
                    suffix = s
                    i += len(s)
                    break
            col += i - start
            toks.append(Token("num", text[start:i], value, suffix,
                              span(start, sl, sc, i)))
            continue
        for p in PUNCT:
            if text.startswith(p, i):
                i += len(p)
                col += len(p)
                toks.append(Token(p, p, None, None, span(start, sl, sc, i)))
                break
        else:
            raise ParseError(f"unexpected character {c!r}",
                             span(start, sl, sc, i + 1))
    toks.append(Token("eof", "", None, None, span(n, line, col, n)))
    return toks

"""Recursive descent parser for MiniMove.

Generic argument lists in expressions (`f<u64>(x)` vs. `a < b`) are resolved
by bounded backtracking: a `<` after a name is only a type argument list when
a well-formed list closed by `>` is followed by `(` or `{`.
"""

from __future__ import annotations

from ..errors import ParseError
from . import ast as A
from .lexer import Token, tokenize

_BIN_LEVELS = [
    {"||"},
    {"&&"},
    {"==", "!=", "<", "<=", ">", ">="},
    {"+", "-"},
    {"*", "/", "%"},
]


class Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # ------------------------------------------------------------- helpers

    def peek(self, k=0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(
                f"expected {kind!r}, found {t.text or 'end of file'!r}",
                t.span, expected={kind})
        return self.next()

    def accept(self, kind: str) -> Token | None:
        if self.at(kind):
            return self.next()
        return None

    def ident(self) -> Token:
        return self.expect("ident")

    def path_name(self) -> tuple[str, Token]:
        """Possibly `::`-qualified name."""
        t = self.ident()
        name = t.text
        while self.at("::"):
            self.next()
            name += "::" + self.ident().text
        return name, t

    # ------------------------------------------------------------- top level

    def parse_ast(self) -> A.Ast:
        modules = []
        while not self.at("eof"):
            modules.append(self.parse_module())
        return A.Ast(modules)

    def parse_module(self) -> A.ModuleDecl:
        start = self.expect("module")
        name = self.ident().text
        self.expect("{")
        m = A.ModuleDecl(name, [], [], [], [], [], [], span=start.span)
        while not self.at("}"):
            t = self.peek()
            if t.kind == "const":
                m.consts.append(self.parse_const())
            elif t.kind == "struct":
                m.structs.append(self.parse_struct())
            elif t.kind in ("fun", "public"):
                m.funs.append(self.parse_fun())
            elif t.kind == "spec":
                if self.peek(1).kind == "fun":
                    m.spec_funs.append(self.parse_spec_fun())
                else:
                    m.spec_blocks.append(self.parse_spec_block())
            elif t.kind == "invariant":
                m.invariants.append(self.parse_invariant())
            else:
                raise ParseError(
                    f"expected a declaration, found {t.text!r}", t.span,
                    expected={"const", "struct", "fun", "public", "spec",
                              "invariant"})
        end = self.expect("}")
        m.span = start.span.merge(end.span)
        return m

    def parse_const(self) -> A.ConstDecl:
        start = self.expect("const")
        name = self.ident().text
        self.expect(":")
        ty = self.parse_type()
        self.expect("=")
        value = self.parse_exp()
        self.expect(";")
        return A.ConstDecl(name, ty, value, span=start.span)

    def parse_struct(self) -> A.StructDecl:
        start = self.expect("struct")
        name = self.ident().text
        tparams = self.parse_type_params()
        abilities = []
        if self.accept("has"):
            abilities.append(self.ability())
            while self.accept(","):
                abilities.append(self.ability())
        self.expect("{")
        fields = []
        while not self.at("}"):
            ft = self.ident()
            self.expect(":")
            fty = self.parse_type()
            fields.append(A.StructField(ft.text, fty, span=ft.span))
            if not self.accept(","):
                break
        self.expect("}")
        return A.StructDecl(name, tparams, abilities, fields, span=start.span)

    def ability(self) -> str:
        t = self.peek()
        if t.kind == "ident" and t.text in ("key", "store", "drop", "copy"):
            return self.next().text
        raise ParseError(f"expected an ability, found {t.text!r}", t.span,
                         expected={"key", "store", "drop", "copy"})

    def parse_fun(self) -> A.FunDecl:
        start = self.peek()
        visibility = "private"
        if self.accept("public"):
            if self.accept("("):
                t = self.ident()
                if t.text != "script":
                    raise ParseError("expected 'script'", t.span,
                                     expected={"script"})
                visibility = "script"
                self.expect(")")
            else:
                visibility = "public"
        self.expect("fun")
        name = self.ident().text
        tparams = self.parse_type_params()
        self.expect("(")
        params = []
        while not self.at(")"):
            pn = self.ident().text
            self.expect(":")
            params.append((pn, self.parse_type()))
            if not self.accept(","):
                break
        self.expect(")")
        rets: list[A.TypeNode] = []
        if self.accept(":"):
            if self.accept("("):
                rets.append(self.parse_type())
                while self.accept(","):
                    rets.append(self.parse_type())
                self.expect(")")
            else:
                rets.append(self.parse_type())
        acquires = []
        if self.at("acquires"):
            self.next()
            acquires.append(self.ident().text)
            while self.accept(","):
                acquires.append(self.ident().text)
        body = self.parse_block()
        return A.FunDecl(name, visibility, tparams, params, rets, acquires,
                         body, span=start.span)

    def parse_type_params(self) -> list[str]:
        tparams = []
        if self.accept("<"):
            tparams.append(self.ident().text)
            while self.accept(","):
                tparams.append(self.ident().text)
            self.expect(">")
        return tparams

    # ------------------------------------------------------------- specs

    def parse_spec_block(self) -> A.SpecBlock:
        start = self.expect("spec")
        target = self.ident().text
        self.expect("{")
        members: list[A.SpecMember] = []
        while not self.at("}"):
            members.append(self.parse_spec_member())
        self.expect("}")
        return A.SpecBlock(target, members, span=start.span)

    def parse_spec_member(self) -> A.SpecMember:
        t = self.peek()
        if t.kind == "requires":
            self.next()
            e = self.parse_exp()
            self.expect(";")
            return A.Requires(e, span=t.span)
        if t.kind == "ensures":
            self.next()
            e = self.parse_exp()
            self.expect(";")
            return A.Ensures(e, span=t.span)
        if t.kind == "aborts_if":
            self.next()
            e = self.parse_exp()
            self.expect(";")
            return A.AbortsIf(e, span=t.span)
        if t.kind == "modifies":
            self.next()
            e = self.parse_exp()
            self.expect(";")
            if not (isinstance(e, A.CallExp) and e.name == "global"
                    and len(e.targs) == 1 and len(e.args) == 1
                    and isinstance(e.targs[0], A.NamedType)):
                raise ParseError("modifies expects global<T>(addr)", t.span)
            return A.ModifiesSpec(e.targs[0], e.args[0], span=t.span)
        if t.kind == "emits":
            self.next()
            msg = self.parse_exp()
            kw = self.ident()
            if kw.text != "to":
                raise ParseError("expected 'to'", kw.span, expected={"to"})
            handle = self.parse_exp()
            cond = None
            if self.accept("if"):
                cond = self.parse_exp()
            self.expect(";")
            return A.EmitsSpec(msg, handle, cond, span=t.span)
        if t.kind == "let":
            self.next()
            name = self.ident().text
            self.expect("=")
            e = self.parse_exp()
            self.expect(";")
            return A.SpecLet(name, e, span=t.span)
        if t.kind == "pragma":
            self.next()
            name = self.ident().text
            self.expect(";")
            return A.PragmaSpec(name, span=t.span)
        if t.kind == "invariant":
            self.next()
            e = self.parse_exp()
            self.expect(";")
            return A.DataInvariant(e, span=t.span)
        raise ParseError(
            f"expected a spec member, found {t.text!r}", t.span,
            expected={"requires", "ensures", "aborts_if", "modifies",
                      "emits", "let", "pragma", "invariant"})

    def parse_spec_fun(self) -> A.SpecFunDecl:
        start = self.expect("spec")
        self.expect("fun")
        name = self.ident().text
        tparams = self.parse_type_params()
        self.expect("(")
        params = []
        while not self.at(")"):
            pn = self.ident().text
            self.expect(":")
            params.append((pn, self.parse_type()))
            if not self.accept(","):
                break
        self.expect(")")
        self.expect(":")
        ret = self.parse_type()
        self.expect("{")
        body = self.parse_exp()
        self.expect("}")
        return A.SpecFunDecl(name, tparams, params, ret, body,
                             span=start.span)

    def parse_invariant(self) -> A.InvariantDecl:
        start = self.expect("invariant")
        is_update = False
        if self.at("ident") and self.peek().text == "update":
            self.next()
            is_update = True
        tparams = self.parse_type_params()
        tag = None
        if self.accept("["):
            tag = self.ident().text
            self.expect("]")
        body = self.parse_exp()
        self.expect(";")
        return A.InvariantDecl(tag, is_update, tparams, body, span=start.span)

    # ------------------------------------------------------------- types

    def parse_type(self) -> A.TypeNode:
        t = self.peek()
        if t.kind == "&":
            self.next()
            mut = bool(self.accept("mut"))
            inner = self.parse_type()
            return A.RefType(inner, mut, span=t.span)
        name, tok = self.path_name()
        targs = []
        if self.accept("<"):
            targs.append(self.parse_type())
            while self.accept(","):
                targs.append(self.parse_type())
            self.expect(">")
        return A.NamedType(name, targs, span=tok.span)

    # ------------------------------------------------------------- statements

    def parse_block(self) -> list[A.Stmt]:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            stmts.append(self.parse_stmt())
        self.expect("}")
        return stmts

    def parse_stmt(self) -> A.Stmt:
        t = self.peek()
        if t.kind == "ident" and t.text in ("while", "loop", "for"):
            raise ParseError("loops are not supported", t.span)
        if t.kind == "let":
            self.next()
            name = self.ident().text
            ty = None
            if self.accept(":"):
                ty = self.parse_type()
            init = None
            if self.accept("="):
                init = self.parse_exp()
            self.expect(";")
            return A.LetStmt(name, ty, init, span=t.span)
        if t.kind == "assert":
            self.next()
            self.expect("(")
            cond = self.parse_exp()
            self.expect(",")
            code = self.parse_exp()
            self.expect(")")
            self.expect(";")
            return A.AssertStmt(cond, code, span=t.span)
        if t.kind == "abort":
            self.next()
            code = self.parse_exp()
            self.expect(";")
            return A.AbortStmt(code, span=t.span)
        if t.kind == "if":
            return self.parse_if_stmt()
        if t.kind == "return":
            self.next()
            values: list[A.Exp] = []
            if not self.at(";"):
                e = self.parse_exp()
                values = e.items if isinstance(e, A.TupleExp) else [e]
            self.expect(";")
            return A.ReturnStmt(values, span=t.span)
        e = self.parse_exp()
        if self.accept("="):
            rhs = self.parse_exp()
            self.expect(";")
            if not isinstance(e, (A.NameExp, A.DerefExp, A.FieldExp)):
                raise ParseError("invalid assignment target", t.span)
            return A.AssignStmt(e, rhs, span=t.span)
        self.expect(";")
        return A.ExprStmt(e, span=t.span)

    def parse_if_stmt(self) -> A.IfStmt:
        start = self.expect("if")
        self.expect("(")
        cond = self.parse_exp()
        self.expect(")")
        then = self.parse_block()
        els: list[A.Stmt] = []
        if self.accept("else"):
            if self.at("if"):
                els = [self.parse_if_stmt()]
            else:
                els = self.parse_block()
        return A.IfStmt(cond, then, els, span=start.span)

    # ------------------------------------------------------------- expressions

    def parse_exp(self) -> A.Exp:
        return self.parse_bin(0)

    def parse_bin(self, level: int) -> A.Exp:
        if level >= len(_BIN_LEVELS):
            return self.parse_unary()
        left = self.parse_bin(level + 1)
        while self.peek().kind in _BIN_LEVELS[level]:
            op = self.next()
            right = self.parse_bin(level + 1)
            left = A.BinExp(op.kind, left, right,
                            span=left.span.merge(right.span))
        return left

    def parse_unary(self) -> A.Exp:
        t = self.peek()
        if t.kind == "!":
            self.next()
            return A.UnExp("!", self.parse_unary(), span=t.span)
        if t.kind == "&":
            self.next()
            mut = bool(self.accept("mut"))
            return A.BorrowExp(self.parse_unary(), mut, span=t.span)
        if t.kind == "*":
            self.next()
            return A.DerefExp(self.parse_unary(), span=t.span)
        return self.parse_postfix()

    def parse_postfix(self) -> A.Exp:
        e = self.parse_primary()
        while self.at("."):
            self.next()
            f = self.ident()
            e = A.FieldExp(e, f.text, span=e.span.merge(f.span))
        return e

    def parse_primary(self) -> A.Exp:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return A.NumLit(t.value, t.suffix, span=t.span)
        if t.kind == "addr":
            self.next()
            return A.AddressLit(t.value, span=t.span)
        if t.kind in ("true", "false"):
            self.next()
            return A.BoolLit(t.kind == "true", span=t.span)
        if t.kind == "old":
            self.next()
            self.expect("(")
            e = self.parse_exp()
            close = self.expect(")")
            return A.OldExp(e, span=t.span.merge(close.span))
        if t.kind == "if":
            self.next()
            self.expect("(")
            cond = self.parse_exp()
            self.expect(")")
            then = self.parse_exp()
            self.expect("else")
            els = self.parse_exp()
            return A.IfExp(cond, then, els, span=t.span.merge(els.span))
        if t.kind == "forall":
            return self.parse_quant("forall")
        if t.kind == "exists":
            # Either the quantifier or the exists<T>(addr) builtin.
            if self.peek(1).kind == "ident" and self.peek(2).kind == ":":
                return self.parse_quant("exists")
            self.next()
            return self.finish_call_or_pack("exists", t)
        if t.kind == "(":
            self.next()
            e = self.parse_exp()
            if self.at(","):
                items = [e]
                while self.accept(","):
                    items.append(self.parse_exp())
                close = self.expect(")")
                return A.TupleExp(items, span=t.span.merge(close.span))
            self.expect(")")
            return e
        if t.kind == "ident":
            name, tok = self.path_name()
            return self.finish_call_or_pack(name, tok)
        raise ParseError(f"expected an expression, found {t.text!r}", t.span,
                         expected={"expression"})

    def parse_quant(self, kind: str) -> A.QuantExp:
        start = self.next()
        var = self.ident().text
        self.expect(":")
        vtype = self.parse_type()
        where = None
        if self.accept("where"):
            where = self.parse_exp()
        self.expect(":")
        body = self.parse_exp()
        return A.QuantExp(kind, var, vtype, where, body,
                          span=start.span.merge(body.span))

    def finish_call_or_pack(self, name: str, tok: Token) -> A.Exp:
        targs: list[A.TypeNode] = []
        if self.at("<"):
            save = self.pos
            try:
                self.next()
                targs.append(self.parse_type())
                while self.accept(","):
                    targs.append(self.parse_type())
                self.expect(">")
                if not (self.at("(") or self.at("{")):
                    raise ParseError("not a type argument list", tok.span)
            except ParseError:
                self.pos = save
                targs = []
        if self.at("("):
            self.next()
            args = []
            while not self.at(")"):
                args.append(self.parse_exp())
                if not self.accept(","):
                    break
            close = self.expect(")")
            return A.CallExp(name, targs, args, span=tok.span.merge(close.span))
        if self.at("{"):
            self.next()
            fields = []
            while not self.at("}"):
                fn = self.ident().text
                self.expect(":")
                fields.append((fn, self.parse_exp()))
                if not self.accept(","):
                    break
            close = self.expect("}")
            return A.PackExp(name, targs, fields,
                             span=tok.span.merge(close.span))
        if targs:
            raise ParseError("type arguments require a call or pack", tok.span)
        return A.NameExp(name, span=tok.span)


def parse_source(text: str, file: str = "<input>") -> A.Ast:
    """Parse MiniMove source text into an AST. Raises ParseError."""
    return Parser(tokenize(text, file)).parse_ast()

"""Concrete syntax.

    prog  ::= expr
    expr  ::= "fun" binder+ "->" expr
            | "let" "rec" ID binder+ [":" type] "=" expr "in" expr
            | "let" ID binder* [":" type] "=" expr "in" expr
            | "rec" ID binder [":" type] "->" expr
            | "if" expr "then" expr "else" expr
            | "case" expr "of" "inl" binder "->" expr "|" "inr" binder "->" expr
            | "flip" RAT "{" expr "}" "{" expr "}"
            | "flipr" RAT RAT "{" expr "}" "{" expr "}"
            | "choose" "{" expr "}" "{" expr "}"
            | "emit" STRING+ ";" expr
            | "reward" RAT ";" expr
            | cmp [";" expr]
    cmp   ::= sum [("<" | "<=" | ">" | ">=" | "==") sum]
    sum   ::= prod (("+" | "-") prod)*
    prod  ::= unary (("*" | "/") unary)*
    unary ::= "-" unary | app
    app   ::= ("fst" | "snd" | "inl" | "inr" | "absurd") atom
            | "eff" OPNAME atom | "con" OPNAME atom | atom atom*
    atom  ::= ID | NUMBER | "true" | "false" | "()" | "(" expr ")" | "(" expr "," expr ")"
    binder ::= ID | "_" | "(" ID ":" type ")"
    type  ::= tsum ["->" type];  tsum ::= tprod ("+" tprod)*;  tprod ::= tatom ("*" tatom)*
    tatom ::= "unit" | "empty" | "bool" | "real" | "state" | ID | "(" type ")"

Prefix forms extend as far to the right as possible.  ``M; N`` is
``let _ = M in N``.  Identifiers starting with ``__`` are reserved for
product programs and rejected unless ``allow_reserved`` is set.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from . import signature as sg
from .terms import (
    UNIT_VAL,
    Absurd,
    App,
    Case,
    Const,
    Effect,
    Inj,
    Lam,
    Lit,
    Pair,
    Proj,
    Rec,
    Term,
    Var,
    false_,
    true_,
)
from .types import BOOL, EMPTY, REAL, STATE, UNIT, Arrow, Base, Prod, Sum, Type

RESERVED_PREFIX = "__"
STATE_VAR = "__y"

KEYWORDS = {
    "let", "rec", "in", "fun", "if", "then", "else", "flip", "flipr", "choose",
    "emit", "reward", "case", "of", "inl", "inr", "fst", "snd", "absurd",
    "eff", "con", "true", "false",
}


class ParseError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.msg = msg
        self.line = line
        self.col = col


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # ID OPNAME NUM STR SYM EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*|\(\*.*?\*\))
  | (?P<opname>[A-Za-z_][A-Za-z0-9_']*\[[^\]\s]*\])
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>"[^"\n]*")
  | (?P<sym>->|<=|>=|==|\(\)|[(){};,:|+\-*/<>=])
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        col = pos - line_start + 1
        if kind != "ws":
            tokens.append(Token({"opname": "OPNAME", "id": "ID", "num": "NUM", "str": "STR", "sym": "SYM"}[kind], chunk, line, col))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens


# unresolvable binder name used for desugared, unreferenced binders
HOLE = "_"


class Parser:
    def __init__(self, text: str, sig: sg.Signature, ctx_names: list[str], allow_reserved: bool):
        self.toks = tokenize(text)
        self.i = 0
        self.sig = sig
        self.allow_reserved = allow_reserved
        # innermost binder last; free context variables at the bottom
        self.scope: list[str] = list(ctx_names)

    # -- token helpers --------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("SYM", "ID")

    def at_kw(self, kw: str) -> bool:
        return self.tok.kind == "ID" and self.tok.text == kw

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self) -> str:
        t = self.tok
        if t.kind != "ID" or t.text in KEYWORDS:
            raise self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        if t.text.startswith(RESERVED_PREFIX) and not self.allow_reserved:
            raise self.error(f"{t.text} is reserved for product programs")
        self.i += 1
        return t.text

    # -- scope ------------------------------------------------------------
    def bind(self, *names: str):
        parser = self

        class _Scope:
            def __enter__(self):
                parser.scope.extend(names)

            def __exit__(self, *exc):
                del parser.scope[len(parser.scope) - len(names):]

        return _Scope()

    def lookup(self, name: str, tok: Token) -> Var:
        if name != HOLE:
            for depth, bound in enumerate(reversed(self.scope)):
                if bound == name:
                    return Var(depth, name)
        raise self.error(f"unbound variable {name!r}", tok)

    # -- types ------------------------------------------------------------
    def type_(self) -> Type:
        left = self.type_sum()
        if self.at("->"):
            self.advance()
            return Arrow(left, self.type_())
        return left

    def type_sum(self) -> Type:
        t = self.type_prod()
        while self.at("+"):
            self.advance()
            t = Sum(t, self.type_prod())
        return t

    def type_prod(self) -> Type:
        t = self.type_atom()
        while self.at("*"):
            self.advance()
            t = Prod(t, self.type_atom())
        return t

    def type_atom(self) -> Type:
        if self.at("("):
            self.advance()
            t = self.type_()
            self.expect(")")
            return t
        tok = self.tok
        if tok.kind != "ID":
            raise self.error(f"expected a type, found {tok.text!r}")
        self.advance()
        match tok.text:
            case "unit":
                return UNIT
            case "empty":
                return EMPTY
            case "bool":
                return BOOL
            case "real":
                return REAL
            case "state":
                if not self.allow_reserved:
                    raise self.error("type 'state' is reserved for product programs", tok)
                return STATE
            case name if name in self.sig.bases:
                return Base(name)
        raise self.error(f"unknown base type {tok.text!r}", tok)

    # -- binders ----------------------------------------------------------
    def binder(self) -> tuple[str, Type | None]:
        if self.at("("):
            self.advance()
            name = self.binder_name()
            self.expect(":")
            ty = self.type_()
            self.expect(")")
            return name, ty
        return self.binder_name(), None

    def binder_name(self) -> str:
        if self.tok.kind == "ID" and self.tok.text == HOLE:
            self.advance()
            return HOLE
        return self.ident()

    def at_binder(self) -> bool:
        t = self.tok
        if t.kind == "ID" and t.text not in KEYWORDS:
            return True
        # "(x : t)" but not "()" or an expression in parentheses
        return (
            t.text == "("
            and self.toks[self.i + 1].kind == "ID"
            and self.toks[self.i + 2].text == ":"
        )

    # -- expressions --------------------------------------------------------
    def program(self) -> Term:
        e = self.expr()
        if self.tok.kind != "EOF":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Term:
        t = self.tok
        if t.kind == "ID":
            handler = {
                "fun": self.fun_expr,
                "let": self.let_expr,
                "rec": self.rec_expr,
                "if": self.if_expr,
                "case": self.case_expr,
                "flip": self.flip_expr,
                "flipr": self.flipr_expr,
                "choose": self.choose_expr,
                "emit": self.emit_expr,
                "reward": self.reward_expr,
            }.get(t.text)
            if handler:
                return handler()
        e = self.cmp_expr()
        if self.at(";"):
            self.advance()
            with self.bind(HOLE):
                rest = self.expr()
            return App(Lam(HOLE, None, rest), e)
        return e

    def lambdas(self, binders: list[tuple[str, Type | None]], body_parser) -> Term:
        if not binders:
            return body_parser()
        (name, ty), rest = binders[0], binders[1:]
        with self.bind(name):
            return Lam(name, ty, self.lambdas(rest, body_parser))

    def fun_expr(self) -> Term:
        self.advance()
        binders = [self.binder()]
        while not self.at("->"):
            binders.append(self.binder())
        self.expect("->")
        return self.lambdas(binders, self.expr)

    def let_expr(self) -> Term:
        self.advance()
        if self.at_kw("rec"):
            self.advance()
            fname = self.ident()
            x, xty = self.binder()
            more = []
            while self.at_binder():
                more.append(self.binder())
            ret = self.opt_return_type()
            self.expect("=")
            with self.bind(fname, x):
                body = self.lambdas(more, self.expr)
            cod = ret
            if more:
                cod = self._curried_type(more, ret)
            bound: Term = Rec(fname, x, body, xty, cod)
            self.expect_kw("in")
            with self.bind(fname):
                rest = self.expr()
            return App(Lam(fname, None, rest), bound)
        name = self.binder_name()
        params = []
        while self.at_binder():
            params.append(self.binder())
        ret = self.opt_return_type()
        self.expect("=")
        bound = self.lambdas(params, self.expr)
        self.expect_kw("in")
        with self.bind(name):
            rest = self.expr()
        ty = None
        if ret is not None:
            ty = self._curried_type(params, ret) if params else ret
        return App(Lam(name, ty, rest), bound)

    @staticmethod
    def _curried_type(params: list[tuple[str, Type | None]], ret: Type | None) -> Type | None:
        if ret is None or any(t is None for _, t in params):
            return None
        out = ret
        for _, t in reversed(params):
            out = Arrow(t, out)
        return out

    def opt_return_type(self, arrows: bool = True) -> Type | None:
        # in `rec f x : t -> body` the arrow ends the type, so an arrow
        # return type must be parenthesised there
        if self.at(":"):
            self.advance()
            return self.type_() if arrows else self.type_sum()
        return None

    def expect_kw(self, kw: str) -> None:
        if not self.at_kw(kw):
            raise self.error(f"expected {kw!r}, found {self.tok.text or 'end of input'!r}")
        self.advance()

    def rec_expr(self) -> Term:
        self.advance()
        fname = self.ident()
        x, xty = self.binder()
        ret = self.opt_return_type(arrows=False)
        self.expect("->")
        with self.bind(fname, x):
            body = self.expr()
        return Rec(fname, x, body, xty, ret)

    def if_expr(self) -> Term:
        self.advance()
        cond = self.expr()
        self.expect_kw("then")
        with self.bind(HOLE):
            then = self.expr()
        self.expect_kw("else")
        with self.bind(HOLE):
            other = self.expr()
        return Case(cond, HOLE, then, HOLE, other)

    def case_expr(self) -> Term:
        self.advance()
        scrut = self.expr()
        self.expect_kw("of")
        self.expect_kw("inl")
        x1, t1 = self.binder()
        self.expect("->")
        with self.bind(x1):
            left = self.expr()
        self.expect("|")
        self.expect_kw("inr")
        x2, t2 = self.binder()
        self.expect("->")
        with self.bind(x2):
            right = self.expr()
        return Case(scrut, x1, left, x2, right, t1, t2)

    def rational(self) -> Fraction:
        tok = self.tok
        if tok.kind != "NUM":
            raise self.error(f"expected a rational, found {tok.text!r}")
        self.advance()
        text = tok.text
        if self.at("/"):
            self.advance()
            den = self.tok
            if den.kind != "NUM":
                raise self.error("expected a denominator")
            self.advance()
            text = f"{text}/{den.text}"
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise self.error(f"bad rational {text!r}", tok) from None

    def braced(self) -> Term:
        self.expect("{")
        e = self.expr()
        self.expect("}")
        return e

    def branch(self, eff: str, tok: Token) -> Term:
        self.check_effect(eff, tok)
        with self.bind(HOLE):
            left = self.braced()
        with self.bind(HOLE):
            right = self.braced()
        return Case(Effect(eff, UNIT_VAL), HOLE, left, HOLE, right)

    def flip_expr(self) -> Term:
        tok = self.advance()
        p = self.rational()
        return self.branch(sg.flip_name(p), tok)

    def flipr_expr(self) -> Term:
        tok = self.advance()
        p = self.rational()
        r = self.rational()
        return self.branch(sg.flipr_name(p, r), tok)

    def choose_expr(self) -> Term:
        tok = self.advance()
        return self.branch("choose", tok)

    def emit_expr(self) -> Term:
        tok = self.advance()
        symbols = []
        while self.tok.kind == "STR":
            symbols.append(self.advance().text[1:-1])
        if not symbols:
            raise self.error("emit expects at least one string symbol")
        names = []
        for s in symbols:
            if not s:
                raise self.error("empty event symbol", tok)
            names.append(sg.emit_name(s))
            self.check_effect(names[-1], tok)
        self.expect(";")
        with self.bind(*[HOLE] * len(names)):
            rest = self.expr()
        for name in reversed(names):
            rest = App(Lam(HOLE, None, rest), Effect(name, UNIT_VAL))
        return rest

    def reward_expr(self) -> Term:
        tok = self.advance()
        r = self.rational()
        name = sg.flipr_name(Fraction(1), r)
        self.check_effect(name, tok)
        self.expect(";")
        with self.bind(HOLE):
            rest = self.expr()
        return App(Lam(HOLE, None, rest), Effect(name, UNIT_VAL))

    def check_effect(self, name: str, tok: Token) -> None:
        try:
            self.sig.effect(name)
        except sg.SignatureError as exc:
            raise self.error(str(exc), tok) from None

    def check_constant(self, name: str, tok: Token) -> None:
        try:
            self.sig.constant(name)
        except sg.SignatureError as exc:
            raise self.error(str(exc), tok) from None

    _CMP = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq"}

    def cmp_expr(self) -> Term:
        left = self.sum_expr()
        if self.tok.kind == "SYM" and self.tok.text in self._CMP:
            tok = self.advance()
            op = self._CMP[tok.text]
            self.check_constant(op, tok)
            return Const(op, Pair(left, self.sum_expr()))
        return left

    def sum_expr(self) -> Term:
        e = self.prod_expr()
        while self.tok.kind == "SYM" and self.tok.text in ("+", "-"):
            tok = self.advance()
            op = "add" if tok.text == "+" else "sub"
            self.check_constant(op, tok)
            e = Const(op, Pair(e, self.prod_expr()))
        return e

    def prod_expr(self) -> Term:
        e = self.unary_expr()
        while self.tok.kind == "SYM" and self.tok.text in ("*", "/"):
            tok = self.advance()
            op = "mul" if tok.text == "*" else "div"
            self.check_constant(op, tok)
            e = Const(op, Pair(e, self.unary_expr()))
        return e

    def unary_expr(self) -> Term:
        if self.at("-"):
            tok = self.advance()
            if self.tok.kind == "NUM":
                return Lit(-float(self.advance().text))
            self.check_constant("neg", tok)
            return Const("neg", self.unary_expr())
        return self.app_expr()

    _PREFIX = {"fst", "snd", "inl", "inr", "absurd"}

    def app_expr(self) -> Term:
        tok = self.tok
        if tok.kind == "ID" and tok.text in self._PREFIX:
            self.advance()
            arg = self.atom()
            head: Term = {
                "fst": lambda a: Proj(1, a),
                "snd": lambda a: Proj(2, a),
                "inl": lambda a: Inj(1, a),
                "inr": lambda a: Inj(2, a),
                "absurd": Absurd,
            }[tok.text](arg)
        elif tok.kind == "ID" and tok.text in ("eff", "con"):
            self.advance()
            name_tok = self.tok
            if name_tok.kind not in ("ID", "OPNAME"):
                raise self.error("expected an operation name")
            self.advance()
            name = name_tok.text
            if tok.text == "eff":
                self.check_effect(name, name_tok)
                head = Effect(name, self.atom())
            else:
                self.check_constant(name, name_tok)
                head = Const(name, self.atom())
        else:
            head = self.atom()
        while self.at_atom():
            head = App(head, self.atom())
        return head

    def at_atom(self) -> bool:
        t = self.tok
        if t.kind == "ID":
            return t.text not in KEYWORDS or t.text in ("true", "false")
        return t.kind == "NUM" or (t.kind == "SYM" and t.text in ("(", "()"))

    def atom(self) -> Term:
        t = self.tok
        if t.kind == "NUM":
            self.advance()
            return Lit(float(t.text))
        if t.kind == "ID":
            if t.text == "true":
                self.advance()
                return true_()
            if t.text == "false":
                self.advance()
                return false_()
            name = self.ident()
            return self.lookup(name, t)
        if t.text == "()" or (t.text == "(" and self.toks[self.i + 1].text == ")"):
            if t.text == "(":
                self.advance()
            self.advance()
            return UNIT_VAL
        if t.text == "(":
            self.advance()
            e = self.expr()
            if self.at(","):
                self.advance()
                e = Pair(e, self.expr())
            self.expect(")")
            return e
        raise self.error(f"unexpected {t.text or 'end of input'!r}")


def parse_program(
    text: str,
    sig: sg.Signature = sg.DEFAULT,
    ctx_names: list[str] | None = None,
    allow_reserved: bool = False,
) -> Term:
    """Parse and desugar ``text`` into a term over free variables ``ctx_names``."""
    names = list(ctx_names or [])
    if not allow_reserved:
        for n in names:
            if n.startswith(RESERVED_PREFIX):
                raise ParseError(f"{n} is reserved for product programs")
    return Parser(text, sig, names, allow_reserved).program()


def parse_type(text: str, sig: sg.Signature = sg.DEFAULT, allow_reserved: bool = False) -> Type:
    p = Parser(text, sig, [], allow_reserved)
    t = p.type_()
    if p.tok.kind != "EOF":
        raise p.error(f"unexpected {p.tok.text!r}")
    return t

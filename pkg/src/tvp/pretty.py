"""Printing terms back to the concrete syntax, and a JSON AST form.

The printer never shadows: a binder whose display name is already visible
gets a numeric suffix, so re-parsing resolves every variable to the same
binder.
"""

from __future__ import annotations

import re

from .parser import HOLE, KEYWORDS
from .terms import (
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
    UnitVal,
    Var,
    occurrences,
)
from .types import Arrow, Type, show_type, type_from_json, type_to_json

# precedence levels
SEQ, CMP, ADD, MUL, UNARY, APP, ATOM = range(7)

_INFIX = {"add": ("+", ADD), "sub": ("-", ADD), "mul": ("*", MUL), "div": ("/", MUL),
          "ge": (">=", CMP), "gt": (">", CMP), "le": ("<=", CMP), "lt": ("<", CMP), "eq": ("==", CMP)}
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_']*$")


class _Printer:
    def __init__(self, free: list[str]):
        self.scope: list[str] = list(free)

    def fresh(self, name: str, used: bool) -> str:
        if not used:
            return HOLE
        base = name if _IDENT.match(name) and name not in KEYWORDS and name != HOLE else "x"
        candidate, k = base, 0
        while candidate in self.scope:
            k += 1
            candidate = f"{base}_{k}"
        return candidate

    def var(self, i: int) -> str:
        if i >= len(self.scope):
            raise ValueError(f"free variable index {i} outside the printing context")
        return self.scope[-1 - i]

    def binder(self, name: str, ty: Type | None, show_ty: bool) -> str:
        if show_ty and ty is not None:
            return f"({name} : {show_type(ty)})"
        return name

    def under(self, names: list[str], t: Term, prec: int = SEQ) -> str:
        self.scope.extend(names)
        try:
            return self.go(t, prec)
        finally:
            del self.scope[len(self.scope) - len(names):]

    def go(self, t: Term, prec: int) -> str:
        match t:
            case Var(i):
                return self.var(i)
            case Lit(v):
                s = repr(float(v))
                return f"({s})" if v < 0 or s.startswith("-") else s
            case UnitVal():
                return "()"
            case Pair(a, b):
                return f"({self.go(a, SEQ)}, {self.go(b, SEQ)})"
            case Proj(i, a):
                return self.paren(f"{'fst' if i == 1 else 'snd'} {self.go(a, ATOM)}", APP, prec)
            case Inj(i, a):
                return self.paren(f"{'inl' if i == 1 else 'inr'} {self.go(a, ATOM)}", APP, prec)
            case Absurd(a):
                return self.paren(f"absurd {self.go(a, ATOM)}", APP, prec)
            case Const(name, Pair(a, b)) if name in _INFIX:
                sym, level = _INFIX[name]
                # left-assoc arithmetic; comparisons are non-associative
                lhs = self.go(a, level if level != CMP else level + 1)
                rhs = self.go(b, level + 1)
                return self.paren(f"{lhs} {sym} {rhs}", level, prec)
            case Const("neg", a):
                inner = self.go(a, UNARY)
                if isinstance(a, Lit):
                    inner = f"({inner})"
                return self.paren(f"-{inner}", UNARY, prec)
            case Const(name, a):
                return self.paren(f"con {name} {self.go(a, ATOM)}", APP, prec)
            case Effect(name, a):
                return self.paren(f"eff {name} {self.go(a, ATOM)}", APP, prec)
            case App(Lam(name, ty, body), bound):
                x = self.fresh(name, occurrences(body) > 0)
                rhs = self.go(bound, SEQ)
                rest = self.under([x], body)
                return self.paren(f"let {x} = {rhs} in\n{rest}", SEQ, prec)
            case App(f, a):
                return self.paren(f"{self.go(f, APP)} {self.go(a, ATOM)}", APP, prec)
            case Lam(name, ty, body):
                x = self.fresh(name, True)
                return self.paren(f"fun {self.binder(x, ty, True)} -> {self.under([x], body)}", SEQ, prec)
            case Rec(fname, xname, body, dom, cod):
                f = self.fresh(fname, True)
                self.scope.append(f)
                x = self.fresh(xname, True)
                self.scope.pop()
                ret = ""
                if cod is not None:
                    ret = f" : ({show_type(cod)})" if isinstance(cod, Arrow) else f" : {show_type(cod)}"
                text = f"rec {f} {self.binder(x, dom, True)}{ret} -> {self.under([f, x], body)}"
                return self.paren(text, SEQ, prec)
            case Case(scrut, ln, l, rn, r, lt, rt):
                x1 = self.fresh(ln, occurrences(l) > 0)
                x2 = self.fresh(rn, occurrences(r) > 0)
                left = self.under([x1], l, CMP)
                right = self.under([x2], r)
                text = f"case {self.go(scrut, SEQ)} of inl {x1} -> {left} | inr {x2} -> {right}"
                return self.paren(text, SEQ, prec)
        raise TypeError(f"not a term: {t!r}")

    @staticmethod
    def paren(text: str, level: int, prec: int) -> str:
        return f"({text})" if level < prec else text


def pretty_print(term: Term, free: list[str] | None = None) -> str:
    """Render ``term``; ``free`` names its free variables, outermost first."""
    return _Printer(list(free or [])).go(term, SEQ)


# --------------------------------------------------------------------------
# JSON AST


def term_to_json(t: Term) -> dict:
    match t:
        case Var(i, name):
            return {"node": "var", "index": i, "name": name}
        case Lit(v):
            return {"node": "lit", "value": v}
        case UnitVal():
            return {"node": "unit"}
        case Const(name, a):
            return {"node": "const", "name": name, "arg": term_to_json(a)}
        case Effect(name, a):
            return {"node": "effect", "name": name, "arg": term_to_json(a)}
        case Pair(a, b):
            return {"node": "pair", "fst": term_to_json(a), "snd": term_to_json(b)}
        case Proj(i, a):
            return {"node": "proj", "i": i, "arg": term_to_json(a)}
        case Absurd(a):
            return {"node": "absurd", "arg": term_to_json(a)}
        case Inj(i, a):
            return {"node": "inj", "i": i, "arg": term_to_json(a)}
        case Case(s, ln, l, rn, r, lt, rt):
            return {
                "node": "case", "scrut": term_to_json(s),
                "left": {"name": ln, "type": _ty(lt), "body": term_to_json(l)},
                "right": {"name": rn, "type": _ty(rt), "body": term_to_json(r)},
            }
        case Lam(name, ty, body):
            return {"node": "lam", "name": name, "type": _ty(ty), "body": term_to_json(body)}
        case App(f, a):
            return {"node": "app", "fn": term_to_json(f), "arg": term_to_json(a)}
        case Rec(fn, xn, body, dom, cod):
            return {"node": "rec", "fname": fn, "xname": xn, "dom": _ty(dom), "cod": _ty(cod),
                    "body": term_to_json(body)}
    raise TypeError(f"not a term: {t!r}")


def _ty(t: Type | None) -> dict | None:
    return None if t is None else type_to_json(t)


def _unty(d: dict | None) -> Type | None:
    return None if d is None else type_from_json(d)


def term_from_json(d: dict) -> Term:
    node = d["node"]
    match node:
        case "var":
            return Var(d["index"], d.get("name", "_"))
        case "lit":
            return Lit(float(d["value"]))
        case "unit":
            return UnitVal()
        case "const":
            return Const(d["name"], term_from_json(d["arg"]))
        case "effect":
            return Effect(d["name"], term_from_json(d["arg"]))
        case "pair":
            return Pair(term_from_json(d["fst"]), term_from_json(d["snd"]))
        case "proj":
            return Proj(d["i"], term_from_json(d["arg"]))
        case "absurd":
            return Absurd(term_from_json(d["arg"]))
        case "inj":
            return Inj(d["i"], term_from_json(d["arg"]))
        case "case":
            l, r = d["left"], d["right"]
            return Case(term_from_json(d["scrut"]), l["name"], term_from_json(l["body"]),
                        r["name"], term_from_json(r["body"]), _unty(l.get("type")), _unty(r.get("type")))
        case "lam":
            return Lam(d["name"], _unty(d.get("type")), term_from_json(d["body"]))
        case "app":
            return App(term_from_json(d["fn"]), term_from_json(d["arg"]))
        case "rec":
            return Rec(d["fname"], d["xname"], term_from_json(d["body"]), _unty(d.get("dom")), _unty(d.get("cod")))
    raise ValueError(f"unknown AST node {node!r}")

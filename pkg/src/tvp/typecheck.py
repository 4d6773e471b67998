"""Type checking.

Binder annotations are optional in the concrete syntax; missing ones are
solved by first-order unification (no let-polymorphism).  Variables left
unconstrained default to ``unit``.  ``annotate`` returns the term with every
Lam/Case/Rec binder annotated.
"""

from __future__ import annotations

import itertools

from . import signature as sg
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
)
from .types import REAL, UNIT, EMPTY, Arrow, Base, Prod, StateBase, Sum, Type, TVar, Unit, Empty

Context = list[tuple[str, Type]]


class TypeCheckError(ValueError):
    pass


class _Solver:
    def __init__(self) -> None:
        self.subst: dict[int, Type] = {}
        self.counter = itertools.count()

    def fresh(self) -> TVar:
        return TVar(next(self.counter))

    def find(self, t: Type) -> Type:
        while isinstance(t, TVar) and t.id in self.subst:
            t = self.subst[t.id]
        return t

    def resolve(self, t: Type, default: Type | None = None) -> Type:
        t = self.find(t)
        match t:
            case TVar():
                return default if default is not None else t
            case Prod(a, b):
                return Prod(self.resolve(a, default), self.resolve(b, default))
            case Sum(a, b):
                return Sum(self.resolve(a, default), self.resolve(b, default))
            case Arrow(a, b):
                return Arrow(self.resolve(a, default), self.resolve(b, default))
        return t

    def occurs(self, v: int, t: Type) -> bool:
        t = self.find(t)
        match t:
            case TVar(i):
                return i == v
            case Prod(a, b) | Sum(a, b) | Arrow(a, b):
                return self.occurs(v, a) or self.occurs(v, b)
        return False

    def unify(self, a: Type, b: Type, where: str) -> None:
        a, b = self.find(a), self.find(b)
        if a == b:
            return
        if isinstance(a, TVar):
            if self.occurs(a.id, b):
                raise TypeCheckError(f"{where}: infinite type ({self.show(a)} occurs in {self.show(b)})")
            self.subst[a.id] = b
            return
        if isinstance(b, TVar):
            self.unify(b, a, where)
            return
        if type(a) is type(b) and isinstance(a, (Prod, Sum, Arrow)):
            fields = [(a.left, b.left), (a.right, b.right)] if not isinstance(a, Arrow) else [(a.dom, b.dom), (a.cod, b.cod)]
            for x, y in fields:
                self.unify(x, y, where)
            return
        raise TypeCheckError(f"{where}: type mismatch, expected {self.show(b)} but got {self.show(a)}")

    def show(self, t: Type) -> str:
        return str(self.resolve(t))


def _check_type(t: Type | None, sig: sg.Signature) -> None:
    match t:
        case None | Unit() | Empty() | StateBase() | TVar():
            return
        case Base(name):
            if name not in sig.bases:
                raise TypeCheckError(f"unknown base type {name!r}")
        case Prod(a, b) | Sum(a, b):
            _check_type(a, sig)
            _check_type(b, sig)
        case Arrow(a, b):
            _check_type(a, sig)
            _check_type(b, sig)


def _infer(s: _Solver, env: list[Type], t: Term, sig: sg.Signature) -> tuple[Term, Type]:
    match t:
        case Var(i, name):
            if i >= len(env):
                raise TypeCheckError(f"unbound variable {name!r} (index {i})")
            return t, env[-1 - i]
        case Lit():
            return t, REAL
        case UnitVal():
            return t, UNIT
        case Const(name, arg):
            try:
                op = sig.constant(name)
            except sg.SignatureError as exc:
                raise TypeCheckError(str(exc)) from None
            arg2, ta = _infer(s, env, arg, sig)
            s.unify(ta, op.arity, f"argument of constant {name}")
            return Const(name, arg2), op.coarity
        case Effect(name, arg):
            try:
                op = sig.effect(name)
            except sg.SignatureError as exc:
                raise TypeCheckError(str(exc)) from None
            arg2, ta = _infer(s, env, arg, sig)
            s.unify(ta, op.arity, f"argument of effect {name}")
            return Effect(name, arg2), op.coarity
        case Pair(a, b):
            a2, ta = _infer(s, env, a, sig)
            b2, tb = _infer(s, env, b, sig)
            return Pair(a2, b2), Prod(ta, tb)
        case Proj(i, a):
            a2, ta = _infer(s, env, a, sig)
            l, r = s.fresh(), s.fresh()
            s.unify(ta, Prod(l, r), f"projection {'fst' if i == 1 else 'snd'}")
            return Proj(i, a2), (l if i == 1 else r)
        case Absurd(a):
            a2, ta = _infer(s, env, a, sig)
            s.unify(ta, EMPTY, "absurd")
            return Absurd(a2), s.fresh()
        case Inj(i, a):
            a2, ta = _infer(s, env, a, sig)
            other = s.fresh()
            return Inj(i, a2), (Sum(ta, other) if i == 1 else Sum(other, ta))
        case Case(scrut, ln, l, rn, r, lt, rt):
            _check_type(lt, sig)
            _check_type(rt, sig)
            sc2, ts = _infer(s, env, scrut, sig)
            tl = lt if lt is not None else s.fresh()
            tr = rt if rt is not None else s.fresh()
            s.unify(ts, Sum(tl, tr), "case scrutinee")
            l2, t1 = _infer(s, env + [tl], l, sig)
            r2, t2 = _infer(s, env + [tr], r, sig)
            s.unify(t2, t1, "case branches")
            return Case(sc2, ln, l2, rn, r2, tl, tr), t1
        case Lam(name, ty, body):
            _check_type(ty, sig)
            tx = ty if ty is not None else s.fresh()
            body2, tb = _infer(s, env + [tx], body, sig)
            return Lam(name, tx, body2), Arrow(tx, tb)
        case App(fn, arg):
            fn2, tf = _infer(s, env, fn, sig)
            arg2, ta = _infer(s, env, arg, sig)
            tr = s.fresh()
            found = s.find(tf)
            if not isinstance(found, (Arrow, TVar)):
                raise TypeCheckError(f"application of a non-function of type {s.show(tf)}")
            s.unify(tf, Arrow(ta, tr), "application")
            return App(fn2, arg2), tr
        case Rec(fname, xname, body, dom, cod):
            _check_type(dom, sig)
            _check_type(cod, sig)
            t1 = dom if dom is not None else s.fresh()
            t2 = cod if cod is not None else s.fresh()
            body2, tb = _infer(s, env + [Arrow(t1, t2), t1], body, sig)
            s.unify(tb, t2, f"body of recursive function {fname}")
            return Rec(fname, xname, body2, t1, t2), Arrow(t1, t2)
    raise TypeCheckError(f"not a term: {t!r}")


def _zonk(s: _Solver, t: Term) -> Term:
    def ty(x: Type | None) -> Type | None:
        return None if x is None else s.resolve(x, UNIT)

    match t:
        case Var() | Lit() | UnitVal():
            return t
        case Const(n, a):
            return Const(n, _zonk(s, a))
        case Effect(n, a):
            return Effect(n, _zonk(s, a))
        case Pair(a, b):
            return Pair(_zonk(s, a), _zonk(s, b))
        case Proj(i, a):
            return Proj(i, _zonk(s, a))
        case Absurd(a):
            return Absurd(_zonk(s, a))
        case Inj(i, a):
            return Inj(i, _zonk(s, a))
        case Case(sc, ln, l, rn, r, lt, rt):
            return Case(_zonk(s, sc), ln, _zonk(s, l), rn, _zonk(s, r), ty(lt), ty(rt))
        case Lam(n, tx, b):
            return Lam(n, ty(tx), _zonk(s, b))
        case App(f, a):
            return App(_zonk(s, f), _zonk(s, a))
        case Rec(fn, xn, b, d, c):
            return Rec(fn, xn, _zonk(s, b), ty(d), ty(c))
    raise TypeCheckError(f"not a term: {t!r}")


def annotate(
    ctx: Context, term: Term, sig: sg.Signature = sg.DEFAULT, expected: Type | None = None
) -> tuple[Term, Type]:
    """Infer and fill in binder types; ``expected`` constrains the result."""
    names = [n for n, _ in ctx]
    if len(set(names)) != len(names):
        raise TypeCheckError("context names must be distinct")
    for _, t in ctx:
        _check_type(t, sig)
    s = _Solver()
    out, t = _infer(s, [ty for _, ty in ctx], term, sig)
    if expected is not None:
        _check_type(expected, sig)
        s.unify(t, expected, "result")
    return _zonk(s, out), s.resolve(t, UNIT)


def typecheck(ctx: Context, term: Term, sig: sg.Signature = sg.DEFAULT) -> Type:
    return annotate(ctx, term, sig)[1]

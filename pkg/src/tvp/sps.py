"""Store-passing-style product transformation.

``transform_term`` turns a program over events into a program that carries
the automaton state explicitly.  Every context gets a trailing ``__y : state``
and every term of type ``t`` becomes a term of type ``t' * state``, where
``t'`` replaces each arrow ``a -> b`` by ``(a' * state) -> (b' * state)``.
Emitting ``a`` becomes the effect-free constant ``step[a]``.

Terms are de Bruijn indexed, so the substitutions ``[fst z/x, snd z/__y]`` of
the binder clauses are index remappings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import signature as sg
from .parser import RESERVED_PREFIX, STATE_VAR
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
    instantiate,
    rebuild,
    shift,
    subst_top,
    subterms,
)
from .typecheck import Context, TypeCheckError, annotate
from .types import STATE, Arrow, Prod, Sum, Type, mentions_state, show_type


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class TransformOutput:
    term: Term
    type: Type
    context: Context
    signature: sg.Signature


def _prime(t: Type) -> Type:
    match t:
        case Arrow(a, b):
            return Arrow(transform_type(a), transform_type(b))
        case Prod(a, b):
            return Prod(_prime(a), _prime(b))
        case Sum(a, b):
            return Sum(_prime(a), _prime(b))
    return t


def transform_type(t: Type) -> Type:
    if mentions_state(t):
        raise TransformError(f"type {show_type(t)} already mentions the state type")
    return Prod(_prime(t), STATE)


def transform_context(ctx: Context) -> Context:
    for name, t in ctx:
        if name.startswith(RESERVED_PREFIX):
            raise TransformError(f"context variable {name!r} uses the reserved prefix {RESERVED_PREFIX!r}")
        if mentions_state(t):
            raise TransformError(f"context variable {name!r} already mentions the state type")
    return [(name, _prime(t)) for name, t in ctx] + [(STATE_VAR, STATE)]


def transform_signature(sig: sg.Signature, d=None) -> sg.Signature:
    try:
        return sig.lift(d)
    except sg.SignatureError as exc:
        raise TransformError(str(exc)) from None


# helpers building the product terms ------------------------------------------

_Y = Var(0, STATE_VAR)


def _fst(t: Term) -> Term:
    return Proj(1, t)


def _snd(t: Term) -> Term:
    return Proj(2, t)


def _binder_map(depth: int):
    """Remap a body transformed under ``depth`` source binders.

    The transformed body lives in ``Γ', x_depth.., x_1, __y``; the new binder
    context is ``Γ', __y, [f,] z`` where ``z`` packs ``(x_1, __y)``.  With
    ``depth`` 1 (lambda, case) there is no ``f``; with ``depth`` 2 (rec) index
    1 is ``f``.  Outer indices line up, so they stay put.
    """

    def sigma(k: int, name: str) -> Term:
        if k == 0:
            return _snd(Var(0, "z"))
        if k == 1:
            return _fst(Var(0, "z"))
        if depth == 2 and k == 2:
            return Var(1, name)
        return Var(k, name)

    return sigma


class _Transformer:
    def __init__(self) -> None:
        self.counter = itertools.count(1)

    def admin(self) -> str:
        return f"{RESERVED_PREFIX}z{next(self.counter)}"

    def under_state(self, t: Term) -> Term:
        """Move a transformed term below two new binders ``z, __y``."""
        return shift(t, 2, cutoff=1)

    def go(self, m: Term) -> Term:
        match m:
            case Var(i, name):
                return Pair(Var(i + 1, name), _Y)
            case UnitVal() | Lit():
                return Pair(m, _Y)
            case Const(name, arg):
                return Const(name, self.go(arg))
            case Effect(name, arg):
                op = sg.builtin_effect(name)
                if op is not None and isinstance(op.kind, sg.Emit):
                    return Const(sg.step_name(op.kind.symbol), self.go(arg))
                return Effect(name, self.go(arg))
            case Pair(a, b):
                z1, z2 = self.admin(), self.admin()
                z = Var(0, z1)
                repack = Lam(z1, None, Pair(Pair(_fst(z), _fst(_snd(z))), _snd(_snd(z))))
                zz = Var(0, z2)
                inner = Lam(z2, None, Pair(_fst(zz), App(Lam(STATE_VAR, None, self.under_state(self.go(b))), _snd(zz))))
                return App(repack, App(inner, self.go(a)))
            case Proj(i, a):
                return self._lift_pure(lambda v: Proj(i, v), a)
            case Absurd(a):
                return self._lift_pure(Absurd, a)
            case Inj(i, a):
                return self._lift_pure(lambda v: Inj(i, v), a)
            case Case(scrut, ln, l, rn, r, lt, rt):
                zn = self.admin()
                z = Var(0, zn)
                # inside the branches of the inner case, z sits at index 1
                split = Lam(zn, None, Case(
                    _fst(z),
                    ln, Inj(1, Pair(Var(0, ln), _snd(Var(1, zn)))),
                    rn, Inj(2, Pair(Var(0, rn), _snd(Var(1, zn)))),
                ))
                left = instantiate(self.go(l), _binder_map(1))
                right = instantiate(self.go(r), _binder_map(1))
                lt2 = None if lt is None else transform_type(lt)
                rt2 = None if rt is None else transform_type(rt)
                return Case(App(split, self.go(scrut)), self.zname(), left, self.zname(), right, lt2, rt2)
            case Lam(name, ty, body):
                new_body = instantiate(self.go(body), _binder_map(1))
                return Pair(Lam(self.zname(), None if ty is None else transform_type(ty), new_body), _Y)
            case App(f, a):
                zn = self.admin()
                z = Var(0, zn)
                call = Lam(zn, None, App(_fst(z), App(Lam(STATE_VAR, None, self.under_state(self.go(a))), _snd(z))))
                return App(call, self.go(f))
            case Rec(fname, xname, body, dom, cod):
                new_body = instantiate(self.go(body), _binder_map(2))
                dom2 = None if dom is None else transform_type(dom)
                cod2 = None if cod is None else transform_type(cod)
                return Pair(Rec(fname, self.zname(), new_body, dom2, cod2), _Y)
        raise TransformError(f"not a term: {m!r}")

    def zname(self) -> str:
        return f"z{next(self.counter)}"

    def _lift_pure(self, op, a: Term) -> Term:
        zn = self.admin()
        z = Var(0, zn)
        return App(Lam(zn, None, Pair(op(_fst(z)), _snd(z))), self.go(a))


def _check_reserved(m: Term) -> None:
    for t in subterms(m):
        names: tuple[str, ...] = ()
        match t:
            case Lam(n, _, _):
                names = (n,)
            case Rec(f, x, _, _, _):
                names = (f, x)
            case Case(_, ln, _, rn, _, _, _):
                names = (ln, rn)
        for n in names:
            if n.startswith(RESERVED_PREFIX):
                raise TransformError(f"binder {n!r} uses the reserved prefix {RESERVED_PREFIX!r}")


def transform_term(m: Term, ctx: Context, sig: sg.Signature = sg.DEFAULT, spec=None) -> TransformOutput:
    """The product program of ``m`` together with its type, context and signature.

    ``spec`` (a DFA or reward machine) is optional; when given, emitted
    symbols must belong to its alphabet.
    """
    if sig.lifted:
        raise TransformError("the input signature is already lifted")
    _check_reserved(m)
    ctx2 = transform_context(ctx)
    try:
        annotated, t = annotate(ctx, m, sig)
    except TypeCheckError as exc:
        raise TransformError(f"input is ill-typed: {exc}") from None
    sig2 = transform_signature(sig, spec)
    if spec is not None:
        for sub in subterms(annotated):
            if isinstance(sub, Effect):
                op = sig.effect(sub.name)
                if isinstance(op.kind, sg.Emit) and op.kind.symbol not in spec.alphabet:
                    raise TransformError(f"event {op.kind.symbol!r} is not in the automaton alphabet")
    out = _Transformer().go(annotated)
    expected = transform_type(t)
    try:
        out, _ = annotate(ctx2, out, sig2, expected=expected)
    except TypeCheckError as exc:  # pragma: no cover - would be a transformation bug
        raise TransformError(f"transformed term does not type-check: {exc}") from None
    return TransformOutput(out, expected, ctx2, sig2)


# administrative-redex simplification -------------------------------------------


def is_value(t: Term) -> bool:
    """Terms that evaluate purely and without consuming fuel."""
    match t:
        case Var() | Lit() | UnitVal() | Lam() | Rec():
            return True
        case Pair(a, b):
            return is_value(a) and is_value(b)
        case Inj(_, a) | Proj(_, a):
            return is_value(a)
    return False


def _step(t: Term) -> Term:
    match t:
        case App(Lam(name, _, body), arg) if name.startswith(RESERVED_PREFIX) and is_value(arg):
            return subst_top(body, arg)
        case Proj(1, Pair(a, b)) if is_value(b):
            return a
        case Proj(2, Pair(a, b)) if is_value(a):
            return b
    return t


def _sweep(t: Term) -> Term:
    t = rebuild(t, lambda c, _k: _sweep(c))
    reduced = _step(t)
    # a reduction can expose a new redex at the same spot
    while reduced is not t:
        t = reduced
        t = rebuild(t, lambda c, _k: _sweep(c))
        reduced = _step(t)
    return t


def simplify(m: Term, max_passes: int = 10_000) -> Term:
    """Reduce administrative redexes until nothing changes (or the pass cap)."""
    for _ in range(max_passes):
        nxt = _sweep(m)
        if nxt == m:
            return nxt
        m = nxt
    return m

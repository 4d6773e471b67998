"""Terms of the calculus, positional (de Bruijn) variables with display names.

Binder names and type annotations are excluded from equality, so ``==`` on
terms is alpha-equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

from .types import Type


class Term:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Term):
    index: int
    name: str = field(default="_", compare=False)


@dataclass(frozen=True, slots=True)
class Lit(Term):
    """A ``real`` literal."""

    value: float


@dataclass(frozen=True, slots=True)
class Const(Term):
    name: str
    arg: Term


@dataclass(frozen=True, slots=True)
class Effect(Term):
    name: str
    arg: Term


@dataclass(frozen=True, slots=True)
class UnitVal(Term):
    pass


@dataclass(frozen=True, slots=True)
class Pair(Term):
    fst: Term
    snd: Term


@dataclass(frozen=True, slots=True)
class Proj(Term):
    i: int
    arg: Term


@dataclass(frozen=True, slots=True)
class Absurd(Term):
    arg: Term


@dataclass(frozen=True, slots=True)
class Inj(Term):
    i: int
    arg: Term


@dataclass(frozen=True, slots=True)
class Case(Term):
    scrut: Term
    left_name: str = field(compare=False)
    left: Term
    right_name: str = field(compare=False)
    right: Term
    left_type: Type | None = field(default=None, compare=False)
    right_type: Type | None = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class Lam(Term):
    name: str = field(compare=False)
    ty: Type | None = field(compare=False)
    body: Term


@dataclass(frozen=True, slots=True)
class App(Term):
    fn: Term
    arg: Term


@dataclass(frozen=True, slots=True)
class Rec(Term):
    """``mu f x. body``; inside ``body`` x is index 0 and f is index 1."""

    fname: str = field(compare=False)
    xname: str = field(compare=False)
    body: Term
    dom: Type | None = field(default=None, compare=False)
    cod: Type | None = field(default=None, compare=False)


UNIT_VAL = UnitVal()


def true_() -> Term:
    return Inj(1, UNIT_VAL)


def false_() -> Term:
    return Inj(2, UNIT_VAL)


def let(name: str, bound: Term, body: Term, ty: Type | None = None) -> Term:
    """``let name = bound in body`` as a beta-redex; ``body`` is already under the binder."""
    return App(Lam(name, ty, body), bound)


# --------------------------------------------------------------------------
# Generic traversal


def children(t: Term) -> Iterator[tuple[Term, int]]:
    """Immediate subterms with the number of binders between ``t`` and each."""
    match t:
        case Var() | Lit() | UnitVal():
            return
        case Const(_, a) | Effect(_, a) | Proj(_, a) | Absurd(a) | Inj(_, a):
            yield a, 0
        case Pair(a, b) | App(a, b):
            yield a, 0
            yield b, 0
        case Case(s, _, l, _, r):
            yield s, 0
            yield l, 1
            yield r, 1
        case Lam(_, _, b):
            yield b, 1
        case Rec(_, _, b):
            yield b, 2
        case _:
            raise TypeError(f"not a term: {t!r}")


def rebuild(t: Term, f: Callable[[Term, int], Term]) -> Term:
    """Apply ``f(child, binders)`` to each immediate subterm and rebuild ``t``."""
    match t:
        case Var() | Lit() | UnitVal():
            return t
        case Const(n, a):
            return Const(n, f(a, 0))
        case Effect(n, a):
            return Effect(n, f(a, 0))
        case Proj(i, a):
            return Proj(i, f(a, 0))
        case Absurd(a):
            return Absurd(f(a, 0))
        case Inj(i, a):
            return Inj(i, f(a, 0))
        case Pair(a, b):
            return Pair(f(a, 0), f(b, 0))
        case App(a, b):
            return App(f(a, 0), f(b, 0))
        case Case(s, ln, l, rn, r, lt, rt):
            return Case(f(s, 0), ln, f(l, 1), rn, f(r, 1), lt, rt)
        case Lam(n, ty, b):
            return Lam(n, ty, f(b, 1))
        case Rec(fn, xn, b, dom, cod):
            return Rec(fn, xn, f(b, 2), dom, cod)
    raise TypeError(f"not a term: {t!r}")


def subterms(t: Term) -> Iterator[Term]:
    yield t
    for c, _ in children(t):
        yield from subterms(c)


def size(t: Term) -> int:
    return sum(1 for _ in subterms(t))


# --------------------------------------------------------------------------
# Shifting and substitution


def shift(t: Term, by: int, cutoff: int = 0) -> Term:
    """Add ``by`` to every free index >= ``cutoff``."""
    if by == 0:
        return t

    def go(u: Term, depth: int) -> Term:
        if isinstance(u, Var):
            if u.index >= depth:
                if u.index + by < depth:
                    raise ValueError(f"negative shift would capture {u.name}")
                return Var(u.index + by, u.name)
            return u
        return rebuild(u, lambda c, k: go(c, depth + k))

    return go(t, cutoff)


def instantiate(t: Term, sigma: Callable[[int, str], Term]) -> Term:
    """Simultaneous substitution of free variables.

    ``sigma(k, name)`` gives the replacement for free index ``k`` as a term
    in the target context; it is shifted under binders automatically.
    """

    def go(u: Term, depth: int) -> Term:
        if isinstance(u, Var):
            if u.index < depth:
                return u
            return shift(sigma(u.index - depth, u.name), depth)
        return rebuild(u, lambda c, k: go(c, depth + k))

    return go(t, 0)


def subst_top(body: Term, value: Term) -> Term:
    """Beta-reduce: replace index 0 of ``body`` by ``value`` and drop the binder."""
    return instantiate(body, lambda k, n: value if k == 0 else Var(k - 1, n))


def free_indices(t: Term) -> set[int]:
    out: set[int] = set()

    def go(u: Term, depth: int) -> None:
        if isinstance(u, Var):
            if u.index >= depth:
                out.add(u.index - depth)
            return
        for c, k in children(u):
            go(c, depth + k)

    go(t, 0)
    return out


def occurrences(t: Term, index: int = 0) -> int:
    """Number of occurrences of free variable ``index`` in ``t``."""
    count = 0

    def go(u: Term, depth: int) -> None:
        nonlocal count
        if isinstance(u, Var):
            if u.index == index + depth:
                count += 1
            return
        for c, k in children(u):
            go(c, depth + k)

    go(t, 0)
    return count


def effect_names(t: Term) -> list[str]:
    return [u.name for u in subterms(t) if isinstance(u, Effect)]


def const_names(t: Term) -> list[str]:
    return [u.name for u in subterms(t) if isinstance(u, Const)]

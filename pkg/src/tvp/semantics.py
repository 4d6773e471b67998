"""Fuel-bounded evaluation and weakest pre-conditions.

One interpreter serves three routes:

* ``source``: emitted events are appended to a trace (writer monad);
* ``sync``: emitted events step the automaton state threaded alongside;
* ``product``: a transformed program, where ``step[a]`` constants move the
  state that lives inside the values.

A computation denotes a finite map from outcomes
``(value, state, trace, reward)`` to weights: exact rationals for
probabilistic programs, the constant 1 for nondeterministic ones (a set).
Each ``rec`` value carries its own approximant index; unfolding it costs one
unit and index 0 is the everywhere-undefined function.  Applications are
memoised, which turns the product route on first-order recursion into a
polynomial computation.
"""

from __future__ import annotations

import sys
import threading
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, Hashable, Iterable

from . import signature as sg
from .automata import InferenceQuery, Mode, Spec, state_label
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
    children,
    rebuild,
    subterms,
)
from .parser import STATE_VAR
from .typecheck import TypeCheckError, annotate
from .types import Prod, StateBase, Type, is_ground, show_type


class EvalError(ValueError):
    pass


# -- values ----------------------------------------------------------------


class Value:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class UnitV(Value):
    pass


@dataclass(frozen=True, slots=True)
class PairV(Value):
    fst: Value
    snd: Value


@dataclass(frozen=True, slots=True)
class InjV(Value):
    i: int
    val: Value


@dataclass(frozen=True, slots=True)
class RealV(Value):
    x: float


@dataclass(frozen=True, slots=True)
class StateV(Value):
    s: Hashable


class Closure(Value):
    """A lambda together with its environment; equal when the code object is
    the same term node and the environments are equal."""

    __slots__ = ("env", "lam", "_hash")

    def __init__(self, env: tuple, lam: Lam):
        self.env = env
        self.lam = lam
        self._hash = hash((id(lam), env))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Closure) and self.lam is other.lam and self._hash == other._hash and self.env == other.env
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"<closure {self.lam.name}>"


class RecClosure(Value):
    """The ``fuel``-th approximant of a recursive function."""

    __slots__ = ("env", "rec", "fuel", "_hash")

    def __init__(self, env: tuple, rec: Rec, fuel: int):
        self.env = env
        self.rec = rec
        self.fuel = fuel
        self._hash = hash((id(rec), fuel, env))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, RecClosure)
            and self.rec is other.rec
            and self.fuel == other.fuel
            and self._hash == other._hash
            and self.env == other.env
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"<rec {self.rec.fname} fuel={self.fuel}>"


UNIT_V = UnitV()
TRUE_V = InjV(1, UNIT_V)
FALSE_V = InjV(2, UNIT_V)


def bool_v(b: bool) -> Value:
    return TRUE_V if b else FALSE_V


def show_value(v: Value) -> str:
    match v:
        case UnitV():
            return "()"
        case PairV(a, b):
            return f"({show_value(a)}, {show_value(b)})"
        case InjV(i, a):
            return f"{'inl' if i == 1 else 'inr'} {_atomic(a)}"
        case RealV(x):
            return repr(x)
        case StateV(s):
            return f"<{state_label(s)}>"
    return repr(v)


def _atomic(v: Value) -> str:
    s = show_value(v)
    return f"({s})" if isinstance(v, InjV) else s


def is_ground_value(v: Value) -> bool:
    match v:
        case UnitV() | RealV() | StateV():
            return True
        case PairV(a, b):
            return is_ground_value(a) and is_ground_value(b)
        case InjV(_, a):
            return is_ground_value(a)
    return False


# -- the interpreter ---------------------------------------------------------

Outcome = tuple  # (value, state, trace, reward)
Dist = dict

_EMPTY: tuple = ()
_ARITH: dict[str, Callable[[float, float], Any]] = {
    "add": lambda a, b: RealV(a + b),
    "sub": lambda a, b: RealV(a - b),
    "mul": lambda a, b: RealV(a * b),
    "ge": lambda a, b: bool_v(a >= b),
    "gt": lambda a, b: bool_v(a > b),
    "le": lambda a, b: bool_v(a <= b),
    "lt": lambda a, b: bool_v(a < b),
    "eq": lambda a, b: bool_v(a == b),
}

SOURCE, SYNC, PRODUCT = "source", "sync", "product"


class _Absent(Exception):
    """Raised by the pure fast path on ``absurd`` (no value exists)."""


class EvalCache:
    """State that may be shared by runs of one route at different fuels.

    ``apply`` memoises function applications; ``compiled`` holds the
    closure-converted code of each ``fun``/``rec`` node, so that a closure
    captures only the variables its body mentions.  Without the trimming,
    closures built under different unfoldings would differ in irrelevant
    captured values and defeat the memo table.
    """

    def __init__(self) -> None:
        self.apply: dict[tuple, tuple[Dist, bool, bool]] = {}
        self.compiled: dict[int, tuple[Term, tuple[int, ...], Term]] = {}
        # programs that passed the entry checks (see ``_validate``)
        self.checked: dict[tuple, tuple] = {}

    def compile(self, t: Lam | Rec) -> tuple[tuple, Term]:
        hit = self.compiled.get(id(t))
        if hit is not None and hit[0] is t:
            return hit[1], hit[2]
        bound = 1 if isinstance(t, Lam) else 2
        atoms, body = _closure_convert(t.body, bound)
        code: Term = Lam(t.name, t.ty, body) if isinstance(t, Lam) else Rec(t.fname, t.xname, body, t.dom, t.cod)
        self.compiled[id(t)] = (t, atoms, code)
        return atoms, code


def _closure_convert(body: Term, bound: int) -> tuple[tuple, Term]:
    """Compact the free variables of a function body.

    Returns the captured atoms, outermost-first as ``(index, path)`` where
    ``path`` is ``()`` for the variable itself or ``(i,)`` when the body only
    ever projects component ``i`` out of it, and the body re-indexed over
    the compact environment.  Capturing projections keeps a function that
    only uses ``fst z`` independent of ``snd z``.
    """
    uses: dict[int, set] = {}

    def scan(u: Term, depth: int, under_proj: int | None) -> None:
        if isinstance(u, Var):
            k = u.index - depth - bound
            if k >= 0:
                uses.setdefault(k, set()).add(() if under_proj is None else (under_proj,))
            return
        if isinstance(u, Proj) and isinstance(u.arg, Var):
            scan(u.arg, depth, u.i)
            return
        for c, extra in children(u):
            scan(c, depth + extra, None)

    scan(body, 0, None)
    atoms: list[tuple[int, tuple]] = []
    for k in sorted(uses):
        paths = uses[k]
        atoms.extend([(k, ())] if () in paths else sorted((k, p) for p in paths))
    pos = {atom: j for j, atom in enumerate(atoms)}

    def rewrite(u: Term, depth: int) -> Term:
        if isinstance(u, Var):
            k = u.index - depth - bound
            return u if k < 0 else Var(depth + bound + pos[(k, ())], u.name)
        if isinstance(u, Proj) and isinstance(u.arg, Var):
            k = u.arg.index - depth - bound
            if k >= 0 and (k, (u.i,)) in pos:
                return Var(depth + bound + pos[(k, (u.i,))], u.arg.name)
        return rebuild(u, lambda c, extra: rewrite(c, depth + extra))

    return tuple(atoms), rewrite(body, 0)


def _capture(env: tuple, atoms: tuple) -> tuple:
    out = []
    for k, path in reversed(atoms):
        v = env[-1 - k]
        if path:
            v = v.fst if path[0] == 1 else v.snd
        out.append(v)
    return tuple(out)


class Machine:
    """Interpreter for one route at one global fuel.

    ``weights`` selects the weight semiring: ``"prob"`` (rationals),
    ``"exp"`` (pairs ``(w, w * reward)``, the expectation semiring, which
    folds accumulated rewards into the weight) or ``"set"`` (the constant 1).
    With ``keep_rewards`` the accumulated reward is kept in the outcome
    instead.  A ``memo`` table may be shared between runs of the same route
    at different fuels: entries whose computation never evaluated a ``rec``
    term do not depend on the global fuel.
    """

    def __init__(
        self,
        route: str,
        sig: sg.Signature,
        spec: Spec | None,
        fuel: int,
        weights: str = "prob",
        keep_rewards: bool = False,
        memo: EvalCache | None = None,
    ):
        self.route = route
        self.sig = sig
        self.spec = spec
        self.fuel = fuel
        self.weights = weights
        self.weighted = weights != "set"
        self.keep_rewards = keep_rewards
        self.one = {"prob": Fraction(1), "exp": (Fraction(1), Fraction(0)), "set": 1}[weights]
        self.cache = EvalCache() if memo is None else memo
        self.memo = self.cache.apply
        # set when evaluation reads the global fuel (evaluates a rec term) or
        # hits an exhausted approximant; both are tracked through the memo
        self.reads_fuel = False
        self.exhausted = False
        self._pure: dict[int, bool] = {}
        self._ops: dict[tuple[str, str], Any] = {}

    # weights ---------------------------------------------------------
    def mul(self, a: Any, b: Any) -> Any:
        if self.weights == "exp":
            return (a[0] * b[0], a[0] * b[1] + a[1] * b[0])
        return a * b

    def _add(self, out: Dist, key: Outcome, w: Any) -> None:
        old = out.get(key)
        if old is None or not self.weighted:
            out[key] = w
        elif self.weights == "exp":
            out[key] = (old[0] + w[0], old[1] + w[1])
        else:
            out[key] = old + w

    def ret(self, v: Value, st: Any) -> Dist:
        return {(v, st, _EMPTY, 0): self.one}

    def bind(self, d: Dist, k: Callable[[Value, Any], Dist]) -> Dist:
        if len(d) == 1:
            ((key, w),) = d.items()
            v, st, tr, r = key
            if not tr and not r and w == self.one:
                return k(v, st)
        out: Dist = {}
        for (v, st, tr, r), w in d.items():
            for (v2, st2, tr2, r2), w2 in k(v, st).items():
                key = (v2, st2, tr + tr2 if tr2 else tr, r + r2 if r2 else r)
                self._add(out, key, self.mul(w, w2))
        return out

    def fmap(self, d: Dist, f: Callable[[Value], Value]) -> Dist:
        out: Dist = {}
        for (v, st, tr, r), w in d.items():
            self._add(out, (f(v), st, tr, r), w)
        return out

    # signature lookups -----------------------------------------------
    def effect_kind(self, name: str) -> Any:
        key = ("e", name)
        if key not in self._ops:
            try:
                self._ops[key] = self.sig.effect(name).kind
            except sg.SignatureError as exc:
                raise EvalError(str(exc)) from None
        return self._ops[key]

    def const_kind(self, name: str) -> Any:
        key = ("c", name)
        if key not in self._ops:
            try:
                self._ops[key] = self.sig.constant(name).kind
            except sg.SignatureError as exc:
                raise EvalError(str(exc)) from None
        return self._ops[key]

    # pure fast path --------------------------------------------------
    def is_pure(self, t: Term) -> bool:
        key = id(t)
        hit = self._pure.get(key)
        if hit is None:
            hit = self._compute_pure(t)
            self._pure[key] = hit
        return hit

    def _compute_pure(self, t: Term) -> bool:
        match t:
            case Var() | Lit() | UnitVal() | Lam() | Rec():
                return True
            case Pair(a, b):
                return self.is_pure(a) and self.is_pure(b)
            case Proj(_, a) | Inj(_, a) | Absurd(a):
                return self.is_pure(a)
            case Const(name, a):
                return isinstance(self.const_kind(name), sg.Arith) and self.is_pure(a)
            case Case(s, _, l, _, r, _, _):
                return self.is_pure(s) and self.is_pure(l) and self.is_pure(r)
        return False

    def value(self, t: Term, env: tuple) -> Value:
        match t:
            case Var(i):
                return env[-1 - i]
            case Lit(x):
                return RealV(x)
            case UnitVal():
                return UNIT_V
            case Lam():
                fv, code = self.cache.compile(t)
                return Closure(_capture(env, fv), code)
            case Rec():
                self.reads_fuel = True
                fv, code = self.cache.compile(t)
                return RecClosure(_capture(env, fv), code, self.fuel)
            case Pair(a, b):
                return PairV(self.value(a, env), self.value(b, env))
            case Proj(i, a):
                v = self.value(a, env)
                return v.fst if i == 1 else v.snd
            case Inj(i, a):
                return InjV(i, self.value(a, env))
            case Absurd(a):
                self.value(a, env)
                raise _Absent
            case Const(name, a):
                return self.arith(name, self.value(a, env))
            case Case(s, _, l, _, r, _, _):
                v = self.value(s, env)
                return self.value(l if v.i == 1 else r, env + (v.val,))
        raise EvalError(f"not a pure term: {t!r}")

    def arith(self, name: str, v: Value) -> Value:
        if self.route == PRODUCT:
            # lifted constants thread the state through unchanged
            return PairV(self._arith(name, v.fst), v.snd)
        return self._arith(name, v)

    def _arith(self, name: str, v: Value) -> Value:
        if name == "neg":
            return RealV(-v.x)
        a, b = v.fst.x, v.snd.x
        if name == "div":
            if b == 0:
                raise EvalError("division by zero")
            return RealV(a / b)
        return _ARITH[name](a, b)

    # main evaluator --------------------------------------------------
    def eval(self, t: Term, env: tuple, st: Any) -> Dist:
        if self.is_pure(t):
            try:
                return self.ret(self.value(t, env), st)
            except _Absent:
                return {}
        match t:
            case Pair(a, b):
                return self.bind(
                    self.eval(a, env, st),
                    lambda va, s1: self.fmap(self.eval(b, env, s1), lambda vb: PairV(va, vb)),
                )
            case Proj(i, a):
                return self.fmap(self.eval(a, env, st), lambda v: v.fst if i == 1 else v.snd)
            case Inj(i, a):
                return self.fmap(self.eval(a, env, st), lambda v: InjV(i, v))
            case Absurd(a):
                self.eval(a, env, st)
                return {}
            case Case(s, _, l, _, r, _, _):
                return self.bind(
                    self.eval(s, env, st),
                    lambda v, s1: self.eval(l if v.i == 1 else r, env + (v.val,), s1),
                )
            case Const(name, a):
                kind = self.const_kind(name)
                return self.bind(self.eval(a, env, st), lambda v, s1: self.constant(kind, name, v, s1))
            case Effect(name, a):
                kind = self.effect_kind(name)
                return self.bind(self.eval(a, env, st), lambda v, s1: self.effect(kind, name, v, s1))
            case App(Lam(_, _, body), a):
                # a let binding: no closure, no memo entry
                return self.bind(self.eval(a, env, st), lambda v, s1: self.eval(body, env + (v,), s1))
            case App(f, a):
                return self.bind(
                    self.eval(f, env, st),
                    lambda vf, s1: self.bind(self.eval(a, env, s1), lambda va, s2: self.apply(vf, va, s2)),
                )
        raise EvalError(f"cannot evaluate {t!r}")

    def apply(self, f: Value, a: Value, st: Any) -> Dist:
        key = (f, a, st, None)
        hit = self.memo.get(key) or self.memo.get((f, a, st, self.fuel))
        if hit is not None:
            self.reads_fuel |= hit[1]
            self.exhausted |= hit[2]
            return hit[0]
        outer = (self.reads_fuel, self.exhausted)
        self.reads_fuel = self.exhausted = False
        if isinstance(f, Closure):
            out = self.eval(f.lam.body, f.env + (a,), st)
        elif isinstance(f, RecClosure):
            if f.fuel <= 0:
                self.exhausted = True
                out = {}
            else:
                smaller = RecClosure(f.env, f.rec, f.fuel - 1)
                out = self.eval(f.rec.body, f.env + (smaller, a), st)
        else:
            raise EvalError(f"application of a non-function value {show_value(f)}")
        reads, exhausted = self.reads_fuel, self.exhausted
        self.memo[(f, a, st, self.fuel if reads else None)] = (out, reads, exhausted)
        self.reads_fuel = outer[0] or reads
        self.exhausted = outer[1] or exhausted
        return out

    def constant(self, kind: Any, name: str, v: Value, st: Any) -> Dist:
        match kind:
            case sg.Arith():
                return self.ret(self.arith(name, v), st)
            case sg.Step(symbol):
                if self.spec is None:
                    raise EvalError(f"{name} needs an automaton")
                y = v.snd.s
                return self.ret(PairV(v.fst, StateV(self.spec.step(y, symbol))), st)
        raise EvalError(f"constant {name} has no interpretation")

    def effect(self, kind: Any, name: str, v: Value, st: Any) -> Dist:
        lifted = self.route == PRODUCT
        wrap: Callable[[Value], Value] = (lambda r: PairV(r, v.snd)) if lifted else (lambda r: r)
        match kind:
            case sg.Flip(p):
                return self._branch(p, 0, wrap, st)
            case sg.FlipReward(p, r):
                return self._branch(p, r, wrap, st)
            case sg.Choose():
                return {(wrap(TRUE_V), st, _EMPTY, 0): 1, (wrap(FALSE_V), st, _EMPTY, 0): 1}
            case sg.Emit(symbol):
                if self.route == SOURCE:
                    return {(UNIT_V, st, (symbol,), 0): self.one}
                if self.spec is None:
                    raise EvalError(f"{name} needs an automaton")
                return self.ret(UNIT_V, self.spec.step(st, symbol))
        raise EvalError(f"effect {name} has no interpretation")

    def _branch(self, p: Fraction, r: Fraction, wrap, st: Any) -> Dist:
        if not self.weighted:
            raise EvalError("probabilistic branching under a nondeterministic query")
        out: Dist = {}
        key_r = r if self.keep_rewards else 0
        for v, w in ((TRUE_V, p), (FALSE_V, 1 - p)):
            if w > 0:
                out[(wrap(v), st, _EMPTY, key_r)] = (w, w * r) if self.weights == "exp" else w
        return out


# -- running deep recursions -------------------------------------------------

_STACK_BYTES = 512 * 1024 * 1024


def run_deep(fn: Callable[[], Any], machine: Machine | None = None) -> Any:
    """Run ``fn``, retrying on a thread with a large stack and recursion
    limit if the current stack is not deep enough.

    Memo entries are only written for finished applications, so a retry can
    reuse them; ``machine``'s fuel flags are restored before retrying.
    """
    flags = None if machine is None else (machine.reads_fuel, machine.exhausted)
    try:
        return fn()
    except RecursionError:
        if machine is not None:
            machine.reads_fuel, machine.exhausted = flags
    result: list[Any] = []
    error: list[BaseException] = []

    def target() -> None:
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 200_000))
        try:
            result.append(fn())
        except BaseException as exc:  # noqa: BLE001 - re-raised below
            error.append(exc)
        finally:
            sys.setrecursionlimit(old)

    previous = threading.stack_size()
    threading.stack_size(_STACK_BYTES)
    try:
        th = threading.Thread(target=target)
        th.start()
        th.join()
    finally:
        threading.stack_size(previous)
    if error:
        if isinstance(error[0], RecursionError):
            raise EvalError("evaluation exceeded the recursion limit") from error[0]
        raise error[0]
    return result[0]


# -- algebras ------------------------------------------------------------------


@dataclass(frozen=True)
class Algebra:
    """The Eilenberg-Moore algebra of a verification mode, on its domain."""

    mode: Mode

    @property
    def bottom(self) -> Any:
        match self.mode:
            case Mode.PROB | Mode.OPT_REWARD:
                return Fraction(0)
            case Mode.PROB_REWARD:
                return (Fraction(0), Fraction(0))
        return False

    def leq(self, a: Any, b: Any) -> bool:
        if self.mode is Mode.PROB_REWARD:
            return a[0] <= b[0] and a[1] <= b[1]
        return a <= b

    def _require_weighted(self, what: str) -> None:
        if not self.mode.weighted:
            raise EvalError(f"{what} is not supported in {self.mode.value} mode")

    def combine_flip(self, p: Fraction, a: Any, b: Any) -> Any:
        self._require_weighted("probabilistic branching")
        if self.mode is Mode.PROB_REWARD:
            return (p * a[0] + (1 - p) * b[0], p * a[1] + (1 - p) * b[1])
        return p * a + (1 - p) * b

    def combine_flip_reward(self, p: Fraction, r: Fraction, a: Any, b: Any) -> Any:
        """Branch with probability ``p`` after earning ``r``: the reward
        counts in proportion to the accepting mass of each branch."""
        if self.mode is Mode.PROB_REWARD:
            return self.combine_flip(p, (a[0], a[1] + r * a[0]), (b[0], b[1] + r * b[0]))
        return self.combine_flip(p, a, b)

    def combine_choose(self, a: Any, b: Any) -> Any:
        if self.mode.weighted:
            raise EvalError(f"nondeterministic choice is not supported in {self.mode.value} mode")
        return a or b if self.mode is Mode.REACH else max(a, b)

    def aggregate(self, outcomes: Iterable[tuple[Any, Any, Fraction]]) -> Any:
        """Collapse ``(weight, post value, accumulated reward)`` triples."""
        match self.mode:
            case Mode.PROB:
                return sum((w * post for w, post, _ in outcomes), Fraction(0))
            case Mode.PROB_REWARD:
                p = r = Fraction(0)
                for w, (pp, rr), n in outcomes:
                    if isinstance(w, tuple):
                        # expectation-semiring weight: (mass, reward-weighted mass)
                        w, wn = w
                    else:
                        wn = w * n
                    p += w * pp
                    r += wn * pp + w * rr
                return (p, r)
            case Mode.REACH:
                return any(post for _, post, _ in outcomes)
            case Mode.OPT_REWARD:
                return max((post for _, post, _ in outcomes), default=Fraction(0))
        raise AssertionError(self.mode)

    def distance(self, a: Any, b: Any) -> Fraction:
        match self.mode:
            case Mode.PROB | Mode.OPT_REWARD:
                return abs(Fraction(a) - Fraction(b))
            case Mode.PROB_REWARD:
                return max(abs(a[0] - b[0]), abs(a[1] - b[1]))
        return Fraction(0) if a == b else Fraction(1)

    def in_bounds(self, v: Any) -> bool:
        match self.mode:
            case Mode.PROB:
                return 0 <= v <= 1
            case Mode.PROB_REWARD:
                return 0 <= v[0] <= 1 and v[1] >= 0
            case Mode.REACH:
                return isinstance(v, bool)
        return v >= 0


def domain_to_json(mode: Mode, v: Any) -> Any:
    match mode:
        case Mode.PROB | Mode.OPT_REWARD:
            return sg.fmt_rat(Fraction(v))
        case Mode.PROB_REWARD:
            return {"prob": sg.fmt_rat(v[0]), "reward": sg.fmt_rat(v[1])}
    return bool(v)


def domain_from_json(mode: Mode, d: Any) -> Any:
    match mode:
        case Mode.PROB | Mode.OPT_REWARD:
            return sg.parse_rat(d)
        case Mode.PROB_REWARD:
            return (sg.parse_rat(d["prob"]), sg.parse_rat(d["reward"]))
    return bool(d)


def show_domain(mode: Mode, v: Any, digits: int = 10) -> str:
    match mode:
        case Mode.PROB | Mode.OPT_REWARD:
            return f"{sg.fmt_rat(v)} (~{float(v):.{digits}g})"
        case Mode.PROB_REWARD:
            return f"prob {sg.fmt_rat(v[0])} (~{float(v[0]):.{digits}g}), reward {sg.fmt_rat(v[1])} (~{float(v[1]):.{digits}g})"
    return "true" if v else "false"


# -- results -----------------------------------------------------------------------


@dataclass
class WpResult:
    mode: Mode
    per_state: dict[str, Any]
    fuel: int
    converged: bool = False
    delta: Fraction | None = None
    # total outcome weight per start state (weighted modes)
    mass: dict[str, Fraction] = field(default_factory=dict)
    # no unfolding ran out of fuel: the approximant is the exact value
    exact: bool = False
    # outcome supports per start state, used by the set-mode stopping rule
    support: dict[str, frozenset] = field(default_factory=dict, repr=False, compare=False)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"mode": self.mode.value, "fuel": self.fuel, "converged": self.converged}
        out["exact"] = self.exact
        out["delta"] = None if self.delta is None else sg.fmt_rat(self.delta)
        out["perState"] = {k: domain_to_json(self.mode, v) for k, v in self.per_state.items()}
        if self.mass:
            out["mass"] = {k: sg.fmt_rat(m) for k, m in self.mass.items()}
        return out

    @classmethod
    def from_json(cls, d: dict) -> WpResult:
        mode = Mode(d["mode"])
        delta = d.get("delta")
        return cls(
            mode,
            {k: domain_from_json(mode, v) for k, v in d["perState"].items()},
            int(d["fuel"]),
            bool(d.get("converged", False)),
            None if delta is None else sg.parse_rat(delta),
            {k: sg.parse_rat(m) for k, m in d.get("mass", {}).items()},
            bool(d.get("exact", False)),
        )


@dataclass(frozen=True)
class Valuation:
    """Outcomes of a closed ground program: ``(value, trace, reward)`` keys."""

    weighted: bool
    outcomes: dict[tuple[Value, tuple[str, ...], Fraction], Any]
    # no unfolding ran out of fuel
    exact: bool = False

    @property
    def mass(self) -> Fraction:
        return sum(self.outcomes.values(), Fraction(0)) if self.weighted else Fraction(len(self.outcomes))


# -- entry points ------------------------------------------------------------------


def _effect_kinds(term: Term, sig: sg.Signature) -> set[type]:
    kinds: set[type] = set()
    for t in subterms(term):
        if isinstance(t, Effect):
            try:
                kinds.add(type(sig.effect(t.name).kind))
            except sg.SignatureError as exc:
                raise EvalError(str(exc)) from None
    return kinds


def check_effects(term: Term, sig: sg.Signature, mode: Mode | None = None) -> bool:
    """Whether the program is probabilistic; rejects unsupported mixtures."""
    kinds = _effect_kinds(term, sig)
    prob = kinds & {sg.Flip, sg.FlipReward}
    if prob and sg.Choose in kinds:
        raise EvalError("mixing probabilistic branching (flip/flipr) with nondeterministic choice (choose) is unsupported")
    if mode is not None:
        if mode.weighted and sg.Choose in kinds:
            raise EvalError(f"choose is not supported in {mode.value} mode")
        if not mode.weighted and prob:
            raise EvalError(f"flip/flipr is not supported in {mode.value} mode")
        return mode.weighted
    return not (sg.Choose in kinds)


def emitted_symbols(term: Term, sig: sg.Signature) -> set[str]:
    """Event symbols a program can raise, including ``step[a]`` in product programs."""
    out: set[str] = set()
    for t in subterms(term):
        try:
            if isinstance(t, Effect):
                kind = sig.effect(t.name).kind
            elif isinstance(t, Const):
                kind = sig.constant(t.name).kind
            else:
                continue
        except sg.SignatureError as exc:
            raise EvalError(str(exc)) from None
        if isinstance(kind, (sg.Emit, sg.Step)):
            out.add(kind.symbol)
    return out


def check_alphabet(term: Term, sig: sg.Signature, spec: Spec) -> None:
    missing = sorted(emitted_symbols(term, sig) - set(spec.alphabet))
    if missing:
        raise EvalError(f"events {', '.join(map(repr, missing))} are not in the automaton alphabet")


def _closed_ground(term: Term, sig: sg.Signature, ctx=None) -> Type:
    try:
        _, t = annotate(ctx or [], term, sig)
    except TypeCheckError as exc:
        raise EvalError(f"ill-typed program: {exc}") from None
    if not is_ground(t):
        raise EvalError(f"program type {show_type(t)} is not ground")
    return t


def _validate(
    term: Term, sig: sg.Signature, mode: Mode | None, spec: Spec | None, ctx: list | None, memo: EvalCache | None
) -> tuple[Type, bool]:
    """Type, effect and alphabet checks; the result is whether weights apply.

    A shared cache remembers programs it has already accepted, so iterating
    over fuels checks each program once.
    """
    key = (id(term), id(sig), mode, id(spec), bool(ctx))
    if memo is not None:
        hit = memo.checked.get(key)
        if hit is not None and hit[0] is term and hit[1] is sig and hit[2] is spec:
            return hit[3]
    t = _closed_ground(term, sig, ctx)
    weighted = check_effects(term, sig, mode)
    if spec is not None:
        check_alphabet(term, sig, spec)
    if memo is not None:
        memo.checked[key] = (term, sig, spec, (t, weighted))
    return t, weighted


def _check_fuel(fuel: int) -> None:
    if fuel < 0:
        raise EvalError("fuel must be nonnegative")


def eval_traces(
    term: Term, sig: sg.Signature = sg.DEFAULT, fuel: int = 0, weighted: bool | None = None, memo: EvalCache | None = None
) -> Valuation:
    """The fuel-``fuel`` approximant of the trace semantics of a closed program."""
    _check_fuel(fuel)
    _, w = _validate(term, sig, None, None, None, memo)
    w = w if weighted is None else weighted
    m = Machine(SOURCE, sig, None, fuel, "prob" if w else "set", keep_rewards=True, memo=memo)
    dist = run_deep(lambda: m.eval(term, (), None), m)
    outcomes: dict = {}
    for (v, _, tr, r), wt in dist.items():
        outcomes[(v, tr, Fraction(r))] = wt
    return Valuation(w, outcomes, not m.exhausted)


def _weights_for(mode: Mode) -> str:
    return {Mode.PROB: "prob", Mode.PROB_REWARD: "exp"}.get(mode, "set")


def _mass(w: Any) -> Fraction:
    return w[0] if isinstance(w, tuple) else Fraction(w)


def _collect(q: InferenceQuery, alg: Algebra, finals: list[tuple[Any, Any, Any, Any]]):
    """Aggregate ``(weight, value, final state, reward)`` outcomes."""
    value = alg.aggregate((w, q.terminal(s), Fraction(r)) for w, _, s, r in finals)
    mass = sum((_mass(w) for w, *_ in finals), Fraction(0))
    support = frozenset((v, s, Fraction(r)) for _, v, s, r in finals)
    return value, mass, support


def _result(q: InferenceQuery, fuel: int, rows: dict[str, tuple], exact: bool) -> WpResult:
    res = WpResult(q.mode, {k: r[0] for k, r in rows.items()}, fuel, exact=exact)
    if q.mode.weighted:
        res.mass = {k: r[1] for k, r in rows.items()}
    res.support = {k: r[2] for k, r in rows.items()}
    return res


def wp_source(
    term: Term, sig: sg.Signature, q: InferenceQuery, fuel: int, states: list | None = None, memo: EvalCache | None = None
) -> WpResult:
    """Query applied to the trace semantics, for each start state."""
    _check_fuel(fuel)
    _, weighted = _validate(term, sig, q.mode, q.spec, None, memo)
    val = eval_traces(term, sig, fuel, weighted, memo)
    alg = Algebra(q.mode)
    rows = {}
    for y in states if states is not None else q.start_states():
        finals = [(wt, v, q.run(y, tr), r) for (v, tr, r), wt in val.outcomes.items()]
        rows[state_label(y)] = _collect(q, alg, finals)
    return _result(q, fuel, rows, val.exact)


def wp_sync(
    term: Term, sig: sg.Signature, q: InferenceQuery, fuel: int, states: list | None = None, memo: EvalCache | None = None
) -> WpResult:
    """Evaluate the original program with the automaton state threaded through."""
    _check_fuel(fuel)
    _validate(term, sig, q.mode, q.spec, None, memo)
    alg = Algebra(q.mode)
    m = Machine(SYNC, sig, q.spec, fuel, _weights_for(q.mode), memo=memo)
    rows = {}
    for y in states if states is not None else q.start_states():
        dist = run_deep(lambda: m.eval(term, (), y), m)
        rows[state_label(y)] = _collect(q, alg, [(wt, v, s, r) for (v, s, _, r), wt in dist.items()])
    return _result(q, fuel, rows, not m.exhausted)


def wp_product(
    term: Term, sig: sg.Signature, q: InferenceQuery, fuel: int, states: list | None = None, memo: EvalCache | None = None
) -> WpResult:
    """Weakest pre-condition of a transformed program.

    ``term`` is typed in the context ``__y : state`` under a lifted signature;
    its result is a pair whose second component is the final state.
    """
    _check_fuel(fuel)
    if not sig.lifted:
        raise EvalError("wp_product needs a lifted signature")
    if sig.spec is not None and sig.spec != q.spec:
        raise EvalError("the signature was lifted over a different automaton")
    if sig.spec is None:
        sig = replace(sig, spec=q.spec)
    t, _ = _validate(term, sig, q.mode, None, [(STATE_VAR, StateBase())], memo)
    if not (isinstance(t, Prod) and isinstance(t.right, StateBase)):
        raise EvalError(f"product program has type {show_type(t)}, expected a pair with a final state")
    alg = Algebra(q.mode)
    m = Machine(PRODUCT, sig, q.spec, fuel, _weights_for(q.mode), memo=memo)
    rows = {}
    for y in states if states is not None else q.start_states():
        dist = run_deep(lambda: m.eval(term, (StateV(y),), None), m)
        finals = [(wt, v.fst, v.snd.s, r) for (v, _, _, r), wt in dist.items()]
        rows[state_label(y)] = _collect(q, alg, finals)
    return _result(q, fuel, rows, not m.exhausted)


def wp_iterate(
    op: Callable[[int], WpResult],
    tol: Fraction | float | str,
    fuel_cap: int,
    mode: Mode | None = None,
    patience: int = 3,
) -> WpResult:
    """Evaluate ``op`` at fuel 0, 1, ... until the approximants settle.

    An approximant in which no unfolding ran out of fuel is the exact value
    and stops the iteration at once.  Otherwise weighted modes stop once the
    per-state values and the total mass have moved by less than ``tol`` for
    ``patience`` consecutive steps (with some mass present); set modes stop
    when every state holds the top element or values and outcome supports
    have not changed for ``patience`` steps.  Hitting ``fuel_cap`` leaves
    ``converged`` false.
    """
    if fuel_cap < 1:
        raise EvalError("fuel cap must be at least 1")
    tol = Fraction(str(tol)) if isinstance(tol, float) else Fraction(tol)
    prev = op(0)
    alg = Algebra(mode or prev.mode)
    weighted = alg.mode.weighted
    if weighted and tol <= 0:
        raise EvalError("tolerance must be positive")
    if prev.exact:
        prev.converged, prev.delta = True, Fraction(0)
        return prev
    cur, calm = prev, 0
    for n in range(1, fuel_cap + 1):
        cur = op(n)
        dv = max((alg.distance(prev.per_state[k], cur.per_state[k]) for k in cur.per_state), default=Fraction(0))
        if weighted:
            dm = max((abs(cur.mass[k] - prev.mass[k]) for k in cur.mass), default=Fraction(0))
            cur.delta = max(dv, dm)
            settled = dv < tol and dm < tol and any(m > 0 for m in cur.mass.values())
        else:
            cur.delta = dv
            settled = dv == 0 and cur.support == prev.support
        calm = calm + 1 if settled else 0
        top = alg.mode is Mode.REACH and all(cur.per_state.values())
        if cur.exact or top or calm >= patience:
            cur.converged = True
            return cur
        prev = cur
    return cur

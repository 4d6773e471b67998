"""Random well-typed programs and automata for checking the three routes agree.

Every generated program is closed, has a ground result type and uses the
effects of one mode.  Recursion is generated from a template whose body makes
at most one recursive call per unfolding, so trace enumeration at small fuel
stays cheap.
"""

from __future__ import annotations

import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from . import signature as sg
from .automata import Dfa, InferenceQuery, Mode
from .semantics import EvalCache, EvalError, wp_product, wp_source, wp_sync
from .sps import TransformError, simplify, transform_term
from .terms import App, Case, Effect, Inj, Lam, Pair, Proj, Rec, Term, UnitVal, Var
from .typecheck import TypeCheckError, annotate
from .types import BOOL, UNIT, Arrow, Prod, Sum, Type

SYMBOLS = ("a", "b")
PROBS = (Fraction(1, 2), Fraction(1, 3), Fraction(1, 4), Fraction(3, 4))
REWARDS = (Fraction(0), Fraction(1), Fraction(1, 2), Fraction(2))
DEFAULT_MODES = (Mode.PROB, Mode.REACH)

GROUND_TYPES: tuple[Type, ...] = (UNIT, BOOL, Prod(BOOL, UNIT), Sum(UNIT, BOOL), Prod(BOOL, BOOL))


@dataclass(frozen=True)
class Sample:
    mode: Mode
    term: Term
    result_type: Type
    dfa: Dfa


class _Gen:
    """Type-directed generator.  Context entries are types, newest last;
    ``None`` marks a binder the generator must not mention."""

    def __init__(self, rng: random.Random, mode: Mode):
        self.rng = rng
        self.mode = mode
        self.names = 0
        self.recs = 0

    def fresh(self, base: str) -> str:
        self.names += 1
        return f"{base}{self.names}"

    # -- effects ---------------------------------------------------------------

    def branch_effect(self) -> Term:
        r = self.rng
        match self.mode:
            case Mode.PROB:
                return Effect(sg.flip_name(r.choice(PROBS)), UnitVal())
            case Mode.PROB_REWARD:
                if r.random() < 0.5:
                    return Effect(sg.flipr_name(r.choice(PROBS), r.choice(REWARDS)), UnitVal())
                return Effect(sg.flip_name(r.choice(PROBS)), UnitVal())
        return Effect("choose", UnitVal())

    def emit(self) -> Term:
        return Effect(sg.emit_name(self.rng.choice(SYMBOLS)), UnitVal())

    # -- terms -----------------------------------------------------------------

    def small_type(self, depth: int) -> Type:
        r = self.rng
        if depth > 1 and r.random() < 0.2:
            return Arrow(r.choice((UNIT, BOOL)), r.choice((UNIT, BOOL)))
        return r.choice(GROUND_TYPES[:3])

    def vars_of(self, ctx: list, ty: Type) -> list[int]:
        n = len(ctx)
        return [n - 1 - k for k, t in enumerate(ctx) if t == ty]

    def leaf(self, ctx: list, ty: Type) -> Term:
        r = self.rng
        found = self.vars_of(ctx, ty)
        if found and r.random() < 0.5:
            return Var(r.choice(found), "v")
        match ty:
            case Prod(a, b):
                return Pair(self.leaf(ctx, a), self.leaf(ctx, b))
            case Sum(a, b):
                i = r.choice((1, 2))
                return Inj(i, self.leaf(ctx, a if i == 1 else b))
            case Arrow(a, b):
                return Lam(self.fresh("x"), a, self.leaf(ctx + [a], b))
        return UnitVal()

    def gen(self, ctx: list, ty: Type, depth: int) -> Term:
        r = self.rng
        if depth <= 0:
            return self.leaf(ctx, ty)
        d = depth - 1
        k = r.randrange(11)
        if k == 0:
            return self.leaf(ctx, ty)
        if k in (1, 2):
            # branch on an effect
            return Case(self.branch_effect(), "_", self.gen(ctx + [UNIT], ty, d), "_", self.gen(ctx + [UNIT], ty, d))
        if k == 3:
            # raise an event, then continue
            return App(Lam("_", UNIT, self.gen(ctx + [UNIT], ty, d)), self.emit())
        if k == 4:
            s = self.small_type(depth)
            x = self.fresh("x")
            return App(Lam(x, s, self.gen(ctx + [s], ty, d)), self.gen(ctx, s, d))
        if k == 5:
            s = r.choice((UNIT, BOOL))
            return App(self.gen(ctx, Arrow(s, ty), d), self.gen(ctx, s, d))
        if k == 6:
            return Proj(1, self.gen(ctx, Prod(ty, r.choice((UNIT, BOOL))), d))
        if k == 7:
            s = r.choice((UNIT, BOOL))
            return Case(self.gen(ctx, Sum(s, UNIT), d), self.fresh("l"), self.gen(ctx + [s], ty, d),
                        self.fresh("r"), self.gen(ctx + [UNIT], ty, d))
        if k == 8 and self.recs < 2:
            return self.recursion(ctx, ty, d)
        match ty:
            case Prod(a, b):
                return Pair(self.gen(ctx, a, d), self.gen(ctx, b, d))
            case Sum(a, b):
                i = r.choice((1, 2))
                return Inj(i, self.gen(ctx, a if i == 1 else b, d))
            case Arrow(a, b):
                return Lam(self.fresh("x"), a, self.gen(ctx + [a], b, d))
        return self.leaf(ctx, ty)

    def recursion(self, ctx: list, ty: Type, depth: int) -> Term:
        """``(rec f x. case e of inl -> ...f (arg)... | inr -> base) a``."""
        self.recs += 1
        r = self.rng
        s = r.choice((UNIT, BOOL))
        fn = self.fresh("f")
        inner = ctx + [None, s]
        emits = r.random() < 0.6
        # f sits under x, the case binder and, when an event is raised
        # first, the sequencing binder
        call_ctx = inner + [UNIT] + ([UNIT] if emits else [])
        arg = self.gen(call_ctx, s, min(depth, 1))
        call = App(Var(len(call_ctx) - 1 - len(ctx), fn), arg)
        if r.random() < 0.5:
            call = App(Lam(self.fresh("r"), ty, self.gen(call_ctx + [ty], ty, min(depth, 1))), call)
        if emits:
            call = App(Lam("_", UNIT, call), self.emit())
        base = self.gen(inner + [UNIT], ty, min(depth, 2))
        body = Case(self.branch_effect(), "_", call, "_", base)
        rec = Rec(fn, self.fresh("x"), body, s, ty)
        return App(rec, self.gen(ctx, s, min(depth, 1)))


def random_dfa(rng: random.Random) -> Dfa:
    n = rng.randint(1, 3)
    states = tuple(f"q{i}" for i in range(n))
    delta = {(y, a): rng.choice(states) for y in states for a in SYMBOLS}
    accepting = frozenset(y for y in states if rng.random() < 0.5)
    return Dfa(states, SYMBOLS, delta, accepting, states[0])


def sample(seed: int, index: int, max_depth: int, modes: tuple[Mode, ...] = DEFAULT_MODES) -> Sample:
    """The ``index``-th program of the corpus for ``seed``."""
    rng = random.Random(f"tvp-corpus:{seed}:{index}")
    mode = modes[index % len(modes)]
    ty = rng.choice(GROUND_TYPES)
    term = _Gen(rng, mode).gen([], ty, max_depth)
    return Sample(mode, term, ty, random_dfa(rng))


@dataclass
class CaseResult:
    index: int
    mode: Mode
    ok: bool
    detail: str = ""


@dataclass
class CorpusSummary:
    seed: int
    count: int
    max_depth: int
    fuels: tuple[int, ...]
    passed: int = 0
    failures: list[CaseResult] = field(default_factory=list)
    by_mode: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "count": self.count,
            "maxDepth": self.max_depth,
            "fuels": list(self.fuels),
            "passed": self.passed,
            "failed": len(self.failures),
            "byMode": dict(sorted(self.by_mode.items())),
            "failures": [
                {"seed": self.seed, "index": f.index, "mode": f.mode.value, "detail": f.detail} for f in self.failures
            ],
        }

    def render(self) -> str:
        lines = [f"corpus seed {self.seed}: {self.passed}/{self.count} passed (fuels {self.fuels[0]}..{self.fuels[-1]})"]
        for f in self.failures:
            lines.append(f"  FAIL seed={self.seed} index={f.index} mode={f.mode.value}: {f.detail}")
        return "\n".join(lines)


def check_sample(s: Sample, fuels: tuple[int, ...]) -> str | None:
    """``None`` when all routes agree at every fuel, otherwise a diagnosis."""
    q = InferenceQuery(s.mode, s.dfa)
    try:
        out = transform_term(s.term, [], sg.DEFAULT, s.dfa)
        annotate(out.context, out.term, out.signature, out.type)
        simple = simplify(out.term)
        annotate(out.context, simple, out.signature, out.type)
    except (TransformError, TypeCheckError) as exc:
        return f"transform: {exc}"
    # one cache per route, shared across fuels
    caches = [EvalCache() for _ in range(4)]
    for n in fuels:
        try:
            lhs = wp_source(s.term, sg.DEFAULT, q, n, None, caches[0])
            mid = wp_sync(s.term, sg.DEFAULT, q, n, None, caches[1])
            rhs = wp_product(out.term, out.signature, q, n, None, caches[2])
            rhs2 = wp_product(simple, out.signature, q, n, None, caches[3])
        except EvalError as exc:
            return f"fuel {n}: {exc}"
        if not lhs.per_state == mid.per_state == rhs.per_state == rhs2.per_state:
            return (
                f"fuel {n}: source {lhs.to_json()['perState']} sync {mid.to_json()['perState']} "
                f"product {rhs.to_json()['perState']} simplified {rhs2.to_json()['perState']}"
            )
    return None


def _run_one(args: tuple[int, int, int, tuple[int, ...], tuple[Mode, ...]]) -> CaseResult:
    seed, index, max_depth, fuels, modes = args
    s = sample(seed, index, max_depth, modes)
    detail = check_sample(s, fuels)
    return CaseResult(index, s.mode, detail is None, detail or "")


def _workers(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("TVP_THREADS", "")
        threads = int(env) if env.strip().isdigit() else 1
    return max(1, threads)


def corpus_check(
    seed: int,
    count: int,
    max_depth: int = 4,
    fuels: tuple[int, ...] = (1, 2, 3, 4, 5),
    modes: tuple[Mode, ...] = DEFAULT_MODES,
    threads: int | None = None,
) -> CorpusSummary:
    """Check the three routes on ``count`` generated programs.

    ``threads`` (default: ``TVP_THREADS`` or 1) worker processes share the
    work; results are collected in index order, so the summary does not
    depend on it.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    jobs = [(seed, i, max_depth, tuple(fuels), tuple(modes)) for i in range(count)]
    workers = _workers(threads)
    if workers == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=8))
    summary = CorpusSummary(seed, count, max_depth, tuple(fuels))
    for res in results:
        if res.ok:
            summary.passed += 1
            summary.by_mode[res.mode.value] = summary.by_mode.get(res.mode.value, 0) + 1
        else:
            summary.failures.append(res)
    return summary


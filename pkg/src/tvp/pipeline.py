"""End-to-end verification: parse, type-check, transform, evaluate, compare."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import signature as sg
from .automata import InferenceQuery, Mode, RewardMachine, Spec, SpecError, parse_state_label, spec_from_json, state_label
from .parser import STATE_VAR, ParseError, parse_program
from .pretty import pretty_print, term_to_json
from .semantics import EvalCache, EvalError, WpResult, wp_iterate, wp_product, wp_source, wp_sync
from .sps import TransformError, TransformOutput, simplify, transform_term
from .terms import Term
from .typecheck import TypeCheckError, annotate
from .types import is_ground, show_type, type_to_json

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_THEOREM, EXIT_INPUT = 0, 2, 3, 4


class PipelineError(Exception):
    """An input or stage failure; ``stage`` names where it happened."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


@dataclass
class RunConfig:
    program_path: str
    spec_path: str
    mode: Mode
    initial_state: str | None = None
    fuel_cap: int = 1000
    tol: Fraction = Fraction(1, 10**9)
    output_format: str = "text"
    check_theorems: bool = False
    # approximant index at which the three routes are compared; the trace
    # route enumerates every path, so this stays small
    compare_fuel: int = 6
    simplify: bool = True
    include_timings: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        self.tol = Fraction(str(self.tol)) if isinstance(self.tol, float) else Fraction(self.tol)
        if self.fuel_cap < 1:
            raise ValueError("fuel cap must be at least 1")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.compare_fuel < 0:
            raise ValueError("compare fuel must be nonnegative")
        if self.output_format not in ("text", "json"):
            raise ValueError(f"unknown output format {self.output_format!r}")


@dataclass
class Loaded:
    """A parsed, checked program with its automaton and query."""

    text: str
    term: Term
    spec: Spec
    spec_text: str
    query: InferenceQuery
    states: list


@dataclass
class TheoremCheck:
    fuels: list[int]
    equal: bool
    first_mismatch: dict | None = None

    def to_json(self) -> dict:
        return {"fuels": self.fuels, "equal": self.equal, "firstMismatch": self.first_mismatch}


@dataclass
class Report:
    program_digest: str
    spec_digest: str
    mode: Mode
    states: list[str]
    lhs: WpResult
    mid: WpResult
    rhs: WpResult
    equal_at_fuel: bool
    limit: WpResult
    theorem: TheoremCheck | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if not self.equal_at_fuel or (self.theorem is not None and not self.theorem.equal):
            return EXIT_THEOREM
        return EXIT_OK if self.limit.converged else EXIT_NOT_CONVERGED

    def to_json(self, include_timings: bool = False) -> dict:
        out: dict[str, Any] = {
            "program": {"sha256": self.program_digest},
            "spec": {"sha256": self.spec_digest},
            "mode": self.mode.value,
            "states": self.states,
            "compareFuel": self.lhs.fuel,
            "lhs": self.lhs.to_json(),
            "mid": self.mid.to_json(),
            "rhs": self.rhs.to_json(),
            "equalAtFuel": self.equal_at_fuel,
            "limitEstimate": self.limit.to_json(),
            "theoremCheck": None if self.theorem is None else self.theorem.to_json(),
        }
        if include_timings:
            out["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return out


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _read(path: str, stage: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PipelineError(stage, f"cannot read {path}: {exc.strerror or exc}") from None


def load_program(path: str) -> tuple[str, Term]:
    text = _read(path, "read")
    try:
        term = parse_program(text)
    except ParseError as exc:
        raise PipelineError("parse", str(exc)) from None
    except sg.SignatureError as exc:
        raise PipelineError("parse", str(exc)) from None
    try:
        _, t = annotate([], term)
    except TypeCheckError as exc:
        raise PipelineError("typecheck", str(exc)) from None
    if not is_ground(t):
        raise PipelineError("typecheck", f"program type {show_type(t)} is not ground")
    return text, term


def load_spec_file(path: str) -> tuple[str, Spec]:
    text = _read(path, "spec")
    try:
        return text, spec_from_json(json.loads(text))
    except (json.JSONDecodeError, KeyError, TypeError, SpecError, sg.SignatureError) as exc:
        raise PipelineError("spec", f"{path}: {exc}") from None


def default_mode(spec: Spec) -> Mode:
    """A mode compatible with the automaton kind."""
    return Mode.OPT_REWARD if isinstance(spec, RewardMachine) else Mode.PROB


def load(cfg: RunConfig) -> Loaded:
    text, term = load_program(cfg.program_path)
    spec_text, spec = load_spec_file(cfg.spec_path)
    try:
        query = InferenceQuery(cfg.mode, spec)
        if cfg.initial_state is None:
            states = [query.initial_state()]
        else:
            states = [parse_state_label(query, cfg.initial_state)]
    except SpecError as exc:
        raise PipelineError("spec", f"{cfg.spec_path}: {exc}") from None
    return Loaded(text, term, spec, spec_text, query, states)


def transform_loaded(ld: Loaded, simplified: bool) -> TransformOutput:
    try:
        out = transform_term(ld.term, [], sg.DEFAULT, ld.spec)
    except TransformError as exc:
        raise PipelineError("transform", str(exc)) from None
    if simplified:
        out = TransformOutput(simplify(out.term), out.type, out.context, out.signature)
    return out


def three_way(ld: Loaded, product: TransformOutput, fuel: int, states: list | None = None):
    """The three routes at one approximant index."""
    states = ld.states if states is None else states
    lhs = wp_source(ld.term, sg.DEFAULT, ld.query, fuel, states)
    mid = wp_sync(ld.term, sg.DEFAULT, ld.query, fuel, states)
    rhs = wp_product(product.term, product.signature, ld.query, fuel, states)
    return lhs, mid, rhs


def theorem_check(ld: Loaded, product: TransformOutput, max_fuel: int, states: list | None = None) -> TheoremCheck:
    fuels = list(range(1, max_fuel + 1))
    for n in fuels:
        lhs, mid, rhs = three_way(ld, product, n, states)
        if not (lhs.per_state == mid.per_state == rhs.per_state):
            mismatch = {"fuel": n, "lhs": lhs.to_json()["perState"], "mid": mid.to_json()["perState"],
                        "rhs": rhs.to_json()["perState"]}
            return TheoremCheck(fuels, False, mismatch)
    return TheoremCheck(fuels, True)


ROUTES = ("source", "sync", "product")


def compute_wp(cfg: RunConfig, fuel: int | None = None, route: str = "product") -> WpResult:
    """One route at a fixed fuel, or iterated to ``cfg.tol`` when ``fuel`` is None."""
    if route not in ROUTES:
        raise PipelineError("config", f"unknown route {route!r}")
    ld = load(cfg)
    cache = EvalCache()
    if route == "product":
        product = transform_loaded(ld, cfg.simplify)

        def op(n: int) -> WpResult:
            return wp_product(product.term, product.signature, ld.query, n, ld.states, cache)
    else:
        wp = wp_source if route == "source" else wp_sync

        def op(n: int) -> WpResult:
            return wp(ld.term, sg.DEFAULT, ld.query, n, ld.states, cache)
    try:
        if fuel is not None:
            return op(fuel)
        return wp_iterate(op, cfg.tol, cfg.fuel_cap, cfg.mode)
    except (EvalError, SpecError) as exc:
        raise PipelineError("evaluate", str(exc)) from None


def check_theorems(cfg: RunConfig, max_fuel: int) -> TheoremCheck:
    """Exact three-way agreement at fuels 1..``max_fuel``."""
    ld = load(cfg)
    product = transform_loaded(ld, cfg.simplify)
    try:
        return theorem_check(ld, product, max_fuel)
    except (EvalError, SpecError) as exc:
        raise PipelineError("evaluate", str(exc)) from None


def run_verification(cfg: RunConfig) -> Report:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    ld = load(cfg)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    product = transform_loaded(ld, cfg.simplify)
    timings["transform"] = time.perf_counter() - t0

    try:
        t0 = time.perf_counter()
        lhs, mid, rhs = three_way(ld, product, cfg.compare_fuel)
        timings["compare"] = time.perf_counter() - t0

        theorem = None
        if cfg.check_theorems:
            t0 = time.perf_counter()
            theorem = theorem_check(ld, product, cfg.compare_fuel)
            timings["theorems"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        cache = EvalCache()
        limit = wp_iterate(
            lambda n: wp_product(product.term, product.signature, ld.query, n, ld.states, cache),
            cfg.tol,
            cfg.fuel_cap,
            cfg.mode,
        )
        timings["limit"] = time.perf_counter() - t0
    except (EvalError, SpecError) as exc:
        raise PipelineError("evaluate", str(exc)) from None

    return Report(
        program_digest=_digest(ld.text),
        spec_digest=_digest(ld.spec_text),
        mode=cfg.mode,
        states=[state_label(s) for s in ld.states],
        lhs=lhs,
        mid=mid,
        rhs=rhs,
        equal_at_fuel=lhs.per_state == mid.per_state == rhs.per_state,
        limit=limit,
        theorem=theorem,
        timings=timings,
    )


def export_product(cfg: RunConfig, simplified: bool) -> tuple[str, dict]:
    """The product program as concrete syntax and as a JSON AST.

    The text is re-parsed and re-checked against the transformed type before
    it is returned.
    """
    ld = load(cfg)
    out = transform_loaded(ld, simplified)
    text = pretty_print(out.term, [STATE_VAR])
    try:
        again = parse_program(text, out.signature, [STATE_VAR], allow_reserved=True)
        annotate(out.context, again, out.signature, out.type)
    except (ParseError, TypeCheckError) as exc:  # pragma: no cover - printer/parser bug
        raise PipelineError("transform", f"exported program does not re-check: {exc}") from None
    if again != out.term:  # pragma: no cover - printer/parser bug
        raise PipelineError("transform", "exported program does not round-trip")
    doc = {
        "context": [[name, type_to_json(t)] for name, t in out.context],
        "type": type_to_json(out.type),
        "typeText": show_type(out.type),
        "term": term_to_json(out.term),
    }
    return text, doc


def format_report(rep: Report) -> str:
    from .semantics import show_domain

    lines = [f"mode: {rep.mode.value}"]
    lines.append(f"three routes at fuel {rep.lhs.fuel}: {'equal' if rep.equal_at_fuel else 'DIFFERENT'}")
    for label in rep.states:
        lines.append(f"  {label}: {show_domain(rep.mode, rep.rhs.per_state[label])}")
    if rep.theorem is not None:
        verdict = "holds" if rep.theorem.equal else f"FAILS at fuel {rep.theorem.first_mismatch['fuel']}"
        lines.append(f"three-way equality at fuels 1..{rep.theorem.fuels[-1] if rep.theorem.fuels else 0}: {verdict}")
    lim = rep.limit
    status = "converged" if lim.converged else "NOT converged"
    exact = ", exact" if lim.exact else ""
    lines.append(f"limit estimate ({status} at fuel {lim.fuel}{exact}):")
    for label in rep.states:
        lines.append(f"  {label}: {show_domain(rep.mode, lim.per_state[label])}")
    if rep.timings:
        lines.append("timings: " + ", ".join(f"{k} {v:.3f}s" for k, v in rep.timings.items()))
    return "\n".join(lines)

"""Temporal specifications: coalgebraic DFAs and reward machines.

A word is a tuple of symbols; symbols are arbitrary strings.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Hashable, Sequence, Union

from .signature import fmt_rat, parse_rat

Word = Sequence[str]


class SpecError(ValueError):
    pass


class Mode(enum.Enum):
    PROB = "prob"
    PROB_REWARD = "probreward"
    REACH = "reach"
    OPT_REWARD = "optreward"

    @property
    def weighted(self) -> bool:
        return self in (Mode.PROB, Mode.PROB_REWARD)


@dataclass(frozen=True)
class Dfa:
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    delta: dict[tuple[str, str], str]
    accepting: frozenset[str]
    initial: str

    def __post_init__(self) -> None:
        if len(set(self.states)) != len(self.states):
            raise SpecError("duplicate DFA states")
        if self.initial not in self.states:
            raise SpecError(f"initial state {self.initial!r} is not a state")
        if not self.accepting <= set(self.states):
            raise SpecError("accepting states must be states")
        for y in self.states:
            for a in self.alphabet:
                target = self.delta.get((y, a))
                if target is None:
                    raise SpecError(f"delta undefined on ({y!r}, {a!r})")
                if target not in self.states:
                    raise SpecError(f"delta({y!r}, {a!r}) = {target!r} is not a state")

    def __hash__(self) -> int:
        return hash((self.states, self.alphabet, self.initial))

    def step(self, y: str, a: str) -> str:
        try:
            return self.delta[(y, a)]
        except KeyError:
            if a not in self.alphabet:
                raise SpecError(f"symbol {a!r} outside the alphabet") from None
            raise SpecError(f"unknown state {y!r}") from None


def dfa_run(d: Dfa, y: str, w: Word) -> str:
    if y not in d.states:
        raise SpecError(f"unknown state {y!r}")
    for a in w:
        y = d.step(y, a)
    return y


def dfa_accepts(d: Dfa, y: str, w: Word) -> bool:
    return dfa_run(d, y, w) in d.accepting


@dataclass(frozen=True)
class RewardMachine:
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    edges: dict[tuple[str, str], tuple[str, bool, Fraction]]
    initial: str

    def __post_init__(self) -> None:
        if self.initial not in self.states:
            raise SpecError(f"initial state {self.initial!r} is not a state")
        for u in self.states:
            for a in self.alphabet:
                e = self.edges.get((u, a))
                if e is None:
                    raise SpecError(f"edge undefined on ({u!r}, {a!r})")
                if e[0] not in self.states:
                    raise SpecError(f"edge target {e[0]!r} is not a state")
                if e[2] < 0:
                    raise SpecError("rewards must be nonnegative")

    def __hash__(self) -> int:
        return hash((self.states, self.alphabet, self.initial))

    def step(self, st: tuple[str, bool, Fraction], a: str) -> tuple[str, bool, Fraction]:
        u, _, m = st
        try:
            u2, bit, r = self.edges[(u, a)]
        except KeyError:
            if a not in self.alphabet:
                raise SpecError(f"symbol {a!r} outside the alphabet") from None
            raise SpecError(f"unknown state {u!r}") from None
        return (u2, bit, m + r)


def rm_run(m: RewardMachine, u: str, b: bool, r0: Fraction, w: Word) -> tuple[str, bool, Fraction]:
    """Fold the edges over ``w``; the accept bit is that of the last edge taken."""
    if u not in m.states:
        raise SpecError(f"unknown state {u!r}")
    st = (u, b, Fraction(r0))
    for a in w:
        st = m.step(st, a)
    return st


Spec = Union[Dfa, RewardMachine]


@dataclass(frozen=True)
class InferenceQuery:
    mode: Mode
    spec: Spec

    def __post_init__(self) -> None:
        if self.mode is Mode.OPT_REWARD and not isinstance(self.spec, RewardMachine):
            raise SpecError("optreward mode needs a reward machine")
        if self.mode is not Mode.OPT_REWARD and not isinstance(self.spec, Dfa):
            raise SpecError(f"{self.mode.value} mode needs a DFA")

    def start_states(self) -> list[Hashable]:
        """Spec states a wp result is indexed by, in declaration order."""
        if isinstance(self.spec, Dfa):
            return list(self.spec.states)
        return [(u, b, Fraction(0)) for u in self.spec.states for b in (False, True)]

    def initial_state(self) -> Hashable:
        if isinstance(self.spec, Dfa):
            return self.spec.initial
        return (self.spec.initial, False, Fraction(0))

    def step(self, st: Any, a: str) -> Any:
        return self.spec.step(st, a)

    def run(self, st: Any, w: Word) -> Any:
        for a in w:
            st = self.spec.step(st, a)
        return st

    def terminal(self, st: Any) -> Any:
        """The query on the empty word at state ``st``."""
        match self.mode:
            case Mode.PROB:
                return Fraction(1) if st in self.spec.accepting else Fraction(0)
            case Mode.PROB_REWARD:
                return (Fraction(1), Fraction(0)) if st in self.spec.accepting else (Fraction(0), Fraction(0))
            case Mode.REACH:
                return st in self.spec.accepting
            case Mode.OPT_REWARD:
                _, bit, m = st
                return m if bit else Fraction(0)
        raise AssertionError(self.mode)

    def __call__(self, w: Word, st: Any) -> Any:
        return query_apply(self, w, st)


def query_apply(q: InferenceQuery, w: Word, st: Any) -> Any:
    return q.terminal(q.run(st, w))


def state_label(st: Any) -> str:
    if isinstance(st, tuple):
        u, b, m = st
        label = f"{u},{'true' if b else 'false'}"
        return label if m == 0 else f"{label},{fmt_rat(m)}"
    return str(st)


def parse_state_label(q: InferenceQuery, label: str) -> Any:
    for st in q.start_states():
        if state_label(st) == label:
            return st
    raise SpecError(f"unknown start state {label!r}")


# -- JSON ------------------------------------------------------------------


def _rat(x: Any) -> Fraction:
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(str(x))
    return parse_rat(str(x))


def spec_from_json(data: dict) -> Spec:
    kind = data.get("kind")
    states = tuple(data["states"])
    alphabet = tuple(data["alphabet"])
    if kind == "dfa":
        delta = {(y, a): t for y, row in data["delta"].items() for a, t in row.items()}
        return Dfa(states, alphabet, delta, frozenset(data["accepting"]), data["initial"])
    if kind == "rm":
        edges = {
            (u, a): (e["to"], bool(e["accept"]), _rat(e.get("reward", 0)))
            for u, row in data["edges"].items()
            for a, e in row.items()
        }
        return RewardMachine(states, alphabet, edges, data["initial"])
    raise SpecError(f"unknown spec kind {kind!r}")


def spec_to_json(spec: Spec) -> dict:
    if isinstance(spec, Dfa):
        return {
            "kind": "dfa",
            "states": list(spec.states),
            "alphabet": list(spec.alphabet),
            "initial": spec.initial,
            "accepting": [y for y in spec.states if y in spec.accepting],
            "delta": {y: {a: spec.delta[(y, a)] for a in spec.alphabet} for y in spec.states},
        }
    return {
        "kind": "rm",
        "states": list(spec.states),
        "alphabet": list(spec.alphabet),
        "initial": spec.initial,
        "edges": {
            u: {
                a: {"to": t, "accept": bit, "reward": fmt_rat(r)}
                for a, (t, bit, r) in ((a, spec.edges[(u, a)]) for a in spec.alphabet)
            }
            for u in spec.states
        },
    }


def load_spec(path: str | Path) -> Spec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return spec_from_json(data)
    except KeyError as exc:
        raise SpecError(f"{path}: missing field {exc}") from exc

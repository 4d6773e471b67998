"""Signatures: base types, effect-free constants and generic effects.

Builtin effect families are resolved by name, so a program may use any
``flip[p]`` without declaring it first:

    flip[p]       unit -> bool   probabilistic branch, left with probability p
    flipr[p,r]    unit -> bool   as flip[p], accumulating reward r
    choose        unit -> bool   angelic binary choice
    emit[a]       unit -> unit   raise event a

Builtin constants are real arithmetic and comparisons.  In a lifted
signature every arity and coarity gets ``* state`` and ``emit[a]`` is
replaced by the effect-free constant ``step[a]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any

from .types import BOOL, REAL, UNIT, Prod, STATE, Type, is_ground


class SignatureError(ValueError):
    pass


# -- effect and constant kinds ---------------------------------------------


@dataclass(frozen=True)
class Flip:
    p: Fraction


@dataclass(frozen=True)
class FlipReward:
    p: Fraction
    r: Fraction


@dataclass(frozen=True)
class Choose:
    pass


@dataclass(frozen=True)
class Emit:
    symbol: str


@dataclass(frozen=True)
class Arith:
    op: str


@dataclass(frozen=True)
class Step:
    """State-stepping constant replacing ``emit[symbol]`` after lifting."""

    symbol: str


@dataclass(frozen=True)
class Opaque:
    """User-declared operation without a builtin interpretation."""

    name: str


@dataclass(frozen=True)
class OpSig:
    arity: Type
    coarity: Type
    kind: Any


ARITH_OPS: dict[str, tuple[Type, Type]] = {
    "add": (Prod(REAL, REAL), REAL),
    "sub": (Prod(REAL, REAL), REAL),
    "mul": (Prod(REAL, REAL), REAL),
    "div": (Prod(REAL, REAL), REAL),
    "neg": (REAL, REAL),
    "ge": (Prod(REAL, REAL), BOOL),
    "gt": (Prod(REAL, REAL), BOOL),
    "le": (Prod(REAL, REAL), BOOL),
    "lt": (Prod(REAL, REAL), BOOL),
    "eq": (Prod(REAL, REAL), BOOL),
}

_FAMILY = re.compile(r"^(flip|flipr|emit|step)\[(.*)\]$")


def fmt_rat(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def parse_rat(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise SignatureError(f"bad rational {text!r}") from exc


def flip_name(p: Fraction) -> str:
    return f"flip[{fmt_rat(p)}]"


def flipr_name(p: Fraction, r: Fraction) -> str:
    return f"flipr[{fmt_rat(p)},{fmt_rat(r)}]"


def emit_name(symbol: str) -> str:
    return f"emit[{symbol}]"


def step_name(symbol: str) -> str:
    return f"step[{symbol}]"


def _check_prob(p: Fraction) -> Fraction:
    if not 0 <= p <= 1:
        raise SignatureError(f"probability {p} outside [0,1]")
    return p


def builtin_effect(name: str) -> OpSig | None:
    if name == "choose":
        return OpSig(UNIT, BOOL, Choose())
    m = _FAMILY.match(name)
    if not m:
        return None
    family, args = m.groups()
    if family == "flip":
        return OpSig(UNIT, BOOL, Flip(_check_prob(parse_rat(args))))
    if family == "flipr":
        parts = args.split(",")
        if len(parts) != 2:
            raise SignatureError(f"flipr expects two parameters: {name}")
        r = parse_rat(parts[1])
        if r < 0:
            raise SignatureError(f"negative reward in {name}")
        return OpSig(UNIT, BOOL, FlipReward(_check_prob(parse_rat(parts[0])), r))
    if family == "emit":
        if not args:
            raise SignatureError("emit needs a symbol")
        return OpSig(UNIT, UNIT, Emit(args))
    return None


@dataclass(frozen=True)
class Signature:
    bases: frozenset[str] = frozenset({"real"})
    constants: dict[str, OpSig] = field(default_factory=dict)
    effects: dict[str, OpSig] = field(default_factory=dict)
    # set by lifting; ``spec`` (optional) is the automaton whose states
    # inhabit ``state`` and restricts the admissible ``step[a]`` symbols
    lifted: bool = False
    spec: Any = None

    def __post_init__(self) -> None:
        for name, op in {**self.constants, **self.effects}.items():
            if not (is_ground(op.arity) and is_ground(op.coarity)):
                raise SignatureError(f"{name}: arity and coarity must be ground")

    def effect(self, name: str) -> OpSig:
        op = self.effects.get(name) or builtin_effect(name)
        if op is None:
            raise SignatureError(f"unknown effect {name!r}")
        if self.lifted:
            if isinstance(op.kind, Emit):
                raise SignatureError(f"{name} is replaced by {step_name(op.kind.symbol)} after lifting")
            return _lift_op(op)
        return op

    def constant(self, name: str) -> OpSig:
        op = self.constants.get(name)
        if op is None and name in ARITH_OPS:
            ar, car = ARITH_OPS[name]
            op = OpSig(ar, car, Arith(name))
        if op is None and self.lifted:
            m = _FAMILY.match(name)
            if m and m.group(1) == "step":
                symbol = m.group(2)
                if self.spec is not None and symbol not in self.spec.alphabet:
                    raise SignatureError(f"symbol {symbol!r} not in the automaton alphabet")
                return OpSig(Prod(UNIT, STATE), Prod(UNIT, STATE), Step(symbol))
        if op is None:
            raise SignatureError(f"unknown constant {name!r}")
        return _lift_op(op) if self.lifted else op

    def has_effect(self, name: str) -> bool:
        try:
            self.effect(name)
        except SignatureError:
            return False
        return True

    def has_constant(self, name: str) -> bool:
        try:
            self.constant(name)
        except SignatureError:
            return False
        return True

    def lift(self, spec: Any = None) -> Signature:
        if self.lifted:
            raise SignatureError("signature is already lifted")
        if spec is not None:
            for name, op in self.effects.items():
                if isinstance(op.kind, Emit) and op.kind.symbol not in spec.alphabet:
                    raise SignatureError(f"{name}: symbol {op.kind.symbol!r} not in the automaton alphabet")
        return replace(self, lifted=True, spec=spec)


def _lift_op(op: OpSig) -> OpSig:
    return OpSig(Prod(op.arity, STATE), Prod(op.coarity, STATE), op.kind)


DEFAULT = Signature()

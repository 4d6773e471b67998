"""Type language of the effectful lambda calculus."""

from __future__ import annotations

from dataclasses import dataclass


class Type:
    __slots__ = ()

    def __str__(self) -> str:
        return show_type(self)


@dataclass(frozen=True, slots=True)
class Base(Type):
    name: str


@dataclass(frozen=True, slots=True)
class Unit(Type):
    pass


@dataclass(frozen=True, slots=True)
class Empty(Type):
    pass


@dataclass(frozen=True, slots=True)
class Prod(Type):
    left: Type
    right: Type


@dataclass(frozen=True, slots=True)
class Sum(Type):
    left: Type
    right: Type


@dataclass(frozen=True, slots=True)
class Arrow(Type):
    dom: Type
    cod: Type


@dataclass(frozen=True, slots=True)
class StateBase(Type):
    """The base type carrying the specification state in product programs."""


@dataclass(frozen=True, slots=True)
class TVar(Type):
    """Unification variable; never survives a finished type check."""

    id: int


UNIT = Unit()
EMPTY = Empty()
REAL = Base("real")
BOOL = Sum(UNIT, UNIT)
STATE = StateBase()


def is_ground(t: Type) -> bool:
    match t:
        case Arrow():
            return False
        case Prod(a, b) | Sum(a, b):
            return is_ground(a) and is_ground(b)
        case _:
            return True


def mentions_state(t: Type) -> bool:
    match t:
        case StateBase():
            return True
        case Prod(a, b) | Sum(a, b):
            return mentions_state(a) or mentions_state(b)
        case Arrow(a, b):
            return mentions_state(a) or mentions_state(b)
        case _:
            return False


def show_type(t: Type, prec: int = 0) -> str:
    # precedence: arrow 0 (right assoc), sum 1, product 2, atoms 3
    match t:
        case Base(name):
            return name
        case Unit():
            return "unit"
        case Empty():
            return "empty"
        case StateBase():
            return "state"
        case TVar(i):
            return f"'t{i}"
        case Arrow(a, b):
            s = f"{show_type(a, 1)} -> {show_type(b, 0)}"
            return f"({s})" if prec > 0 else s
        case Sum(a, b):
            if a == UNIT and b == UNIT:
                return "bool"
            s = f"{show_type(a, 1)} + {show_type(b, 2)}"
            return f"({s})" if prec > 1 else s
        case Prod(a, b):
            s = f"{show_type(a, 2)} * {show_type(b, 3)}"
            return f"({s})" if prec > 2 else s
    raise TypeError(f"not a type: {t!r}")


def type_to_json(t: Type) -> dict:
    match t:
        case Base(name):
            return {"type": "base", "name": name}
        case Unit():
            return {"type": "unit"}
        case Empty():
            return {"type": "empty"}
        case StateBase():
            return {"type": "state"}
        case Prod(a, b):
            return {"type": "prod", "left": type_to_json(a), "right": type_to_json(b)}
        case Sum(a, b):
            return {"type": "sum", "left": type_to_json(a), "right": type_to_json(b)}
        case Arrow(a, b):
            return {"type": "arrow", "dom": type_to_json(a), "cod": type_to_json(b)}
    raise TypeError(f"cannot serialize type {t!r}")


def type_from_json(d: dict) -> Type:
    match d["type"]:
        case "base":
            return Base(d["name"])
        case "unit":
            return UNIT
        case "empty":
            return EMPTY
        case "state":
            return STATE
        case "prod":
            return Prod(type_from_json(d["left"]), type_from_json(d["right"]))
        case "sum":
            return Sum(type_from_json(d["left"]), type_from_json(d["right"]))
        case "arrow":
            return Arrow(type_from_json(d["dom"]), type_from_json(d["cod"]))
    raise ValueError(f"unknown type node {d['type']!r}")

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvp import signature as sg
from tvp.automata import Mode
from tvp.corpus import sample
from tvp.parser import ParseError, parse_program, parse_type
from tvp.pretty import pretty_print, term_from_json, term_to_json
from tvp.terms import App, Case, Effect, Inj, Lam, Pair, Proj, UnitVal, Var, free_indices, shift, size, subst_top
from tvp.typecheck import TypeCheckError, annotate, typecheck
from tvp.types import BOOL, REAL, UNIT, Arrow, Prod, Sum, is_ground, show_type

from conftest import BENCHMARKS, bench_program


def test_parse_let_and_sequencing():
    m = parse_program('let x = () in emit "a"; x')
    assert m == App(Lam("x", None, App(Lam("_", None, Var(1)), Effect("emit[a]", UnitVal()))), UnitVal())


def test_multi_symbol_emit_is_nested_sequencing():
    one = parse_program('emit "a" "b"; ()')
    two = parse_program('emit "a"; emit "b"; ()')
    assert one == two


def test_if_desugars_to_case_on_bool():
    m = parse_program("if true then () else ()")
    assert isinstance(m, Case) and m.scrut == Inj(1, UnitVal())


def test_flip_sugar_uses_the_flip_family():
    m = parse_program("flip 1/3 { () } { () }")
    assert isinstance(m, Case) and m.scrut == Effect("flip[1/3]", UnitVal())


@pytest.mark.parametrize(
    "text",
    ["let x = in ()", "fun -> ()", "case () of inl x -> ()", "flip 2 { () } { () }", "eff nope ()", "(", "let __x = () in ()"],
)
def test_parse_errors(text):
    with pytest.raises((ParseError, sg.SignatureError)):
        parse_program(text)


def test_unbound_variable_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_program("x")


def test_types_of_small_programs():
    assert typecheck([], parse_program("fun (x : bool) -> (x, ())")) == Arrow(BOOL, Prod(BOOL, UNIT))
    assert typecheck([], parse_program("1.5 + 2")) == REAL
    assert typecheck([], parse_program("inl ()")) == Sum(UNIT, UNIT)


@pytest.mark.parametrize("text", ["() ()", "fst ()", "if () then () else ()", "let rec f x = f in f"])
def test_ill_typed_programs(text):
    with pytest.raises(TypeCheckError):
        typecheck([], parse_program(text))


def test_state_type_is_reserved_for_product_programs():
    with pytest.raises((ParseError, TypeCheckError, sg.SignatureError)):
        typecheck([], parse_program("fun (x : state) -> x"))


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_benchmarks_are_closed_and_ground(name):
    m = bench_program(name)
    t = typecheck([], m)
    assert is_ground(t)
    assert not free_indices(m)


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_benchmark_print_parse_round_trip(name):
    m, _ = annotate([], bench_program(name))
    assert parse_program(pretty_print(m)) == m
    assert term_from_json(term_to_json(m)) == m


def test_show_type_round_trips():
    for t in [Arrow(Prod(BOOL, UNIT), Sum(UNIT, Arrow(UNIT, UNIT))), Prod(Prod(UNIT, UNIT), UNIT), Arrow(Arrow(UNIT, UNIT), UNIT)]:
        assert parse_type(show_type(t)) == t


def test_shift_and_substitution():
    body = Pair(Var(0), Var(1))
    assert subst_top(body, UnitVal()) == Pair(UnitVal(), Var(0))
    assert shift(Lam("x", None, Pair(Var(0), Var(1))), 2) == Lam("x", None, Pair(Var(0), Var(3)))
    assert free_indices(Lam("x", None, Proj(1, Var(2)))) == {1}


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), index=st.integers(0, 50), mode=st.sampled_from([Mode.PROB, Mode.REACH, Mode.PROB_REWARD]))
def test_generated_programs_round_trip_through_text_and_json(seed, index, mode):
    s = sample(seed, index, 4, (mode,))
    m, t = annotate([], s.term, expected=s.result_type)
    assert t == s.result_type
    again = parse_program(pretty_print(m))
    assert again == m
    assert annotate([], again, expected=t)[1] == t
    assert term_from_json(term_to_json(m)) == m
    assert size(m) >= 1

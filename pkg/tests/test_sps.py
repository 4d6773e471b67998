from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvp import signature as sg
from tvp.automata import InferenceQuery, Mode
from tvp.corpus import sample
from tvp.parser import STATE_VAR, parse_program
from tvp.pretty import pretty_print
from tvp.semantics import wp_product
from tvp.sps import TransformError, is_value, simplify, transform_context, transform_term, transform_type
from tvp.terms import App, Lam, Pair, Proj, UnitVal, Var, size, subterms
from tvp.typecheck import TypeCheckError, annotate
from tvp.types import BOOL, REAL, STATE, UNIT, Arrow, Prod

from conftest import BENCHMARKS, bench_program, bench_spec


def test_type_translation():
    assert transform_type(UNIT) == Prod(UNIT, STATE)
    f = Arrow(BOOL, UNIT)
    lifted = Arrow(Prod(BOOL, STATE), Prod(UNIT, STATE))
    assert transform_type(f) == Prod(lifted, STATE)
    assert transform_type(Prod(f, REAL)) == Prod(Prod(lifted, REAL), STATE)
    assert transform_type(Arrow(f, f)) == Prod(Arrow(Prod(lifted, STATE), Prod(lifted, STATE)), STATE)


def test_state_in_source_types_is_rejected():
    with pytest.raises(TransformError):
        transform_type(Prod(STATE, UNIT))


def test_context_translation_appends_the_state():
    ctx = transform_context([("f", Arrow(UNIT, UNIT)), ("b", BOOL)])
    assert ctx == [("f", Arrow(Prod(UNIT, STATE), Prod(UNIT, STATE))), ("b", BOOL), (STATE_VAR, STATE)]
    with pytest.raises(TransformError):
        transform_context([("__x", UNIT)])


def test_open_terms_transform_in_the_lifted_context():
    ctx = [("f", Arrow(UNIT, BOOL))]
    m = parse_program('emit "h"; f ()', ctx_names=["f"])
    out = transform_term(m, ctx, spec=bench_spec("coin_flip"))
    assert out.context[-1] == (STATE_VAR, STATE)
    assert annotate(out.context, out.term, out.signature, out.type)[1] == Prod(BOOL, STATE)


def test_reserved_binders_and_lifted_inputs_are_rejected():
    from tvp.terms import Lam as L

    with pytest.raises(TransformError):
        transform_term(L("__x", UNIT, Var(0)), [])
    with pytest.raises(TransformError):
        transform_term(UnitVal(), [], sg.DEFAULT.lift())


def test_ill_typed_input_is_rejected():
    with pytest.raises(TransformError):
        transform_term(App(UnitVal(), UnitVal()), [])


def test_events_outside_the_alphabet_are_rejected():
    with pytest.raises(TransformError):
        transform_term(parse_program('emit "z"; ()'), [], spec=bench_spec("coin_flip"))


def test_emit_becomes_a_step_constant():
    out = transform_term(parse_program('emit "h"; ()'), [])
    names = {t.name for t in subterms(out.term) if hasattr(t, "name") and isinstance(getattr(t, "name"), str)}
    assert "step[h]" in names and "emit[h]" not in names


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_benchmark_products_are_well_typed(name):
    m = bench_program(name)
    _, t = annotate([], m)
    out = transform_term(m, [], spec=bench_spec(name))
    assert out.type == transform_type(t)
    assert annotate(out.context, out.term, out.signature, out.type)[1] == out.type
    simple = simplify(out.term)
    assert annotate(out.context, simple, out.signature, out.type)[1] == out.type
    assert size(simple) < size(out.term)


@pytest.mark.parametrize("text", ["fun x -> x", "()", "fun (x : bool) -> fun (y : unit) -> y"])
def test_simplify_is_a_no_op_without_administrative_redexes(text):
    out = transform_term(parse_program(text), [])
    assert simplify(out.term) == out.term


def test_simplify_reduces_projections_of_pairs():
    x = Var(0)
    assert simplify(Proj(1, Pair(x, UnitVal()))) == x
    assert simplify(App(Lam("__z", None, Proj(2, Var(0))), Pair(x, Var(1)))) == Var(1)
    # user binders are left alone
    assert simplify(App(Lam("z", None, Var(0)), UnitVal())) == App(Lam("z", None, Var(0)), UnitVal())


def test_value_classification():
    assert is_value(Pair(Var(0), Proj(1, Var(1))))
    assert not is_value(App(Var(0), Var(0)))


def test_simplify_is_idempotent_on_benchmarks():
    for name in BENCHMARKS:
        out = transform_term(bench_program(name), [])
        once = simplify(out.term)
        assert simplify(once) == once


# the product program of the coin example written by hand
HAND_COIN = """
let rec coin (z : unit * state) : unit * state =
  let p = eff flip[1/4] ((), snd z) in
  case fst p of
    inl _ -> (let q = eff flip[1/2] ((), snd p) in
              case fst q of
                inl _ -> coin (con step[h] ((), snd q))
              | inr _ -> coin (con step[t] ((), snd q)))
  | inr _ -> ((), snd p)
in coin ((), __y)
"""


def test_simplified_coin_product_matches_the_hand_written_one():
    spec = bench_spec("coin_flip")
    out = transform_term(bench_program("coin_flip"), [], spec=spec)
    simple = simplify(out.term)
    hand = parse_program(HAND_COIN, out.signature, [STATE_VAR], allow_reserved=True)
    annotate(out.context, hand, out.signature, out.type)
    q = InferenceQuery(Mode.PROB, spec)
    for n in range(8):
        assert wp_product(simple, out.signature, q, n).per_state == wp_product(hand, out.signature, q, n).per_state


def test_exported_text_reparses():
    out = transform_term(bench_program("ho_rw"), [], spec=bench_spec("ho_rw"))
    text = pretty_print(simplify(out.term), [STATE_VAR])
    again = parse_program(text, out.signature, [STATE_VAR], allow_reserved=True)
    assert again == simplify(out.term)


def test_reserved_names_need_permission_to_parse():
    with pytest.raises(Exception):
        parse_program("__y", ctx_names=[STATE_VAR])


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), depth=st.integers(0, 6), mode=st.sampled_from([Mode.PROB, Mode.REACH, Mode.PROB_REWARD]))
def test_type_preservation_on_generated_programs(seed, depth, mode):
    s = sample(seed, 0, depth, (mode,))
    _, t = annotate([], s.term)
    out = transform_term(s.term, [], spec=s.dfa)
    assert out.type == transform_type(t)
    assert annotate(out.context, out.term, out.signature, out.type)[1] == out.type
    assert annotate(out.context, simplify(out.term), out.signature, out.type)[1] == out.type


def test_lifted_terms_do_not_check_against_the_source_signature():
    out = transform_term(parse_program('emit "h"; ()'), [])
    with pytest.raises((TypeCheckError, sg.SignatureError)):
        annotate(out.context, out.term, sg.DEFAULT)

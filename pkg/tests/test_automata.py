from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvp import signature as sg
from tvp.automata import (
    Dfa,
    InferenceQuery,
    Mode,
    RewardMachine,
    SpecError,
    dfa_accepts,
    dfa_run,
    load_spec,
    parse_state_label,
    query_apply,
    rm_run,
    spec_from_json,
    spec_to_json,
    state_label,
)

from conftest import BENCHMARKS, bench_spec

# the two-state automaton for "some h is raised"
COIN = Dfa(("y1", "y2"), ("h", "t"), {("y1", "h"): "y2", ("y1", "t"): "y1", ("y2", "h"): "y2", ("y2", "t"): "y2"},
           frozenset({"y2"}), "y1")

RM = RewardMachine(
    ("u0", "u1"),
    ("a", "b"),
    {
        ("u0", "a"): ("u1", False, Fraction(1)),
        ("u0", "b"): ("u0", True, Fraction(0)),
        ("u1", "a"): ("u1", True, Fraction(2)),
        ("u1", "b"): ("u0", False, Fraction(1, 2)),
    },
    "u0",
)


def test_coin_dfa_runs():
    assert dfa_run(COIN, "y1", "tth") == "y2"
    assert not dfa_accepts(COIN, "y1", "ttt")
    assert dfa_accepts(COIN, "y2", "")


def test_dfa_rejects_malformed_tables():
    with pytest.raises(SpecError):
        Dfa(("y",), ("a",), {}, frozenset(), "y")
    with pytest.raises(SpecError):
        Dfa(("y",), ("a",), {("y", "a"): "z"}, frozenset(), "y")
    with pytest.raises(SpecError):
        Dfa(("y",), ("a",), {("y", "a"): "y"}, frozenset({"q"}), "y")
    with pytest.raises(SpecError):
        Dfa(("y",), ("a",), {("y", "a"): "y"}, frozenset(), "q")


def test_unknown_symbol_is_an_error():
    with pytest.raises(SpecError):
        dfa_run(COIN, "y1", "x")


def test_reward_machine_accumulates_and_keeps_last_bit():
    assert rm_run(RM, "u0", False, Fraction(0), "aab") == ("u0", False, Fraction(7, 2))
    assert rm_run(RM, "u0", False, Fraction(0), "aa") == ("u1", True, Fraction(3))
    assert rm_run(RM, "u0", True, Fraction(5), "") == ("u0", True, Fraction(5))


def test_negative_rewards_are_rejected():
    with pytest.raises(SpecError):
        RewardMachine(("u",), ("a",), {("u", "a"): ("u", True, Fraction(-1))}, "u")


def test_queries_on_words():
    prob = InferenceQuery(Mode.PROB, COIN)
    assert query_apply(prob, "th", "y1") == 1
    assert query_apply(prob, "tt", "y1") == 0
    assert InferenceQuery(Mode.PROB_REWARD, COIN)("h", "y1") == (1, 0)
    assert InferenceQuery(Mode.REACH, COIN)("", "y2") is True
    opt = InferenceQuery(Mode.OPT_REWARD, RM)
    assert opt("aa", ("u0", False, Fraction(0))) == 3
    assert opt("ab", ("u0", False, Fraction(0))) == 0


def test_query_checks_spec_kind():
    with pytest.raises(SpecError):
        InferenceQuery(Mode.OPT_REWARD, COIN)
    with pytest.raises(SpecError):
        InferenceQuery(Mode.PROB, RM)


def test_state_labels_round_trip():
    q = InferenceQuery(Mode.OPT_REWARD, RM)
    for st in q.start_states():
        assert parse_state_label(q, state_label(st)) == st
    assert state_label(("u0", True, Fraction(3, 2))) == "u0,true,3/2"
    with pytest.raises(SpecError):
        parse_state_label(q, "nope")


@pytest.mark.parametrize("spec", [COIN, RM])
def test_json_round_trip(spec):
    assert spec_from_json(json.loads(json.dumps(spec_to_json(spec)))) == spec


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_benchmark_specs_load(name):
    d = bench_spec(name)
    assert isinstance(d, Dfa) and d.initial in d.states


def test_load_spec_reports_bad_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(SpecError):
        load_spec(p)
    p.write_text('{"kind": "dfa", "states": ["y"]}')
    with pytest.raises(SpecError):
        load_spec(p)
    p.write_text('{"kind": "nfa", "states": [], "alphabet": []}')
    with pytest.raises(SpecError):
        load_spec(p)


def test_lifting_checks_the_alphabet():
    sig = sg.Signature(effects={"emit[z]": sg.OpSig(sg.UNIT, sg.UNIT, sg.Emit("z"))})
    with pytest.raises(sg.SignatureError):
        sig.lift(COIN)
    lifted = sg.DEFAULT.lift(COIN)
    assert lifted.has_constant("step[h]") and not lifted.has_constant("step[q]")
    assert not lifted.has_effect("emit[h]")
    with pytest.raises(sg.SignatureError):
        lifted.lift(COIN)


@given(st.text(alphabet="ht", max_size=12), st.text(alphabet="ht", max_size=12))
def test_runs_compose(u, v):
    y = dfa_run(COIN, "y1", u)
    assert dfa_run(COIN, "y1", u + v) == dfa_run(COIN, y, v)
    assert query_apply(InferenceQuery(Mode.PROB, COIN), u, "y1") == (1 if "h" in u else 0)


@given(st.text(alphabet="ab", max_size=10), st.text(alphabet="ab", max_size=10))
def test_reward_runs_compose(u, v):
    mid = rm_run(RM, "u0", False, Fraction(0), u)
    assert rm_run(RM, "u0", False, Fraction(0), u + v) == rm_run(RM, *mid, v)
    assert mid[2] >= 0

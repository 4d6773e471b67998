from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from tvp.automata import InferenceQuery, Mode
from tvp.corpus import DEFAULT_MODES, check_sample, corpus_check, random_dfa, sample
from tvp.semantics import wp_source
from tvp.terms import Effect, Rec, subterms
from tvp.typecheck import annotate
from tvp.types import is_ground
from tvp import signature as sg


def test_samples_are_reproducible():
    assert sample(7, 3, 4) == sample(7, 3, 4)


def test_modes_rotate():
    assert [sample(1, i, 3).mode for i in range(4)] == [Mode.PROB, Mode.REACH, Mode.PROB, Mode.REACH]
    assert DEFAULT_MODES == (Mode.PROB, Mode.REACH)


def test_corpus_exercises_recursion_and_effects():
    terms = [sample(1, i, 4).term for i in range(60)]
    assert sum(any(isinstance(t, Rec) for t in subterms(m)) for m in terms) >= 10
    assert sum(any(isinstance(t, Effect) and t.name.startswith("emit") for t in subterms(m)) for m in terms) >= 30


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), index=st.integers(0, 100), depth=st.integers(0, 6))
def test_samples_are_closed_and_ground(seed, index, depth):
    s = sample(seed, index, depth)
    _, t = annotate([], s.term, expected=s.result_type)
    assert is_ground(t)
    effects = {t.name.split("[")[0] for t in subterms(s.term) if isinstance(t, Effect)}
    if s.mode is Mode.PROB:
        assert "choose" not in effects
    else:
        assert not effects & {"flip", "flipr"}


def test_random_dfas_are_total():
    import random

    rng = random.Random(0)
    for _ in range(50):
        d = random_dfa(rng)
        assert 1 <= len(d.states) <= 3 and d.initial == "q0"


def test_small_corpus_passes_and_is_deterministic():
    a = corpus_check(5, 12, 3)
    b = corpus_check(5, 12, 3)
    assert a.ok and a.passed == 12
    assert a.to_json() == b.to_json()
    assert a.render().startswith("corpus seed 5: 12/12 passed")


def test_thread_count_does_not_change_the_summary():
    assert corpus_check(9, 10, 3, threads=2).to_json() == corpus_check(9, 10, 3, threads=1).to_json()


def test_probreward_corpus():
    s = corpus_check(3, 10, 3, modes=(Mode.PROB_REWARD,))
    assert s.ok and s.by_mode == {"probreward": 10}


def test_effect_free_sample_reads_the_empty_word():
    # depth 0 produces a value: no effects at all
    s = sample(11, 0, 0)
    assert not any(isinstance(t, Effect) for t in subterms(s.term))
    assert check_sample(s, (1, 2)) is None
    q = InferenceQuery(s.mode, s.dfa)
    res = wp_source(s.term, sg.DEFAULT, q, 1)
    for y in s.dfa.states:
        assert res.per_state[y] == q.terminal(y)


def test_failures_are_reported(monkeypatch):
    import tvp.corpus as corpus

    monkeypatch.setattr(corpus, "check_sample", lambda s, fuels: "forced")
    summary = corpus.corpus_check(1, 3, 2)
    assert not summary.ok and summary.passed == 0
    assert summary.to_json()["failures"][0] == {"seed": 1, "index": 0, "mode": "prob", "detail": "forced"}

from __future__ import annotations

import json
from fractions import Fraction

import pytest

from tvp import signature as sg
from tvp.automata import InferenceQuery, Mode
from tvp.parser import STATE_VAR, parse_program
from tvp.pipeline import (
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    PipelineError,
    RunConfig,
    check_theorems,
    compute_wp,
    export_product,
    format_report,
    run_verification,
)
from tvp.pretty import term_from_json
from tvp.semantics import wp_product
from tvp.sps import transform_term
from tvp.typecheck import annotate
from tvp.types import type_from_json

from conftest import bench_paths, bench_program, bench_spec

F = Fraction


def cfg_for(name, mode, **kw):
    prog, spec = bench_paths(name)
    return RunConfig(prog, spec, mode, **kw)


def test_coin_report():
    rep = run_verification(cfg_for("coin_flip", "prob", compare_fuel=4))
    assert rep.equal_at_fuel and rep.limit.converged
    assert abs(rep.limit.per_state["y1"] - F(1, 7)) < F(1, 10**6)
    assert rep.exit_code == EXIT_OK
    assert len(rep.program_digest) == 64


def test_gr_report():
    rep = run_verification(cfg_for("gr", "probreward"))
    assert abs(rep.limit.per_state["y1"][1] - F(6, 25)) < F(1, 10**6)


def test_file_writing_report():
    rep = run_verification(cfg_for("file_writing", "reach"))
    assert rep.limit.per_state["q0"] is True and rep.limit.fuel <= 3


def test_theorem_check_is_embedded():
    rep = run_verification(cfg_for("ho_rw", "prob", check_theorems=True, compare_fuel=5))
    assert rep.theorem is not None and rep.theorem.equal and rep.theorem.fuels == [1, 2, 3, 4, 5]
    assert "holds" in format_report(rep)


def test_report_json_is_deterministic():
    a = run_verification(cfg_for("gr", "probreward", compare_fuel=3))
    b = run_verification(cfg_for("gr", "probreward", compare_fuel=3))
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    assert "timings" not in a.to_json()
    assert "timings" in a.to_json(include_timings=True)


def test_fuel_cap_gives_non_convergence_exit():
    rep = run_verification(cfg_for("coin_flip", "prob", fuel_cap=2, compare_fuel=2))
    assert not rep.limit.converged and rep.exit_code == EXIT_NOT_CONVERGED


def test_explicit_start_state():
    rep = run_verification(cfg_for("coin_flip", "prob", initial_state="y2", compare_fuel=2))
    assert rep.states == ["y2"]
    assert rep.limit.per_state["y2"] > F(99, 100)


@pytest.mark.parametrize(
    "kw",
    [dict(fuel_cap=0), dict(tol=0), dict(tol=-1), dict(output_format="xml"), dict(compare_fuel=-1)],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        cfg_for("coin_flip", "prob", **kw)


def test_stage_attribution(tmp_path):
    prog, spec = bench_paths("coin_flip")
    bad = tmp_path / "bad.tvp"
    bad.write_text("let x = in ()")
    cases = [
        (RunConfig(str(tmp_path / "missing.tvp"), spec, "prob"), "read"),
        (RunConfig(str(bad), spec, "prob"), "parse"),
        (RunConfig(prog, str(tmp_path / "missing.json"), "prob"), "spec"),
        (RunConfig(prog, spec, "prob", initial_state="nope"), "spec"),
        (RunConfig(prog, spec, "optreward"), "spec"),
        (RunConfig(prog, spec, "reach"), "evaluate"),
    ]
    bad.with_suffix(".ill").write_text("() ()")
    cases.append((RunConfig(str(bad.with_suffix(".ill")), spec, "prob"), "typecheck"))
    fn = tmp_path / "fn.tvp"
    fn.write_text("fun x -> x")
    cases.append((RunConfig(str(fn), spec, "prob"), "typecheck"))
    z = tmp_path / "z.tvp"
    z.write_text('emit "z"; ()')
    cases.append((RunConfig(str(z), spec, "prob"), "transform"))
    for cfg, stage in cases:
        with pytest.raises(PipelineError) as info:
            run_verification(cfg)
        assert info.value.stage == stage, (cfg, info.value)


def test_export_round_trips_and_checks():
    cfg = cfg_for("ho_gr", "probreward")
    for simplified in (False, True):
        text, doc = export_product(cfg, simplified)
        term = term_from_json(doc["term"])
        out = transform_term(bench_program("ho_gr"), [], spec=bench_spec("ho_gr"))
        assert type_from_json(doc["type"]) == out.type
        assert parse_program(text, out.signature, [STATE_VAR], allow_reserved=True) == term
        assert annotate(out.context, term, out.signature, out.type)[1] == out.type


def test_exported_coin_product_has_the_same_wp():
    cfg = cfg_for("coin_flip", "prob")
    _, doc = export_product(cfg, True)
    spec = bench_spec("coin_flip")
    out = transform_term(bench_program("coin_flip"), [], spec=spec)
    q = InferenceQuery(Mode.PROB, spec)
    term = term_from_json(doc["term"])
    for n in range(6):
        assert wp_product(term, out.signature, q, n).per_state == wp_product(out.term, out.signature, q, n).per_state


def test_value_program_exports_verbatim(tmp_path):
    p = tmp_path / "unit.tvp"
    p.write_text("()")
    _, spec = bench_paths("coin_flip")
    cfg = RunConfig(str(p), spec, "prob")
    raw, _ = export_product(cfg, False)
    simple, _ = export_product(cfg, True)
    assert raw == simple == "((), __y)"


def test_export_needs_a_ground_program(tmp_path):
    p = tmp_path / "fn.tvp"
    p.write_text("fun (x : bool) -> x")
    _, spec = bench_paths("coin_flip")
    with pytest.raises(PipelineError) as info:
        export_product(RunConfig(str(p), spec, "prob"), True)
    assert info.value.stage == "typecheck"


def test_compute_wp_routes_agree():
    cfg = cfg_for("ho_rw", "prob")
    vals = [compute_wp(cfg, 5, r).per_state for r in ("source", "sync", "product")]
    assert vals[0] == vals[1] == vals[2]
    with pytest.raises(PipelineError):
        compute_wp(cfg, 1, "nope")


def test_check_theorems_on_a_benchmark():
    res = check_theorems(cfg_for("file_writing", "reach"), 4)
    assert res.equal and res.to_json()["fuels"] == [1, 2, 3, 4]

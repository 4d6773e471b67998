from __future__ import annotations

import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from tvp.cli import cli, main

from conftest import bench_paths


def run(*args):
    return CliRunner().invoke(cli, list(args))


def test_typecheck_prints_the_type():
    prog, _ = bench_paths("ho_rw")
    res = run("typecheck", prog)
    assert res.exit_code == 0 and res.output.strip() == "unit"


def test_wp_converges_on_coin():
    prog, spec = bench_paths("coin_flip")
    res = run("wp", prog, "--spec", spec, "--mode", "prob", "--tol", "1e-9", "--format", "json")
    assert res.exit_code == 0
    doc = json.loads(res.output)
    assert doc["converged"] and doc["mode"] == "prob"
    num, den = map(int, doc["perState"]["y1"].split("/"))
    assert abs(num / den - 1 / 7) < 1e-6


def test_wp_fixed_fuel_text():
    prog, spec = bench_paths("coin_flip")
    res = run("wp", prog, "--spec", spec, "--mode", "prob", "--fuel", "2", "--route", "source")
    assert res.exit_code == 0 and "y1: 3/32" in res.output


def test_wp_non_convergence_exit_code():
    prog, spec = bench_paths("coin_flip")
    res = run("wp", prog, "--spec", spec, "--mode", "prob", "--fuel-cap", "3")
    assert res.exit_code == 2 and "NOT converged" in res.output


def test_check_and_verify():
    prog, spec = bench_paths("gr")
    assert run("check", prog, "--spec", spec, "--mode", "probreward", "--fuel-cap", "4").exit_code == 0
    res = run("verify", prog, "--spec", spec, "--mode", "probreward", "--format", "json")
    assert res.exit_code == 0
    assert json.loads(res.output)["equalAtFuel"] is True


def test_transform_outputs():
    prog, spec = bench_paths("coin_flip")
    text = run("transform", prog, "--spec", spec, "--simplify")
    assert text.exit_code == 0 and "step[h]" in text.output and "__y" in text.output
    doc = json.loads(run("transform", prog, "--spec", spec, "--format", "json").output)
    assert doc["typeText"] == "unit * state"


def test_corpus_command():
    res = run("corpus", "--seed", "2", "--count", "6", "--max-depth", "3", "--format", "json")
    assert res.exit_code == 0 and json.loads(res.output)["passed"] == 6
    res = run("corpus", "--count", "2", "--mode", "optreward")
    assert res.exit_code != 0


def _main_exit(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code, capsys.readouterr()


def test_input_errors_exit_with_four(capsys, tmp_path):
    prog, spec = bench_paths("coin_flip")
    code, out = _main_exit(["wp", prog, "--spec", str(tmp_path / "none.json"), "--mode", "prob"], capsys)
    assert code == 4 and "error [spec]" in out.err
    code, _ = _main_exit(["wp", prog, "--spec", spec, "--mode", "bogus"], capsys)
    assert code == 4
    code, _ = _main_exit(["wp", prog, "--spec", spec, "--mode", "prob", "--fuel", "1", "--tol", "1/10"], capsys)
    assert code == 4
    code, _ = _main_exit(["wp", prog, "--spec", spec, "--mode", "prob", "--tol", "-1"], capsys)
    assert code == 4


def test_main_success_exit(capsys):
    prog, spec = bench_paths("one_step")
    code, out = _main_exit(["verify", prog, "--spec", spec, "--mode", "prob"], capsys)
    assert code == 0 and "1/2" in out.out


def test_module_entry_point():
    prog, _ = bench_paths("coin_flip")
    res = subprocess.run([sys.executable, "-m", "tvp.cli", "typecheck", prog], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "unit"

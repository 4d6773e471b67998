from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from tvp.automata import load_spec
from tvp.parser import parse_program

BENCH = Path(str(resources.files("tvp") / "benchmarks"))

# name -> mode used with the shipped automaton
BENCHMARKS = {
    "coin_flip": "prob",
    "one_step": "prob",
    "gr": "probreward",
    "ho_gr": "probreward",
    "file_writing": "reach",
    "ho_rw": "prob",
}


def bench_paths(name: str) -> tuple[str, str]:
    return str(BENCH / f"{name}.tvp"), str(BENCH / f"{name}.json")


def bench_program(name: str):
    return parse_program((BENCH / f"{name}.tvp").read_text())


def bench_spec(name: str):
    return load_spec(BENCH / f"{name}.json")


@pytest.fixture
def coin():
    return bench_program("coin_flip"), bench_spec("coin_flip")

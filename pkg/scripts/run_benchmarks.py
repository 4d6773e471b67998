"""Run every shipped benchmark through the pipeline and print a results table.

Usage: python scripts/run_benchmarks.py [--json]
"""

from __future__ import annotations

import json
import sys
import time
from fractions import Fraction
from importlib import resources

from tvp.pipeline import RunConfig, run_verification

BENCHMARKS = [
    ("coin_flip", "prob"),
    ("one_step", "prob"),
    ("gr", "probreward"),
    ("ho_gr", "probreward"),
    ("file_writing", "reach"),
    ("ho_rw", "prob"),
]


def approx(v) -> str:
    if isinstance(v, tuple):
        return f"prob {float(v[0]):.8f}, reward {float(v[1]):.8f}"
    if isinstance(v, bool):
        return "true" if v else "false"
    return f"{float(v):.8f}"


def main() -> None:
    root = resources.files("tvp") / "benchmarks"
    rows = []
    for name, mode in BENCHMARKS:
        cfg = RunConfig(
            str(root / f"{name}.tvp"), str(root / f"{name}.json"), mode,
            fuel_cap=500, tol=Fraction(1, 10**9), check_theorems=True, compare_fuel=5,
        )
        start = time.perf_counter()
        rep = run_verification(cfg)
        elapsed = time.perf_counter() - start
        label = rep.states[0]
        rows.append({
            "benchmark": name,
            "mode": mode,
            "state": label,
            "equalAtFuel": rep.equal_at_fuel,
            "theoremFuels1to5": rep.theorem.equal,
            "converged": rep.limit.converged,
            "fuel": rep.limit.fuel,
            "value": approx(rep.limit.per_state[label]),
            "seconds": round(elapsed, 3),
        })
    if "--json" in sys.argv[1:]:
        print(json.dumps(rows, indent=2))
        return
    header = f"{'benchmark':<13} {'mode':<11} {'3-way':<6} {'conv':<5} {'fuel':>4} {'time':>7}  value"
    print(header)
    print("-" * len(header))
    for r in rows:
        agree = "yes" if r["equalAtFuel"] and r["theoremFuels1to5"] else "NO"
        conv = "yes" if r["converged"] else "no"
        print(f"{r['benchmark']:<13} {r['mode']:<11} {agree:<6} {conv:<5} {r['fuel']:>4} {r['seconds']:>6.2f}s  "
              f"{r['state']}: {r['value']}")


if __name__ == "__main__":
    main()

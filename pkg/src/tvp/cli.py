"""Command line interface: ``tvp typecheck|transform|wp|check|verify|corpus``."""

from __future__ import annotations

import json
import sys
from fractions import Fraction

import click

from . import pipeline as pl
from .automata import Mode
from .corpus import DEFAULT_MODES, corpus_check
from .semantics import show_domain
from .types import show_type

MODES = click.Choice([m.value for m in Mode])
FORMATS = click.Choice(["text", "json"])


def _rational(ctx, param, value):
    if value is None:
        return None
    try:
        q = Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"not a rational number: {value!r}") from None
    if q <= 0:
        raise click.BadParameter("must be positive")
    return q


def _emit_json(doc) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=False))


def _config(prog, spec, mode, state, fuel_cap=1000, tol=None, fmt="text", simplify=True, **kw) -> pl.RunConfig:
    try:
        return pl.RunConfig(
            prog, spec, Mode(mode), state, fuel_cap, tol if tol is not None else Fraction(1, 10**9), fmt,
            simplify=simplify, **kw,
        )
    except ValueError as exc:
        raise pl.PipelineError("config", str(exc)) from None


@click.group()
def cli() -> None:
    """Temporal verification of effectful higher-order programs."""


@cli.command()
@click.argument("prog", type=click.Path(dir_okay=False))
def typecheck(prog: str) -> None:
    """Parse and type-check PROG, printing its type."""
    from .typecheck import annotate

    _, term = pl.load_program(prog)
    _, t = annotate([], term)
    click.echo(show_type(t))


@cli.command()
@click.argument("prog", type=click.Path(dir_okay=False))
@click.option("--spec", required=True, type=click.Path(dir_okay=False), help="automaton JSON")
@click.option("--simplify/--no-simplify", default=False, help="remove administrative redexes")
@click.option("--format", "fmt", type=FORMATS, default="text")
def transform(prog: str, spec: str, simplify: bool, fmt: str) -> None:
    """Print the product program of PROG."""
    _, automaton = pl.load_spec_file(spec)
    mode = pl.default_mode(automaton).value
    text, doc = pl.export_product(_config(prog, spec, mode, None), simplify)
    if fmt == "json":
        _emit_json(doc)
    else:
        click.echo(f"# __y : state |- _ : {doc['typeText']}")
        click.echo(text)


@cli.command()
@click.argument("prog", type=click.Path(dir_okay=False))
@click.option("--spec", required=True, type=click.Path(dir_okay=False), help="automaton JSON")
@click.option("--mode", required=True, type=MODES)
@click.option("--state", default=None, help="start state (default: the automaton's initial state)")
@click.option("--fuel", type=click.IntRange(min=0), default=None, help="evaluate one approximant")
@click.option("--tol", callback=_rational, default=None, help="stopping tolerance, e.g. 1e-9 or 1/1000")
@click.option("--fuel-cap", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--route", type=click.Choice(pl.ROUTES), default="product", show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="text")
def wp(prog, spec, mode, state, fuel, tol, fuel_cap, route, fmt) -> None:
    """Weakest pre-condition of PROG for the query given by MODE and SPEC."""
    if fuel is not None and tol is not None:
        raise pl.PipelineError("config", "--fuel and --tol are exclusive")
    cfg = _config(prog, spec, mode, state, fuel_cap, tol, fmt)
    res = pl.compute_wp(cfg, fuel, route)
    if fmt == "json":
        _emit_json(res.to_json())
    else:
        if fuel is None:
            status = "converged" if res.converged else "NOT converged"
            click.echo(f"{status} at fuel {res.fuel}" + (" (exact)" if res.exact else ""))
        else:
            click.echo(f"fuel {res.fuel}" + (" (exact)" if res.exact else ""))
        for label, v in res.per_state.items():
            click.echo(f"{label}: {show_domain(res.mode, v)}")
    if fuel is None and not res.converged:
        sys.exit(pl.EXIT_NOT_CONVERGED)


@cli.command()
@click.argument("prog", type=click.Path(dir_okay=False))
@click.option("--spec", required=True, type=click.Path(dir_okay=False), help="automaton JSON")
@click.option("--mode", required=True, type=MODES)
@click.option("--state", default=None, help="start state (default: the automaton's initial state)")
@click.option("--fuel-cap", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="text")
def check(prog, spec, mode, state, fuel_cap, fmt) -> None:
    """Check that the trace, synchronised and product routes agree exactly at fuels 1..N."""
    cfg = _config(prog, spec, mode, state, fuel_cap, None, fmt)
    res = pl.check_theorems(cfg, fuel_cap)
    if fmt == "json":
        _emit_json(res.to_json())
    elif res.equal:
        click.echo(f"three routes agree at fuels 1..{fuel_cap}")
    else:
        click.echo(f"MISMATCH at fuel {res.first_mismatch['fuel']}: {json.dumps(res.first_mismatch)}")
    if not res.equal:
        sys.exit(pl.EXIT_THEOREM)


@cli.command()
@click.argument("prog", type=click.Path(dir_okay=False))
@click.option("--spec", required=True, type=click.Path(dir_okay=False), help="automaton JSON")
@click.option("--mode", required=True, type=MODES)
@click.option("--state", default=None, help="start state (default: the automaton's initial state)")
@click.option("--tol", callback=_rational, default=None, help="stopping tolerance (default 1e-9)")
@click.option("--fuel-cap", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--compare-fuel", type=click.IntRange(min=0), default=6, show_default=True,
              help="approximant at which the three routes are compared")
@click.option("--check-theorems", is_flag=True, help="also compare at every fuel 1..compare-fuel")
@click.option("--timings", is_flag=True, help="include wall-clock timings")
@click.option("--format", "fmt", type=FORMATS, default="text")
def verify(prog, spec, mode, state, tol, fuel_cap, compare_fuel, check_theorems, timings, fmt) -> None:
    """Run the whole pipeline on PROG and report."""
    cfg = _config(prog, spec, mode, state, fuel_cap, tol, fmt, check_theorems=check_theorems,
                  compare_fuel=compare_fuel, include_timings=timings)
    rep = pl.run_verification(cfg)
    if not timings:
        rep.timings = {}
    if fmt == "json":
        _emit_json(rep.to_json(include_timings=timings))
    else:
        click.echo(pl.format_report(rep))
    sys.exit(rep.exit_code)


@cli.command()
@click.option("--seed", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--max-depth", type=click.IntRange(min=0), default=4, show_default=True)
@click.option("--mode", "modes", type=MODES, multiple=True, help="modes to rotate through (default prob, reach)")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="worker processes (default TVP_THREADS or 1)")
@click.option("--format", "fmt", type=FORMATS, default="text")
def corpus(seed, count, max_depth, modes, threads, fmt) -> None:
    """Check the three routes agree on randomly generated programs."""
    chosen = tuple(Mode(m) for m in modes) or DEFAULT_MODES
    if any(m is Mode.OPT_REWARD for m in chosen):
        raise pl.PipelineError("config", "the corpus generates DFAs only; optreward needs a reward machine")
    summary = corpus_check(seed, count, max_depth, modes=chosen, threads=threads)
    if fmt == "json":
        _emit_json(summary.to_json())
    else:
        click.echo(summary.render())
    if not summary.ok:
        sys.exit(pl.EXIT_THEOREM)


def main(argv: list[str] | None = None) -> None:
    """Entry point; usage and input errors exit with code 4."""
    try:
        cli.main(args=argv, prog_name="tvp", standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(pl.EXIT_INPUT)
    except pl.PipelineError as exc:
        click.echo(f"error [{exc.stage}]: {exc.message}", err=True)
        sys.exit(pl.EXIT_INPUT)


if __name__ == "__main__":  # pragma: no cover
    main()

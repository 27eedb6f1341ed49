"""Command-line front end.

Exit codes:

    0  command completed with a positive result
    2  usage error (bad flags)
    3  scenario or configuration error
    4  numerical failure
    5  completed, negative verdict (no fixed point, certificate failed)
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import click
import numpy as np

from . import certifier, mgare, policy, scenarios
from .stochastic_model import PoolError, SamplePool, Scenario, ScenarioError, build_pool, load_scenario

EXIT_OK = 0
EXIT_SCHEMA = 3
EXIT_NUMERIC = 4
EXIT_NEGATIVE = 5


class CliFailure(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _jsonable(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _emit_json(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=1, allow_nan=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _emit_csv(header: list[str], rows: list[list[Any]], out: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        click.echo(buf.getvalue(), nl=False)


def _load(ctx: click.Context) -> tuple[Scenario, SamplePool]:
    opts = ctx.obj
    try:
        if opts["scenario"]:
            sc = load_scenario(opts["scenario"])
        elif opts["example"]:
            sc = scenarios.builtin(opts["example"], opts["delta"])
        else:
            raise CliFailure("give --scenario PATH or --example {1,2,3}", EXIT_SCHEMA)
        if opts["seed"] is not None:
            sc = replace(sc, seed=opts["seed"])
        if opts["samples"] is not None:
            sc = replace(sc, samples=opts["samples"])
        return sc, build_pool(sc)
    except (ScenarioError, PoolError, OSError) as exc:
        raise CliFailure(f"scenario error: {exc}", EXIT_SCHEMA) from exc


def _attacker_weight(pool: SamplePool) -> tuple[SamplePool, str, certifier.Certificate | None]:
    """Use the scenario's ``Ra``; otherwise a certified one; otherwise the attacker-free limit."""
    if pool.scenario.Ra is not None:
        return pool, "scenario", None
    cert = certifier.certify(pool)
    if cert.certified and cert.Ra_chosen is not None:
        return pool.with_Ra(cert.Ra_chosen), "certificate", cert
    return pool, "attacker-free limit", cert


def _solve(ctx: click.Context, pool: SamplePool) -> mgare.MgareSolution:
    try:
        return mgare.solve_fixed_point(pool, tol=ctx.obj["tol"], k_max=ctx.obj["kmax"])
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        raise CliFailure(f"numerical failure: {exc}", EXIT_NUMERIC) from exc


def _out_option(fn):
    """Accept ``--out`` after the subcommand as well as before it."""

    def store(ctx: click.Context, _param: click.Parameter, value: str | None) -> None:
        if value is not None:
            ctx.ensure_object(dict)["out"] = value

    return click.option(
        "--out", type=click.Path(dir_okay=False), default=None, expose_value=False, callback=store,
        help="Output file (default stdout).",
    )(fn)


@click.group()
@click.option("--scenario", "scenario", type=click.Path(dir_okay=False), default=None, help="Scenario JSON file.")
@click.option("--example", type=click.IntRange(1, 3), default=None, help="Built-in example scenario.")
@click.option("--delta", type=float, default=0.8, show_default=True, help="Controller access probability.")
@click.option("--seed", type=int, default=None, help="Pool seed (overrides the scenario).")
@click.option("--samples", type=click.IntRange(min=1), default=None, help="Pool size M.")
@click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-10, show_default=True)
@click.option("--kmax", type=click.IntRange(min=1), default=10_000, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file (default stdout).")
@click.pass_context
def main(ctx: click.Context, **opts: Any) -> None:
    """Command-line tools for the zero-sum game over random channels."""
    ctx.obj = opts


@main.command()
@_out_option
@click.pass_context
def check(ctx: click.Context) -> None:
    """Iterate the Riccati operator from Q and report the existence verdict."""
    sc, pool = _load(ctx)
    pool, source, _ = _attacker_weight(pool)
    sol = _solve(ctx, pool)
    _emit_json(
        {
            "scenario": sc.name,
            "verdict": str(sol.verdict),
            "Ra_source": source,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "trajectory_norms": sol.trajectory_norms,
            "membership_ok": sol.membership_ok,
        },
        ctx.obj["out"],
    )
    if not sol.verdict.exists:
        ctx.exit(EXIT_NEGATIVE)


@main.command()
@_out_option
@click.pass_context
def certify(ctx: click.Context) -> None:
    """Run the constructive certificate pipeline and write the certificate."""
    sc, pool = _load(ctx)
    try:
        cert = certifier.certify(pool)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        raise CliFailure(f"numerical failure: {exc}", EXIT_NUMERIC) from exc
    payload = {"scenario": sc.name, **cert.to_dict()}
    _emit_json(payload, ctx.obj["out"])
    if not cert.certified:
        ctx.exit(EXIT_NEGATIVE)


@main.command()
@_out_option
@click.pass_context
def solve(ctx: click.Context) -> None:
    """Solve for the minimal fixed point and report the game value."""
    sc, pool = _load(ctx)
    pool, source, _ = _attacker_weight(pool)
    sol = _solve(ctx, pool)
    payload: dict[str, Any] = {
        "scenario": sc.name,
        "verdict": str(sol.verdict),
        "Ra_source": source,
        "Ra": pool.scenario.Ra,
        "iterations": sol.iterations,
        "residual": sol.residual,
    }
    if sol.verdict.exists:
        stab = policy.ms_stabilizing_check(sol, pool)
        payload.update(
            P_star=sol.P_star,
            game_value=policy.game_value(sol.P_star, pool),
            ms_stabilizing=stab.stabilizing,
            rho_second_moment=stab.rho,
        )
    _emit_json(payload, ctx.obj["out"])
    if not sol.verdict.exists:
        ctx.exit(EXIT_NEGATIVE)


@main.command()
@click.option("--horizon", "K", type=click.IntRange(min=1), default=20_000, show_default=True)
@click.option("--runs", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--burn-in", type=click.IntRange(min=0), default=None, help="Discarded slots (default K/10).")
@click.option("--trace", type=click.Path(dir_okay=False), default=None, help="CSV trace of the first runs.")
@click.option("--trace-runs", type=click.IntRange(min=0), default=1, show_default=True)
@_out_option
@click.pass_context
def simulate(ctx: click.Context, K: int, runs: int, burn_in: int | None, trace: str | None, trace_runs: int) -> None:
    """Simulate the steady saddle-point policy and compare with the game value."""
    sc, pool = _load(ctx)
    pool, source, _ = _attacker_weight(pool)
    sol = _solve(ctx, pool)
    if not sol.verdict.exists:
        _emit_json({"scenario": sc.name, "verdict": str(sol.verdict)}, ctx.obj["out"])
        ctx.exit(EXIT_NEGATIVE)
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else sc.seed
    spec = policy.steady_policy(sol.P_star)
    tr, report = policy.simulate(
        spec, pool, K, runs, seed=seed, burn_in=burn_in,
        analytic_J=policy.game_value(sol.P_star, pool), trace_runs=trace_runs if trace else 0,
    )
    if trace and tr is not None:
        tr.to_csv(trace)
    _emit_json({"scenario": sc.name, "Ra_source": source, "backend": policy.simkernel.BACKEND, **report.to_dict()}, ctx.obj["out"])
    if report.overflow_runs:
        ctx.exit(EXIT_NUMERIC)


def _parse_sweep(spec: str) -> tuple[str, np.ndarray]:
    try:
        name, rng = spec.split("=", 1)
        a, b, step = (float(v) for v in rng.split(":"))
    except ValueError as exc:
        raise CliFailure(f"--sweep expects PARAM=a:b:step, got {spec!r}", EXIT_SCHEMA) from exc
    if step <= 0 or b < a:
        raise CliFailure("--sweep needs step > 0 and a <= b", EXIT_SCHEMA)
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    return name.strip(), np.round(a + step * np.arange(count), 12)


@main.command()
@click.option("--sweep", "sweep_spec", required=True, help="PARAM=a:b:step; PARAM is 'delta'.")
@click.option("--certify/--no-certify", "run_certify", default=True, show_default=True)
@_out_option
@click.pass_context
def sweep(ctx: click.Context, sweep_spec: str, run_certify: bool) -> None:
    """Trace and attacker-weight bounds along a grid of access probabilities."""
    name, grid = _parse_sweep(sweep_spec)
    if name != "delta":
        raise CliFailure(f"unsupported sweep parameter {name!r}; only 'delta' is available", EXIT_SCHEMA)
    base, _ = _load(ctx)
    ex1 = base.controller_gates is not None and base.controller_gates.mode == "shared"
    bounds = {}
    if ex1:
        try:
            bounds = {r.delta: r for r in certifier.example1_trace_bounds(base, list(grid))}
        except certifier.StructureMismatch as exc:
            raise CliFailure(str(exc), EXIT_SCHEMA) from exc
    header = ["delta", "tr_lower", "tr_upper", "ra_sufficient", "ra_necessary", "rho_kron", "tr_Tstar", "ra_bound_norm", "verdict"]
    rows = []
    for d in grid:
        row: list[Any] = [float(d)]
        r = bounds.get(d)
        row += [r.lower, r.upper, r.ra_sufficient, r.ra_necessary] if r else [float("nan")] * 4
        if run_certify:
            try:
                sc = certifier._with_gate(base, float(d))
                cert = certifier.certify(build_pool(sc))
                tr_t = float(np.trace(cert.T_star)) if cert.T_star is not None else float("inf")
                ra = float(np.linalg.norm(cert.Ra_bound, 2)) if cert.Ra_bound is not None else float("inf")
                row += [cert.rho_kron, tr_t, ra, str(cert.verdict)]
            except (ArithmeticError, np.linalg.LinAlgError, ScenarioError) as exc:
                click.echo(f"delta={d}: {exc}", err=True)
                row += [float("nan"), float("nan"), float("nan"), "Error"]
        else:
            row += [float("nan"), float("nan"), float("nan"), "skipped"]
        rows.append(row)
    _emit_csv(header, rows, ctx.obj["out"])


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

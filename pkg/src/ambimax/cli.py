"""Command-line front end.

Subcommands: ``check`` (validation and derived quantities), ``demand``
(demand-curve CSV), ``equilibrium`` (clearing prices, optionally swept over
a scalar parameter), ``premium`` (compensation decomposition CSV), and
``riskshare`` (exponential risk-sharing report).

Exit codes: 0 success, 1 domain/precondition failure, 2 schema failure,
3 numerical failure (bracketing or convergence).  Output formatting is
fixed at 12 significant digits, so identical configs produce byte-identical
CSV files.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import sys
from typing import Optional

import click
import numpy as np

from . import __version__
from .ambiguity import value_alpha
from .config import ConfigDocument, SchemaError, load_config
from .demand import demand_curve, reservation_interval
from .equilibrium import (
    EquilibriumResult,
    Market,
    exponential_risk_sharing,
    first_best_equilibrium,
    local_second_best,
    second_best_equilibrium,
)
from .errors import (
    AmbimaxError,
    BracketError,
    ConvergenceError,
    DomainError,
)
from .premium import decompose_premium
from .scenario import admissible_bounds, check_divergence_bound

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.12g}"


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path: str) -> ConfigDocument:
    try:
        return load_config(config_path)
    except SchemaError as exc:
        _fail(EXIT_SCHEMA, f"config schema: {exc}")
    except AmbimaxError as exc:
        _fail(EXIT_DOMAIN, str(exc))


def _run(fn):
    try:
        return fn()
    except (BracketError, ConvergenceError) as exc:
        _fail(EXIT_NUMERIC, str(exc))
    except AmbimaxError as exc:
        _fail(EXIT_DOMAIN, str(exc))


def _parse_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise click.BadParameter("expected lo:hi:n")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 2 or hi <= lo:
        raise click.BadParameter("need hi > lo and n >= 2")
    return np.linspace(lo, hi, n)


def _write_csv(path: Optional[str], header, rows):
    out = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            out.close()


@click.group()
@click.version_option(version=__version__, prog_name="ambimax")
@click.option("--seed", type=int, default=None,
              help="Seed for randomized test harnesses; core computations are deterministic "
                   "and ignore it.")
@click.pass_context
def main(ctx, seed):
    """Portfolio choice and market equilibria under divergence-ball ambiguity."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def check(config_path):
    """Validate a config and print per-agent derived quantities."""
    doc = _load(config_path)

    def body():
        scenario = doc.scenario
        rows = []
        all_ok = True
        for i, agent in enumerate(doc.agents):
            dc = check_divergence_bound(agent.prior, agent.ambiguity)
            if not dc.ok:
                worst_state = scenario.states[int(np.argmin(agent.prior.probs))]
                _fail(EXIT_DOMAIN,
                      f"agents[{i}]: divergence budget c={agent.ambiguity.c} reaches the bound "
                      f"{_fmt(dc.bound)} set by state {worst_state!r}")
            band = reservation_interval(agent, scenario)
            try:
                bounds = admissible_bounds(agent, scenario)
                bounds_txt = f"[{_fmt(bounds[0])}, {_fmt(bounds[1])}]"
            except AmbimaxError:
                bounds_txt = "n/a"
            rows.append((i, dc.margin, agent.ambiguity.delta, agent.ambiguity.d_reduced,
                         band.eta_low, band.eta_high, bounds_txt))
            all_ok = all_ok and dc.ok
        click.echo("agent  margin        delta         d_reduced     eta_low       eta_high      position_bounds")
        for i, margin, delta, dr, lo, hi, bounds_txt in rows:
            click.echo(f"{i:<6d} {_fmt(margin):<13} {_fmt(delta):<13} {_fmt(dr):<13} "
                       f"{_fmt(lo):<13} {_fmt(hi):<13} {bounds_txt}")
        return EXIT_OK if all_ok else EXIT_DOMAIN

    sys.exit(_run(body))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--grid", "grid_text", default=None, help="Price grid lo:hi:n (overrides config).")
@click.option("--agent", "agent_idx", default=0, show_default=True, help="Agent index.")
@click.option("--out", "out_path", default=None, type=click.Path(), help="CSV output path.")
def demand(config_path, grid_text, agent_idx, out_path):
    """Demand curve CSV: price, theta, side, global side, value, residual, martingale."""
    doc = _load(config_path)

    def body():
        if agent_idx >= len(doc.agents):
            raise DomainError(f"agent index {agent_idx} out of range")
        agent = doc.agents[agent_idx]
        scenario = doc.scenario
        if grid_text is not None:
            prices = _parse_grid(grid_text)
        elif doc.price_grid is not None:
            prices = doc.price_grid.points()
        else:
            raise DomainError("no price grid: pass --grid or add price_grid to the config")
        n = scenario.n_states
        header = ["price", "theta", "side", "global_side", "value", "foc_residual"] + [
            f"q_{s+1}" for s in range(n)
        ]
        rows = []
        for price, result in demand_curve(agent, scenario, prices):
            if hasattr(result, "global_side"):  # seeker: one row per local optimum
                for side, opt in (("long", result.local_long), ("short", result.local_short)):
                    if opt is None:
                        continue
                    rows.append([_fmt(price), _fmt(opt.theta), side, result.global_side,
                                 _fmt(opt.value), _fmt(opt.foc_residual)] + [""] * n)
            else:
                q = list(result.martingale.probs) if result.martingale is not None else [None] * n
                rows.append([_fmt(price), _fmt(result.theta_star), result.side, result.side,
                             _fmt(result.value), _fmt(result.foc_residual)]
                            + [_fmt(v) if v is not None else "" for v in q])
        _write_csv(out_path, header, rows)
        return EXIT_OK

    sys.exit(_run(body))


def _sweep_markets(doc: ConfigDocument):
    sweep = doc.sweep
    if sweep is None:
        yield None, doc.market()
        return
    for value in np.linspace(sweep.lo, sweep.hi, sweep.n):
        agents = list(doc.agents)
        target = agents[sweep.agent]
        if sweep.param == "p0":
            if doc.scenario.n_states != 2:
                raise DomainError("p0 sweeps require a two-state scenario")
            from .scenario import ReferencePrior

            agents[sweep.agent] = dataclasses.replace(
                target, prior=ReferencePrior([value, 1.0 - value])
            )
        elif sweep.param == "alpha":
            agents[sweep.agent] = target.with_alpha(float(value))
        else:  # c
            agents[sweep.agent] = target.with_ambiguity(float(value), target.ambiguity.alpha)
        yield float(value), Market(scenario=doc.scenario, agents=tuple(agents),
                                   supply=doc.supply)


def _equilibrium_rows(mode: str, market: Market):
    if mode == "first":
        return [first_best_equilibrium(market)]
    if mode == "second":
        return list(second_best_equilibrium(market))
    return [local_second_best(market)]


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["first", "second", "local"]), default="first",
              show_default=True)
@click.option("--sweep", "sweep_text", default=None,
              help="Override the config sweep grid: lo:hi:n (keeps the config's param/agent).")
@click.option("--out", "out_path", default=None, type=click.Path(), help="CSV output path.")
def equilibrium(config_path, mode, sweep_text, out_path):
    """Equilibrium CSV: sweep value, clearing price, allocations, result kind."""
    doc = _load(config_path)

    def body():
        if sweep_text is not None:
            if doc.sweep is None:
                raise DomainError("--sweep override requires a sweep block in the config")
            pts = _parse_grid(sweep_text)
            sweep = dataclasses.replace(doc.sweep, lo=float(pts[0]), hi=float(pts[-1]),
                                        n=len(pts))
            document = dataclasses.replace(doc, sweep=sweep)
        else:
            document = doc
        m = len(doc.agents)
        header = ["sweep_param", "price"] + [f"theta_{i+1}" for i in range(m)] + ["kind"]
        rows = []
        for value, market in _sweep_markets(document):
            try:
                results = _equilibrium_rows(mode, market)
            except BracketError:
                results = [EquilibriumResult(
                    price=math.nan, allocations=tuple(math.nan for _ in range(m)),
                    residual=math.nan, kind="no_trade", interval=(math.nan, math.nan),
                    diagnostics={"reason": "bracket failure"},
                )]
            for res in results:
                rows.append([_fmt(value) if value is not None else "",
                             _fmt(res.price)] + [_fmt(t) for t in res.allocations]
                            + [res.kind])
        _write_csv(out_path, header, rows)
        return EXIT_OK

    sys.exit(_run(body))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--theta-grid", "grid_text", default=None,
              help="Position grid lo:hi:n (overrides config theta_grid).")
@click.option("--agent", "agent_idx", default=0, show_default=True, help="Agent index.")
@click.option("--out", "out_path", default=None, type=click.Path(), help="CSV output path.")
def premium(config_path, grid_text, agent_idx, out_path):
    """Compensation decomposition CSV: theta, rho, epsilon, delta_comp, status."""
    doc = _load(config_path)

    def body():
        if agent_idx >= len(doc.agents):
            raise DomainError(f"agent index {agent_idx} out of range")
        agent = doc.agents[agent_idx]
        if grid_text is not None:
            thetas = _parse_grid(grid_text)
        elif doc.theta_grid is not None:
            thetas = doc.theta_grid.points()
        else:
            raise DomainError("no theta grid: pass --theta-grid or add theta_grid to the config")
        header = ["theta", "rho", "epsilon", "delta_comp", "status"]
        rows = []
        for theta in thetas:
            try:
                dec = decompose_premium(agent, doc.scenario, float(theta))
                rows.append([_fmt(theta), _fmt(dec.rho), _fmt(dec.epsilon),
                             _fmt(dec.delta_comp), "ok"])
            except AmbimaxError as exc:
                rows.append([_fmt(theta), "", "", "", f"error: {exc}"])
        _write_csv(out_path, header, rows)
        return EXIT_OK

    sys.exit(_run(body))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def riskshare(config_path):
    """Exponential risk-sharing report with a tilt-independence check."""
    doc = _load(config_path)

    def body():
        if doc.riskshare is None:
            raise DomainError("config has no riskshare block")
        if len(doc.agents) < 2:
            raise DomainError("risk sharing needs two agents")
        a1, a2 = doc.agents[0], doc.agents[1]
        th1, th2 = float(doc.riskshare["theta1"]), float(doc.riskshare["theta2"])
        result = exponential_risk_sharing(a1, a2, doc.scenario, th1, th2)
        click.echo(f"theta_star      {_fmt(result.theta_star)}")
        click.echo(f"exposure_1      {_fmt(result.exposure1)}")
        click.echo(f"exposure_2      {_fmt(result.exposure2)}")
        click.echo(f"foc_residual    {_fmt(result.foc_residual)}")
        deltas = doc.riskshare.get("deltas")
        same_prior = bool(np.allclose(a1.prior.probs, a2.prior.probs))
        if deltas and same_prior:
            exposures = []
            for dv in deltas:
                c = 1.0 + float(dv) ** 2
                pair = [a.with_ambiguity(c, 1.0 if dv > 0 else 0.5) for a in (a1, a2)]
                res = exponential_risk_sharing(pair[0], pair[1], doc.scenario, th1, th2)
                exposures.append(res.exposure1)
                click.echo(f"delta={_fmt(dv):<8} exposure_1={_fmt(res.exposure1)}")
            spread = max(exposures) - min(exposures)
            click.echo(f"tilt_independence_spread {_fmt(spread)}")
        elif deltas:
            click.echo("tilt sweep skipped: priors differ, independence does not apply")
        return EXIT_OK

    sys.exit(_run(body))


if __name__ == "__main__":
    main()

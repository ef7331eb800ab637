"""
``python -m sosim``: build, check and disrupt infrastructure networks from the shell.

    python -m sosim fixtures --name block --out block.gml          # write a reference network
    python -m sosim validate --network block.gml --deep            # structure, then pricing and conservation
    python -m sosim run --network block.gml --scenario s.toml --out r.csv
    python -m sosim sweep --network block.gml --scales 0.5,1,2     # supply curve over demand scales
    python -m sosim generate --nodes 50 --p 0.08 --seed 3 --out g.gml
    python -m sosim paper-suite --out results/ --plot              # the nine factorial scenarios

Exit codes: 0 success, 1 invalid input (network, scenario file, flags), 2 simulation failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tomllib
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

from rich.console import Console
from rich.table import Table

from sosim.allocation import allocate, check_conservation
from sosim.core import UNAVAILABLE, Network, SimulationError, Violation, validate_network
from sosim.export import export_curve, export_results
from sosim.gml import dumps_gml, read_gml, write_gml
from sosim.logging import SimpleLoggingConfig
from sosim.pricing import price_fixed_point
from sosim.scenario import (
    FACTORIAL_SCENARIOS,
    ScenarioSpec,
    SupplyCurve,
    cost_table,
    disrupted,
    run,
    run_suite,
    supply_curve,
)
from sosim.topology import block_fixture, erdos_renyi, validation_fixture_3node

log = logging.getLogger(__name__)

SEED_ENV = "SOSIM_SEED"

FIXTURES = {"block": block_fixture, "3node": validation_fixture_3node}


class Invalid(Exception):
    """Input that loaded but does not describe something we can simulate."""

    def __init__(self, violations: list[Violation]):
        super().__init__(f"{len(violations)} violation(s)")
        self.violations = violations


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _scales(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"scales must be non-negative numbers: {text!r}")
    return values


def _seed(flag: int | None) -> int | None:
    """The --seed flag, else $SOSIM_SEED, else None."""
    if flag is not None:
        return flag
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}") from None
    if seed < 0:
        raise ValueError(f"{SEED_ENV} must be a non-negative integer, got {raw!r}")
    return seed


def _load_network(path: str) -> Network:
    net = read_gml(path)
    if violations := validate_network(net):
        raise Invalid(violations)
    return net


def _load_scenario(path: str | None) -> ScenarioSpec:
    if path is None:
        return ScenarioSpec()
    data = tomllib.loads(Path(path).read_text())
    data.setdefault("name", Path(path).stem)
    return ScenarioSpec.model_validate(data)


def _curve_table(curve: SupplyCurve) -> Table:
    table = Table("quantity", "unit cost", title=curve.name or "supply curve")
    for q, c in curve.steps:
        table.add_row(f"{q:.6g}", f"{c:.6g}")
    return table


def _curve_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}.curve.csv")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _unpriced(net: Network) -> list[Violation]:
    prices = price_fixed_point(net)
    names = net.catalog.names
    return [
        Violation(f"agent {a}", "unpriced demand", f"{names[r]} has no reachable source")
        for a in net.consumers()
        for r, d in enumerate(net.agent(a).final_demand)
        if d > 0 and prices.sell_cost(a, r) is UNAVAILABLE
    ]


def cmd_validate(args: argparse.Namespace) -> None:
    net = _load_network(args.network)
    if args.deep:
        if violations := _unpriced(net):
            raise Invalid(violations)
        state = allocate(net)
        if violations := check_conservation(net, state):
            raise Invalid(violations)
        shortfall = float(state.shortfall.sum())
        print(f"ok: {len(net.agents)} agents, {len(net.links)} links; allocated in {state.iterations} round(s)")
        if shortfall > 0:
            print(f"note: {shortfall:.6g} units of final demand cannot be served")
    else:
        print(f"ok: {len(net.agents)} agents, {len(net.links)} links, {net.n_resources} resources")


def cmd_run(args: argparse.Namespace) -> None:
    net = _load_network(args.network)
    spec = _load_scenario(args.scenario)
    overrides: dict[str, object] = {}
    if args.timesteps is not None:
        overrides["horizon"] = args.timesteps
    if (seed := _seed(args.seed)) is not None:
        overrides["seed"] = seed
    if overrides:
        spec = ScenarioSpec.model_validate(spec.model_dump() | overrides)

    result = run(net, spec, scales=args.scales)
    if args.out is None:
        export_results(result, args.format, sys.stdout)
    else:
        out = Path(args.out)
        export_results(result, args.format, out)
        if result.curve is not None:
            export_curve(result.curve, _curve_path(out))
        log.info("wrote %s", out)


def cmd_sweep(args: argparse.Namespace) -> None:
    net = _load_network(args.network)
    spec = _load_scenario(args.scenario)
    name = spec.name if args.scenario else Path(args.network).stem
    curve = supply_curve(disrupted(net, spec), None, args.scales, name=name)
    if curve.truncated:
        print(f"note: demand at scale {curve.truncated_at:g} cannot be fully served; curve stops there", file=sys.stderr)
    if args.out is None:
        Console().print(_curve_table(curve))
    else:
        export_curve(curve, args.out)


def cmd_generate(args: argparse.Namespace) -> None:
    seed = _seed(args.seed)
    net = erdos_renyi(args.nodes, args.p, seed=0 if seed is None else seed)
    size = write_gml(net, args.out)
    print(f"wrote {len(net.agents)} agents, {len(net.links)} links to {args.out} ({size} bytes)")


def cmd_fixtures(args: argparse.Namespace) -> None:
    net = FIXTURES[args.name]()
    if args.out is None:
        sys.stdout.write(dumps_gml(net))
    else:
        write_gml(net, args.out)


def cmd_suite(args: argparse.Namespace) -> None:
    base = _load_network(args.network) if args.network else block_fixture()
    results = run_suite(base, tuple(FACTORIAL_SCENARIOS), args.scales, workers=args.workers)
    frame = cost_table(results)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for result in results.values():
        export_curve(result.curve, out / f"{result.name}.curve.csv")
    frame.to_csv(out / "cost_table.csv", lineterminator="\n")
    if args.plot:
        from sosim.vis import plot_supply_curves

        fig = plot_supply_curves([r.curve for r in results.values()], title="supply curves by scenario")
        fig.savefig(out / "supply_curves.png", dpi=150)

    table = Table("scenario", "name", "total cost", "delta", "% of base", title="total cost by scenario")
    for scenario, row in frame.iterrows():
        table.add_row(
            str(scenario), row["name"], f"{row['total_cost']:.4f}", f"{row['delta']:+.4f}", f"{row['pct_of_base']:.1f}"
        )
    Console().print(table)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sosim", description="Simulate interdependent infrastructure networks.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for solver detail")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network file's structure")
    p.add_argument("--network", required=True, help="GML network file")
    p.add_argument("--deep", action="store_true", help="also price and allocate, and check conservation")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario over its timesteps")
    p.add_argument("--network", required=True, help="GML network file")
    p.add_argument("--scenario", default=None, help="TOML scenario file (default: no disruption, one timestep)")
    p.add_argument("--timesteps", type=int, default=None, help="override the scenario's horizon")
    p.add_argument("--seed", type=int, default=None, help=f"override the scenario's seed (default: ${SEED_ENV})")
    p.add_argument("--out", default=None, help="result file (default: stdout)")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument(
        "--scales", type=_scales, default=None, help="also write the final network's supply curve, e.g. 0.5,1,2"
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="supply curve over demand scales")
    p.add_argument("--network", required=True, help="GML network file")
    p.add_argument("--scenario", default=None, help="TOML scenario file whose events are put in force first")
    p.add_argument("--scales", type=_scales, default=(1.0,), help="comma-separated demand scales, e.g. 0.5,1,2")
    p.add_argument("--out", default=None, help="curve CSV (default: print a table)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("generate", help="write a random G(n, p) network")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--p", type=float, required=True, help="edge probability")
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV}, else 0)")
    p.add_argument("--out", required=True, help="GML file to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fixtures", help="write a reference network")
    p.add_argument("--name", choices=sorted(FIXTURES), required=True)
    p.add_argument("--out", default=None, help="GML file (default: stdout)")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("paper-suite", help="run the nine factorial disruption scenarios on the urban block")
    p.add_argument("--out", required=True, help="directory for curves and the cost table")
    p.add_argument("--network", default=None, help="GML network (default: the built-in block)")
    p.add_argument("--scales", type=_scales, default=(1.0,), help="comma-separated demand scales for the curves")
    p.add_argument("--workers", type=int, default=None, help="scenarios run in parallel (default: CPU count)")
    p.add_argument("--plot", action="store_true", help="also save supply_curves.png")
    p.set_defaults(func=cmd_suite)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    SimpleLoggingConfig().verbosity(args.verbose, "sosim").apply()
    try:
        args.func(args)
    except Invalid as e:
        for violation in e.violations:
            print(violation, file=sys.stderr)
        print(f"invalid: {e}", file=sys.stderr)
        return 1
    except SimulationError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        # GML, TOML and pydantic errors are all ValueErrors
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

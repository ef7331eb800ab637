"""
Scenario runs, the factorial disruption scenarios and the resilience metrics.

A run steps through timesteps; between them, scheduled and generated events are
applied to (or reverted from) a working copy of the network, and within each one
the system is allocated once. Metrics: total cost of the satisfied final demand,
supply curves, and the share of demand deliverable at a given price.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Annotated, Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, NonNegativeInt, PositiveInt, model_validator

from sosim import constants as C
from sosim.allocation import Demands, FlowState, allocate
from sosim.config import Severity, SolverConfig
from sosim.core import Network, NetworkArrays, SimulationError, producible_set
from sosim.disruption import (
    RNG_ALGORITHM,
    DisruptionEvent,
    Generator,
    GeneratorState,
    LinkBreak,
    LinkCostScale,
    MatrixColumnScale,
    UnresolvedTarget,
    apply_event,
    generator_step,
    revert_event,
)
from sosim.topology import link_between
from utils.param_types import Factor, NonNegativeFinite

__all__ = [
    "FACTORIAL_SCENARIOS",
    "RunResult",
    "ScenarioSpec",
    "SuiteResult",
    "SupplyCurve",
    "TimedEvent",
    "TimestepError",
    "TimestepRecord",
    "UnknownScenario",
    "build_factorial_scenario",
    "build_paper_scenario",
    "config_hash",
    "cost_table",
    "delivered_average",
    "disrupted",
    "equilibrium",
    "run",
    "run_suite",
    "satisfied_fraction",
    "supply_curve",
    "total_cost",
]

log = logging.getLogger(__name__)


class UnknownScenario(SimulationError):
    pass


class TimestepError(SimulationError):
    def __init__(self, t: int, cause: SimulationError):
        super().__init__(f"t={t}: {type(cause).__name__}: {cause}")
        self.t = t
        self.cause = cause


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


class TimedEvent(BaseModel, frozen=True):
    at: PositiveInt
    """Timestep the event comes into force"""
    event: DisruptionEvent

    @model_validator(mode="before")
    @classmethod
    def _flat(cls, data: Any) -> Any:
        # Scenario files write `{at = 2, kind = "link_break", link = 3}` on one line.
        if isinstance(data, dict) and "event" not in data:
            data = dict(data)
            return {"at": data.pop("at", None), "event": data}
        return data


class ScenarioSpec(BaseModel, frozen=True):
    name: str = "scenario"

    horizon: PositiveInt = 1
    """Number of timesteps T; timesteps run 1..T"""

    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    """Generators without their own seed use this plus their position in the list"""

    demand_scale: Factor = 1.0
    """Multiplies every final-demand vector"""

    demand: dict[NonNegativeInt, tuple[NonNegativeFinite, ...]] | None = None
    """Final-demand vectors by agent id; agents not listed keep the network's own"""

    events: tuple[TimedEvent, ...] = ()
    generators: tuple[Generator, ...] = ()
    severity: Severity = Severity()

    @model_validator(mode="after")
    def _within_horizon(self):
        late = [e.at for e in self.events if e.at > self.horizon]
        if late:
            raise ValueError(f"events at t={late} fall after the horizon ({self.horizon})")
        return self


def config_hash(spec: ScenarioSpec, config: SolverConfig | None = None) -> str:
    """Short fingerprint of everything that determines a run's numbers."""
    payload = {
        "scenario": spec.model_dump(mode="json"),
        "solver": (config or SolverConfig()).model_dump(mode="json"),
    }
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def total_cost(state: FlowState) -> float:
    """Satisfied final demand times the unit cost it was delivered at, over every agent and resource."""
    return float(state.spend.sum())


def delivered_average(state: FlowState) -> dict[int, tuple[float, float]]:
    """Per consumer with anything served: (quantity, quantity-weighted mean delivered cost)."""
    out = {}
    quantity = state.satisfied.sum(axis=1)
    spend = state.spend.sum(axis=1)
    for n in np.flatnonzero(quantity > 0):
        out[int(state.arrays.agent_ids[n])] = (float(quantity[n]), float(spend[n] / quantity[n]))
    return out


@dataclass(frozen=True)
class SupplyCurve:
    steps: tuple[tuple[float, float], ...]
    """(cumulative quantity, unit cost); quantities strictly increasing, costs non-decreasing"""
    name: str = ""
    demanded: float = 0.0
    """Total demand the fraction metric is measured against"""
    truncated_at: float | None = None
    """First demand scale that could not be fully served; steps stop before it"""

    @property
    def truncated(self) -> bool:
        return self.truncated_at is not None

    def cost_at(self, quantity: float) -> float | None:
        """Unit cost of the step covering `quantity`, None beyond the curve."""
        for q, c in self.steps:
            if quantity <= q:
                return c
        return None


def _steps_for(state: FlowState) -> list[tuple[float, float]]:
    averages = sorted(delivered_average(state).items(), key=lambda item: (item[1][1], item[0]))
    quantities = np.cumsum([q for _, (q, _) in averages])
    return [(float(q), cost) for q, (_, (_, cost)) in zip(quantities, averages)]


def _envelope(per_scale: list[list[tuple[float, float]]]) -> tuple[tuple[float, float], ...]:
    # At each quantity, the cheapest scale whose curve reaches that far.
    breaks = sorted({q for steps in per_scale for q, _ in steps})
    merged = []
    for q in breaks:
        covering = [next(c for upto, c in steps if q <= upto) for steps in per_scale if steps and q <= steps[-1][0]]
        merged.append((q, min(covering)))
    return tuple(merged)


def supply_curve(
    net: Network,
    demand_config: Demands = None,
    scales: Sequence[float] = (1.0,),
    config: SolverConfig | None = None,
    name: str = "",
) -> SupplyCurve:
    """
    Cost of serving growing demand: one allocation per demand scale.

    At each scale consumers are ordered by their mean delivered cost and stacked
    into cumulative steps. The merged curve takes, at each quantity, the cheapest
    scale that reaches it.
    """
    config = config or SolverConfig()
    arr = NetworkArrays.of(net)
    if isinstance(demand_config, np.ndarray):
        base = np.asarray(demand_config, dtype=float)
    else:
        base = arr.demand_array(demand_config)
    per_scale: list[list[tuple[float, float]]] = []
    demanded = 0.0
    for scale in sorted(scales):
        demand = base * scale
        state = allocate(net, demand, config)
        if state.shortfall.sum() > config.flow_tol * max(1.0, demand.sum()):
            log.info("%s: demand at scale %g cannot be fully served", name or "curve", scale)
            return SupplyCurve(_envelope(per_scale), name, float(demand.sum()), scale)
        per_scale.append(_steps_for(state))
        demanded = float(demand.sum())
    return SupplyCurve(_envelope(per_scale), name, demanded)


def satisfied_fraction(curve: SupplyCurve, price: float) -> float:
    """Share of the demanded quantity the curve delivers at a unit cost no higher than `price`."""
    if curve.demanded <= 0:
        return 1.0
    deliverable = max((q for q, c in curve.steps if c <= price), default=0.0)
    return min(1.0, deliverable / curve.demanded)


def equilibrium(curve: SupplyCurve, demand_curve: Sequence[tuple[float, float]]) -> tuple[float, float] | None:
    """
    Where the supply steps first reach the willingness to pay.

    `demand_curve` holds (quantity, price) steps: buyers pay `price` for quantities up
    to `quantity`, nothing beyond the last step. Returns (quantity, cost) at the start
    of the first supply step priced at or above the willingness to pay there, or None
    if supply stays below demand along the whole curve.
    """
    demand_steps = sorted(demand_curve)

    def willingness(q: float) -> float:
        for upto, price in demand_steps:
            if q < upto:
                return price
        return 0.0

    start = 0.0
    for q, c in curve.steps:
        if c >= willingness(start):
            return start, c
        start = q
    return None


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimestepRecord:
    t: int
    total_cost: float
    total_shortfall: float
    delivered: tuple[tuple[str, float | None], ...]
    """Per consumer label: mean delivered cost, None when nothing was served"""
    active: tuple[str, ...] = ()
    """Kinds of the events in force"""


@dataclass(frozen=True)
class RunResult:
    scenario: str
    seed: int
    config_hash: str
    records: tuple[TimestepRecord, ...]
    curve: SupplyCurve | None = None
    rng_algorithm: str = RNG_ALGORITHM


def prepared(net: Network, spec: ScenarioSpec) -> Network:
    """The network with the scenario's demand vectors and demand scale in place."""
    for agent_id, vector in (spec.demand or {}).items():
        if agent_id not in net.agents:
            raise UnresolvedTarget(f"demand given for unknown agent {agent_id}")
        if len(vector) != net.n_resources:
            raise UnresolvedTarget(f"demand for agent {agent_id} has {len(vector)} entries, not {net.n_resources}")
        net = net.with_agent(replace(net.agent(agent_id), final_demand=tuple(vector)))
    if spec.demand_scale != 1.0:
        for agent in list(net.agents.values()):
            net = net.with_agent(replace(agent, final_demand=tuple(d * spec.demand_scale for d in agent.final_demand)))
    return net


def _record(t: int, net: Network, consumers: list[int], state: FlowState, active: list) -> TimestepRecord:
    averages = delivered_average(state)
    delivered = tuple((net.agent(a).label, averages[a][1] if a in averages else None) for a in consumers)
    return TimestepRecord(
        t=t,
        total_cost=total_cost(state),
        total_shortfall=float(state.shortfall.sum()),
        delivered=delivered,
        active=tuple(event.kind for _, event, _ in active),
    )


def run(
    net: Network,
    spec: ScenarioSpec,
    config: SolverConfig | None = None,
    scales: Sequence[float] | None = None,
) -> RunResult:
    """
    Simulate timesteps 1..T.

    Events ending at `t` are reverted before events starting at `t` are applied.
    When an ending event shares its target with events still in force, those are
    reverted and reapplied in start order so their effects are not lost.
    """
    config = config or SolverConfig()
    baseline = prepared(net, spec)
    consumers = baseline.consumers()
    working = baseline
    # (timestep it ends or None, event, whether a generator owns its ending)
    active: list[tuple[int | None, DisruptionEvent, bool]] = []
    streams = [GeneratorState.seeded(g, (spec.seed + i) % 2**64) for i, g in enumerate(spec.generators)]

    records = []
    for t in range(1, spec.horizon + 1):
        ending = [entry for entry in active if not entry[2] and entry[0] == t]
        starting: list[tuple[DisruptionEvent, bool]] = [(e.event, False) for e in spec.events if e.at == t]
        for i, g in enumerate(spec.generators):
            started, ended, streams[i] = generator_step(g, t, streams[i])
            ending += [entry for entry in active if entry[2] and any(entry[1] is e for e in ended)]
            starting += [(e, True) for e in started]

        if ending:
            active = [entry for entry in active if not any(entry is gone for gone in ending)]
            touched = {entry[1].target for entry in ending}
            for _, event, _ in ending:
                working = revert_event(working, baseline, event)
            sharing = [entry for entry in active if entry[1].target in touched]
            for _, event, _ in sharing:
                working = revert_event(working, baseline, event)
            for _, event, _ in sharing:
                working = apply_event(working, event)

        for event, generated in starting:
            working = apply_event(working, event)
            end = None if generated or event.duration == "permanent" else t + event.duration
            active.append((end, event, generated))

        try:
            state = allocate(working, None, config)
        except SimulationError as e:
            raise TimestepError(t, e) from e
        records.append(_record(t, working, consumers, state, active))
        log.info("%s t=%d: total cost %.6g, %d events in force", spec.name, t, records[-1].total_cost, len(active))

    curve = supply_curve(working, None, scales, config, spec.name) if scales else None
    return RunResult(spec.name, spec.seed, config_hash(spec, config), tuple(records), curve)


# ---------------------------------------------------------------------------
# Factorial scenarios on the urban block
# ---------------------------------------------------------------------------

FACTORIAL_SCENARIOS: dict[int, tuple[int, int]] = {
    0: (0, 0),
    1: (1, 0),
    2: (0, 1),
    3: (1, 1),
    4: (2, 0),
    5: (2, 1),
    6: (0, 2),
    7: (1, 2),
    8: (2, 2),
}
"""Scenario id -> (infrastructure severity, production severity); 0 none, 1 medium, 2 heavy"""

COMBINED = {3: (1, 2), 5: (4, 2), 7: (1, 6), 8: (4, 6)}
"""Combined scenario -> (infrastructure-only, production-only) components"""


def _infrastructure_events(base: Network, level: int, severity: Severity) -> list[DisruptionEvent]:
    if level == 0:
        return []
    broken = C.BROKEN_IN_INFRASTRUCTURE_SCENARIOS
    events: list[DisruptionEvent] = [LinkBreak(link=link_between(base, *pair)) for pair in broken]
    if level == 2:
        link = link_between(base, *C.COSTLIER_IN_HEAVY_INFRASTRUCTURE)
        events.append(LinkCostScale(link=link, factor=severity.heavy_link_cost))
    return events


def _production_events(base: Network, level: int, severity: Severity) -> list[DisruptionEvent]:
    if level == 0:
        return []
    factor = severity.medium_matrix if level == 1 else severity.heavy_matrix
    by_label = {agent.label: agent for agent in base.agents.values()}
    return [
        MatrixColumnScale(agent=by_label[label].id, col=col, factor=factor)
        for label in C.DISRUPTED_PRODUCERS
        for col in sorted(producible_set(by_label[label]))
    ]


def build_factorial_scenario(scenario_id: int, base: Network, severity: Severity | None = None) -> ScenarioSpec:
    """
    Events of one cell of the 3x3 severity layout, all in force from t=1.

    Infrastructure: medium breaks A0 -> A3 and A0 -> A4, heavy also makes A2 -> A1
    dearer. Production: every producible column of A1-A5 scaled up. Id 0 is normal
    operation.
    """
    if scenario_id not in FACTORIAL_SCENARIOS:
        raise UnknownScenario(f"scenario {scenario_id} is not one of {sorted(FACTORIAL_SCENARIOS)}")
    severity = severity or Severity()
    infrastructure, production = FACTORIAL_SCENARIOS[scenario_id]
    events = _infrastructure_events(base, infrastructure, severity) + _production_events(base, production, severity)
    return ScenarioSpec(
        name="base" if scenario_id == 0 else f"scenario-{scenario_id}",
        horizon=1,
        events=tuple(TimedEvent(at=1, event=e) for e in events),
        severity=severity,
    )


build_paper_scenario = build_factorial_scenario
"""The same cells under the name the `paper-suite` subcommand uses."""


@dataclass(frozen=True)
class SuiteResult:
    scenario_id: int
    name: str
    total_cost: float
    total_shortfall: float
    curve: SupplyCurve


def disrupted(base: Network, spec: ScenarioSpec) -> Network:
    """The prepared network with every scheduled event of `spec` in force, whatever its timestep."""
    net = prepared(base, spec)
    for timed in spec.events:
        net = apply_event(net, timed.event)
    return net


def run_suite(
    base: Network,
    scenario_ids: Sequence[int] = tuple(FACTORIAL_SCENARIOS),
    scales: Sequence[float] = (1.0,),
    workers: int | None = None,
    config: SolverConfig | None = None,
    severity: Severity | None = None,
) -> dict[int, SuiteResult]:
    """Run the factorial scenarios side by side; results come back ordered by scenario id."""
    config = config or SolverConfig()

    def one(scenario_id: int) -> SuiteResult:
        spec = build_factorial_scenario(scenario_id, base, severity)
        net = disrupted(base, spec)
        try:
            state = allocate(net, None, config)
        except SimulationError as e:
            raise TimestepError(1, e) from e
        curve = supply_curve(net, None, scales, config, spec.name)
        log.info("%s: total cost %.6g", spec.name, total_cost(state))
        return SuiteResult(scenario_id, spec.name, total_cost(state), float(state.shortfall.sum()), curve)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, sorted(scenario_ids)))
    return {r.scenario_id: r for r in results}


def cost_table(results: dict[int, SuiteResult]) -> pd.DataFrame:
    """
    Total cost per scenario against normal operation.

    Columns: total_cost, delta (over scenario 0), pct_of_base, and for combined
    scenarios whose components were run, combined_vs_sum = delta - sum of the
    component deltas (positive means the combination hurts more than its parts).
    """
    frame = pd.DataFrame(
        {
            "name": [r.name for r in results.values()],
            "total_cost": [r.total_cost for r in results.values()],
            "total_shortfall": [r.total_shortfall for r in results.values()],
        },
        index=pd.Index(list(results), name="scenario"),
    ).sort_index()
    if 0 not in frame.index:
        return frame
    base = frame.loc[0, "total_cost"]
    frame["delta"] = frame["total_cost"] - base
    frame["pct_of_base"] = 100.0 * frame["total_cost"] / base if base else np.nan
    combined = {}
    for scenario, (a, b) in COMBINED.items():
        if {scenario, a, b} <= set(frame.index):
            combined[scenario] = frame.loc[scenario, "delta"] - frame.loc[a, "delta"] - frame.loc[b, "delta"]
    frame["combined_vs_sum"] = pd.Series(combined, dtype=float)
    return frame

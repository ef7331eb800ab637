"""
Disruption events and the stochastic generators that schedule them.

Events are immutable pydantic models discriminated by `kind`, so they validate
straight out of a scenario file. Applying an event returns a modified copy of the
network; reverting restores the targeted fields from a baseline network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Annotated, Any, Literal

import numpy as np
from numpy.random import PCG64
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveInt, TypeAdapter, model_validator

from sosim.config import Range
from sosim.core import UNAVAILABLE, UNBOUNDED, Agent, InfraLink, Network, SimulationError, TechnologyMatrix
from utils.param_types import Factor, ScaleFactor, ZeroToOne

__all__ = [
    "RNG_ALGORITHM",
    "DemandScale",
    "DisruptionEvent",
    "Generator",
    "GeneratorState",
    "LinkBreak",
    "LinkCapacityScale",
    "LinkCostScale",
    "MatrixCellScale",
    "MatrixColumnScale",
    "MatrixRowScale",
    "UnresolvedTarget",
    "apply_event",
    "generator_step",
    "revert_event",
]

log = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"
"""Bit generator behind every seeded stream; recorded in result headers"""

ResourceRef = int | str
"""A resource by catalog index or name"""

Duration = PositiveInt | Literal["permanent"]


class UnresolvedTarget(SimulationError):
    pass


class _Event(BaseModel, frozen=True):
    duration: Duration = "permanent"
    """Timesteps the event stays in force, or permanent"""

    @property
    def target(self) -> tuple[str, int]:
        raise NotImplementedError


class _LinkEvent(_Event, frozen=True):
    link: NonNegativeInt

    @property
    def target(self) -> tuple[str, int]:
        return ("link", self.link)


class _AgentEvent(_Event, frozen=True):
    agent: NonNegativeInt

    @property
    def target(self) -> tuple[str, int]:
        return ("agent", self.agent)


class LinkBreak(_LinkEvent, frozen=True):
    """Every resource on the link becomes Unavailable and its capacity drops to zero."""

    kind: Literal["link_break"] = "link_break"


class LinkCostScale(_LinkEvent, frozen=True):
    kind: Literal["link_cost_scale"] = "link_cost_scale"
    resources: tuple[ResourceRef, ...] | None = None
    """Resources affected; None means all"""
    factor: Factor


class LinkCapacityScale(_LinkEvent, frozen=True):
    kind: Literal["link_capacity_scale"] = "link_capacity_scale"
    resources: tuple[ResourceRef, ...] | None = None
    factor: ScaleFactor


class MatrixCellScale(_AgentEvent, frozen=True):
    kind: Literal["matrix_cell_scale"] = "matrix_cell_scale"
    row: ResourceRef
    col: ResourceRef
    factor: ScaleFactor


class MatrixRowScale(_AgentEvent, frozen=True):
    """Every output needs more (or less) of one input."""

    kind: Literal["matrix_row_scale"] = "matrix_row_scale"
    row: ResourceRef
    factor: ScaleFactor


class MatrixColumnScale(_AgentEvent, frozen=True):
    """One output needs more (or less) of every input."""

    kind: Literal["matrix_column_scale"] = "matrix_column_scale"
    col: ResourceRef
    factor: ScaleFactor


class DemandScale(_AgentEvent, frozen=True):
    """Final demand shock; factors above 1 model enhanced demand."""

    kind: Literal["demand_scale"] = "demand_scale"
    resources: tuple[ResourceRef, ...] | None = None
    factor: ScaleFactor


DisruptionEvent = Annotated[
    LinkBreak
    | LinkCostScale
    | LinkCapacityScale
    | MatrixCellScale
    | MatrixRowScale
    | MatrixColumnScale
    | DemandScale,
    Field(discriminator="kind"),
]

EVENTS = TypeAdapter(DisruptionEvent)


# ---------------------------------------------------------------------------
# Applying and reverting
# ---------------------------------------------------------------------------


def _resource(net: Network, ref: ResourceRef) -> int:
    if isinstance(ref, str):
        try:
            return net.catalog.index(ref)
        except KeyError as e:
            raise UnresolvedTarget(str(e)) from None
    if not 0 <= ref < net.n_resources:
        raise UnresolvedTarget(f"resource index {ref} out of range (catalog has {net.n_resources})")
    return ref


def _resources(net: Network, refs: tuple[ResourceRef, ...] | None) -> list[int]:
    if refs is None:
        return list(range(net.n_resources))
    return [_resource(net, ref) for ref in refs]


def _link(net: Network, link_id: int) -> InfraLink:
    try:
        return net.link(link_id)
    except KeyError:
        raise UnresolvedTarget(f"no link {link_id}") from None


def _agent(net: Network, agent_id: int) -> Agent:
    try:
        return net.agent(agent_id)
    except KeyError:
        raise UnresolvedTarget(f"no agent {agent_id}") from None


def _scaled_cost(cost, factor: float):
    return cost if cost is UNAVAILABLE else cost * factor


def _scaled_capacity(cap, factor: float):
    if cap is UNBOUNDED:
        return UNBOUNDED if factor > 0 else 0.0
    return cap * factor


def _cells(net: Network, e: DisruptionEvent) -> tuple[slice | int, slice | int]:
    match e:
        case MatrixCellScale():
            return _resource(net, e.row), _resource(net, e.col)
        case MatrixRowScale():
            return _resource(net, e.row), slice(None)
        case MatrixColumnScale():
            return slice(None), _resource(net, e.col)
    raise TypeError(f"{type(e).__name__} does not touch a technology matrix")


def apply_event(net: Network, e: DisruptionEvent) -> Network:
    """A copy of `net` with the event in force. The input network is never modified."""
    match e:
        case LinkBreak():
            link = _link(net, e.link)
            R = net.n_resources
            return net.with_link(replace(link, transport_cost=(UNAVAILABLE,) * R, capacity=(0.0,) * R))
        case LinkCostScale():
            link = _link(net, e.link)
            hit = set(_resources(net, e.resources))
            cost = tuple(_scaled_cost(c, e.factor) if r in hit else c for r, c in enumerate(link.transport_cost))
            return net.with_link(replace(link, transport_cost=cost))
        case LinkCapacityScale():
            link = _link(net, e.link)
            hit = set(_resources(net, e.resources))
            cap = tuple(_scaled_capacity(c, e.factor) if r in hit else c for r, c in enumerate(link.capacity))
            return net.with_link(replace(link, capacity=cap))
        case MatrixCellScale() | MatrixRowScale() | MatrixColumnScale():
            agent = _agent(net, e.agent)
            a = agent.tech.array()
            a[_cells(net, e)] *= e.factor
            return net.with_agent(replace(agent, tech=TechnologyMatrix.from_array(a)))
        case DemandScale():
            agent = _agent(net, e.agent)
            hit = set(_resources(net, e.resources))
            demand = tuple(d * e.factor if r in hit else d for r, d in enumerate(agent.final_demand))
            return net.with_agent(replace(agent, final_demand=demand))
    raise TypeError(f"not a disruption event: {e!r}")


def revert_event(net: Network, baseline: Network, e: DisruptionEvent) -> Network:
    """Restore the fields `e` touches from `baseline`; everything else stays as in `net`."""
    match e:
        case LinkBreak() | LinkCostScale() | LinkCapacityScale():
            link, original = _link(net, e.link), _link(baseline, e.link)
            hit = set(_resources(net, getattr(e, "resources", None)))
            if isinstance(e, LinkBreak | LinkCostScale):
                pairs = enumerate(zip(link.transport_cost, original.transport_cost))
                cost = tuple(o if r in hit else c for r, (c, o) in pairs)
                link = replace(link, transport_cost=cost)
            if isinstance(e, LinkBreak | LinkCapacityScale):
                pairs = enumerate(zip(link.capacity, original.capacity))
                cap = tuple(o if r in hit else c for r, (c, o) in pairs)
                link = replace(link, capacity=cap)
            return net.with_link(link)
        case MatrixCellScale() | MatrixRowScale() | MatrixColumnScale():
            agent, original = _agent(net, e.agent), _agent(baseline, e.agent)
            a = agent.tech.array()
            cells = _cells(net, e)
            a[cells] = original.tech.array()[cells]
            return net.with_agent(replace(agent, tech=TechnologyMatrix.from_array(a)))
        case DemandScale():
            agent, original = _agent(net, e.agent), _agent(baseline, e.agent)
            hit = set(_resources(net, e.resources))
            pairs = enumerate(zip(agent.final_demand, original.final_demand))
            demand = tuple(o if r in hit else d for r, (d, o) in pairs)
            return net.with_agent(replace(agent, final_demand=demand))
    raise TypeError(f"not a disruption event: {e!r}")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


class FixedDuration(BaseModel, frozen=True):
    fixed: PositiveInt


class GeometricDuration(BaseModel, frozen=True):
    geometric: Annotated[float, Field(gt=0, le=1)]
    """Per-timestep recovery probability; mean duration 1/p"""


class EventTemplate(BaseModel, frozen=True):
    """An event kind with everything except its target, factor and duration."""

    model_config = ConfigDict(extra="allow")

    kind: str

    def build(self, target: int, factor: float, duration: int) -> DisruptionEvent:
        fields: dict[str, Any] = {**self.model_dump(), "duration": duration}
        fields["link" if self.kind.startswith("link") else "agent"] = target
        if self.kind != "link_break":
            fields["factor"] = factor
        return EVENTS.validate_python(fields)


class Generator(BaseModel, frozen=True):
    targets: tuple[NonNegativeInt, ...]
    """Link ids for link kinds, agent ids otherwise"""

    onset_prob: ZeroToOne
    """Probability that an idle target is hit at a timestep"""

    magnitude: Range = Range(low=1.0, high=1.0)
    """Factors are drawn uniformly from this closed interval"""

    duration: FixedDuration | GeometricDuration = FixedDuration(fixed=1)

    seed: Annotated[int, Field(ge=0, lt=2**64)] | None = None
    """Stream seed; None derives one from the scenario seed"""

    template: EventTemplate

    @model_validator(mode="after")
    def _template_builds(self):
        # Both ends of the magnitude range must make a valid event of the template's kind.
        for factor in (self.magnitude.low, self.magnitude.high):
            self.template.build(self.targets[0] if self.targets else 0, factor, 1)
        return self


@dataclass(frozen=True)
class GeneratorState:
    bit_state: dict
    """PCG64 state; restoring it continues the stream exactly"""
    active: tuple[tuple[int, int, DisruptionEvent], ...] = ()
    """(target, timestep the event ends, event)"""

    @classmethod
    def seeded(cls, g: Generator, fallback: int = 0) -> GeneratorState:
        return cls(PCG64(g.seed if g.seed is not None else fallback).state)


def generator_step(
    g: Generator, t: int, state: GeneratorState
) -> tuple[list[DisruptionEvent], list[DisruptionEvent], GeneratorState]:
    """
    Events starting and ending at timestep `t`.

    Endings are settled first, so a target freed at `t` can be hit again at `t`.
    Every target consumes one onset draw per step whether or not it is busy,
    which keeps streams aligned across targets.
    """
    ended = [event for _, end, event in state.active if end == t]
    active = [(target, end, event) for target, end, event in state.active if end != t]
    busy = {target for target, _, _ in active}

    bits = PCG64()
    bits.state = state.bit_state
    rng = np.random.Generator(bits)

    started = []
    for target in g.targets:
        hit = rng.random() < g.onset_prob
        if not hit or target in busy:
            continue
        factor = float(rng.uniform(g.magnitude.low, g.magnitude.high))
        match g.duration:
            case FixedDuration(fixed=steps):
                duration = steps
            case GeometricDuration(geometric=p):
                duration = int(rng.geometric(p))
        event = g.template.build(target, factor, duration)
        started.append(event)
        active.append((target, t + duration, event))
        busy.add(target)

    if started or ended:
        log.debug("t=%d: %d events start, %d end", t, len(started), len(ended))
    return started, ended, GeneratorState(bits.state, tuple(active))

"""
Resources, agents, links and networks.

A network is a directed graph of agents joined by infrastructure links. Each agent
carries a technology matrix (technical coefficients; entry [i][j] is the quantity of
resource i consumed per unit of resource j produced), optional raw-material provider
costs and a final-demand vector. Each link carries a per-resource transport cost,
capacity and a priority rank among its origin's outgoing links.

Networks are immutable values: disruptions produce modified copies, so one validated
network can be shared by parallel scenario runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Literal, TypeAlias

import numpy as np
from jaxtyping import Bool, Float, Int

__all__ = [
    "UNAVAILABLE",
    "UNBOUNDED",
    "Agent",
    "Capacity",
    "Cost",
    "InfraLink",
    "Marker",
    "Network",
    "NetworkArrays",
    "ResourceCatalog",
    "SimulationError",
    "TechnologyMatrix",
    "Violation",
    "producible_set",
    "validate_network",
]


class SimulationError(Exception):
    """A network could not be priced, allocated or disrupted as asked."""


class Marker(Enum):
    UNAVAILABLE = "INF"
    UNBOUNDED = "UNB"

    def __repr__(self) -> str:
        return self.name


UNAVAILABLE = Marker.UNAVAILABLE
"""No transport (or no source) for a resource. Never a floating-point infinity."""

UNBOUNDED = Marker.UNBOUNDED
"""A link capacity with no limit."""

Cost: TypeAlias = float | Literal[Marker.UNAVAILABLE]
Capacity: TypeAlias = float | Literal[Marker.UNBOUNDED]


@dataclass(frozen=True)
class ResourceCatalog:
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown resource {name!r}; catalog has {', '.join(self.names)}") from None

    def indices(self, names: list[str] | tuple[str, ...]) -> list[int]:
        return [self.index(n) for n in names]


@dataclass(frozen=True)
class TechnologyMatrix:
    entries: tuple[tuple[float, ...], ...]
    """Row i, column j: units of resource i consumed per unit of resource j produced"""

    @classmethod
    def zeros(cls, size: int) -> TechnologyMatrix:
        return cls(tuple((0.0,) * size for _ in range(size)))

    @classmethod
    def from_array(cls, a: Float[np.ndarray, "R R"] | list[list[float]]) -> TechnologyMatrix:
        a = np.asarray(a, dtype=float)
        return cls(tuple(tuple(float(v) for v in row) for row in a))

    @property
    def size(self) -> int:
        return len(self.entries)

    def array(self) -> Float[np.ndarray, "R R"]:
        return np.array(self.entries, dtype=float).reshape(self.size, self.size)


@dataclass(frozen=True)
class Agent:
    id: int
    label: str
    tech: TechnologyMatrix
    provider_costs: tuple[float | None, ...]
    """Unit cost per resource this agent introduces as raw material; None elsewhere"""
    final_demand: tuple[float, ...]
    final_demand_priority: int | None = None
    """Rank of the agent's own final demand among its outgoing links; None ranks it after all of them"""


@dataclass(frozen=True)
class InfraLink:
    id: int
    source: int
    target: int
    transport_cost: tuple[Cost, ...]
    capacity: tuple[Capacity, ...]
    priority: int = 1
    """Rank among the origin's outgoing links; lower is served first"""


@dataclass(frozen=True)
class Network:
    catalog: ResourceCatalog
    agents: dict[int, Agent]
    links: dict[int, InfraLink]
    timestep: str = "15min"
    """Descriptive duration of one timestep; the system is static within a timestep"""

    @property
    def n_resources(self) -> int:
        return len(self.catalog)

    def agent(self, agent_id: int) -> Agent:
        return self.agents[agent_id]

    def link(self, link_id: int) -> InfraLink:
        return self.links[link_id]

    def incoming(self, agent_id: int) -> list[InfraLink]:
        return [self.links[i] for i in self._incoming.get(agent_id, [])]

    def outgoing(self, agent_id: int) -> list[InfraLink]:
        return [self.links[i] for i in self._outgoing.get(agent_id, [])]

    def consumers(self) -> list[int]:
        """Agents with positive final demand, by id."""
        return [a.id for a in sorted(self.agents.values(), key=lambda a: a.id) if any(d > 0 for d in a.final_demand)]

    def with_agent(self, agent: Agent) -> Network:
        return replace(self, agents={**self.agents, agent.id: agent})

    def with_link(self, link: InfraLink) -> Network:
        return replace(self, links={**self.links, link.id: link})

    @cached_property
    def _incoming(self) -> dict[int, list[int]]:
        index: dict[int, list[int]] = {}
        for link_id in sorted(self.links):
            index.setdefault(self.links[link_id].target, []).append(link_id)
        return index

    @cached_property
    def _outgoing(self) -> dict[int, list[int]]:
        index: dict[int, list[int]] = {}
        for link_id in sorted(self.links):
            index.setdefault(self.links[link_id].source, []).append(link_id)
        return index


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    location: str
    problem: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.location}: {self.problem}" + (f" ({self.detail})" if self.detail else "")


def _bad_number(v: float) -> str | None:
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        return "non-finite"
    if v < 0:
        return "negative"
    return None


def validate_network(net: Network) -> list[Violation]:
    """Every violated structural invariant, with its location. Empty means valid."""
    out: list[Violation] = []
    names = net.catalog.names
    R = len(names)
    if R == 0:
        out.append(Violation("catalog", "empty catalog"))
    if len(set(names)) != R:
        out.append(Violation("catalog", "duplicate resource name"))
    if any(not n for n in names):
        out.append(Violation("catalog", "empty resource name"))
    if not net.agents:
        out.append(Violation("network", "no agents"))

    for key, agent in sorted(net.agents.items()):
        where = f"agent {key}"
        if agent.id != key:
            out.append(Violation(where, "id mismatch", f"keyed {key}, id {agent.id}"))
        tech = agent.tech.entries
        if len(tech) != R or any(len(row) != R for row in tech):
            out.append(Violation(where, "wrong matrix shape", f"expected {R}x{R}"))
        else:
            for i, row in enumerate(tech):
                for j, v in enumerate(row):
                    if bad := _bad_number(v):
                        out.append(Violation(where, f"{bad} coefficient", f"[{names[i]}][{names[j]}] = {v!r}"))
        if len(agent.provider_costs) != R:
            out.append(Violation(where, "wrong vector length", f"provider costs has {len(agent.provider_costs)}"))
        for r, c in enumerate(agent.provider_costs):
            if c is not None and (bad := _bad_number(c)):
                out.append(Violation(where, f"{bad} cost", f"provider {names[r] if r < R else r} = {c!r}"))
        if len(agent.final_demand) != R:
            out.append(Violation(where, "wrong vector length", f"final demand has {len(agent.final_demand)}"))
        for r, d in enumerate(agent.final_demand):
            if bad := _bad_number(d):
                out.append(Violation(where, f"{bad} demand", f"{names[r] if r < R else r} = {d!r}"))

    for key, link in sorted(net.links.items()):
        where = f"link {key}"
        if link.id != key:
            out.append(Violation(where, "id mismatch", f"keyed {key}, id {link.id}"))
        for end in (link.source, link.target):
            if end not in net.agents:
                out.append(Violation(where, "dangling endpoint", f"agent {end} does not exist"))
        if link.source == link.target:
            out.append(Violation(where, "self-loop", f"agent {link.source}"))
        if len(link.transport_cost) != R:
            out.append(Violation(where, "wrong vector length", f"cost has {len(link.transport_cost)}"))
        for r, c in enumerate(link.transport_cost):
            if c is not UNAVAILABLE and (bad := _bad_number(c)):
                out.append(Violation(where, f"{bad} cost", f"{names[r] if r < R else r} = {c!r}"))
        if len(link.capacity) != R:
            out.append(Violation(where, "wrong vector length", f"capacity has {len(link.capacity)}"))
        for r, c in enumerate(link.capacity):
            if c is not UNBOUNDED and (bad := _bad_number(c)):
                out.append(Violation(where, f"{bad} capacity", f"{names[r] if r < R else r} = {c!r}"))
    return out


def producible_set(agent: Agent) -> set[int]:
    """Resources whose matrix column has a strictly positive entry."""
    return {j for j in range(agent.tech.size) if any(row[j] > 0 for row in agent.tech.entries)}


# ---------------------------------------------------------------------------
# Array view for the solvers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NetworkArrays:
    """
    Dense arrays over agents (N, ordered by id), links (L, ordered by id) and resources (R).

    Unavailable and Unbounded entries are zero in the value arrays and False in the
    matching masks, so arithmetic on the values stays total.
    """

    agent_ids: Int[np.ndarray, " N"]
    link_ids: Int[np.ndarray, " L"]
    tech: Float[np.ndarray, "N R R"]
    provider_cost: Float[np.ndarray, "N R"]
    has_provider: Bool[np.ndarray, "N R"]
    final_demand: Float[np.ndarray, "N R"]
    fd_priority: Int[np.ndarray, " N"]
    src: Int[np.ndarray, " L"]
    dst: Int[np.ndarray, " L"]
    transport: Float[np.ndarray, "L R"]
    open: Bool[np.ndarray, "L R"]
    capacity: Float[np.ndarray, "L R"]
    bounded: Bool[np.ndarray, "L R"]
    priority: Int[np.ndarray, " L"]
    agent_index: dict[int, int] = field(repr=False)
    link_index: dict[int, int] = field(repr=False)

    @property
    def producible(self) -> Bool[np.ndarray, "N R"]:
        return (self.tech > 0).any(axis=1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.agent_ids), len(self.link_ids), self.tech.shape[-1]

    @classmethod
    def of(cls, net: Network) -> NetworkArrays:
        R = net.n_resources
        agents = [net.agents[k] for k in sorted(net.agents)]
        links = [net.links[k] for k in sorted(net.links)]
        agent_index = {a.id: n for n, a in enumerate(agents)}
        link_index = {link.id: e for e, link in enumerate(links)}

        tech = np.array([a.tech.entries for a in agents], dtype=float).reshape(len(agents), R, R)
        has_provider = np.array([[c is not None for c in a.provider_costs] for a in agents], dtype=bool)
        provider_cost = np.array([[c or 0.0 for c in a.provider_costs] for a in agents], dtype=float)
        final_demand = np.array([a.final_demand for a in agents], dtype=float).reshape(len(agents), R)

        # An agent's own final demand ranks after every outgoing link unless told otherwise.
        last = {a.id: max((link.priority for link in net.outgoing(a.id)), default=0) + 1 for a in agents}
        fd_priority = np.array(
            [a.final_demand_priority if a.final_demand_priority is not None else last[a.id] for a in agents],
            dtype=int,
        )

        open_ = np.array([[c is not UNAVAILABLE for c in link.transport_cost] for link in links], dtype=bool)
        transport = np.array(
            [[0.0 if c is UNAVAILABLE else c for c in link.transport_cost] for link in links], dtype=float
        )
        bounded = np.array([[c is not UNBOUNDED for c in link.capacity] for link in links], dtype=bool)
        capacity = np.array([[0.0 if c is UNBOUNDED else c for c in link.capacity] for link in links], dtype=float)

        return cls(
            agent_ids=np.array([a.id for a in agents], dtype=int),
            link_ids=np.array([link.id for link in links], dtype=int),
            tech=tech,
            provider_cost=provider_cost,
            has_provider=has_provider,
            final_demand=final_demand,
            fd_priority=fd_priority,
            src=np.array([agent_index[link.source] for link in links], dtype=int),
            dst=np.array([agent_index[link.target] for link in links], dtype=int),
            transport=transport.reshape(len(links), R),
            open=open_.reshape(len(links), R),
            capacity=capacity.reshape(len(links), R),
            bounded=bounded.reshape(len(links), R),
            priority=np.array([link.priority for link in links], dtype=int),
            agent_index=agent_index,
            link_index=link_index,
        )

    def demand_array(self, demands: dict[int, tuple[float, ...] | list[float]] | None) -> Float[np.ndarray, "N R"]:
        """Per-agent demand vectors as an (N, R) array; None means the agents' own final demand."""
        if demands is None:
            return self.final_demand.copy()
        out = np.zeros_like(self.final_demand)
        for agent_id, vector in demands.items():
            out[self.agent_index[agent_id]] = vector
        return out

"""
Network construction: random G(n, p) systems and the two reference networks.
"""

from __future__ import annotations

import logging
from collections.abc import Collection
from dataclasses import replace

import networkx as nx
import numpy as np
from numpy.random import PCG64
from pydantic import BaseModel, PositiveInt, model_validator

from sosim import constants as C
from sosim.config import Range
from sosim.core import (
    UNAVAILABLE,
    UNBOUNDED,
    Agent,
    InfraLink,
    Network,
    ResourceCatalog,
    SimulationError,
    TechnologyMatrix,
)
from sosim.pricing import price_fixed_point
from sosim.production import productivity_check
from utils.param_types import AgentCount, ZeroToOne, validate_call

__all__ = [
    "Disconnected",
    "GeneratorConfig",
    "RoleMix",
    "block_fixture",
    "erdos_renyi",
    "link_between",
    "synth_tech_matrix",
    "validation_fixture_3node",
]

log = logging.getLogger(__name__)

MAX_RADIUS = 0.9


class Disconnected(SimulationError):
    pass


class RoleMix(BaseModel, frozen=True):
    provider_fraction: ZeroToOne = 0.2
    producer_fraction: ZeroToOne = 0.3
    consumer_fraction: ZeroToOne = 0.5

    @model_validator(mode="after")
    def _sums_to_one(self):
        total = self.provider_fraction + self.producer_fraction + self.consumer_fraction
        if abs(total - 1) > 1e-9:
            raise ValueError(f"role fractions sum to {total}, not 1")
        return self


class GeneratorConfig(BaseModel, validate_assignment=True):
    resources: tuple[str, ...] = C.BLOCK_RESOURCES

    provider_cost: Range = Range(low=0.3, high=3.0)
    """Raw-material unit costs at provider agents"""

    commercial_cost: Range = Range(low=0.02, high=0.1)
    """Transport cost on links into providers and producers"""

    consumer_cost: Range = Range(low=0.15, high=0.3)
    """Transport cost on links into consumers; dearer than commercial links"""

    capacity: Range | None = None
    """Per-resource link capacity; None leaves every link Unbounded"""

    final_demand: Range = Range(low=5.0, high=20.0)

    retries: PositiveInt = 100
    """G(n, p) resamples before giving up on weak connectivity"""


def synth_tech_matrix(rng: np.random.Generator, producible: Collection[int], R: int) -> TechnologyMatrix:
    """
    A matrix where each producible column leans on one dominant input.

    The dominant coefficient is drawn from U[0.5, 0.9], the others from U[0, 0.3].
    If the producible block would have a spectral radius above 0.9 the whole matrix
    is scaled down to it.
    """
    a = np.zeros((R, R))
    for j in sorted(producible):
        a[:, j] = rng.uniform(0.0, 0.3, size=R)
        a[rng.integers(R), j] = rng.uniform(0.5, 0.9)
    if producible:
        radius = productivity_check(a, producible).radius
        if radius > MAX_RADIUS:
            a *= MAX_RADIUS / radius
    return TechnologyMatrix.from_array(a)


def _roles(rng: np.random.Generator, n: int, mix: RoleMix) -> tuple[list[int], list[int], list[int]]:
    providers = max(1, round(mix.provider_fraction * n))
    consumers = max(1, round(mix.consumer_fraction * n))
    while providers + consumers > n:
        if providers >= consumers:
            providers -= 1
        else:
            consumers -= 1
    order = rng.permutation(n).tolist()
    return (
        sorted(order[:providers]),
        sorted(order[providers : n - consumers]),
        sorted(order[n - consumers :]),
    )


def _draw(rng: np.random.Generator, bounds: Range, size: int) -> tuple[float, ...]:
    return tuple(float(v) for v in rng.uniform(bounds.low, bounds.high, size=size))


@validate_call
def erdos_renyi(
    n: AgentCount,
    p: ZeroToOne,
    mix: RoleMix | None = None,
    seed: int = 0,
    config: GeneratorConfig | None = None,
) -> Network:
    """
    A random system on a weakly connected directed G(n, p) graph.

    Providers get raw-material costs for a random subset of resources (every
    resource is offered by at least one provider), producers get synthetic
    matrices over a proper subset of the resources, so whatever they make leans
    on something they buy, and consumers get final demand on whatever they can
    actually be supplied with.
    """
    mix = mix or RoleMix()
    config = config or GeneratorConfig()
    rng = np.random.Generator(PCG64(seed))
    for attempt in range(config.retries):
        graph = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**32)), directed=True)
        if nx.is_weakly_connected(graph):
            break
    else:
        raise Disconnected(f"no weakly connected G({n}, {p}) in {config.retries} draws (seed {seed})")
    log.debug("G(%d, %s) connected after %d draws, %d edges", n, p, attempt + 1, graph.number_of_edges())

    R = len(config.resources)
    providers, producers, consumers = _roles(rng, n, mix)

    offered = {a: rng.random(R) < 0.5 for a in providers}
    for r in range(R):
        if not any(offered[a][r] for a in providers):
            offered[providers[int(rng.integers(len(providers)))]][r] = True

    agents = {}
    for a in range(n):
        tech = TechnologyMatrix.zeros(R)
        provider_costs: tuple[float | None, ...] = (None,) * R
        demand = (0.0,) * R
        if a in offered:
            costs = _draw(rng, config.provider_cost, R)
            provider_costs = tuple(c if offered[a][r] else None for r, c in enumerate(costs))
        elif a in producers:
            made = np.flatnonzero(rng.random(R) < 0.5).tolist() or [int(rng.integers(R))]
            if len(made) == R > 1:
                made.pop(int(rng.integers(R)))
            tech = synth_tech_matrix(rng, made, R)
        else:
            demand = _draw(rng, config.final_demand, R)
        agents[a] = Agent(a, f"A{a}", tech, provider_costs, demand)

    consumer_set = set(consumers)
    links = {}
    rank: dict[int, int] = {}
    for link_id, (u, v) in enumerate(sorted(graph.edges())):
        bounds = config.consumer_cost if v in consumer_set else config.commercial_cost
        capacity = _draw(rng, config.capacity, R) if config.capacity else (UNBOUNDED,) * R
        rank[u] = rank.get(u, 0) + 1
        links[link_id] = InfraLink(link_id, u, v, _draw(rng, bounds, R), capacity, rank[u])

    net = Network(ResourceCatalog(tuple(config.resources)), agents, links)
    return _supplied_demand_only(net)


def _supplied_demand_only(net: Network) -> Network:
    """Drop final demand that no source can reach, so every demanded pair has a price."""
    prices = price_fixed_point(net)
    for a in net.consumers():
        agent = net.agent(a)
        demand = tuple(
            d if prices.sell_cost(a, r) is not UNAVAILABLE else 0.0 for r, d in enumerate(agent.final_demand)
        )
        if demand != agent.final_demand:
            net = net.with_agent(replace(agent, final_demand=demand))
    return net


# ---------------------------------------------------------------------------
# Reference networks
# ---------------------------------------------------------------------------


def _agent(
    catalog: ResourceCatalog,
    agent_id: int,
    label: str,
    columns: dict[str, dict[str, float]],
    providers: dict[str, float],
    demand: tuple[float, ...],
) -> Agent:
    R = len(catalog)
    a = np.zeros((R, R))
    for output, inputs in columns.items():
        for name, coefficient in inputs.items():
            a[catalog.index(name), catalog.index(output)] = coefficient
    provider_costs = tuple(providers.get(name) for name in catalog.names)
    return Agent(agent_id, label, TechnologyMatrix.from_array(a), provider_costs, demand)


def validation_fixture_3node() -> Network:
    """
    Three agents, three links, three resources.

    A1 has the raw materials (R2 only at a steep price), A3 is the final consumer.
    The cheapest arrangement has A2 make R2 and A3 make R3, with R1 reaching A3 over
    T3 and R2 over T2.
    """
    catalog = ResourceCatalog(C.VALIDATION_RESOURCES)
    ids = {label: i for i, label in enumerate(C.VALIDATION_AGENTS)}
    agents = {}
    for label, i in ids.items():
        demand = C.VALIDATION_DEMAND.get(label, {})
        agents[i] = _agent(
            catalog,
            i,
            label,
            C.VALIDATION_COLUMNS.get(label, {}),
            C.VALIDATION_PROVIDERS.get(label, {}),
            tuple(demand.get(name, 0.0) for name in catalog.names),
        )
    links = {
        i: InfraLink(i, ids[source], ids[target], cost, (UNBOUNDED,) * len(catalog), priority)
        for i, (_, source, target, cost, priority) in enumerate(C.VALIDATION_LINKS)
    }
    return Network(catalog, agents, links)


def block_fixture() -> Network:
    """
    The 14-agent urban block: A0 and A1 supply raw materials, A2-A4 produce, A5-A13 consume.

    Links 0-6 are commercial (cheap, Unbounded), links 7-15 feed the consumers and
    are capped. Priorities rank each agent's outgoing links by id.
    """
    catalog = ResourceCatalog(C.BLOCK_RESOURCES)
    R = len(catalog)
    ids = {label: i for i, label in enumerate(C.BLOCK_AGENTS)}
    agents = {}
    for label, i in ids.items():
        columns = C.BLOCK_COLUMNS.get(label, {})
        providers = C.BLOCK_PROVIDERS.get(label, {})
        agent = _agent(catalog, i, label, columns, providers, C.BLOCK_DEMAND.get(label, (0.0,) * R))
        if label == "A2":
            agent = replace(agent, tech=TechnologyMatrix(C.A2_MATRIX))
        agents[i] = agent

    wiring = [(s, t, C.COMMERCIAL_COST, UNBOUNDED) for s, t in C.BLOCK_COMMERCIAL_LINKS]
    wiring += [(s, t, C.CONSUMER_COST, C.CONSUMER_CAPACITY) for s, t in C.BLOCK_CONSUMER_LINKS]
    links = {}
    rank: dict[int, int] = {}
    for link_id, (source, target, cost, capacity) in enumerate(wiring):
        u = ids[source]
        rank[u] = rank.get(u, 0) + 1
        links[link_id] = InfraLink(link_id, u, ids[target], (cost,) * R, (capacity,) * R, rank[u])
    return Network(catalog, agents, links)


def link_between(net: Network, source: str, target: str) -> int:
    """Id of the lowest-id link from the agent labelled `source` to the one labelled `target`."""
    by_label = {agent.label: agent.id for agent in net.agents.values()}
    for link in sorted(net.links.values(), key=lambda link: link.id):
        if link.source == by_label[source] and link.target == by_label[target]:
            return link.id
    raise KeyError(f"no link {source} -> {target}")

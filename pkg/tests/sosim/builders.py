"""Small hand-built networks for the solver tests."""

from __future__ import annotations

import numpy as np

from sosim.core import UNBOUNDED, Agent, InfraLink, Network, ResourceCatalog, TechnologyMatrix


def agent(
    agent_id: int,
    R: int,
    *,
    make: dict[int, dict[int, float]] | None = None,
    provider: dict[int, float] | None = None,
    demand: dict[int, float] | None = None,
    fd_priority: int | None = None,
) -> Agent:
    """`make` maps an output resource to {input resource: coefficient}."""
    a = np.zeros((R, R))
    for output, inputs in (make or {}).items():
        for i, coefficient in inputs.items():
            a[i, output] = coefficient
    return Agent(
        agent_id,
        f"A{agent_id}",
        TechnologyMatrix.from_array(a),
        tuple((provider or {}).get(r) for r in range(R)),
        tuple(float((demand or {}).get(r, 0.0)) for r in range(R)),
        fd_priority,
    )


def link(link_id: int, source: int, target: int, R: int, cost=0.0, capacity=UNBOUNDED, priority: int = 1):
    costs = cost if isinstance(cost, tuple) else (cost,) * R
    capacities = capacity if isinstance(capacity, tuple) else (capacity,) * R
    return InfraLink(link_id, source, target, costs, capacities, priority)


def network(R: int, agents: list[Agent], links: list[InfraLink]) -> Network:
    catalog = ResourceCatalog(tuple(f"r{i}" for i in range(R)))
    return Network(catalog, {a.id: a for a in agents}, {e.id: e for e in links})

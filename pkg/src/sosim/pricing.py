"""
Network-wide unit costs and make-or-buy decisions.

Every agent sells each resource at the cheapest of three sources: making it from
inputs (production cost C_p, the cost-weighted technology column), drawing it from
its own raw-material provider, or buying it over an incoming link (the origin's
sell cost plus the link's transport cost C_T). The costs are the least fixed point
of that rule, found by value iteration from "nothing is available". Capacities do
not enter pricing; allocation handles them.

What an agent makes in-house must rest on something it buys: a set of columns that
only feed on each other has no price (its Leontief price would be zero), so it stays
unavailable unless some column in it reaches a provider or an incoming link.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from jaxtyping import Bool, Float, Int

from sosim.config import SolverConfig
from sosim.core import (
    UNAVAILABLE,
    Agent,
    Cost,
    Network,
    NetworkArrays,
    SimulationError,
    producible_set,
)
from sosim.production import NotProductive, leontief_prices

__all__ = [
    "NonConvergence",
    "NotProducible",
    "PriceState",
    "SourceDecision",
    "SourceKind",
    "acquire_cost",
    "make_cost",
    "price_fixed_point",
]

log = logging.getLogger(__name__)


class NotProducible(SimulationError):
    pass


class NonConvergence(SimulationError):
    pass


class SourceKind(StrEnum):
    NONE = "none"
    MAKE = "make"
    PROVIDER = "provider"
    EDGE = "edge"


_CODES = {SourceKind.NONE: 0, SourceKind.MAKE: 1, SourceKind.PROVIDER: 2, SourceKind.EDGE: 3}
_KINDS = {code: kind for kind, code in _CODES.items()}


@dataclass(frozen=True)
class SourceDecision:
    kind: SourceKind
    unit_cost: Cost
    link: int | None = None


@dataclass(frozen=True, eq=False)
class PriceState:
    arrays: NetworkArrays
    cost: Float[np.ndarray, "N R"]
    """Sell cost per agent and resource; zero where unavailable"""
    available: Bool[np.ndarray, "N R"]
    kind: Int[np.ndarray, "N R"]
    """Decision codes, see `SourceKind`"""
    via: Int[np.ndarray, "N R"]
    """Link index (position in `arrays.link_ids`) for edge decisions, else -1"""
    sweeps_used: int

    @classmethod
    def unpriced(cls, net: Network) -> PriceState:
        """Every (agent, resource) unavailable: the starting point of value iteration."""
        arr = NetworkArrays.of(net)
        N, _, R = arr.shape
        return cls(arr, np.zeros((N, R)), np.zeros((N, R), bool), np.zeros((N, R), int), np.full((N, R), -1), 0)

    def sell_cost(self, agent_id: int, r: int) -> Cost:
        n = self.arrays.agent_index[agent_id]
        return float(self.cost[n, r]) if self.available[n, r] else UNAVAILABLE

    def decision(self, agent_id: int, r: int) -> SourceDecision:
        n = self.arrays.agent_index[agent_id]
        kind = _KINDS[int(self.kind[n, r])]
        link = int(self.arrays.link_ids[self.via[n, r]]) if kind == SourceKind.EDGE else None
        return SourceDecision(kind, self.sell_cost(agent_id, r), link)

    def make_set(self, agent_id: int) -> set[int]:
        n = self.arrays.agent_index[agent_id]
        return {int(r) for r in np.flatnonzero(self.kind[n] == _CODES[SourceKind.MAKE])}

    def input_cost(self, agent_id: int, r: int) -> Cost:
        """What the agent pays for `r` as a production input: the cheaper of its own cost and buying it."""
        n = self.arrays.agent_index[agent_id]
        acquired, acquired_ok = _acquire(self.arrays, self.cost, self.available)
        price, price_ok = _cheaper(self.cost[n, r], self.available[n, r], acquired[n, r], acquired_ok[n, r])
        return float(price) if price_ok else UNAVAILABLE

    @property
    def make_mask(self) -> Bool[np.ndarray, "N R"]:
        return self.kind == _CODES[SourceKind.MAKE]

    @property
    def provider_mask(self) -> Bool[np.ndarray, "N R"]:
        return self.kind == _CODES[SourceKind.PROVIDER]

    @property
    def edge_mask(self) -> Bool[np.ndarray, "N R"]:
        return self.kind == _CODES[SourceKind.EDGE]


# ---------------------------------------------------------------------------
# Single-entry rules
# ---------------------------------------------------------------------------


def acquire_cost(net: Network, prices: PriceState, n: int, r: int) -> SourceDecision:
    """
    Cheapest external source of resource `r` for agent `n`: its own provider or an incoming link.

    Ties go to the provider, then to the lowest link id. This is the single-entry
    rule; `PriceState.decision` breaks ties between equally cheap links by hop
    depth from a Make/Provider source first, so the two can name different links
    when offers tie.
    """
    best = SourceDecision(SourceKind.NONE, UNAVAILABLE)
    provider = net.agent(n).provider_costs[r]
    if provider is not None:
        best = SourceDecision(SourceKind.PROVIDER, float(provider))
    for link in net.incoming(n):  # ascending link id
        transport = link.transport_cost[r]
        upstream = prices.sell_cost(link.source, r)
        if transport is UNAVAILABLE or upstream is UNAVAILABLE:
            continue
        offer = upstream + transport
        if best.unit_cost is UNAVAILABLE or offer < best.unit_cost:
            best = SourceDecision(SourceKind.EDGE, offer, link.id)
    return best


def make_cost(agent: Agent, input_costs: Sequence[Cost], r: int) -> Cost:
    """Production cost of one unit of `r` from the agent's technology column."""
    if r not in producible_set(agent):
        raise NotProducible(f"agent {agent.id} ({agent.label}) cannot make resource {r}")
    total = 0.0
    for i, row in enumerate(agent.tech.entries):
        if row[r] > 0:
            if input_costs[i] is UNAVAILABLE:
                return UNAVAILABLE
            total += row[r] * input_costs[i]
    return total


# ---------------------------------------------------------------------------
# Value iteration
# ---------------------------------------------------------------------------


def _cheaper(a, a_ok, b, b_ok):
    """Element-wise minimum of two partially available cost arrays."""
    ok = a_ok | b_ok
    value = np.where(a_ok & (~b_ok | (a <= b)), a, b)
    return np.where(ok, value, 0.0), ok


def _offers(arr: NetworkArrays, cost, available):
    """What each link offers its target: origin cost plus transport."""
    offered = cost[arr.src] + arr.transport
    ok = available[arr.src] & arr.open
    return np.where(ok, offered, 0.0), ok


def _best_edge(arr: NetworkArrays, offered, offered_ok):
    N, _, R = arr.shape
    # inf is only the identity of the minimum here; it never reaches the returned values.
    best = np.full((N, R), np.inf)
    np.minimum.at(best, arr.dst, np.where(offered_ok, offered, np.inf))
    ok = np.isfinite(best)
    return np.where(ok, best, 0.0), ok


def _acquire(arr: NetworkArrays, cost, available):
    offered, offered_ok = _offers(arr, cost, available)
    edge, edge_ok = _best_edge(arr, offered, offered_ok)
    return _cheaper(arr.provider_cost, arr.has_provider, edge, edge_ok)


def _grounded(a, made: set[int], bought_ok) -> set[int]:
    """
    The largest part of `made` whose price system rests on bought inputs.

    Every kept column has all of its inputs either kept or bought, and reaches a
    bought input through the kept columns. A loop that only feeds on itself never
    reaches one, so it cannot be priced (its Leontief price would be zero).
    """
    made = set(made)
    while True:
        for r in sorted(made):
            if any(i not in made and not bought_ok[i] for i in np.flatnonzero(a[:, r] > 0)):
                made.discard(r)
        supported = {r for r in made if any(i not in made and bought_ok[i] for i in np.flatnonzero(a[:, r] > 0))}
        grew = True
        while grew:
            more = {r for r in made - supported if any(i in supported for i in np.flatnonzero(a[:, r] > 0))}
            grew = bool(more)
            supported |= more
        if supported == made:
            return made
        made = supported


def _agent_in_house(a, producible: list[int], acquired, acquired_ok, config: SolverConfig):
    """
    The agent's in-house set and the unit costs it implies, given what it could buy.

    Starts from buying everything and grows the set one resource at a time while
    making it is no dearer than the current cost; resources nobody sells join in
    bulk once their loop rests on bought inputs.
    """
    made: set[int] = set()
    price = np.where(acquired_ok, acquired, 0.0)
    ok = acquired_ok.copy()
    bought = price.copy()

    def take(trial: set[int]) -> bool:
        if _grounded(a, trial, acquired_ok) != trial:
            return False
        try:
            cost = leontief_prices(a, trial, bought, config)
        except NotProductive:
            return False
        idx = sorted(trial)
        price[idx] = cost
        ok[idx] = True
        made.clear()
        made.update(trial)
        return True

    changed = True
    while changed:
        changed = False
        for r in producible:
            if r in made or any(not ok[i] and i != r for i in np.flatnonzero(a[:, r] > 0)):
                continue
            if ok[r] and a[:, r] @ price > price[r]:
                continue
            changed |= take(made | {r})
        if not changed:
            missing = {r for r in producible if not ok[r]}
            if missing:
                trial = _grounded(a, made | missing, acquired_ok)
                changed = trial != made and take(trial)
    return made, price


def _in_house(arr: NetworkArrays, acquired, acquired_ok, config: SolverConfig, cache: dict):
    """Unit costs of everything agents make themselves; unavailable where they buy instead."""
    made = np.zeros_like(acquired)
    made_ok = np.zeros_like(acquired_ok)
    producible = arr.producible
    for n in np.flatnonzero(producible.any(axis=1)):
        key = (n, acquired[n].tobytes(), acquired_ok[n].tobytes())
        if key not in cache:
            cache[key] = _agent_in_house(
                arr.tech[n], np.flatnonzero(producible[n]).tolist(), acquired[n], acquired_ok[n], config
            )
        inside, price = cache[key]
        idx = sorted(inside)
        made[n, idx] = price[idx]
        made_ok[n, idx] = True
    return made, made_ok


def _relax(arr: NetworkArrays, cost, available, config: SolverConfig, cache: dict):
    acquired, acquired_ok = _acquire(arr, cost, available)
    made, made_ok = _in_house(arr, acquired, acquired_ok, config, cache)
    return _cheaper(made, made_ok, acquired, acquired_ok), (made, made_ok)


def _decide(arr: NetworkArrays, cost, available, config: SolverConfig, cache: dict):
    """Final costs and decisions: Make > Provider > edge nearest a real source > lowest link id."""
    N, L, R = arr.shape
    (final, final_ok), (made, made_ok) = _relax(arr, cost, available, config, cache)
    offered, offered_ok = _offers(arr, cost, available)

    make = made_ok & (made <= final)
    provider = ~make & arr.has_provider & (arr.provider_cost <= final)
    edge = final_ok & ~make & ~provider

    kind = np.zeros((N, R), dtype=int)
    kind[make] = _CODES[SourceKind.MAKE]
    kind[provider] = _CODES[SourceKind.PROVIDER]
    kind[edge] = _CODES[SourceKind.EDGE]

    resource = np.broadcast_to(np.arange(R), (L, R))
    src, dst = arr.src[:, None], arr.dst[:, None]
    tight = offered_ok & (offered == final[arr.dst]) & edge[arr.dst]
    hops = np.where(make | provider, 0, -1)
    via = np.full((N, R), -1)
    none = L  # larger than any link index

    def assign(candidates, level):
        e, r = np.nonzero(candidates)
        pick = np.full((N, R), none)
        np.minimum.at(pick, (arr.dst[e], r), e)
        fresh = pick < none
        via[fresh] = pick[fresh]
        hops[fresh] = level + 1
        return fresh.any()

    level = 0
    while assign(tight & (hops[src, resource] == level) & (via[dst, resource] == -1), level):
        level += 1
    # Only reachable when ties close a loop with no tight path back to a real source.
    assign(tight & (via[dst, resource] == -1), level)
    return final, final_ok, kind, via


def price_fixed_point(net: Network, config: SolverConfig | None = None) -> PriceState:
    """Least-cost unit prices and sourcing decisions for every agent and resource."""
    config = config or SolverConfig()
    arr = NetworkArrays.of(net)
    N, _, R = arr.shape
    cost = np.zeros((N, R))
    available = np.zeros((N, R), dtype=bool)
    max_sweeps = config.sweeps_per_agent * N
    cache: dict = {}

    for sweep in range(1, max_sweeps + 1):
        (new_cost, new_available), _ = _relax(arr, cost, available, config, cache)
        appeared = (new_available & ~available).any()
        both = new_available & available
        delta = np.abs(new_cost - cost)[both].max(initial=0.0)
        cost, available = new_cost, new_available
        if not appeared and delta < config.price_tol:
            break
    else:
        raise NonConvergence(f"prices still moving after {max_sweeps} sweeps (cost loop with gain near or above 1)")

    final, final_ok, kind, via = _decide(arr, cost, available, config, cache)
    log.debug("priced %d agents x %d resources in %d sweeps", N, R, sweep)
    return PriceState(arr, final, final_ok, kind, via, sweep)

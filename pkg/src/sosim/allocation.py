"""
Turning final demand into production plans and link flows.

Demand walks upstream along the sourcing decisions of a converged `PriceState`:
an agent that makes a resource runs its Leontief solve and asks for the inputs it
does not make; an agent that buys over a link forwards the need to the link's
origin; an agent with a provider draws raw material. Capacities are then enforced
by priority-list rationing, and residual demand spills to the next-cheapest
source that still has room.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from jaxtyping import Bool, Float

from sosim.config import SolverConfig
from sosim.core import (
    UNAVAILABLE,
    UNBOUNDED,
    Cost,
    Network,
    NetworkArrays,
    SimulationError,
    Violation,
)
from sosim.pricing import NonConvergence, PriceState, price_fixed_point
from sosim.production import ProductionPlan, leontief_inverse

__all__ = [
    "Demands",
    "FlowState",
    "UnpricedDemand",
    "allocate",
    "check_conservation",
    "plan_quantities",
    "ration",
]

log = logging.getLogger(__name__)

Demands = dict[int, tuple[float, ...] | list[float]] | Float[np.ndarray, "N R"] | None
"""Per-agent demand vectors keyed by agent id, a dense (N, R) array, or None for the agents' own final demand"""

_TINY = 1e-15
_SETTLED = 1e-13


class UnpricedDemand(SimulationError):
    pass


@dataclass(frozen=True, eq=False)
class FlowState:
    arrays: NetworkArrays
    prices: PriceState
    """Prices of the first round; later spill rounds price residual networks"""
    requested: Float[np.ndarray, "N R"]
    satisfied: Float[np.ndarray, "N R"]
    edge_flow: Float[np.ndarray, "L R"]
    provider_draw: Float[np.ndarray, "N R"]
    output: Float[np.ndarray, "N R"]
    """Gross production X"""
    sold: Float[np.ndarray, "N R"]
    """Production that leaves the agent's own production loop: final demand and outgoing flow"""
    intermediate: Float[np.ndarray, "N R"]
    """Intermediate consumption S = A X"""
    self_supply: Float[np.ndarray, "N R"]
    """Part of the intermediate consumption the agent makes itself"""
    delivered_cost: Float[np.ndarray, "N R"]
    """Unit cost of the last round that served the pair"""
    delivered_ok: Bool[np.ndarray, "N R"]
    spend: Float[np.ndarray, "N R"]
    """Satisfied final demand times the unit cost of the round that served it"""
    iterations: int

    @property
    def shortfall(self) -> Float[np.ndarray, "N R"]:
        return np.clip(self.requested - self.satisfied, 0.0, None)

    @property
    def import_inflow(self) -> Float[np.ndarray, "N R"]:
        inflow = np.zeros_like(self.provider_draw)
        np.add.at(inflow, self.arrays.dst, self.edge_flow)
        return inflow

    @property
    def outflow(self) -> Float[np.ndarray, "N R"]:
        out = np.zeros_like(self.provider_draw)
        np.add.at(out, self.arrays.src, self.edge_flow)
        return out

    def production(self, agent_id: int) -> ProductionPlan:
        n = self.arrays.agent_index[agent_id]
        return ProductionPlan(X=self.output[n].copy(), D=self.sold[n].copy(), S=self.intermediate[n].copy())

    def delivered(self, agent_id: int, r: int) -> Cost:
        n = self.arrays.agent_index[agent_id]
        return float(self.delivered_cost[n, r]) if self.delivered_ok[n, r] else UNAVAILABLE

    def flow(self, link_id: int, r: int) -> float:
        return float(self.edge_flow[self.arrays.link_index[link_id], r])

    def merged(self, later: FlowState, tol: float) -> FlowState:
        """Add the quantities of a later spill round; its prices become the delivered cost where it served."""
        served = later.satisfied > tol
        return replace(
            self,
            satisfied=self.satisfied + later.satisfied,
            edge_flow=self.edge_flow + later.edge_flow,
            provider_draw=self.provider_draw + later.provider_draw,
            output=self.output + later.output,
            sold=self.sold + later.sold,
            intermediate=self.intermediate + later.intermediate,
            self_supply=self.self_supply + later.self_supply,
            delivered_cost=np.where(served, later.prices.cost, self.delivered_cost),
            delivered_ok=self.delivered_ok | served,
            spend=self.spend + later.spend,
            iterations=self.iterations + 1,
        )


def _demand_array(arr: NetworkArrays, demands: Demands) -> Float[np.ndarray, "N R"]:
    if isinstance(demands, np.ndarray):
        return np.asarray(demands, dtype=float).reshape(arr.final_demand.shape).copy()
    return arr.demand_array(demands)


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


def _responses(prices: PriceState, config: SolverConfig):
    """
    Per agent, the linear map from demand on the agent to what it must acquire.

    need = E + A[:, M] (I - A_MM)^-1 E_M, kept only on resources outside the Make-set M.
    Returns the (N, R, R) acquisition maps and, per agent, the Make-set with its inverse.
    """
    arr = prices.arrays
    N, _, R = arr.shape
    make = prices.make_mask
    maps = np.zeros((N, R, R))
    inverses = []
    for n in range(N):
        idx = np.flatnonzero(make[n])
        a = arr.tech[n]
        response = np.eye(R)
        inverse = leontief_inverse(a, idx, config) if len(idx) else np.zeros((0, 0))
        if len(idx):
            response[:, idx] += a[:, idx] @ inverse
        maps[n] = np.where(make[n][:, None], 0.0, response)
        inverses.append((idx, inverse))
    return maps, inverses


def _plan(
    prices: PriceState,
    requested: Float[np.ndarray, "N R"],
    served: Float[np.ndarray, "N R"],
    config: SolverConfig,
    labels: list[str] | None = None,
) -> FlowState:
    arr = prices.arrays
    N, L, R = arr.shape

    unpriced = (served > 0) & ~prices.available
    if unpriced.any():
        n, r = np.argwhere(unpriced)[0]
        agent = labels[n] if labels else str(arr.agent_ids[n])
        raise UnpricedDemand(f"demand for resource {r} at agent {agent} has no source")

    maps, inverses = _responses(prices, config)
    n_edge, r_edge = np.nonzero(prices.edge_mask)
    e_edge = prices.via[n_edge, r_edge]
    origin = arr.src[e_edge]

    # Demand on each agent: its served final demand plus whatever downstream agents forward to it.
    external = served.copy()
    for _ in range(config.plan_iterations):
        need = np.einsum("nij,nj->ni", maps, external)
        forwarded = served.copy()
        np.add.at(forwarded, (origin, r_edge), need[n_edge, r_edge])
        change = np.abs(forwarded - external).max(initial=0.0)
        external = forwarded
        if change <= _SETTLED * max(1.0, external.max(initial=0.0)):
            break
    else:
        raise NonConvergence(f"demand propagation did not settle in {config.plan_iterations} iterations")
    need = np.einsum("nij,nj->ni", maps, external)

    stranded = (need > config.flow_tol) & ~prices.available
    if stranded.any():
        n, r = np.argwhere(stranded)[0]
        raise UnpricedDemand(f"agent {arr.agent_ids[n]} needs resource {r} but has no source for it")

    edge_flow = np.zeros((L, R))
    edge_flow[e_edge, r_edge] = need[n_edge, r_edge]
    provider_draw = np.where(prices.provider_mask, need, 0.0)

    output = np.zeros((N, R))
    sold = np.zeros((N, R))
    intermediate = np.zeros((N, R))
    self_supply = np.zeros((N, R))
    for n, (idx, inverse) in enumerate(inverses):
        if not len(idx):
            continue
        x = inverse @ external[n, idx]
        output[n, idx] = x
        sold[n, idx] = external[n, idx]
        intermediate[n] = arr.tech[n][:, idx] @ x
        self_supply[n, idx] = intermediate[n, idx]

    return FlowState(
        arrays=arr,
        prices=prices,
        requested=requested,
        satisfied=served,
        edge_flow=edge_flow,
        provider_draw=provider_draw,
        output=output,
        sold=sold,
        intermediate=intermediate,
        self_supply=self_supply,
        delivered_cost=prices.cost.copy(),
        delivered_ok=prices.available.copy(),
        spend=served * np.where(prices.available, prices.cost, 0.0),
        iterations=1,
    )


def plan_quantities(
    net: Network,
    prices: PriceState,
    demands: Demands = None,
    config: SolverConfig | None = None,
) -> FlowState:
    """Flows, production and raw draws that serve `demands` along the priced decisions, ignoring capacities."""
    config = config or SolverConfig()
    requested = _demand_array(prices.arrays, demands)
    labels = [net.agent(int(i)).label for i in prices.arrays.agent_ids]
    return _plan(prices, requested, requested.copy(), config, labels)


# ---------------------------------------------------------------------------
# Rationing
# ---------------------------------------------------------------------------


class _Rationer:
    """
    Removes served demand from one agent's consumers of a resource.

    Consumers are served in ascending (priority, link id), the agent's own final
    demand after links of equal rank and its intermediate use before everything,
    so cuts run in the opposite order.
    """

    def __init__(self, state: FlowState):
        self.state = state
        self.arr = state.arrays
        self.satisfied = state.satisfied.copy()

    def _consumers(self, n: int, r: int) -> list[tuple[int, int, int]]:
        arr, prices = self.arr, self.state.prices
        out = []
        for e in np.flatnonzero(arr.src == n):
            d = arr.dst[e]
            if prices.edge_mask[d, r] and prices.via[d, r] == e and self.state.edge_flow[e, r] > _TINY:
                out.append((int(arr.priority[e]), 0, int(e)))
        if self.satisfied[n, r] > _TINY:
            out.append((int(arr.fd_priority[n]), 1, -1))
        return sorted(out, reverse=True)

    def cut_sold(self, n: int, r: int, amount: float, path: frozenset) -> float:
        """Cut demand the agent serves from its stock of `r`: outgoing links and own final demand."""
        remaining = amount
        for _, is_final, e in self._consumers(n, r):
            if remaining <= _TINY:
                break
            if is_final:
                take = min(self.satisfied[n, r], remaining)
                self.satisfied[n, r] -= take
                remaining -= take
            else:
                d = int(self.arr.dst[e])
                if (d, r) in path:
                    continue
                take = min(self.state.edge_flow[e, r], remaining)
                remaining -= self.cut_need(d, r, take, path | {(n, r)})
        return amount - remaining

    def cut_need(self, n: int, r: int, amount: float, path: frozenset) -> float:
        """Cut what the agent acquires of `r`; intermediate use goes last, by scaling everything it makes."""
        cut = self.cut_sold(n, r, amount, path)
        rest = amount - cut
        used = self.state.intermediate[n, r] - self.state.self_supply[n, r]
        if rest > _TINY and used > _TINY:
            share = min(1.0, rest / used)
            for j in np.flatnonzero(self.state.sold[n] > _TINY):
                self.cut_sold(n, int(j), share * self.state.sold[n, j], path | {(n, r)})
            cut += min(rest, share * used)
        return cut


def ration(net: Network, tentative: FlowState, config: SolverConfig | None = None) -> FlowState:
    """
    Enforce link capacities on a planned state.

    The lowest-id overloaded (link, resource) is relieved first: the receiving
    agent drops consumers of that resource in reverse priority order, recursively
    downstream, and the reduced demand is replanned. Repeats until nothing is over
    capacity; cuts only ever lower flows. Raises `NonConvergence` if a link is
    still overloaded once every (link, resource) has had a pass.
    """
    config = config or SolverConfig()
    arr = tentative.arrays
    _, L, R = arr.shape
    limit = arr.capacity + config.flow_tol * np.maximum(1.0, arr.capacity)
    labels = [net.agent(int(i)).label for i in arr.agent_ids]
    state = tentative
    for _ in range(L * R + 1):
        over = arr.bounded & (state.edge_flow > limit)
        if not over.any():
            return state
        e, r = (int(v) for v in np.argwhere(over)[0])
        excess = state.edge_flow[e, r] - arr.capacity[e, r]
        rationer = _Rationer(state)
        cut = rationer.cut_need(int(arr.dst[e]), r, excess, frozenset())
        log.debug("link %d resource %d over capacity by %.6g; cut %.6g", arr.link_ids[e], r, excess, cut)
        if cut <= _TINY:
            link_id = arr.link_ids[e]
            raise SimulationError(f"link {link_id} carries {excess:.6g} over capacity that no demand accounts for")
        state = replace(
            _plan(state.prices, state.requested, rationer.satisfied, config, labels),
            iterations=state.iterations,
        )
    if not (arr.bounded & (state.edge_flow > limit)).any():
        return state
    raise NonConvergence(f"links still over capacity after {L * R + 1} rationing passes")


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _residual_view(net: Network, edge_flow: Float[np.ndarray, "L R"], tol: float) -> Network:
    """The network as the next spill round sees it: residual capacities, saturated pairs Unavailable."""
    links = {}
    for e, link_id in enumerate(sorted(net.links)):
        link = net.links[link_id]
        transport, capacity = list(link.transport_cost), list(link.capacity)
        for r, cap in enumerate(link.capacity):
            if cap is UNBOUNDED:
                continue
            residual = cap - edge_flow[e, r]
            if residual <= tol * max(1.0, cap):
                transport[r] = UNAVAILABLE
                capacity[r] = 0.0
            else:
                capacity[r] = residual
        links[link_id] = replace(link, transport_cost=tuple(transport), capacity=tuple(capacity))
    return replace(net, links=links)


def allocate(net: Network, demands: Demands = None, config: SolverConfig | None = None) -> FlowState:
    """
    Price, plan and ration until every demand is served or no source has room left.

    With `config.spill` off the first rationed round is final and residuals stay shortfall.
    """
    config = config or SolverConfig()
    prices = price_fixed_point(net, config)
    requested = _demand_array(prices.arrays, demands)
    labels = [net.agent(int(i)).label for i in prices.arrays.agent_ids]
    state = ration(net, _plan(prices, requested, requested.copy(), config, labels), config)

    while config.spill:
        remaining = np.clip(requested - state.satisfied, 0.0, None)
        remaining[remaining <= config.flow_tol] = 0.0
        if not remaining.any():
            break
        view = _residual_view(net, state.edge_flow, config.flow_tol)
        spill_prices = price_fixed_point(view, config)
        servable = np.where(spill_prices.available, remaining, 0.0)
        if not servable.any():
            break
        if state.iterations >= config.max_rounds:
            raise NonConvergence(f"residual demand still moving after {config.max_rounds} allocation rounds")
        step = ration(view, _plan(spill_prices, servable, servable.copy(), config, labels), config)
        if step.satisfied.sum() <= config.flow_tol:
            break
        state = state.merged(step, config.flow_tol)

    log.debug(
        "allocated in %d rounds, shortfall %.6g",
        state.iterations,
        state.shortfall.sum(),
    )
    return state


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def check_conservation(net: Network, state: FlowState, tol: float = 1e-9) -> list[Violation]:
    """
    Imbalances and capacity breaches above `tol` (relative to the quantities involved).

    Balance per agent and resource: inflow + provider draw + production
    = intermediate consumption + outflow + satisfied final demand.
    """
    arr = state.arrays
    names = net.catalog.names
    supply = state.import_inflow + state.provider_draw + state.output
    use = state.intermediate + state.outflow + state.satisfied
    scale = np.maximum(1.0, np.maximum(supply, use))
    out = []
    for n, r in np.argwhere(np.abs(supply - use) > tol * scale):
        out.append(
            Violation(
                f"agent {arr.agent_ids[n]}",
                "flow imbalance",
                f"{names[r]}: supply {supply[n, r]:.12g}, use {use[n, r]:.12g}",
            )
        )
    over = arr.bounded & (state.edge_flow > arr.capacity + tol * np.maximum(1.0, arr.capacity))
    for e, r in np.argwhere(over):
        out.append(
            Violation(
                f"link {arr.link_ids[e]}",
                "over capacity",
                f"{names[r]}: {state.edge_flow[e, r]:.12g} > {arr.capacity[e, r]:.12g}",
            )
        )
    for e, r in np.argwhere((state.edge_flow > tol) & ~arr.open):
        out.append(Violation(f"link {arr.link_ids[e]}", "flow on unavailable resource", names[r]))
    negative = [state.edge_flow.min(initial=0.0), state.provider_draw.min(initial=0.0), state.output.min(initial=0.0)]
    if min(negative) < -tol:
        out.append(Violation("network", "negative quantity", f"{min(negative):.6g}"))
    if (state.satisfied > state.requested + tol).any():
        out.append(Violation("network", "served above demand"))
    return out

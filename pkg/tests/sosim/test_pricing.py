import math
from dataclasses import replace

import numpy as np
import pytest

from sosim.allocation import UnpricedDemand, allocate
from sosim.config import SolverConfig
from sosim.core import UNAVAILABLE
from sosim.disruption import LinkBreak, LinkCostScale, MatrixCellScale, apply_event
from sosim.pricing import (
    NonConvergence,
    NotProducible,
    SourceKind,
    acquire_cost,
    make_cost,
    price_fixed_point,
)
from sosim.scenario import total_cost
from sosim.topology import erdos_renyi
from tests.sosim.builders import agent, link, network

R1, R2, R3 = 0, 1, 2
A1, A2, A3 = 0, 1, 2
T1, T2, T3 = 0, 1, 2


def brute_prices(net, sweeps: int = 200) -> dict[tuple[int, int], float]:
    """Plain value iteration of the pricing rule from 'nothing available' (inf)."""
    R = net.n_resources
    p = {(n, r): math.inf for n in net.agents for r in range(R)}

    def acquire(n, r, p):
        best = net.agent(n).provider_costs[r]
        best = math.inf if best is None else best
        for e in net.incoming(n):
            t = e.transport_cost[r]
            if t is not UNAVAILABLE:
                best = min(best, p[(e.source, r)] + t)
        return best

    for _ in range(sweeps):
        q = {(n, r): min(p[(n, r)], acquire(n, r, p)) for n, r in p}
        new = {}
        for n, r in p:
            column = [(i, row[r]) for i, row in enumerate(net.agent(n).tech.entries) if row[r] > 0]
            made = sum(c * q[(n, i)] for i, c in column) if column else math.inf
            new[(n, r)] = min(made, acquire(n, r, p))
        p = new
    return p


def test_validation_network_prices(three_node):
    """A2 makes R2, A3 makes R3 from R1 over T3 and R2 over T2."""
    prices = price_fixed_point(three_node)
    assert prices.sell_cost(A1, R3) == pytest.approx(3.0)
    assert prices.sell_cost(A2, R2) == pytest.approx(0.96)
    assert prices.sell_cost(A3, R3) == pytest.approx(1.026)

    assert prices.decision(A2, R2).kind == SourceKind.MAKE
    assert prices.decision(A3, R3).kind == SourceKind.MAKE
    assert prices.decision(A1, R1).kind == SourceKind.PROVIDER
    via_t3 = prices.decision(A3, R1)
    assert (via_t3.kind, via_t3.link) == (SourceKind.EDGE, T3)
    assert via_t3.unit_cost == pytest.approx(1.3)
    assert prices.decision(A3, R2).link == T2
    assert prices.make_set(A3) == {R3}


def test_broken_link_reroutes_to_buying(three_node):
    net = apply_event(three_node, LinkBreak(link=T2))
    prices = price_fixed_point(net)
    assert prices.sell_cost(A3, R3) == pytest.approx(3.3)
    decision = prices.decision(A3, R3)
    assert decision.kind == SourceKind.EDGE
    assert decision.link == T3


def test_chain_make_decision():
    """Provider r0 at 2.0, transport 1.0, B makes r1 from 0.5 r0: 0.5 * (2.0 + 1.0)."""
    net = network(2, [agent(0, 2, provider={0: 2.0}), agent(1, 2, make={1: {0: 0.5}})], [link(0, 0, 1, 2, cost=1.0)])
    prices = price_fixed_point(net)
    assert prices.sell_cost(1, 1) == pytest.approx(1.5)
    assert prices.decision(1, 1).kind == SourceKind.MAKE
    assert prices.sell_cost(0, 1) is UNAVAILABLE


def test_nothing_available_without_sources():
    net = network(2, [agent(0, 2), agent(1, 2, make={1: {0: 0.5}})], [])
    prices = price_fixed_point(net)
    assert not prices.available.any()
    assert prices.decision(1, 1).kind == SourceKind.NONE
    assert prices.decision(1, 1).unit_cost is UNAVAILABLE


def test_price_loop_matches_brute_iteration():
    """Each agent makes one resource from the other's; the loop contracts by 0.16 per round trip."""
    net = network(
        2,
        [agent(0, 2, make={0: {1: 0.4}}), agent(1, 2, make={1: {0: 0.4}}, provider={0: 1.0})],
        [link(0, 0, 1, 2, cost=0.5), link(1, 1, 0, 2, cost=0.5)],
    )
    prices = price_fixed_point(net)
    oracle = brute_prices(net)
    for (n, r), expected in oracle.items():
        assert prices.sell_cost(n, r) == pytest.approx(expected, abs=1e-8)
    assert prices.sell_cost(1, 0) == pytest.approx(0.7 / 0.84)
    assert prices.decision(1, 0).link == 0


def test_block_prices(block):
    """Producer costs of the urban block, worked out by hand from the fixture constants."""
    power, consumer = 0, 5
    prices = price_fixed_point(block)
    assert prices.sell_cost(1, power) == pytest.approx(0.41 + 0.05 * 0.825252631, abs=1e-6)
    assert prices.decision(1, power).kind == SourceKind.MAKE
    assert prices.sell_cost(2, consumer) == pytest.approx(0.775253, abs=1e-6)
    assert prices.sell_cost(3, consumer) == pytest.approx(0.725253, abs=1e-6)
    assert prices.sell_cost(4, consumer) == pytest.approx(0.765253, abs=1e-6)
    # A2 could make power but A1 sells it cheaper over the loop link
    assert prices.decision(2, power).kind == SourceKind.EDGE


def test_decisions_reproduce_sell_costs(block):
    prices = price_fixed_point(block)
    for n, a in block.agents.items():
        for r in range(block.n_resources):
            d = prices.decision(n, r)
            match d.kind:
                case SourceKind.MAKE:
                    inputs = [prices.input_cost(n, i) for i in range(block.n_resources)]
                    assert make_cost(a, inputs, r) == pytest.approx(d.unit_cost, abs=1e-9)
                case SourceKind.PROVIDER:
                    assert d.unit_cost == a.provider_costs[r]
                case SourceKind.EDGE:
                    e = block.link(d.link)
                    assert e.target == n
                    upstream = prices.sell_cost(e.source, r)
                    assert upstream + e.transport_cost[r] == pytest.approx(d.unit_cost, abs=1e-12)
                case SourceKind.NONE:
                    assert d.unit_cost is UNAVAILABLE


def test_acquire_prefers_the_provider():
    """Provider 2.0 against an edge at 1.5 + 1.0: the provider wins."""
    net = network(1, [agent(0, 1, provider={0: 1.5}), agent(1, 1, provider={0: 2.0})], [link(0, 0, 1, 1, cost=1.0)])
    prices = price_fixed_point(net)
    decision = acquire_cost(net, prices, 1, 0)
    assert decision.kind == SourceKind.PROVIDER
    assert decision.unit_cost == 2.0


def test_acquire_tie_goes_to_lowest_link_id():
    net = network(
        1,
        [agent(0, 1, provider={0: 2.0}), agent(1, 1, provider={0: 1.0}), agent(2, 1)],
        [link(5, 0, 2, 1, cost=1.0), link(3, 1, 2, 1, cost=2.0)],
    )
    prices = price_fixed_point(net)
    decision = acquire_cost(net, prices, 2, 0)
    assert decision.kind == SourceKind.EDGE
    assert decision.link == 3
    assert decision.unit_cost == 3.0
    assert prices.decision(2, 0).link == 3


def test_acquire_isolated_agent():
    net = network(1, [agent(0, 1)], [])
    assert acquire_cost(net, price_fixed_point(net), 0, 0).unit_cost is UNAVAILABLE


def test_make_cost():
    a = agent(0, 2, make={1: {0: 0.5}})
    assert make_cost(a, [3.0, UNAVAILABLE], 1) == 1.5
    assert make_cost(a, [0.0, 0.0], 1) == 0.0
    assert make_cost(a, [UNAVAILABLE, 1.0], 1) is UNAVAILABLE
    with pytest.raises(NotProducible):
        make_cost(a, [1.0, 1.0], 0)


def test_self_using_column_is_priced_in_house():
    """Resource 0 needs 0.5 of itself and 0.5 of resource 1 (bought at 2.0): unit cost 2.0."""
    net = network(
        2,
        [agent(0, 2, provider={1: 2.0}), agent(1, 2, make={0: {0: 0.5, 1: 0.5}})],
        [link(0, 0, 1, 2, cost=0.0)],
    )
    prices = price_fixed_point(net)
    assert prices.sell_cost(1, 0) == pytest.approx(2.0)
    assert prices.decision(1, 0).kind == SourceKind.MAKE


def test_closed_loop_without_sources_is_unavailable():
    """Columns that only feed on each other have nothing to rest on, however productive."""
    net = network(
        2,
        [agent(0, 2, make={0: {0: 0.5}}), agent(1, 2, make={0: {1: 0.5}, 1: {0: 0.5}}, demand={0: 1.0})],
        [link(0, 0, 1, 2, cost=0.1)],
    )
    prices = price_fixed_point(net)
    assert not prices.available.any()
    assert prices.make_set(1) == set()
    with pytest.raises(UnpricedDemand):
        allocate(net)


def test_buyable_closed_loop_is_not_free():
    """
    A1 can make r0 from r1 and r1 from r0, and can buy both (2.1 and 3.1).

    Making both would close the loop, so one of them stays bought: r0 is made
    from bought r1 at 0.5 * 3.1, and r1 keeps the link price.
    """
    net = network(
        2,
        [agent(0, 2, provider={0: 2.0, 1: 3.0}), agent(1, 2, make={0: {1: 0.5}, 1: {0: 0.5}}, demand={0: 1.0, 1: 1.0})],
        [link(0, 0, 1, 2, cost=0.1)],
    )
    prices = price_fixed_point(net)
    assert prices.sell_cost(1, 0) == pytest.approx(1.55)
    assert prices.sell_cost(1, 1) == pytest.approx(3.1)
    assert prices.make_set(1) == {0}
    assert prices.decision(1, 1).link == 0
    assert total_cost(allocate(net)) == pytest.approx(1.55 + 3.1)


def test_agent_making_everything_from_its_own_outputs():
    """The third column would close the loop, so r2 stays bought and the other two are made from it."""
    make = {0: {0: 0.1, 1: 0.2, 2: 0.2}, 1: {0: 0.3, 2: 0.1}, 2: {1: 0.4}}
    net = network(
        3,
        [agent(0, 3, provider={0: 1.0, 1: 1.0, 2: 1.0}), agent(1, 3, make=make)],
        [link(0, 0, 1, 3, cost=0.5)],
    )
    prices = price_fixed_point(net)
    assert prices.make_set(1) == {0, 1}
    assert prices.sell_cost(1, 0) == pytest.approx(0.33 / 0.84)
    assert prices.sell_cost(1, 1) == pytest.approx(0.3 * 0.33 / 0.84 + 0.15)
    assert prices.sell_cost(1, 2) == pytest.approx(1.5)


@pytest.mark.parametrize("seed", range(10))
def test_generated_producers_never_sell_for_nothing(seed):
    net = erdos_renyi(30, 0.15, seed=seed)
    prices = price_fixed_point(net)
    assert prices.available.any()
    assert prices.cost[prices.available].min() > 0.0


def test_zero_cost_ties_do_not_form_loops():
    """Two agents trade at zero transport cost; edge decisions still lead back to the provider."""
    net = network(
        1,
        [agent(0, 1, provider={0: 1.0}), agent(1, 1), agent(2, 1)],
        [link(0, 1, 2, 1), link(1, 2, 1, 1), link(2, 0, 1, 1)],
    )
    prices = price_fixed_point(net)
    assert prices.decision(1, 0).link == 2
    assert prices.decision(2, 0).link == 0


def test_sweep_budget(three_node):
    with pytest.raises(NonConvergence):
        price_fixed_point(three_node, SolverConfig(sweeps_per_agent=1))
    assert price_fixed_point(three_node).sweeps_used > 3


@pytest.mark.parametrize("seed", range(100))
def test_worsening_never_lowers_prices(seed):
    """Dearer transport, raw materials or coefficients never make anything cheaper, sold or delivered."""
    net = erdos_renyi(8, 0.35, seed=seed)
    rng = np.random.default_rng(seed)
    before = price_fixed_point(net)

    e = int(rng.choice(sorted(net.links)))
    worse = [apply_event(net, LinkCostScale(link=e, factor=2.0))]
    producers = [a for a in net.agents.values() if np.asarray(a.tech.entries).any()]
    if producers:
        a = producers[int(rng.integers(len(producers)))]
        i, j = np.argwhere(np.asarray(a.tech.entries) > 0)[0]
        worse.append(apply_event(net, MatrixCellScale(agent=a.id, row=int(i), col=int(j), factor=1.5)))
    providers = [a for a in net.agents.values() if any(c is not None for c in a.provider_costs)]
    a = providers[0]
    dearer = tuple(None if c is None else c * 1.5 for c in a.provider_costs)
    worse.append(net.with_agent(replace(a, provider_costs=dearer)))

    for changed in worse:
        after = price_fixed_point(changed)
        assert not (after.available & ~before.available).any()
        both = after.available & before.available
        assert (after.cost[both] >= before.cost[both] - 1e-9).all()

        demands = np.where(after.available, before.arrays.final_demand, 0.0)
        was, now = allocate(net, demands), allocate(changed, demands)
        served = was.delivered_ok & now.delivered_ok
        assert (now.delivered_cost[served] >= was.delivered_cost[served] - 1e-9).all()
        assert total_cost(now) >= total_cost(was) - 1e-9

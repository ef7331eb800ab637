import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from sosim import constants as C
from sosim.allocation import allocate
from sosim.config import Severity, SolverConfig
from sosim.disruption import LinkBreak, LinkCostScale, MatrixColumnScale, UnresolvedTarget
from sosim.scenario import (
    FACTORIAL_SCENARIOS,
    ScenarioSpec,
    SupplyCurve,
    TimedEvent,
    UnknownScenario,
    build_factorial_scenario,
    build_paper_scenario,
    config_hash,
    cost_table,
    delivered_average,
    disrupted,
    equilibrium,
    run,
    run_suite,
    satisfied_fraction,
    supply_curve,
    total_cost,
)
from sosim.topology import block_fixture
from tests.sosim.builders import agent, link, network

A3, R3 = 2, 2
T2, T3 = 1, 2

SEVERITY_ORDER = [0, 1, 4, 2, 3, 5, 6, 7, 8]
"""Scenario ids from mildest to heaviest; neighbours marked equal below may tie"""
MAY_TIE = {(1, 4), (3, 5), (6, 7)}


def timed(at: int, **event) -> TimedEvent:
    return TimedEvent.model_validate({"at": at, **event})


def test_break_for_one_timestep(three_node):
    spec = ScenarioSpec(name="t2-outage", horizon=3, events=(timed(2, kind="link_break", link=T2, duration=1),))
    result = run(three_node, spec)
    assert [r.total_cost for r in result.records] == pytest.approx([10.26, 33.0, 10.26])
    assert [r.active for r in result.records] == [(), ("link_break",), ()]
    assert result.records[1].delivered == (("A3", pytest.approx(3.3)),)
    assert all(r.total_shortfall == 0.0 for r in result.records)
    assert result.scenario == "t2-outage"


def test_reverting_one_event_keeps_the_others_on_the_same_link(three_node):
    """T2 is dearer for the whole run and broken at t=2 only; t=3 is back to the dearer state."""
    spec = ScenarioSpec(
        horizon=3,
        events=(
            timed(1, kind="link_cost_scale", link=T2, factor=2.0),
            timed(2, kind="link_break", link=T2, duration=1),
        ),
    )
    costs = [r.total_cost for r in run(three_node, spec).records]
    assert costs == pytest.approx([10.86, 33.0, 10.86])


def test_generated_outage_is_renewed_when_certain(three_node):
    spec = ScenarioSpec.model_validate(
        {
            "horizon": 3,
            "generators": [{"targets": [T2], "onset_prob": 1.0, "template": {"kind": "link_break"}}],
        }
    )
    assert [r.total_cost for r in run(three_node, spec).records] == pytest.approx([33.0, 33.0, 33.0])


def test_runs_are_deterministic(block):
    spec = ScenarioSpec.model_validate(
        {
            "horizon": 4,
            "seed": 9,
            "generators": [
                {
                    "targets": [0, 3, 5],
                    "onset_prob": 0.4,
                    "magnitude": {"low": 1.0, "high": 2.0},
                    "duration": {"geometric": 0.5},
                    "template": {"kind": "link_cost_scale"},
                }
            ],
        }
    )
    assert run(block, spec) == run(block, spec)


def test_demand_settings(three_node):
    spec = ScenarioSpec(demand={A3: (0.0, 0.0, 5.0)}, demand_scale=2.0)
    assert run(three_node, spec).records[0].total_cost == pytest.approx(10.26)
    with pytest.raises(UnresolvedTarget):
        run(three_node, ScenarioSpec(demand={7: (0.0, 0.0, 1.0)}))
    with pytest.raises(UnresolvedTarget):
        run(three_node, ScenarioSpec(demand={A3: (1.0,)}))


def test_events_on_missing_targets_fail(three_node):
    with pytest.raises(UnresolvedTarget):
        run(three_node, ScenarioSpec(events=(timed(1, kind="link_break", link=99),)))


def test_events_after_the_horizon_are_rejected():
    with pytest.raises(ValidationError, match="after the horizon"):
        ScenarioSpec(horizon=2, events=(timed(3, kind="link_break", link=0),))


def test_config_hash():
    spec = ScenarioSpec(seed=1)
    assert config_hash(spec) == config_hash(ScenarioSpec(seed=1))
    assert config_hash(spec) != config_hash(ScenarioSpec(seed=2))
    assert config_hash(spec) != config_hash(spec, SolverConfig(spill=False))
    assert len(config_hash(spec)) == 16


def test_run_records_provenance(three_node):
    result = run(three_node, ScenarioSpec(seed=4), scales=(0.5, 1.0))
    assert result.seed == 4
    assert result.rng_algorithm == "PCG64"
    assert result.config_hash == config_hash(ScenarioSpec(seed=4))
    assert result.curve is not None
    assert result.curve.steps[-1][0] == pytest.approx(10.0)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_delivered_average(three_node):
    averages = delivered_average(allocate(three_node))
    assert list(averages) == [A3]
    quantity, cost = averages[A3]
    assert quantity == pytest.approx(10.0)
    assert cost == pytest.approx(1.026)


def test_supply_curve_of_a_single_consumer(three_node):
    curve = supply_curve(three_node, None, (2.0, 0.5, 1.0))
    assert [q for q, _ in curve.steps] == pytest.approx([5.0, 10.0, 20.0])
    assert all(c == pytest.approx(1.026) for _, c in curve.steps)
    assert curve.demanded == pytest.approx(20.0)
    assert not curve.truncated


def test_capacity_raises_the_curve(three_node):
    """With T2 carrying at most 2 of R2, more of A3's demand is bought at 3.3 as demand grows."""
    capped = disrupted(three_node, ScenarioSpec(events=(timed(1, kind="link_capacity_scale", link=T2, factor=0.0),)))
    assert total_cost(allocate(capped)) == pytest.approx(33.0)

    net = three_node.with_link(replace(three_node.link(T2), capacity=(2.0, 2.0, 2.0)))
    curve = supply_curve(net, None, (0.5, 1.0))
    costs = [c for _, c in curve.steps]
    assert costs == pytest.approx([(10 / 3 * 1.026 + 5 / 3 * 3.3) / 5, 2.542])
    assert curve.cost_at(7.0) == pytest.approx(2.542)
    assert curve.cost_at(11.0) is None


def test_curve_stops_at_the_first_unserved_scale():
    R = 1
    net = network(
        R,
        [agent(0, R, provider={0: 1.0}), agent(1, R), agent(2, R, demand={0: 6.0}), agent(3, R, demand={0: 6.0})],
        [link(0, 0, 1, R, cost=0.1, capacity=8.0), link(1, 1, 2, R, cost=0.1), link(2, 1, 3, R, cost=0.1)],
    )
    curve = supply_curve(net, None, (0.5, 1.0, 2.0), name="hub")
    assert curve.truncated
    assert curve.truncated_at == 1.0
    assert [q for q, _ in curve.steps] == pytest.approx([3.0, 6.0])
    assert [c for _, c in curve.steps] == pytest.approx([1.2, 1.2])
    assert curve.demanded == pytest.approx(12.0)
    assert satisfied_fraction(curve, 1.25) == pytest.approx(0.5)


def test_satisfied_fraction():
    curve = SupplyCurve(((4.0, 1.0), (8.0, 2.0), (10.0, 3.0)), demanded=10.0)
    assert satisfied_fraction(curve, 0.5) == 0.0
    assert satisfied_fraction(curve, 2.0) == pytest.approx(0.8)
    assert satisfied_fraction(curve, 100.0) == 1.0
    assert satisfied_fraction(SupplyCurve(()), 1.0) == 1.0


def test_equilibrium():
    curve = SupplyCurve(((5.0, 1.0), (10.0, 2.0)), demanded=10.0)
    assert equilibrium(curve, [(8.0, 1.5)]) == (5.0, 2.0)
    assert equilibrium(curve, [(8.0, 0.5)]) == (0.0, 1.0)
    assert equilibrium(curve, [(20.0, 3.0)]) is None


# ---------------------------------------------------------------------------
# Factorial scenarios
# ---------------------------------------------------------------------------


def test_scenario_events(block):
    assert build_factorial_scenario(0, block).events == ()
    one = [t.event for t in build_factorial_scenario(1, block).events]
    assert all(isinstance(e, LinkBreak) for e in one) and len(one) == 2
    four = [t.event for t in build_factorial_scenario(4, block).events]
    assert [type(e) for e in four] == [LinkBreak, LinkBreak, LinkCostScale]
    six = [t.event for t in build_factorial_scenario(6, block).events]
    assert len(six) == 7
    assert all(isinstance(e, MatrixColumnScale) and e.factor == Severity().heavy_matrix for e in six)
    eight = build_factorial_scenario(8, block).events
    assert [t.event for t in eight] == four + six
    assert all(t.at == 1 for t in eight)


def test_severity_is_configurable(block):
    spec = build_factorial_scenario(2, block, Severity(medium_matrix=1.1))
    assert {t.event.factor for t in spec.events} == {1.1}


def test_paper_scenario_name(block):
    assert build_paper_scenario is build_factorial_scenario
    assert build_paper_scenario(5, block) == build_factorial_scenario(5, block)


def test_unknown_scenario(block):
    with pytest.raises(UnknownScenario):
        build_factorial_scenario(9, block)


@pytest.fixture(scope="module")
def suite():
    return run_suite(block_fixture(), tuple(FACTORIAL_SCENARIOS), (1.0,), workers=4)


def test_suite_orders_the_scenarios_by_severity(suite):
    assert list(suite) == list(range(9))
    costs = [suite[s].total_cost for s in SEVERITY_ORDER]
    for (a, ca), (b, cb) in zip(zip(SEVERITY_ORDER, costs), zip(SEVERITY_ORDER[1:], costs[1:])):
        if (a, b) in MAY_TIE:
            assert ca <= cb + 1e-9, (a, b)
        else:
            assert ca < cb, (a, b)
    assert all(suite[s].total_shortfall == 0.0 for s in suite)


def test_disrupted_curves_dominate_the_base(suite):
    base = suite[0].curve
    for s in range(1, 9):
        curve = suite[s].curve
        costs = [c for _, c in curve.steps]
        assert costs == sorted(costs)
        for q, c in base.steps:
            at = curve.cost_at(q)
            assert (math.inf if at is None else at) >= c - 1e-9


def test_heaviest_scenario_serves_nothing_at_the_base_price(suite):
    reference = max(c for _, c in suite[0].curve.steps)
    assert satisfied_fraction(suite[0].curve, reference) == pytest.approx(1.0)
    assert satisfied_fraction(suite[8].curve, reference) == 0.0
    assert all(satisfied_fraction(suite[s].curve, reference) <= 1.0 for s in suite)


def test_satisfied_share_falls_with_severity(suite):
    """At the dearest base price, breaking the A0 links still leaves the households fed by A1 and A2 served."""
    reference = max(c for _, c in suite[0].curve.steps)
    fractions = [satisfied_fraction(suite[s].curve, reference) for s in SEVERITY_ORDER]
    assert all(b <= a + 1e-12 for a, b in zip(fractions, fractions[1:])), fractions
    served = sum(sum(C.BLOCK_DEMAND[label]) for label in ("A5", "A6", "A13"))
    total = sum(sum(d) for d in C.BLOCK_DEMAND.values())
    assert fractions[1] == pytest.approx(served / total)
    assert fractions[2] == pytest.approx(served / total)
    assert fractions[3:] == [0.0] * 6


def test_heaviest_scenario_roughly_doubles_the_cost(suite):
    assert 1.8 <= suite[8].total_cost / suite[0].total_cost <= 2.2


def test_cost_table(suite):
    frame = cost_table(suite)
    assert list(frame.index) == list(range(9))
    assert frame.loc[0, "delta"] == 0.0
    assert frame.loc[0, "pct_of_base"] == pytest.approx(100.0)
    assert (frame.loc[1:, "pct_of_base"] > 100.0).all()
    combined = frame["combined_vs_sum"]
    assert combined[[3, 5, 7, 8]].notna().all()
    assert combined[[0, 1, 2, 4, 6]].isna().all()
    expected = frame.loc[8, "delta"] - frame.loc[4, "delta"] - frame.loc[6, "delta"]
    assert combined[8] == pytest.approx(expected)


def test_cost_table_without_the_base(suite):
    frame = cost_table({s: suite[s] for s in (1, 2)})
    assert list(frame.columns) == ["name", "total_cost", "total_shortfall"]
    assert np.isfinite(frame["total_cost"]).all()

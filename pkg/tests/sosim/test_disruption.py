import numpy as np
import pytest
from pydantic import ValidationError

from sosim.config import Range
from sosim.core import UNAVAILABLE, UNBOUNDED
from sosim.disruption import (
    EVENTS,
    DemandScale,
    FixedDuration,
    Generator,
    GeneratorState,
    GeometricDuration,
    LinkBreak,
    LinkCapacityScale,
    LinkCostScale,
    MatrixCellScale,
    MatrixColumnScale,
    MatrixRowScale,
    UnresolvedTarget,
    apply_event,
    generator_step,
    revert_event,
)

R1, R2, R3 = 0, 1, 2
A1, A2, A3 = 0, 1, 2
T1, T2, T3 = 0, 1, 2


def test_break_makes_every_resource_unavailable(three_node):
    broken = apply_event(three_node, LinkBreak(link=T2))
    assert broken.link(T2).transport_cost == (UNAVAILABLE,) * 3
    assert broken.link(T2).capacity == (0.0,) * 3
    assert three_node.link(T2).transport_cost == (0.3, 0.1, 0.1)
    assert revert_event(broken, three_node, LinkBreak(link=T2)) == three_node


def test_cost_scale_by_resource_name(three_node):
    net = apply_event(three_node, LinkCostScale(link=T2, resources=("R2",), factor=3.0))
    assert net.link(T2).transport_cost == pytest.approx((0.3, 0.3, 0.1))


def test_cost_scale_keeps_unavailable(three_node):
    broken = apply_event(three_node, LinkBreak(link=T1))
    assert apply_event(broken, LinkCostScale(link=T1, factor=2.0)).link(T1).transport_cost == (UNAVAILABLE,) * 3


def test_capacity_scale(three_node):
    zero = apply_event(three_node, LinkCapacityScale(link=T3, factor=0.0))
    assert zero.link(T3).capacity == (0.0,) * 3
    halved = apply_event(three_node, LinkCapacityScale(link=T3, factor=0.5))
    assert halved.link(T3).capacity == (UNBOUNDED,) * 3


@pytest.mark.parametrize(
    "event, cells",
    [
        (MatrixCellScale(agent=A3, row="R1", col="R3", factor=2.0), {(R1, R3): 0.6}),
        (MatrixRowScale(agent=A3, row=R2, factor=2.0), {(R2, R3): 1.2}),
        (MatrixColumnScale(agent=A3, col=R3, factor=2.0), {(R1, R3): 0.6, (R2, R3): 1.2}),
    ],
)
def test_matrix_events(three_node, event, cells):
    net = apply_event(three_node, event)
    a = net.agent(A3).tech.array()
    original = three_node.agent(A3).tech.array()
    for (i, j), value in cells.items():
        assert a[i, j] == pytest.approx(value)
        original[i, j] = value
    np.testing.assert_allclose(a, original)
    assert revert_event(net, three_node, event) == three_node


def test_demand_scale(three_node):
    net = apply_event(three_node, DemandScale(agent=A3, factor=1.5))
    assert net.agent(A3).final_demand == (0.0, 0.0, 15.0)
    assert revert_event(net, three_node, DemandScale(agent=A3, factor=1.5)) == three_node


def test_revert_only_touches_the_event_fields(three_node):
    both = apply_event(apply_event(three_node, LinkCostScale(link=T2, factor=2.0)), LinkCapacityScale(link=T2, factor=0.0))
    reverted = revert_event(both, three_node, LinkCapacityScale(link=T2, factor=0.0))
    assert reverted.link(T2).capacity == (UNBOUNDED,) * 3
    assert reverted.link(T2).transport_cost == pytest.approx((0.6, 0.2, 0.2))


@pytest.mark.parametrize(
    "event",
    [
        LinkBreak(link=42),
        MatrixColumnScale(agent=7, col=0, factor=2.0),
        MatrixCellScale(agent=A3, row="steam", col=0, factor=2.0),
        LinkCostScale(link=T1, resources=(5,), factor=2.0),
    ],
)
def test_unresolved_targets(three_node, event):
    with pytest.raises(UnresolvedTarget):
        apply_event(three_node, event)


def test_events_validate_from_plain_data():
    event = EVENTS.validate_python({"kind": "link_cost_scale", "link": 3, "factor": 2.5, "duration": 4})
    assert event == LinkCostScale(link=3, factor=2.5, duration=4)
    assert EVENTS.validate_python({"kind": "link_break", "link": 0}).duration == "permanent"
    assert event.target == ("link", 3)
    assert MatrixRowScale(agent=2, row=0, factor=1.0).target == ("agent", 2)


@pytest.mark.parametrize(
    "data",
    [
        {"kind": "link_melt", "link": 0},
        {"kind": "link_cost_scale", "link": 0, "factor": 0.0},
        {"kind": "link_cost_scale", "link": 0, "factor": float("inf")},
        {"kind": "demand_scale", "agent": 0, "factor": -1.0},
        {"kind": "link_break", "link": -1},
        {"kind": "link_break", "link": 0, "duration": 0},
    ],
)
def test_invalid_events_are_rejected(data):
    with pytest.raises(ValidationError):
        EVENTS.validate_python(data)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def breaker(onset: float, **kw) -> Generator:
    return Generator(targets=(0, 1, 2), onset_prob=onset, template={"kind": "link_break"}, **kw)


def unroll(g: Generator, steps: int, seed: int = 0):
    state = GeneratorState.seeded(g, seed)
    out = []
    for t in range(1, steps + 1):
        started, ended, state = generator_step(g, t, state)
        out.append((started, ended))
    return out


def test_generator_streams_are_reproducible():
    g = breaker(0.3, seed=12, duration=GeometricDuration(geometric=0.5))
    assert unroll(g, 20) == unroll(g, 20)
    other = breaker(0.3, seed=13, duration=GeometricDuration(geometric=0.5))
    assert unroll(g, 20) != unroll(other, 20)


def test_scenario_seed_is_the_fallback():
    g = breaker(0.3)
    assert unroll(g, 20, seed=5) == unroll(g.model_copy(update={"seed": 5}), 20)


def test_never_fires_at_zero_onset():
    assert all(not started and not ended for started, ended in unroll(breaker(0.0), 10))


def test_certain_onset_with_fixed_duration():
    """Every target fires at t=1, is busy at t=2, and is hit again as it recovers at t=3."""
    steps = unroll(breaker(1.0, duration=FixedDuration(fixed=2)), 3)
    started, ended = steps[0]
    assert [e.link for e in started] == [0, 1, 2]
    assert all(e.duration == 2 for e in started)
    assert steps[1] == ([], [])
    restarted, recovered = steps[2]
    assert recovered == started
    assert [e.link for e in restarted] == [0, 1, 2]


def test_magnitudes_stay_in_range():
    g = Generator(
        targets=(0, 1),
        onset_prob=1.0,
        magnitude=Range(low=1.5, high=2.5),
        template={"kind": "link_cost_scale", "resources": ["power"]},
        seed=1,
    )
    for started, _ in unroll(g, 5):
        for event in started:
            assert isinstance(event, LinkCostScale)
            assert event.resources == ("power",)
            assert 1.5 <= event.factor <= 2.5


def test_generator_rejects_templates_that_cannot_build():
    with pytest.raises(ValidationError):
        Generator(
            targets=(0,),
            onset_prob=0.5,
            magnitude=Range(low=0.0, high=1.0),
            template={"kind": "link_cost_scale"},
        )
    with pytest.raises(ValidationError):
        Generator(targets=(0,), onset_prob=1.5, template={"kind": "link_break"})

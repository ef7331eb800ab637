from sosim.allocation import FlowState, UnpricedDemand, allocate, check_conservation, plan_quantities, ration
from sosim.config import Severity, SolverConfig
from sosim.core import (
    UNAVAILABLE,
    UNBOUNDED,
    Agent,
    InfraLink,
    Network,
    ResourceCatalog,
    SimulationError,
    TechnologyMatrix,
    producible_set,
    validate_network,
)
from sosim.disruption import DisruptionEvent, Generator, apply_event, generator_step, revert_event
from sosim.gml import GmlError, read_gml, write_gml
from sosim.pricing import NonConvergence, PriceState, price_fixed_point
from sosim.production import NotProductive, leontief_solve, productivity_check
from sosim.scenario import RunResult, ScenarioSpec, run, run_suite, supply_curve
from sosim.topology import block_fixture, erdos_renyi, validation_fixture_3node

__all__ = [
    "UNAVAILABLE",
    "UNBOUNDED",
    "Agent",
    "DisruptionEvent",
    "FlowState",
    "Generator",
    "GmlError",
    "InfraLink",
    "Network",
    "NonConvergence",
    "NotProductive",
    "PriceState",
    "ResourceCatalog",
    "RunResult",
    "ScenarioSpec",
    "Severity",
    "SimulationError",
    "SolverConfig",
    "TechnologyMatrix",
    "UnpricedDemand",
    "allocate",
    "apply_event",
    "block_fixture",
    "check_conservation",
    "erdos_renyi",
    "generator_step",
    "leontief_solve",
    "plan_quantities",
    "price_fixed_point",
    "producible_set",
    "productivity_check",
    "ration",
    "read_gml",
    "revert_event",
    "run",
    "run_suite",
    "supply_curve",
    "validate_network",
    "validation_fixture_3node",
    "write_gml",
]

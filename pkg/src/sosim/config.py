from pydantic import BaseModel, NonNegativeFloat, PositiveFloat, PositiveInt, model_validator

from utils.param_types import Factor, NonNegativeFinite, ZeroToOne


class SolverConfig(BaseModel, validate_assignment=True):
    productivity_margin: ZeroToOne = 1e-6
    """A matrix is productive when its spectral radius is below 1 minus this margin"""

    power_iterations: PositiveInt = 1000
    """Power-iteration budget for spectral radius estimates"""

    power_tol: PositiveFloat = 1e-10
    """Power iteration stops once successive radius estimates differ by less than this"""

    neumann_limit: PositiveFloat = 1e12
    """Neumann partial sums above this mark a matrix as not productive (power iteration fallback)"""

    price_tol: PositiveFloat = 1e-9
    """Pricing converges when no finite unit cost moves by more than this in a sweep"""

    sweeps_per_agent: PositiveInt = 100
    """Pricing gives up after this many sweeps per agent"""

    flow_tol: NonNegativeFloat = 1e-9
    """Quantities below this count as zero when rationing and spilling"""

    max_rounds: PositiveInt = 50
    """Outer allocation rounds (price, plan, ration, spill) before giving up"""

    spill: bool = True
    """Re-route residual demand to the next-cheapest unsaturated source. Off: residuals stay shortfall."""

    plan_iterations: PositiveInt = 10_000
    """Demand propagation budget when sourcing decisions form loops"""


class Severity(BaseModel, validate_assignment=True):
    """
    Disruption magnitudes for the factorial scenarios.

    Reconstructed constants: no published factors exist for these disruptions.
    """

    medium_matrix: Factor = 2.25
    """Multiplier on technical coefficients of A1-A5 under medium production disruption"""

    heavy_matrix: Factor = 3.0
    """Multiplier on technical coefficients of A1-A5 under heavy production disruption"""

    heavy_link_cost: Factor = 3.0
    """Multiplier on the A2 -> A1 transport costs under heavy infrastructure disruption"""


class Range(BaseModel, frozen=True):
    """A closed interval of non-negative values."""

    low: NonNegativeFinite
    high: NonNegativeFinite

    @model_validator(mode="after")
    def _ordered(self):
        if self.low > self.high:
            raise ValueError(f"empty range [{self.low}, {self.high}]")
        return self

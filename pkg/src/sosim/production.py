"""
Leontief input-output arithmetic for a single agent.

With technical coefficients A and external demand D, gross output satisfies
X = AX + D, so X = (I - A)^-1 D, and the intermediate input requirement is
S = AX = X - D. Solves are restricted to the resources the agent makes; rows
outside that set are the inputs it has to bring in.
"""

from __future__ import annotations

import logging
from collections.abc import Collection
from dataclasses import dataclass

import numpy as np
from jaxtyping import Float
from numpy.linalg import solve

from sosim.config import SolverConfig
from sosim.core import SimulationError

__all__ = [
    "NotProductive",
    "ProductionPlan",
    "Productivity",
    "leontief_inverse",
    "leontief_prices",
    "leontief_solve",
    "productivity_check",
    "split_requirements",
]

log = logging.getLogger(__name__)


class NotProductive(SimulationError):
    """The matrix cannot sustain the demanded outputs (spectral radius too close to or above 1)."""


@dataclass(frozen=True, eq=False)
class Productivity:
    productive: bool
    radius: float

    def __bool__(self) -> bool:
        return self.productive


@dataclass(frozen=True, eq=False)
class ProductionPlan:
    X: Float[np.ndarray, " R"]
    """Gross output"""
    D: Float[np.ndarray, " R"]
    """External demand met by the output"""
    S: Float[np.ndarray, " R"]
    """Intermediate input requirement, A @ X"""

    @classmethod
    def zeros(cls, size: int) -> ProductionPlan:
        return cls(np.zeros(size), np.zeros(size), np.zeros(size))

    def __add__(self, other: ProductionPlan) -> ProductionPlan:
        return ProductionPlan(self.X + other.X, self.D + other.D, self.S + other.S)


def _indices(made: Collection[int]) -> np.ndarray:
    return np.array(sorted(made), dtype=int)


def _neumann_radius(a: Float[np.ndarray, "M M"], config: SolverConfig) -> Productivity:
    """Fallback for matrices where power iteration oscillates: watch the Neumann partial sums."""
    total = np.eye(len(a))
    term = np.eye(len(a))
    radius = 0.0
    for k in range(1, config.power_iterations + 1):
        term = term @ a
        total += term
        norm = np.abs(term).sum(axis=1).max()
        radius = norm ** (1 / k)
        if total.max() > config.neumann_limit:
            return Productivity(False, float(max(radius, 1.0)))
        if norm < 1e-15:
            break
    return Productivity(bool(radius < 1 - config.productivity_margin), float(radius))


def productivity_check(
    a: Float[np.ndarray, "R R"],
    restricted_to: Collection[int] | None = None,
    config: SolverConfig | None = None,
) -> Productivity:
    """
    Whether a non-negative matrix (optionally a principal submatrix) is productive.

    The spectral radius is estimated by power iteration from a uniform positive vector.

    Example:
        ```python
        >>> productivity_check(np.array([[1.2]]))
        Productivity(productive=False, radius=1.2)
        ```
    """
    config = config or SolverConfig()
    if restricted_to is not None:
        idx = _indices(restricted_to)
        a = a[np.ix_(idx, idx)]
    if a.size == 0:
        return Productivity(True, 0.0)

    x = np.full(len(a), 1.0 / len(a))
    estimate = 0.0
    for _ in range(config.power_iterations):
        y = a @ x
        norm = y.sum()
        if norm == 0:
            return Productivity(True, 0.0)
        x = y / norm
        if abs(norm - estimate) < config.power_tol:
            return Productivity(bool(norm < 1 - config.productivity_margin), float(norm))
        estimate = norm

    log.debug("power iteration did not settle; falling back to Neumann series")
    return _neumann_radius(a, config)


def leontief_inverse(
    a: Float[np.ndarray, "R R"],
    made: Collection[int],
    config: SolverConfig | None = None,
) -> Float[np.ndarray, "M M"]:
    """(I - A_MM)^-1 over the made resources, in ascending resource order."""
    idx = _indices(made)
    sub = a[np.ix_(idx, idx)]
    check = productivity_check(sub, config=config)
    if not check:
        raise NotProductive(f"spectral radius {check.radius:.6g} over resources {idx.tolist()}")
    eye = np.eye(len(idx))
    return solve(eye - sub, eye)


def leontief_solve(
    a: Float[np.ndarray, "R R"],
    d: Float[np.ndarray, " R"],
    made: Collection[int],
    config: SolverConfig | None = None,
) -> ProductionPlan:
    """Gross output for demand `d` when the agent makes exactly the resources in `made`."""
    d = np.asarray(d, dtype=float)
    idx = _indices(made)
    outside = np.ones(len(d), dtype=bool)
    outside[idx] = False
    if (d[outside] > 0).any():
        raise ValueError(f"demand on resources the agent does not make: {np.flatnonzero(outside & (d > 0)).tolist()}")

    x = np.zeros(len(d))
    if len(idx):
        sub = a[np.ix_(idx, idx)]
        check = productivity_check(sub, config=config)
        if not check:
            raise NotProductive(f"spectral radius {check.radius:.6g} over resources {idx.tolist()}")
        x[idx] = solve(np.eye(len(idx)) - sub, d[idx])
    return ProductionPlan(X=x, D=d.copy(), S=a @ x)


def split_requirements(
    plan: ProductionPlan, made: Collection[int]
) -> tuple[Float[np.ndarray, " R"], Float[np.ndarray, " R"]]:
    """Split S into inputs the agent supplies itself and inputs it imports."""
    inside = np.zeros(len(plan.S), dtype=bool)
    inside[_indices(made)] = True
    self_supply = np.where(inside, plan.S, 0.0)
    imports = np.where(inside, 0.0, plan.S)
    return self_supply, imports


def leontief_prices(
    a: Float[np.ndarray, "R R"],
    made: Collection[int],
    input_costs: Float[np.ndarray, " R"],
    config: SolverConfig | None = None,
) -> Float[np.ndarray, " M"]:
    """
    Unit costs of the made resources when every one of them is produced in-house.

    Solves p = A_MM^T p + A_OM^T c_O, where c_O are the (finite) costs of the
    inputs bought from outside.
    """
    idx = _indices(made)
    if not len(idx):
        return np.zeros(0)
    outside = np.setdiff1d(np.arange(len(a)), idx)
    sub = a[np.ix_(idx, idx)]
    check = productivity_check(sub, config=config)
    if not check:
        raise NotProductive(f"spectral radius {check.radius:.6g} over resources {idx.tolist()}")
    bought = a[np.ix_(outside, idx)].T @ np.asarray(input_costs, dtype=float)[outside]
    return solve(np.eye(len(idx)) - sub.T, bought)

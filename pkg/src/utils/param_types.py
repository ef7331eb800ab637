import math
from typing import Annotated, Any, Callable, TypeVar

from annotated_types import Ge, Gt, Interval, Predicate
from pydantic import ConfigDict
from pydantic import validate_call as _validate_call

__all__ = ["ZeroToOne", "Factor", "ScaleFactor", "NonNegativeFinite", "AgentCount", "validate_call"]


ZeroToOne = Annotated[float, Interval(ge=0, le=1)]
"""Between 0 and 1 (inclusive)"""

Factor = Annotated[float, Gt(0), Predicate(math.isfinite)]
"""Strictly positive, finite multiplier"""

ScaleFactor = Annotated[float, Ge(0), Predicate(math.isfinite)]
"""Non-negative, finite multiplier (0 switches the target off)"""

NonNegativeFinite = Annotated[float, Ge(0), Predicate(math.isfinite)]
"""A finite quantity or unit cost"""

AgentCount = Annotated[int, Ge(2)]
"""Enough agents to form a link"""

AnyCallableT = TypeVar("AnyCallableT", bound=Callable[..., Any])


def validate_call(fn: AnyCallableT) -> AnyCallableT:
    """
    Validate the arguments of a call against its annotations.

    Like `pydantic.validate_call`, but numpy arrays, networks and generators pass through
    untouched, and return values are not re-validated (results are often large arrays).
    """
    config = ConfigDict(arbitrary_types_allowed=True)
    return _validate_call(config=config, validate_return=False)(fn)

"""Input checks shared by the estimator wrappers and the CLI."""

from __future__ import annotations

import math
from typing import Iterable, Optional

from .catalog import Strategy
from .telemetry.trace import TelemetryTrace, channel_name


def check_positive(value, name: str, *, allow_zero: bool = False) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number, got {value!r}") from None
    if math.isnan(value) or (value < 0 if allow_zero else value <= 0):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value


def check_factor(value, name: str = "scaling factor") -> float:
    value = check_positive(value, name)
    if value < 1:
        from .errors import InvalidFactorError

        raise InvalidFactorError(f"{name} must be >= 1, got {value}")
    return value


def check_strategies(values: Optional[Iterable]) -> list[Strategy]:
    """Parsed, de-duplicated strategies in canonical order; ``None`` means all."""
    if values is None:
        return list(Strategy)
    picked = {Strategy.parse(v) for v in values}
    if not picked:
        raise ValueError("select at least one strategy")
    return [s for s in Strategy if s in picked]


def check_trace(trace, channels: Iterable[str] = ()) -> TelemetryTrace:
    if not isinstance(trace, TelemetryTrace):
        raise TypeError(f"expected a TelemetryTrace, got {type(trace).__name__}")
    for c in channels:
        trace.require(channel_name(c))
    return trace


def check_traces(X, channels: Iterable[str] = ()) -> list[TelemetryTrace]:
    """Accept one trace or a sequence of them."""
    if isinstance(X, TelemetryTrace):
        X = [X]
    traces = list(X)
    if not traces:
        raise ValueError("no traces given")
    channels = tuple(channels)
    return [check_trace(t, channels) for t in traces]

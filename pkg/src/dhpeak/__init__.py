"""Peak flow reduction strategies for district heating networks."""
from .core import ConsumerType, Constants, Dataset, MeterMeta, MeterSeries, StrategyOutcome, aggregate_flow
from .strategies import StrategyConfig, apply_strategy, compose, parse_chain

__version__ = "0.1.0"

__all__ = [
    "ConsumerType",
    "Constants",
    "Dataset",
    "MeterMeta",
    "MeterSeries",
    "StrategyConfig",
    "StrategyOutcome",
    "aggregate_flow",
    "apply_strategy",
    "compose",
    "parse_chain",
]

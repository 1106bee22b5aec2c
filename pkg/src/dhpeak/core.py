"""Domain types and the heat-load identity shared by every module.

Series are hourly numpy arrays (flow in m³/h, temperatures in °C, heat in
kW, which equals kWh per hour). Missing measurements are stored as NaN and
counted as gaps by :mod:`dhpeak.ingest`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

HOURS_PER_DAY = 24


class ConsumerType(str, enum.Enum):
    RESIDENTIAL = "residential"
    COMMERCIAL = "commercial"
    INDUSTRIAL = "industrial"


class StrategyKind(str, enum.Enum):
    LOAD_SHIFT = "LoadShift"
    RETURN_TEMP_LIMIT = "ReturnTempLimit"
    FLOW_LIMIT = "FlowLimit"
    COMPOSITE = "Composite"
    IDENTITY = "Identity"


@dataclass(frozen=True)
class Constants:
    """Physical constants, pump-model parameters and thresholds.

    Only the product ``rho * cp`` enters the heat identity.
    """

    rho: float = 977.0  # kg/m³, water near 70 °C
    cp: float = 0.001163  # kWh/(kg·°C)
    pump_lambda_measured: float = 1.84
    pump_lambda_theoretical: float = 2.0
    eta_pump: float = 0.7
    dp_coefficient: float = 1e-5  # bar per (m³/h)^1.84
    delta_t_threshold: float = 1.0  # °C
    t_ref_return: float = 50.0  # °C

    def __post_init__(self):
        if not (self.rho > 0 and self.cp > 0):
            raise ValueError("rho and cp must be positive")
        if not 0 < self.eta_pump <= 1:
            raise ValueError("eta_pump must lie in (0, 1]")
        if self.pump_lambda_measured <= 0 or self.pump_lambda_theoretical <= 0:
            raise ValueError("pump exponents must be positive")
        if self.delta_t_threshold <= 0:
            raise ValueError("delta_t_threshold must be positive")

    @property
    def rho_cp(self) -> float:
        """Volumetric heat capacity in kWh/(m³·°C)."""
        return self.rho * self.cp

    @classmethod
    def with_rho_cp(cls, rho_cp: float, **kwargs) -> "Constants":
        """Constants whose product is ``rho_cp`` (rho fixed at 1000)."""
        return cls(rho=1000.0, cp=rho_cp / 1000.0, **kwargs)


@dataclass(frozen=True)
class MeterMeta:
    meter_id: int
    q_max: float
    q_mean: float
    t_rl_mean: float
    t_rl_max: float
    t_rl_limit: float
    consumer_type: ConsumerType

    def __post_init__(self):
        if self.meter_id <= 0:
            raise ValueError(f"meter_id must be positive, got {self.meter_id}")
        if not self.q_max >= self.q_mean >= 0:
            raise ValueError(f"meter {self.meter_id}: need q_max >= q_mean >= 0")
        if self.t_rl_max < self.t_rl_mean:
            raise ValueError(f"meter {self.meter_id}: need t_rl_max >= t_rl_mean")
        object.__setattr__(self, "consumer_type", ConsumerType(self.consumer_type))


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("series must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MeterSeries:
    """One substation's hourly flow, supply/return temperature and heat."""

    meter_id: int
    flow: np.ndarray
    t_supply: np.ndarray
    t_return: np.ndarray
    heat: np.ndarray

    def __post_init__(self):
        for name in ("flow", "t_supply", "t_return", "heat"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        n = len(self.flow)
        if not (len(self.t_supply) == len(self.t_return) == len(self.heat) == n):
            raise ValueError(f"meter {self.meter_id}: series lengths differ")
        if np.any(self.flow < 0):
            raise ValueError(f"meter {self.meter_id}: negative flow")

    @property
    def hours(self) -> int:
        return len(self.flow)

    @property
    def delta_t(self) -> np.ndarray:
        return self.t_supply - self.t_return

    def gap_count(self) -> int:
        """Number of NaN cells across the four series."""
        return int(sum(np.isnan(s).sum() for s in (self.flow, self.t_supply, self.t_return, self.heat)))

    def with_values(self, **changes) -> "MeterSeries":
        return replace(self, **changes)

    def equals(self, other: "MeterSeries") -> bool:
        """Bit-level equality (NaN cells compare equal)."""
        if self.meter_id != other.meter_id:
            return False
        return all(
            np.array_equal(a, b, equal_nan=True)
            for a, b in zip(
                (self.flow, self.t_supply, self.t_return, self.heat),
                (other.flow, other.t_supply, other.t_return, other.heat),
            )
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Meters sharing one hourly time axis, plus their metadata.

    Meter series are kept in the given order; ``metas`` maps meter_id to
    :class:`MeterMeta`.
    """

    meters: tuple[MeterSeries, ...]
    metas: Mapping[int, MeterMeta]
    hours: int = field(default=-1)

    def __post_init__(self):
        meters = tuple(self.meters)
        object.__setattr__(self, "meters", meters)
        metas = dict(self.metas) if isinstance(self.metas, Mapping) else {m.meter_id: m for m in self.metas}
        object.__setattr__(self, "metas", metas)
        hours = self.hours
        if hours < 0:
            hours = meters[0].hours if meters else 0
            object.__setattr__(self, "hours", hours)
        ids = [m.meter_id for m in meters]
        if len(set(ids)) != len(ids):
            raise ValueError("meter_ids must be unique")
        for m in meters:
            if m.hours != hours:
                raise ValueError(f"meter {m.meter_id} has {m.hours} hours, expected {hours}")
            if m.meter_id not in metas:
                raise ValueError(f"meter {m.meter_id} has no meta")

    @property
    def meter_ids(self) -> list[int]:
        return [m.meter_id for m in self.meters]

    def __len__(self) -> int:
        return len(self.meters)

    def meter(self, meter_id: int) -> MeterSeries:
        for m in self.meters:
            if m.meter_id == meter_id:
                return m
        raise KeyError(meter_id)

    def index_of(self, meter_id: int) -> int:
        return self.meter_ids.index(meter_id)

    @cached_property
    def flow(self) -> np.ndarray:
        """Flow matrix, shape (meters, hours)."""
        return _stack([m.flow for m in self.meters], self.hours)

    @cached_property
    def t_supply(self) -> np.ndarray:
        return _stack([m.t_supply for m in self.meters], self.hours)

    @cached_property
    def t_return(self) -> np.ndarray:
        return _stack([m.t_return for m in self.meters], self.hours)

    @cached_property
    def heat(self) -> np.ndarray:
        return _stack([m.heat for m in self.meters], self.hours)

    @property
    def delta_t(self) -> np.ndarray:
        return self.t_supply - self.t_return

    def gap_count(self) -> int:
        return sum(m.gap_count() for m in self.meters)

    def with_meters(self, meters: Iterable[MeterSeries]) -> "Dataset":
        return Dataset(tuple(meters), self.metas, self.hours)

    def subset(self, meter_ids: Iterable[int]) -> "Dataset":
        keep = set(meter_ids)
        meters = tuple(m for m in self.meters if m.meter_id in keep)
        return Dataset(meters, {i: self.metas[i] for i in keep if i in self.metas}, self.hours)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.hours == other.hours
            and len(self.meters) == len(other.meters)
            and all(a.equals(b) for a, b in zip(self.meters, other.meters))
        )


def _stack(rows: Sequence[np.ndarray], hours: int) -> np.ndarray:
    out = np.vstack(rows) if rows else np.zeros((0, hours))
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class StrategyOutcome:
    """An altered dataset together with how it was produced."""

    dataset: Dataset
    strategy: StrategyKind
    included: frozenset[int]
    alpha: float | None = None
    beta: float | None = None
    chain: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "included", frozenset(self.included))
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        unknown = self.included - set(self.dataset.meter_ids)
        if unknown:
            raise ValueError(f"included meters not in dataset: {sorted(unknown)}")


def heat_from_flow(flow, delta_t, constants: Constants):
    """Heat load ρ·cp·ΔT·V̇ in kW; negative ΔT gives negative heat."""
    return constants.rho_cp * delta_t * flow


def aggregate_flow(dataset: Dataset) -> np.ndarray:
    """Hourly sum of all meters' flows (all zeros for an empty dataset)."""
    if not dataset.meters:
        return np.zeros(dataset.hours)
    return dataset.flow.sum(axis=0)

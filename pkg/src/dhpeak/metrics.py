"""Evaluation quantities for original and altered datasets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import HOURS_PER_DAY, Constants, Dataset, aggregate_flow


class DegenerateInput(ValueError):
    pass


@dataclass(frozen=True)
class PumpModel:
    lam: float = 1.84
    eta_pump: float = 0.7
    dp_coefficient: float = 1e-5

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("pump exponent must be positive")
        if not 0 < self.eta_pump <= 1:
            raise ValueError("eta_pump must lie in (0, 1]")

    @classmethod
    def from_constants(cls, constants: Constants, lam: float | None = None) -> "PumpModel":
        return cls(
            lam=constants.pump_lambda_measured if lam is None else lam,
            eta_pump=constants.eta_pump,
            dp_coefficient=constants.dp_coefficient,
        )


def duration_curve(series) -> np.ndarray:
    """Values sorted in descending order."""
    return np.sort(np.asarray(series, dtype=float))[::-1]


def peak_reduction(original: Dataset, altered: Dataset) -> float:
    """``1 − peak_altered / peak_original`` for the aggregate flow (may be negative)."""
    if original.hours != altered.hours:
        raise ValueError("datasets cover different hours")
    peak = float(aggregate_flow(original).max(initial=0.0))
    if peak == 0:
        raise DegenerateInput("original aggregate peak is zero")
    return 1.0 - float(aggregate_flow(altered).max(initial=0.0)) / peak


def peak_reduction_from_peaks(original_peak: float, altered_peak: float) -> float:
    if original_peak == 0:
        raise DegenerateInput("original aggregate peak is zero")
    return 1.0 - altered_peak / original_peak


def pumping_energy_ratio(original_agg, altered_agg, pump: PumpModel = PumpModel()) -> float:
    """Yearly pumping energy ratio ``Σ V_alt^(1+λ) / Σ V_orig^(1+λ)``."""
    orig = np.asarray(original_agg, dtype=float)
    alt = np.asarray(altered_agg, dtype=float)
    if orig.shape != alt.shape:
        raise ValueError("series lengths differ")
    denom = np.sum(orig ** (1 + pump.lam))
    if denom == 0:
        raise DegenerateInput("original flow is identically zero")
    return float(np.sum(alt ** (1 + pump.lam)) / denom)


def cubic_improvement(original_agg, altered_agg) -> float:
    """``1 − Σ V_new³ / Σ V_old³`` (pressure drop taken as quadratic in flow)."""
    return 1.0 - pumping_energy_ratio(original_agg, altered_agg, PumpModel(lam=2.0))


def pump_power_estimate(v_chp: float, v_subgrid: float, pump: PumpModel = PumpModel()) -> float:
    """Electric pump power in kW attributable to a subgrid.

    The differential pressure at the plant follows ``dp = k · V_chp^1.84``
    (bar); the factor 100 converts bar·m³/s to kW.
    """
    if v_chp < 0 or v_subgrid < 0:
        raise ValueError("flows must be non-negative")
    if v_chp == 0:
        return 0.0
    dp = pump.dp_coefficient * v_chp ** 1.84
    return (v_chp / 3600.0) * dp * 100.0 / pump.eta_pump * (v_subgrid / v_chp)


def weighted_return_temperature(dataset: Dataset) -> float:
    """Flow-weighted mean return temperature over all meters and hours."""
    flow = dataset.flow
    total = flow.sum()
    if total == 0:
        raise DegenerateInput("aggregate flow is identically zero")
    return float((flow * dataset.t_return).sum() / total)


def heat_deficit(original: Dataset, altered: Dataset) -> float:
    """Fraction of yearly heat no longer delivered."""
    if original.meter_ids != altered.meter_ids or original.hours != altered.hours:
        raise ValueError("datasets must have the same meters and hours")
    total = original.heat.sum()
    if total == 0:
        raise DegenerateInput("original heat is identically zero")
    return float(1.0 - altered.heat.sum() / total)


def additional_heat_capacity(
    v_max_original: float,
    v_max_altered: float,
    q_max_original: float,
    t_sl_dh_max: float,
    constants: Constants = Constants(),
) -> tuple[float, float]:
    """Extra heat (kW) deliverable through the freed peak flow, absolute and relative."""
    if q_max_original <= 0:
        raise DegenerateInput("q_max_original must be positive")
    dv = v_max_original - v_max_altered
    q_add = dv * constants.rho_cp * (t_sl_dh_max - constants.t_ref_return)
    return q_add, q_add / q_max_original


def load_summary(dataset: Dataset) -> dict[int, tuple[float, float]]:
    """Mean and peak heat (kW) per meter."""
    return {m.meter_id: (float(np.mean(m.heat)), float(np.max(m.heat))) for m in dataset.meters}


def normalized_daily_profile(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Mean heat per hour of day, rescaled per meter to [0, 1].

    Returns ``(profile, degenerate)`` where ``profile`` has shape
    (meters, 24); meters with a flat profile get a zero row and a True flag.
    """
    if dataset.hours % HOURS_PER_DAY:
        raise ValueError("hours must be a multiple of 24")
    heat = dataset.heat.reshape(len(dataset), -1, HOURS_PER_DAY)
    mean = heat.mean(axis=1)
    lo = mean.min(axis=1, keepdims=True)
    span = mean.max(axis=1, keepdims=True) - lo
    degenerate = span[:, 0] == 0
    safe = np.where(span == 0, 1.0, span)
    profile = np.where(degenerate[:, None], 0.0, (mean - lo) / safe)
    return np.clip(profile, 0.0, 1.0), degenerate


@dataclass
class MetricsReport:
    peak_original: float
    peak_strategy: float
    peak_reduction: float
    pumping_ratio: dict[str, float]
    weighted_return_temp: float
    weighted_return_temp_original: float
    heat_deficit: float
    duration_curve: list[float] = field(repr=False)

    def to_dict(self, with_curve: bool = False) -> dict:
        d = asdict(self)
        if not with_curve:
            d.pop("duration_curve")
        return d


def lambda_key(lam: float) -> str:
    return repr(float(lam))


def evaluate(original: Dataset, altered: Dataset, lambdas: Sequence[float] = (1.84, 2.0), constants: Constants = Constants()) -> MetricsReport:
    """All scenario metrics for ``altered`` relative to ``original``."""
    orig_agg = aggregate_flow(original)
    alt_agg = aggregate_flow(altered)
    peak_o = float(orig_agg.max(initial=0.0))
    peak_a = float(alt_agg.max(initial=0.0))
    ratios = {
        lambda_key(lam): pumping_energy_ratio(orig_agg, alt_agg, PumpModel.from_constants(constants, lam))
        for lam in lambdas
    }
    return MetricsReport(
        peak_original=peak_o,
        peak_strategy=peak_a,
        peak_reduction=peak_reduction_from_peaks(peak_o, peak_a),
        pumping_ratio=ratios,
        weighted_return_temp=weighted_return_temperature(altered),
        weighted_return_temp_original=weighted_return_temperature(original),
        heat_deficit=heat_deficit(original, altered),
        duration_curve=duration_curve(alt_agg).tolist(),
    )

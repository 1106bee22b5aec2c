"""Greedy ranking of meters for partial strategy roll-out."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Constants, Dataset, aggregate_flow
from .metrics import peak_reduction_from_peaks, weighted_return_temperature
from .strategies import (
    StrategyConfig,
    apply_strategy,
    flow_limit_meter,
    limit_return_temperature,
    load_shift_peak,
)


@dataclass(frozen=True)
class GreedyCurve:
    order: list[int]
    reduction: list[float]  # one per prefix size k = 1..n
    baseline_peak: float
    peaks: list[float]
    return_temperature: list[float]


class _CandidateEvaluator:
    """Yearly aggregate peak with a given set of meters under the strategy."""

    def __init__(self, dataset: Dataset, config: StrategyConfig, constants: Constants):
        self.dataset = dataset
        self.config = config
        self.constants = constants
        self._rows = None
        if config.kind in ("tl", "fl"):
            # Meters act independently, so each altered flow row is computed once.
            flow = np.array(dataset.flow)
            altered = flow.copy()
            if config.kind == "tl":
                out = limit_return_temperature(dataset, None, constants).dataset
                altered = np.array(out.flow)
            elif config.level > 0:
                for row, m in enumerate(dataset.meters):
                    altered[row] = flow_limit_meter(m.flow, m.delta_t, config.level, constants).flow
            self._base = flow
            self._rows = altered
            self._index = {mid: i for i, mid in enumerate(dataset.meter_ids)}

    def peak(self, included: set[int]) -> float:
        if self._rows is None:
            return load_shift_peak(self.dataset, self.config.level, included)
        flow = self._base.copy()
        for mid in included:
            i = self._index[mid]
            flow[i] = self._rows[i]
        return float(flow.sum(axis=0).max())


def greedy_rank(
    dataset: Dataset,
    config: StrategyConfig,
    constants: Constants = Constants(),
    candidates: list[int] | None = None,
) -> GreedyCurve:
    """Add meters one at a time, always the one giving the lowest peak.

    All candidates are eventually included, even when every remaining one
    makes the peak worse. Ties go to the lowest meter_id. Curve values for
    each prefix come from a direct strategy run on that prefix.
    """
    remaining = sorted(dataset.meter_ids if candidates is None else candidates)
    baseline = float(aggregate_flow(dataset).max())
    evaluator = _CandidateEvaluator(dataset, config, constants)
    order, peaks, reduction, t_ret = [], [], [], []
    chosen: set[int] = set()
    while remaining:
        best_id, best_peak = None, np.inf
        for mid in remaining:
            p = evaluator.peak(chosen | {mid})
            if p < best_peak:
                best_id, best_peak = mid, p
        chosen.add(best_id)
        remaining.remove(best_id)
        order.append(best_id)
        outcome = apply_strategy(dataset, config, chosen, constants).dataset
        peak = float(aggregate_flow(outcome).max())
        peaks.append(peak)
        reduction.append(peak_reduction_from_peaks(baseline, peak))
        t_ret.append(weighted_return_temperature(outcome))
    return GreedyCurve(order, reduction, baseline, peaks, t_ret)

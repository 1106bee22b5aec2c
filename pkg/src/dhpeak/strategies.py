"""Peak-flow reduction strategies.

Each strategy maps a :class:`~dhpeak.core.Dataset` to a
:class:`~dhpeak.core.StrategyOutcome`. Meters outside ``included`` are
passed through untouched (the very same :class:`MeterSeries` objects).

* load shifting: per-day min-max LP on the aggregate flow, then a second LP
  picking the least total shifting among the peak-optimal solutions;
* return-temperature limitation: clip return temperatures to the
  contractual limit and recompute flows for unchanged heat;
* flow-rate limitation: cap each meter at a fraction of its yearly peak and
  recover the missed heat within 24 hours.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import lp
from .core import (
    HOURS_PER_DAY,
    Constants,
    Dataset,
    MeterSeries,
    StrategyKind,
    StrategyOutcome,
)


class StrategyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration and naming

@dataclass(frozen=True)
class StrategyConfig:
    """One strategy stage: ``kind`` is ``"ls"``, ``"tl"`` or ``"fl"``."""

    kind: str
    level: float | None = None

    def __post_init__(self):
        if self.kind not in ("ls", "tl", "fl"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "tl":
            if self.level is not None:
                raise ValueError("tl takes no level")
        elif self.level is None or not 0 <= self.level < 1:
            raise ValueError(f"{self.kind} needs a level in [0, 1), got {self.level}")

    @property
    def name(self) -> str:
        if self.kind == "tl":
            return "tl"
        pct = self.level * 100
        return f"{self.kind}{int(round(pct))}" if abs(pct - round(pct)) < 1e-9 else f"{self.kind}{pct:g}"


def parse_chain(name: str, alpha: float | None = None, beta: float | None = None) -> list[StrategyConfig]:
    """Parse a scenario name such as ``"tl+ls20"`` into strategy stages.

    ``"original"`` (or an empty string) is the empty chain. A bare ``ls`` or
    ``fl`` takes its level from ``alpha`` / ``beta``.
    """
    name = name.strip().lower()
    if name in ("", "original", "identity"):
        return []
    stages = []
    for part in name.split("+"):
        m = re.fullmatch(r"(ls|fl|tl)(\d+(?:\.\d+)?)?", part.strip())
        if not m:
            raise ValueError(f"cannot parse strategy {part!r}")
        kind, pct = m.group(1), m.group(2)
        if kind == "tl":
            if pct is not None:
                raise ValueError("tl takes no level")
            stages.append(StrategyConfig("tl"))
            continue
        if pct is not None:
            level = float(pct) / 100
        else:
            level = alpha if kind == "ls" else beta
            if level is None:
                raise ValueError(f"{kind} needs a level (e.g. {kind}20 or --{'alpha' if kind == 'ls' else 'beta'})")
        stages.append(StrategyConfig(kind, level))
    return stages


def chain_name(stages: Sequence[StrategyConfig]) -> str:
    return "+".join(s.name for s in stages) if stages else "original"


def _included_set(dataset: Dataset, included: Iterable[int] | None) -> frozenset[int]:
    if included is None:
        return frozenset(dataset.meter_ids)
    inc = frozenset(included)
    unknown = inc - set(dataset.meter_ids)
    if unknown:
        raise ValueError(f"unknown meter ids: {sorted(unknown)}")
    return inc


def _replace_rows(dataset: Dataset, changes: dict[int, MeterSeries]) -> Dataset:
    return dataset.with_meters(changes.get(m.meter_id, m) for m in dataset.meters)


def _with_flow(series: MeterSeries, new_flow: np.ndarray, constants: Constants) -> MeterSeries:
    """New flow; heat recomputed from the identity at hours whose flow changed."""
    changed = new_flow != series.flow
    if not changed.any():
        return series
    heat = np.where(changed, constants.rho_cp * series.delta_t * new_flow, series.heat)
    return series.with_values(flow=new_flow, heat=heat)


# ---------------------------------------------------------------------------
# load shifting

@dataclass(frozen=True, eq=False)
class ShiftSolution:
    delta: np.ndarray  # (consumers, hours)
    peak_flow: float
    total_shift: float


def _active_cells(flow: np.ndarray, mask: np.ndarray):
    # Cells whose δ can move anything; zero-flow cells keep δ = 1.
    active = (flow > 0) & mask[:, None]
    return np.nonzero(active)


def _heat_rows(flow, delta_t, rows_idx, cols_idx, n_consumers):
    """Per-consumer daily-heat rows over active cells, each scaled to max 1."""
    weights = flow[rows_idx, cols_idx] * np.maximum(delta_t[rows_idx, cols_idx], 0.0)
    rows = []
    for i in range(n_consumers):
        sel = rows_idx == i
        if not sel.any():
            continue
        w = np.where(sel, weights, 0.0)
        wmax = w.max()
        if wmax > 0:
            rows.append(w / wmax)
    return np.array(rows).reshape(len(rows), rows_idx.size)


def _stage_one(flow, delta_t, alpha, mask, tol):
    n, hours = flow.shape
    ri, ci = _active_cells(flow, mask)
    k = ri.size
    base = flow.sum(axis=0) - np.bincount(ci, weights=flow[ri, ci], minlength=hours)

    peak_rows = np.zeros((hours, k + 1))
    peak_rows[ci, np.arange(k)] = flow[ri, ci]
    peak_rows[:, k] = -1.0
    heat = _heat_rows(flow, delta_t, ri, ci, n)
    heat_full = np.hstack([heat, np.zeros((heat.shape[0], 1))])
    a = np.vstack([peak_rows, heat_full])
    rel = (lp.LE,) * hours + (lp.EQ,) * heat.shape[0]
    rhs = np.concatenate([-base, heat.sum(axis=1)])
    c = np.zeros(k + 1)
    c[k] = 1.0
    lower = np.concatenate([np.full(k, 1 - alpha), [0.0]])
    upper = np.concatenate([np.full(k, 1 + alpha), [np.inf]])
    sol = lp.solve(lp.LinearProgram(c, a, rel, rhs, lower, upper), tol=tol)
    if not sol.optimal:
        raise StrategyError(f"peak-minimisation LP returned {sol.status.value}")
    return sol.objective_value, (ri, ci), heat, base


def shift_loads_day(
    flow,
    delta_t,
    alpha: float,
    included=None,
    tol: float = 1e-9,
) -> ShiftSolution:
    """Shift factors for one day (any horizon length works).

    ``flow`` and ``delta_t`` have shape (consumers, hours). ``included`` is a
    boolean mask over consumers (default: all). Hours with ΔT <= 0 carry no
    weight in the daily-heat constraint.
    """
    flow = np.asarray(flow, dtype=float)
    delta_t = np.asarray(delta_t, dtype=float)
    if flow.ndim != 2 or flow.shape != delta_t.shape:
        raise ValueError("flow and delta_t must be 2-D arrays of equal shape")
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    n, hours = flow.shape
    mask = np.ones(n, dtype=bool) if included is None else np.asarray(included, dtype=bool)
    delta = np.ones_like(flow)
    original_peak = float(flow.sum(axis=0).max()) if n else 0.0
    if alpha == 0 or not ((flow > 0) & mask[:, None]).any():
        return ShiftSolution(delta, original_peak, 0.0)

    v_star, (ri, ci), heat, base = _stage_one(flow, delta_t, alpha, mask, tol)
    k = ri.size

    # Least total shifting with δ = 1 + p − q, p, q ∈ [0, α], peak ≤ V*.
    agg = flow.sum(axis=0)
    v = flow[ri, ci]
    peak = np.zeros((hours, k))
    peak[ci, np.arange(k)] = v
    a = np.vstack([np.hstack([peak, -peak]), np.hstack([heat, -heat])])
    slack = 1e-12 * max(1.0, v_star)
    rhs = np.concatenate([v_star + slack - agg, np.zeros(heat.shape[0])])
    rel = (lp.LE,) * hours + (lp.EQ,) * heat.shape[0]
    sol = lp.solve(
        lp.LinearProgram(np.ones(2 * k), a, rel, rhs, np.zeros(2 * k), np.full(2 * k, alpha)),
        tol=tol,
    )
    if not sol.optimal:
        raise StrategyError(f"least-shift LP returned {sol.status.value}")
    p = np.clip(sol.x[:k], 0.0, alpha)
    q = np.clip(sol.x[k:], 0.0, alpha)
    delta[ri, ci] = 1.0 + p - q
    return ShiftSolution(delta, float(v_star), float(np.abs(delta - 1.0).sum()))


def _day_slices(hours: int, day_length: int):
    if hours % day_length:
        raise ValueError(f"{hours} hours is not a whole number of {day_length}-hour days")
    return [slice(d * day_length, (d + 1) * day_length) for d in range(hours // day_length)]


def apply_load_shifting(
    dataset: Dataset,
    alpha: float,
    included: Iterable[int] | None = None,
    constants: Constants = Constants(),
    day_length: int = HOURS_PER_DAY,
) -> StrategyOutcome:
    """Coordinated load shifting, solved independently for each day."""
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    inc = _included_set(dataset, included)
    days = _day_slices(dataset.hours, day_length)
    if alpha == 0 or not inc:
        return StrategyOutcome(dataset, StrategyKind.LOAD_SHIFT, inc, alpha=alpha)
    flow, dt = dataset.flow, dataset.delta_t
    mask = np.array([mid in inc for mid in dataset.meter_ids])
    delta = np.ones_like(flow)
    for day in days:
        delta[:, day] = shift_loads_day(flow[:, day], dt[:, day], alpha, mask).delta
    new_flow = delta * flow
    changes = {}
    for row, series in enumerate(dataset.meters):
        if mask[row]:
            changes[series.meter_id] = _with_flow(series, new_flow[row], constants)
    return StrategyOutcome(_replace_rows(dataset, changes), StrategyKind.LOAD_SHIFT, inc, alpha=alpha)


def load_shift_peak(
    dataset: Dataset,
    alpha: float,
    included: Iterable[int] | None = None,
    day_length: int = HOURS_PER_DAY,
    tol: float = 1e-9,
) -> float:
    """Yearly aggregate peak after load shifting, from the peak LP alone.

    Days are visited in order of decreasing original peak; a day's optimum
    never exceeds its original peak, so the scan stops once no remaining day
    can beat the running maximum.
    """
    inc = _included_set(dataset, included)
    days = _day_slices(dataset.hours, day_length)
    agg = dataset.flow.sum(axis=0) if len(dataset) else np.zeros(dataset.hours)
    if not days:
        return 0.0
    day_peaks = np.array([agg[d].max() for d in days])
    if alpha == 0 or not inc:
        return float(day_peaks.max())
    flow, dt = dataset.flow, dataset.delta_t
    mask = np.array([mid in inc for mid in dataset.meter_ids])
    best = -np.inf
    for d in np.argsort(-day_peaks, kind="stable"):
        if day_peaks[d] <= best:
            break
        day = days[d]
        if not ((flow[:, day] > 0) & mask[:, None]).any():
            best = max(best, day_peaks[d])
            continue
        v_star = _stage_one(flow[:, day], dt[:, day], alpha, mask, tol)[0]
        best = max(best, v_star)
    return float(best)


# ---------------------------------------------------------------------------
# return-temperature limitation

def limit_return_temperature(
    dataset: Dataset,
    included: Iterable[int] | None = None,
    constants: Constants = Constants(),
) -> StrategyOutcome:
    """Clip return temperatures to each meter's limit at constant heat.

    Hours where the clipped ΔT would not exceed ``delta_t_threshold`` are
    left as they are.
    """
    inc = _included_set(dataset, included)
    changes = {}
    for series in dataset.meters:
        if series.meter_id not in inc:
            continue
        limit = dataset.metas[series.meter_id].t_rl_limit
        t_rl = np.minimum(series.t_return, limit)
        dt_new = series.t_supply - t_rl
        alter = (series.t_return > limit) & (dt_new > constants.delta_t_threshold)
        if not alter.any():
            continue
        safe_dt = np.where(alter, dt_new, 1.0)
        flow = np.where(alter, series.heat / (constants.rho_cp * safe_dt), series.flow)
        changes[series.meter_id] = series.with_values(
            flow=flow, t_return=np.where(alter, t_rl, series.t_return)
        )
    return StrategyOutcome(_replace_rows(dataset, changes), StrategyKind.RETURN_TEMP_LIMIT, inc)


# ---------------------------------------------------------------------------
# flow-rate limitation

class DeficitLedger:
    """Unmet heat (kWh) from the last 24 hours; ``slots[h]`` is h+1 hours old."""

    horizon = 24

    def __init__(self):
        self.slots: deque[float] = deque(maxlen=self.horizon)
        self.expired = 0.0

    def push(self, deficit: float):
        """Close the current hour, recording its deficit (0 if none)."""
        if len(self.slots) == self.horizon:
            self.expired += self.slots[-1]
        self.slots.appendleft(deficit)

    def total(self) -> float:
        return sum(self.slots)

    def drain(self, amount: float):
        """Remove ``amount`` of compensated heat, oldest slot first."""
        for h in range(len(self.slots) - 1, -1, -1):
            if amount <= 0:
                break
            take = min(amount, self.slots[h])
            self.slots[h] -= take
            amount -= take


@dataclass(frozen=True, eq=False)
class FlowLimitTrace:
    flow: np.ndarray
    limit: float
    remaining: float  # heat still owed in the ledger after the last hour
    expired: float  # heat older than 24 h that was never recovered


def flow_limit_meter(flow, delta_t, beta: float, constants: Constants = Constants()) -> FlowLimitTrace:
    """Run the capped-flow/compensation loop for one meter."""
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    flow = np.asarray(flow, dtype=float)
    delta_t = np.asarray(delta_t, dtype=float)
    limit = (1 - beta) * float(flow.max()) if flow.size else 0.0
    rho_cp = constants.rho_cp
    threshold = constants.delta_t_threshold
    new = flow.copy()
    ledger = DeficitLedger()
    for t in range(flow.size):
        v = flow[t]
        deficit = 0.0
        if v > limit:
            new[t] = limit
            deficit = max((v - limit) * rho_cp * delta_t[t], 0.0)
        elif delta_t[t] >= threshold:
            owed = ledger.total()
            if owed > 0:
                v_comp = min(owed / (rho_cp * delta_t[t]), limit - v)
                if v_comp > 0:
                    new[t] = v + v_comp
                    ledger.drain(v_comp * rho_cp * delta_t[t])
        ledger.push(deficit)
    return FlowLimitTrace(new, limit, ledger.total(), ledger.expired)


def limit_flow_rate(
    dataset: Dataset,
    beta: float,
    included: Iterable[int] | None = None,
    constants: Constants = Constants(),
) -> StrategyOutcome:
    """Cap each included meter at ``(1 - beta)`` of its own yearly peak flow."""
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    inc = _included_set(dataset, included)
    changes = {}
    if beta > 0:
        for series in dataset.meters:
            if series.meter_id in inc:
                trace = flow_limit_meter(series.flow, series.delta_t, beta, constants)
                changes[series.meter_id] = _with_flow(series, trace.flow, constants)
    return StrategyOutcome(_replace_rows(dataset, changes), StrategyKind.FLOW_LIMIT, inc, beta=beta)


# ---------------------------------------------------------------------------
# dispatch and composition

def apply_strategy(
    dataset: Dataset,
    config: StrategyConfig,
    included: Iterable[int] | None = None,
    constants: Constants = Constants(),
) -> StrategyOutcome:
    if config.kind == "ls":
        return apply_load_shifting(dataset, config.level, included, constants)
    if config.kind == "tl":
        return limit_return_temperature(dataset, included, constants)
    return limit_flow_rate(dataset, config.level, included, constants)


def compose(
    dataset: Dataset,
    stages: Sequence[StrategyConfig],
    constants: Constants = Constants(),
    included: Iterable[int] | None = None,
) -> StrategyOutcome:
    """Apply ``stages`` left to right, each on the previous stage's output."""
    inc = _included_set(dataset, included)
    current = dataset
    alpha = beta = None
    for stage in stages:
        current = apply_strategy(current, stage, inc, constants).dataset
        if stage.kind == "ls":
            alpha = stage.level
        elif stage.kind == "fl":
            beta = stage.level
    if not stages:
        kind = StrategyKind.IDENTITY
    elif len(stages) == 1:
        kind = {"ls": StrategyKind.LOAD_SHIFT, "tl": StrategyKind.RETURN_TEMP_LIMIT, "fl": StrategyKind.FLOW_LIMIT}[
            stages[0].kind
        ]
    else:
        kind = StrategyKind.COMPOSITE
    return StrategyOutcome(current, kind, inc, alpha=alpha, beta=beta, chain=tuple(s.name for s in stages))

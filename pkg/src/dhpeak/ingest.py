"""Read, gap-fill and validate meter CSV data.

Meter CSV (UTF-8, header required)::

    meter_id,hour,flow_m3h,t_supply_c,t_return_c,heat_kw

An empty cell is a gap; ``hour`` is a 0-based integer. Hours missing from
the file altogether count as gaps in all four series.

Meta CSV::

    meter_id,q_max_kw,q_mean_kw,t_rl_mean_c,t_rl_max_c,t_rl_limit_c,consumer_type

Floats are written with ``repr`` so parse/serialize round-trips are exact.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .core import HOURS_PER_DAY, ConsumerType, Constants, Dataset, MeterMeta, MeterSeries

METER_HEADER = ["meter_id", "hour", "flow_m3h", "t_supply_c", "t_return_c", "heat_kw"]
META_HEADER = ["meter_id", "q_max_kw", "q_mean_kw", "t_rl_mean_c", "t_rl_max_c", "t_rl_limit_c", "consumer_type"]


class IngestError(ValueError):
    pass


class ParseError(IngestError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class DuplicateRow(IngestError):
    def __init__(self, meter_id: int, hour: int, line: int):
        super().__init__(f"line {line}: duplicate row for meter {meter_id}, hour {hour}")
        self.meter_id, self.hour, self.line = meter_id, hour, line


class BadHorizon(IngestError):
    pass


class MissingMeta(IngestError):
    def __init__(self, meter_id: int):
        super().__init__(f"meter {meter_id} has no row in the meta CSV")
        self.meter_id = meter_id


class UnfillableSeries(IngestError):
    def __init__(self, meter_id: int, series: str):
        super().__init__(f"meter {meter_id}: {series} series is entirely gaps")
        self.meter_id = meter_id


@dataclass
class MeterReport:
    gaps_filled: int = 0
    violations: int = 0
    max_rel_error: float = 0.0
    violation_hours: list[int] = field(default_factory=list)


@dataclass
class ValidationReport:
    meters: dict[int, MeterReport]

    @property
    def passed(self) -> bool:
        return all(r.violations == 0 for r in self.meters.values())

    @property
    def total_violations(self) -> int:
        return sum(r.violations for r in self.meters.values())

    def summary(self) -> str:
        lines = [f"{'meter':>6} {'gaps':>6} {'viol':>6} {'max_rel_err':>12}"]
        for mid, r in self.meters.items():
            lines.append(f"{mid:>6} {r.gaps_filled:>6} {r.violations:>6} {r.max_rel_error:>12.3e}")
        lines.append("PASS" if self.passed else f"FAIL ({self.total_violations} violations)")
        return "\n".join(lines)


def _text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8-sig")
    return data


def _float_or_gap(cell: str, line: int) -> float:
    cell = cell.strip()
    if cell == "":
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise ParseError(line, f"not a number: {cell!r}") from None


def _int(cell: str, line: int, what: str) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise ParseError(line, f"bad {what}: {cell!r}") from None


def parse_meta(meta_csv: bytes | str) -> dict[int, MeterMeta]:
    reader = csv.reader(io.StringIO(_text(meta_csv)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != META_HEADER:
        raise ParseError(1, f"meta header must be {','.join(META_HEADER)}")
    metas = {}
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(META_HEADER):
            raise ParseError(line, f"expected {len(META_HEADER)} fields, got {len(row)}")
        mid = _int(row[0], line, "meter_id")
        vals = [_float_or_gap(c, line) for c in row[1:6]]
        if any(np.isnan(v) for v in vals):
            raise ParseError(line, "meta rows may not have empty cells")
        try:
            ctype = ConsumerType(row[6].strip().lower())
            meta = MeterMeta(mid, *vals, consumer_type=ctype)
        except ValueError as exc:
            raise ParseError(line, str(exc)) from None
        if mid in metas:
            raise ParseError(line, f"duplicate meta row for meter {mid}")
        metas[mid] = meta
    return metas


def parse_dataset(meter_csv: bytes | str, meta_csv: bytes | str) -> Dataset:
    """Parse meter and meta CSVs into a :class:`Dataset` (gaps as NaN)."""
    metas = parse_meta(meta_csv)
    reader = csv.reader(io.StringIO(_text(meter_csv)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != METER_HEADER:
        raise ParseError(1, f"meter header must be {','.join(METER_HEADER)}")
    rows: dict[int, dict[int, tuple]] = {}
    max_hour = -1
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(METER_HEADER):
            raise ParseError(line, f"expected {len(METER_HEADER)} fields, got {len(row)}")
        mid = _int(row[0], line, "meter_id")
        hour = _int(row[1], line, "hour")
        if hour < 0:
            raise ParseError(line, f"negative hour {hour}")
        values = tuple(_float_or_gap(c, line) for c in row[2:])
        if not np.isnan(values[0]) and values[0] < 0:
            raise ParseError(line, f"negative flow {values[0]}")
        per_meter = rows.setdefault(mid, {})
        if hour in per_meter:
            raise DuplicateRow(mid, hour, line)
        per_meter[hour] = values
        max_hour = max(max_hour, hour)

    hours = max_hour + 1
    if hours == 0 or hours % HOURS_PER_DAY:
        raise BadHorizon(f"series length {hours} is not a positive multiple of {HOURS_PER_DAY}")
    meters = []
    for mid in sorted(rows):
        if mid not in metas:
            raise MissingMeta(mid)
        data = np.full((hours, 4), np.nan)
        for hour, values in rows[mid].items():
            data[hour] = values
        meters.append(MeterSeries(mid, data[:, 0], data[:, 1], data[:, 2], data[:, 3]))
    return Dataset(tuple(meters), {m.meter_id: metas[m.meter_id] for m in meters}, hours)


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def serialize_dataset(dataset: Dataset) -> bytes:
    """Meter CSV bytes for ``dataset`` (rows ordered by meter, then hour)."""
    buf = io.StringIO()
    buf.write(",".join(METER_HEADER) + "\n")
    for m in dataset.meters:
        for h in range(dataset.hours):
            buf.write(
                f"{m.meter_id},{h},{_fmt(m.flow[h])},{_fmt(m.t_supply[h])},"
                f"{_fmt(m.t_return[h])},{_fmt(m.heat[h])}\n"
            )
    return buf.getvalue().encode("utf-8")


def serialize_meta(dataset: Dataset) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(META_HEADER) + "\n")
    for mid in dataset.meter_ids:
        m = dataset.metas[mid]
        buf.write(
            f"{mid},{_fmt(m.q_max)},{_fmt(m.q_mean)},{_fmt(m.t_rl_mean)},{_fmt(m.t_rl_max)},"
            f"{_fmt(m.t_rl_limit)},{m.consumer_type.value}\n"
        )
    return buf.getvalue().encode("utf-8")


def _interpolate(values: np.ndarray) -> np.ndarray:
    """Linear interpolation over NaNs; edges take the nearest value."""
    gaps = np.isnan(values)
    if not gaps.any():
        return values
    idx = np.arange(values.size)
    return np.where(gaps, np.interp(idx, idx[~gaps], values[~gaps]), values)


def fill_gaps(dataset: Dataset, constants: Constants = Constants(), rel_tol: float = 0.02, abs_tol: float = 0.5):
    """Fill gaps and validate the result.

    Each series is interpolated linearly. Where exactly one of flow, ΔT and
    heat was missing in an hour, that quantity is derived from the other two
    through the heat identity instead (ΔT is restored through whichever
    temperature was missing). Non-gap values are never modified.

    Returns ``(filled_dataset, report)``.
    """
    rho_cp = constants.rho_cp
    filled = []
    gap_counts = {}
    for m in dataset.meters:
        raw = {name: np.array(getattr(m, name)) for name in ("flow", "t_supply", "t_return", "heat")}
        gaps = {name: np.isnan(v) for name, v in raw.items()}
        for name, g in gaps.items():
            if g.all():
                raise UnfillableSeries(m.meter_id, name)
        gap_counts[m.meter_id] = int(sum(g.sum() for g in gaps.values()))
        out = {name: _interpolate(v) for name, v in raw.items()}

        dt_gap = gaps["t_supply"] | gaps["t_return"]
        both_temps = gaps["t_supply"] & gaps["t_return"]
        heat_only = gaps["heat"] & ~gaps["flow"] & ~dt_gap
        out["heat"] = np.where(heat_only, rho_cp * (raw["t_supply"] - raw["t_return"]) * raw["flow"], out["heat"])

        dt_obs = raw["t_supply"] - raw["t_return"]
        flow_only = gaps["flow"] & ~gaps["heat"] & ~dt_gap & (dt_obs > constants.delta_t_threshold)
        with np.errstate(invalid="ignore", divide="ignore"):
            derived_flow = raw["heat"] / (rho_cp * dt_obs)
        flow_only &= derived_flow >= 0
        out["flow"] = np.where(flow_only, derived_flow, out["flow"])

        dt_only = dt_gap & ~both_temps & ~gaps["flow"] & ~gaps["heat"] & (raw["flow"] > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            derived_dt = raw["heat"] / (rho_cp * raw["flow"])
        ret_only = dt_only & gaps["t_return"]
        sup_only = dt_only & gaps["t_supply"]
        out["t_return"] = np.where(ret_only, raw["t_supply"] - derived_dt, out["t_return"])
        out["t_supply"] = np.where(sup_only, raw["t_return"] + derived_dt, out["t_supply"])

        # Any other gapped hour: make heat consistent with the filled flow and ΔT.
        other = gaps["heat"] & ~heat_only
        out["heat"] = np.where(other, rho_cp * (out["t_supply"] - out["t_return"]) * out["flow"], out["heat"])
        out["flow"] = np.maximum(out["flow"], 0.0)
        filled.append(m.with_values(**out))
    result = dataset.with_meters(filled)
    report = validate(result, constants, rel_tol, abs_tol)
    for mid, n in gap_counts.items():
        report.meters[mid].gaps_filled = n
    return result, report


def validate(dataset: Dataset, constants: Constants = Constants(), rel_tol: float = 0.02, abs_tol: float = 0.5) -> ValidationReport:
    """Check the heat identity and non-negative flow, hour by hour.

    An hour violates when ``|heat − ρ·cp·ΔT·flow| > max(abs_tol, rel_tol·|heat|)``,
    when flow is negative, when any value is missing, or when heat is
    positive with flow > 0 but ΔT <= 0.
    """
    meters = {}
    for m in dataset.meters:
        expected = constants.rho_cp * m.delta_t * m.flow
        err = np.abs(m.heat - expected)
        bad = err > np.maximum(abs_tol, rel_tol * np.abs(m.heat))
        bad |= m.flow < 0
        bad |= np.isnan(m.heat) | np.isnan(m.flow) | np.isnan(m.t_supply) | np.isnan(m.t_return)
        bad |= (m.flow > 0) & (m.delta_t <= 0) & (m.heat > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(m.heat != 0, err / np.abs(m.heat), np.where(err == 0, 0.0, np.inf))
        rel = rel[~np.isnan(rel)]
        meters[m.meter_id] = MeterReport(
            violations=int(bad.sum()),
            max_rel_error=float(rel.max()) if rel.size else 0.0,
            violation_hours=np.flatnonzero(bad).tolist(),
        )
    return ValidationReport(meters)

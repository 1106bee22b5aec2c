"""Deterministic synthetic meter data calibrated to a table of 18 substations.

Random numbers come from :class:`CounterRng`, a counter-based generator
built on the SplitMix64 finalizer, so that output depends only on
(seed, stream path, counter) and can be reproduced in any language:

    GOLDEN = 0x9E3779B97F4A7C15
    mix(z):  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
             return z ^ (z >> 31)                      (all mod 2^64)
    key(seed, path) = fold of  k <- mix(k ^ (GOLDEN * (p + 1)))  over path,
                      starting from k = mix(seed)
    draw(key, i)    = mix(key + GOLDEN * (i + 1))
    uniform(i)      = (draw >> 11) * 2^-53                  in [0, 1)
    normal(i)       = sqrt(-2 ln(1 - u(2i))) * cos(2π u(2i+1))

Model per meter (hour t, day d = t // 24, hour of day h = t % 24):

* outdoor temperature, shared by all meters: seasonal cosine with its
  minimum in late January, daily AR(1) weather noise, small diurnal swing;
* raw demand = (heating degrees + type base load) × daily shape × lognormal
  noise; the shape has a morning peak at a meter-specific hour in [5, 10],
  an evening peak for residential meters and an afternoon dip for the rest;
* heat = c · raw^γ with γ chosen by bisection so that max/mean matches
  the target and c so that the mean equals the target mean exactly;
* target means are q_mean, except that when ``top2_share`` is set the two
  largest consumers are raised, and all others lowered, by one common
  relative tilt (at most ``max_mean_tilt``) until the two take that share
  of the yearly heat; peaks stay at q_max;
* supply temperature follows the outdoor temperature inside the band;
* return temperature is AR(1) noise around t_rl_mean with, on 10 % of days,
  an excursion of 2-6 hours towards t_rl_max; it is clipped to t_rl_max and
  to at least ``min_delta_t`` below supply;
* flow = heat / (ρ·cp·ΔT), so the heat identity holds by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import HOURS_PER_DAY, ConsumerType, Constants, Dataset, MeterMeta, MeterSeries

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


class BadSpec(ValueError):
    pass


def _mix(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Counter-based stream: the i-th draw depends only on (seed, path, i)."""

    def __init__(self, seed: int, *path: int):
        key = _mix(np.array([seed & _MASK], dtype=np.uint64))
        for p in path:
            key = _mix(key ^ (np.array([(p + 1) & _MASK], dtype=np.uint64) * GOLDEN))
        self.key = key[0]
        self.counter = 0

    def _draw(self, n: int) -> np.ndarray:
        i = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        return _mix(self.key + GOLDEN * (i + np.uint64(1)))

    def uniform(self, n: int) -> np.ndarray:
        return (self._draw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n)
        return np.sqrt(-2.0 * np.log1p(-u[0::2])) * np.cos(2.0 * np.pi * u[1::2])

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """Integers in [low, high] inclusive."""
        return low + np.floor(self.uniform(n) * (high - low + 1)).astype(int)


_R, _C, _I = ConsumerType.RESIDENTIAL, ConsumerType.COMMERCIAL, ConsumerType.INDUSTRIAL

# meter_id, q_max kW, q_mean kW, T_RL mean, T_RL max, T_RL limit (°C), type
SUBSTATION_TABLE = [
    (1, 5356, 1276, 58.4, 66.9, 60, _I),
    (2, 4799, 953, 63.9, 74.6, 75, _I),
    (3, 2012, 890, 74.9, 94.0, 65, _C),
    (4, 1164, 210, 61.0, 67.0, 50, _C),
    (5, 590, 179, 59.5, 75.2, 65, _R),
    (6, 188, 50, 52.4, 93.4, 50, _R),
    (7, 174, 40, 53.0, 68.3, 50, _C),
    (8, 162, 51, 42.8, 64.3, 55, _R),
    (9, 111, 30, 60.2, 78.6, 50, _C),
    (10, 83, 27, 47.2, 62.6, 65, _R),
    (11, 60, 19, 47.2, 69.8, 65, _R),
    (12, 55, 14, 48.2, 61.2, 50, _R),
    (13, 45, 16, 70.6, 102.0, 50, _R),
    (14, 44, 10, 46.1, 55.9, 65, _R),
    (15, 38, 10, 53.7, 62.1, 50, _R),
    (16, 27, 8, 53.9, 93.1, 50, _R),
    (17, 19, 7, 46.5, 87.3, 50, _R),
    (18, 11, 2, 41.6, 87.0, 65, _C),
]


def substation_metas() -> list[MeterMeta]:
    return [MeterMeta(*row[:6], consumer_type=row[6]) for row in SUBSTATION_TABLE]


# Stream identifiers (second path element).
_WEATHER, _SHAPE, _NOISE, _SUPPLY, _RETURN, _EXCURSION = range(6)

_BASE_LOAD = {_R: 3.0, _C: 2.0, _I: 6.0}  # heating-degree equivalents


@dataclass(frozen=True)
class GenSpec:
    metas: tuple[MeterMeta, ...] = field(default_factory=lambda: tuple(substation_metas()))
    days: int = 365
    seed: int = 0
    supply_temp_band: tuple[float, float] = (75.0, 110.0)
    morning_peak_hours: tuple[int, int] = (5, 10)
    residential_evening_peak: bool = True
    excursion_probability: float = 0.1
    min_delta_t: float = 20.0
    top2_share: float | None = 0.605
    max_mean_tilt: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "metas", tuple(self.metas))
        if self.days < 1:
            raise BadSpec("days must be at least 1")
        lo, hi = self.supply_temp_band
        if not lo < hi:
            raise BadSpec("supply band needs min < max")
        if not 0 <= self.seed <= _MASK:
            raise BadSpec("seed must be an unsigned 64-bit integer")
        if not self.metas:
            raise BadSpec("need at least one meter")
        if self.top2_share is not None and not 0 < self.top2_share < 1:
            raise BadSpec("top2_share must lie in (0, 1)")
        if not 0 <= self.max_mean_tilt < 1:
            raise BadSpec("max_mean_tilt must lie in [0, 1)")


def _outdoor_temperature(spec: GenSpec) -> np.ndarray:
    rng = CounterRng(spec.seed, 0, _WEATHER)
    days = spec.days
    eps = rng.normal(days)
    weather = np.empty(days)
    state = 0.0
    for d in range(days):
        state = 0.8 * state + 0.6 * 3.0 * eps[d]
        weather[d] = state
    t = np.arange(days * HOURS_PER_DAY)
    d, h = t // HOURS_PER_DAY, t % HOURS_PER_DAY
    seasonal = 9.0 - 11.0 * np.cos(2 * np.pi * (d - 20) / 365.0)
    diurnal = -2.0 * np.cos(2 * np.pi * (h - 15) / 24.0)
    return seasonal + weather[d] + diurnal


def _gauss(h, centre, width):
    return np.exp(-0.5 * ((h - centre) / width) ** 2)


def _daily_shape(meta: MeterMeta, spec: GenSpec) -> np.ndarray:
    rng = CounterRng(spec.seed, meta.meter_id, _SHAPE)
    lo, hi = spec.morning_peak_hours
    morning = int(rng.integers(lo, hi, 1)[0])
    amp = 0.6 + 0.6 * rng.uniform(1)[0]
    h = np.arange(HOURS_PER_DAY, dtype=float)
    shape = 1.0 + amp * _gauss(h, morning, 1.5)
    if meta.consumer_type is _R:
        if spec.residential_evening_peak:
            shape += 0.5 * amp * _gauss(h, 19.0, 1.5)
        shape -= 0.25 * ((h < 5) | (h >= 23))
    else:
        shape -= 0.35 * _gauss(h, 15.0, 2.5)
    return shape


def _calibrate(raw: np.ndarray, q_mean: float, q_max: float) -> np.ndarray:
    """``c · raw^γ`` with mean q_mean and max/mean = q_max/q_mean."""
    if q_mean == 0:
        if q_max > 0:
            raise BadSpec("q_mean = 0 with q_max > 0 is not attainable")
        return np.zeros_like(raw)
    target = q_max / q_mean
    x = raw / raw.max()

    def ratio(g):
        y = x**g
        return 1.0 / y.mean()

    lo, hi = 0.0, 1.0
    while ratio(hi) < target:
        hi *= 2
        if hi > 1e4:
            raise BadSpec("cannot reach the requested peak-to-mean ratio")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ratio(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    y = x ** (0.5 * (lo + hi))
    return y * (q_mean / y.mean())


def mean_targets(spec: GenSpec) -> dict[int, float]:
    """Yearly mean heat each meter is calibrated to."""
    means = {m.meter_id: float(m.q_mean) for m in spec.metas}
    if spec.top2_share is None or len(means) < 3:
        return means
    order = sorted(means, key=lambda mid: -means[mid])
    top = sum(means[mid] for mid in order[:2])
    rest = sum(means[mid] for mid in order[2:])
    s = spec.top2_share
    if top + rest == 0 or top / (top + rest) >= s:
        return means
    # top·(1+e)·(1−s) = s·rest·(1−e)
    tilt = (s * rest - (1 - s) * top) / ((1 - s) * top + s * rest)
    tilt = min(tilt, spec.max_mean_tilt)
    caps = {m.meter_id: float(m.q_max) for m in spec.metas}
    out = {}
    for k, mid in enumerate(order):
        factor = 1 + tilt if k < 2 else 1 - tilt
        out[mid] = min(means[mid] * factor, caps[mid])
    return out


def _meter_series(
    meta: MeterMeta, spec: GenSpec, t_out: np.ndarray, constants: Constants, q_mean: float
) -> MeterSeries:
    n = spec.days * HOURS_PER_DAY
    t = np.arange(n)
    hour = t % HOURS_PER_DAY
    ctype = meta.consumer_type

    noise = CounterRng(spec.seed, meta.meter_id, _NOISE).normal(n)
    sigma = 0.15
    degrees = np.maximum(0.0, 17.0 - t_out)
    raw = (degrees + _BASE_LOAD[ctype]) * _daily_shape(meta, spec)[hour] * np.exp(sigma * noise - 0.5 * sigma**2)
    heat = _calibrate(raw, q_mean, meta.q_max)

    lo, hi = spec.supply_temp_band
    sup_rng = CounterRng(spec.seed, meta.meter_id, _SUPPLY)
    drop = 0.5 + 1.5 * sup_rng.uniform(1)[0]
    t_sl = lo + (hi - lo) * np.clip((15.0 - t_out) / 30.0, 0.0, 1.0) - drop + 0.5 * sup_rng.normal(n)
    t_sl = np.clip(t_sl, lo, hi)

    ret_rng = CounterRng(spec.seed, meta.meter_id, _RETURN)
    eps = ret_rng.normal(n)
    spread = max(meta.t_rl_max - meta.t_rl_mean, 0.5) / 4.0
    phi = 0.9
    innov = math.sqrt(1 - phi**2) * spread
    ar = np.empty(n)
    state = 0.0
    for i in range(n):
        state = phi * state + innov * eps[i]
        ar[i] = state
    t_rl = meta.t_rl_mean + ar

    exc_rng = CounterRng(spec.seed, meta.meter_id, _EXCURSION)
    u = exc_rng.uniform(3 * spec.days).reshape(spec.days, 3)
    for d in np.flatnonzero(u[:, 0] < spec.excursion_probability):
        start = d * HOURS_PER_DAY + int(u[d, 1] * HOURS_PER_DAY)
        length = 2 + int(u[d, 2] * 5)
        stop = min(start + length, n)
        w = np.linspace(0.6, 1.0, stop - start)
        t_rl[start:stop] += w * (meta.t_rl_max - t_rl[start:stop])

    t_rl = np.minimum(np.minimum(t_rl, meta.t_rl_max), t_sl - spec.min_delta_t)
    flow = heat / (constants.rho_cp * (t_sl - t_rl))
    return MeterSeries(meta.meter_id, flow, t_sl, t_rl, heat)


def generate(spec: GenSpec = GenSpec(), constants: Constants = Constants()) -> Dataset:
    """Synthetic dataset for ``spec``; identical specs give identical data."""
    for meta in spec.metas:
        if meta.q_mean > meta.q_max:
            raise BadSpec(f"meter {meta.meter_id}: q_mean > q_max")
    t_out = _outdoor_temperature(spec)
    targets = mean_targets(spec)
    meters = tuple(_meter_series(meta, spec, t_out, constants, targets[meta.meter_id]) for meta in spec.metas)
    return Dataset(meters, {m.meter_id: m for m in spec.metas}, spec.days * HOURS_PER_DAY)

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from dhpeak.core import ConsumerType, Constants, Dataset, MeterMeta, MeterSeries, StrategyKind, aggregate_flow
from dhpeak.metrics import heat_deficit
from dhpeak.strategies import (
    DeficitLedger,
    StrategyConfig,
    apply_load_shifting,
    chain_name,
    compose,
    flow_limit_meter,
    limit_flow_rate,
    limit_return_temperature,
    load_shift_peak,
    parse_chain,
    shift_loads_day,
)

from oracles import epigraph_peak, flow_limit_reference, make_dataset

C = Constants.with_rho_cp(1.16)


# ---------------------------------------------------------------------------
# hand traces

def test_ls_flattens_two_hours():
    sol = shift_loads_day([[12.0, 8.0]], [[1.0, 1.0]], 0.2)
    assert sol.peak_flow == pytest.approx(10.4, abs=1e-9)
    np.testing.assert_allclose(sol.delta[0], [10.4 / 12, 1.2], atol=1e-9)
    assert sol.delta[0, 0] == pytest.approx(0.8667, abs=5e-5)


def test_ls_identical_consumers_need_no_shift():
    sol = shift_loads_day([[10.0, 10.0], [10.0, 10.0]], np.ones((2, 2)), 0.5)
    assert sol.peak_flow == pytest.approx(20.0, abs=1e-9)
    np.testing.assert_allclose(sol.delta, 1.0, atol=1e-12)
    assert sol.total_shift == pytest.approx(0.0, abs=1e-9)


def test_ls_alpha_zero_is_identity():
    flow = np.array([[3.0, 9.0, 1.0]])
    sol = shift_loads_day(flow, np.ones_like(flow), 0.0)
    assert (sol.delta == 1).all()
    assert sol.peak_flow == 9.0


def test_ls_dataset_hand_trace():
    ds = make_dataset([[12.0, 8.0]])
    out = apply_load_shifting(ds, 0.2, constants=C, day_length=2).dataset
    np.testing.assert_allclose(out.flow[0], [10.4, 9.6], atol=1e-9)
    padded = make_dataset([[12.0, 8.0] + [0.0] * 22])
    out = apply_load_shifting(padded, 0.2, constants=C).dataset
    np.testing.assert_allclose(out.flow[0, :2], [10.4, 9.6], atol=1e-9)
    assert (out.flow[0, 2:] == 0).all()


def test_ls_trivial_cases_return_input():
    ds = make_dataset([[12.0, 8.0] * 12])
    assert apply_load_shifting(ds, 0.0, constants=C).dataset.equals(ds)
    assert apply_load_shifting(ds, 0.3, included=[], constants=C).dataset.equals(ds)


def test_ls_rejects_partial_days():
    with pytest.raises(ValueError):
        apply_load_shifting(make_dataset([[1.0] * 25]), 0.1)


def test_tl_example():
    q = 100.0
    v = q / (1.16 * 15)
    meter = MeterSeries(1, [v], [90.0], [75.0], [q])
    meta = MeterMeta(1, q, q, 75.0, 75.0, 65.0, ConsumerType.COMMERCIAL)
    out = limit_return_temperature(Dataset((meter,), {1: meta}, 1), constants=C).dataset
    assert v == pytest.approx(5.747, abs=5e-4)
    assert out.flow[0, 0] == pytest.approx(3.448, abs=5e-4)
    assert out.flow[0, 0] / v == pytest.approx(0.6, rel=1e-12)
    assert out.t_return[0, 0] == 65.0
    assert out.heat[0, 0] == q


def test_tl_leaves_cool_hours_alone():
    ds = make_dataset([[4.0, 4.0]], delta_t=20.0, t_return=55.0, limits=[65.0])
    out = limit_return_temperature(ds, constants=C).dataset
    assert out.equals(ds)


def test_fl_hand_trace():
    trace = flow_limit_meter([10.0, 5.0, 5.0], [2.0, 2.0, 2.0], 0.2, C)
    np.testing.assert_allclose(trace.flow, [8.0, 7.0, 5.0], atol=1e-9)
    assert trace.limit == pytest.approx(8.0)
    assert trace.remaining == pytest.approx(0.0, abs=1e-9)
    ds = make_dataset([[10.0, 5.0, 5.0]], delta_t=2.0)
    assert heat_deficit(ds, limit_flow_rate(ds, 0.2, constants=C).dataset) == pytest.approx(0.0, abs=1e-12)


def test_fl_creates_a_higher_aggregate_peak():
    ds = make_dataset([[10.0, 4.0], [2.0, 8.0]])
    out = limit_flow_rate(ds, 0.2, included=[1], constants=C).dataset
    np.testing.assert_allclose(aggregate_flow(out), [10.0, 14.0], atol=1e-9)
    assert aggregate_flow(ds).max() == 12.0


def test_fl_beta_zero_is_identity():
    ds = make_dataset([[10.0, 4.0], [2.0, 8.0]])
    assert limit_flow_rate(ds, 0.0, constants=C).dataset.equals(ds)


def test_fl_blocked_compensation_leaves_deficit():
    # after the peak the meter runs at the limit, so nothing can be made up
    flow = [10.0] + [8.0] * 30
    trace = flow_limit_meter(flow, [1.0] * 31, 0.2, C)
    lost = 2.0 * 1.16
    assert trace.remaining + trace.expired == pytest.approx(lost)
    ds = make_dataset([flow])
    out = limit_flow_rate(ds, 0.2, constants=C).dataset
    assert heat_deficit(ds, out) == pytest.approx(lost / ds.heat.sum(), rel=1e-9)
    assert heat_deficit(ds, out) > 0


def test_fl_skips_compensation_at_small_delta_t():
    trace = flow_limit_meter([10.0, 5.0, 5.0], [2.0, 0.5, 2.0], 0.2, C)
    np.testing.assert_allclose(trace.flow, [8.0, 5.0, 7.0], atol=1e-9)


def test_ledger_discards_entries_after_a_day():
    ledger = DeficitLedger()
    ledger.push(5.0)
    for _ in range(23):
        ledger.push(0.0)
    assert ledger.total() == 5.0 and ledger.expired == 0.0
    ledger.push(0.0)
    assert ledger.total() == 0.0 and ledger.expired == 5.0


def test_ledger_drains_oldest_first():
    ledger = DeficitLedger()
    ledger.push(1.0)
    ledger.push(2.0)
    ledger.drain(1.5)
    assert list(ledger.slots) == [1.5, 0.0]


# ---------------------------------------------------------------------------
# load-shifting properties

flows = st.floats(0, 50, allow_nan=False)
dts = st.floats(-2, 40, allow_nan=False)


@st.composite
def day_instances(draw, max_consumers=3, hours=24):
    n = draw(st.integers(1, max_consumers))
    flow = np.array(draw(st.lists(st.lists(flows, min_size=hours, max_size=hours), min_size=n, max_size=n)))
    dt = np.array(draw(st.lists(st.lists(dts, min_size=hours, max_size=hours), min_size=n, max_size=n)))
    mask = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    alpha = draw(st.sampled_from([0.05, 0.1, 0.2, 0.5, 0.9]))
    return flow, dt, mask, alpha


@given(day_instances())
def test_ls_day_properties(inst):
    flow, dt, mask, alpha = inst
    sol = shift_loads_day(flow, dt, alpha, mask)
    d = sol.delta
    assert (d >= 1 - alpha - 1e-9).all() and (d <= 1 + alpha + 1e-9).all()
    assert (d[~mask] == 1).all()
    assert (d[flow == 0] == 1).all()
    w = flow * np.where(dt > 0, dt, 0)
    for i in range(len(flow)):
        before, after = w[i].sum(), (d[i] * w[i]).sum()
        assert after == pytest.approx(before, rel=1e-6, abs=1e-6)
    agg_before = flow.sum(axis=0).max()
    agg_after = (d * flow).sum(axis=0).max()
    assert agg_after <= agg_before * (1 + 1e-9) + 1e-9
    assert agg_after == pytest.approx(sol.peak_flow, rel=1e-7, abs=1e-7)


@given(day_instances())
def test_ls_peak_matches_epigraph_oracle(inst):
    flow, dt, mask, alpha = inst
    assume(((flow > 0) & mask[:, None]).any())
    ours = shift_loads_day(flow, dt, alpha, mask).peak_flow
    ref = epigraph_peak(flow, dt, alpha, mask)
    assert ours == pytest.approx(ref, rel=1e-6, abs=1e-9)


@given(day_instances())
def test_ls_peak_non_increasing_in_alpha(inst):
    flow, dt, mask, _ = inst
    peaks = [shift_loads_day(flow, dt, a, mask).peak_flow for a in (0.0, 0.1, 0.2, 0.4)]
    for lo, hi in zip(peaks[1:], peaks[:-1]):
        assert lo <= hi * (1 + 1e-9) + 1e-9


def test_ls_dataset_properties(synthetic_month):
    ds = synthetic_month
    included = ds.meter_ids[::2]
    out = apply_load_shifting(ds, 0.2, included, Constants()).dataset
    for m_in, m_out in zip(ds.meters, out.meters):
        if m_in.meter_id not in included:
            assert m_out.equals(m_in)
        else:
            assert np.array_equal(m_out.t_return, m_in.t_return)
            assert np.array_equal(m_out.t_supply, m_in.t_supply)
    assert heat_deficit(ds, out) == pytest.approx(0.0, abs=1e-9)
    before = aggregate_flow(ds).reshape(-1, 24).max(axis=1)
    after = aggregate_flow(out).reshape(-1, 24).max(axis=1)
    assert (after <= before * (1 + 1e-9)).all()


def test_peak_scan_matches_full_run(synthetic_month):
    ds = synthetic_month
    for alpha in (0.1, 0.3):
        full = aggregate_flow(apply_load_shifting(ds, alpha).dataset).max()
        assert load_shift_peak(ds, alpha) == pytest.approx(full, rel=1e-9)


# ---------------------------------------------------------------------------
# return-temperature limitation

def test_tl_properties(synthetic_month):
    ds = synthetic_month
    out = limit_return_temperature(ds).dataset
    assert np.array_equal(out.heat, ds.heat)
    assert (out.flow <= ds.flow).all()
    assert (out.t_return <= ds.t_return).all()
    limits = np.array([ds.metas[mid].t_rl_limit for mid in ds.meter_ids])[:, None]
    altered = out.t_return != ds.t_return
    assert altered.any()
    assert (out.t_return[altered] <= limits.repeat(ds.hours, 1)[altered]).all()
    # hours left alone keep every value bit for bit
    same = ~altered
    assert np.array_equal(out.flow[same], ds.flow[same])


def test_tl_altered_flow_follows_identity(synthetic_month):
    ds = synthetic_month
    c = Constants()
    out = limit_return_temperature(ds, constants=c).dataset
    altered = out.t_return != ds.t_return
    expected = ds.heat / (c.rho_cp * (out.t_supply - out.t_return))
    assert np.array_equal(out.flow[altered], expected[altered])


def test_tl_respects_inclusion(synthetic_month):
    ds = synthetic_month
    out = limit_return_temperature(ds, included=[1, 2]).dataset
    for m_in, m_out in zip(ds.meters, out.meters):
        if m_in.meter_id > 2:
            assert m_out.equals(m_in)


# ---------------------------------------------------------------------------
# flow limitation

@given(
    st.lists(st.floats(0, 40, allow_nan=False), min_size=1, max_size=120),
    st.data(),
    st.sampled_from([0.05, 0.1, 0.2, 0.5]),
)
def test_fl_matches_reference(flow, data, beta):
    dt = data.draw(st.lists(st.floats(-3, 40, allow_nan=False), min_size=len(flow), max_size=len(flow)))
    trace = flow_limit_meter(flow, dt, beta, C)
    ref_flow, ref_remaining, ref_expired = flow_limit_reference(flow, dt, beta, 1.16)
    np.testing.assert_allclose(trace.flow, ref_flow, rtol=1e-12, atol=1e-12)
    assert trace.remaining == pytest.approx(ref_remaining, rel=1e-9, abs=1e-9)
    assert trace.expired == pytest.approx(ref_expired, rel=1e-9, abs=1e-9)


@given(
    st.lists(st.floats(0, 40, allow_nan=False), min_size=1, max_size=120),
    st.data(),
    st.sampled_from([0.05, 0.1, 0.2, 0.5]),
)
def test_fl_invariants(flow, data, beta):
    dt = np.array(data.draw(st.lists(st.floats(1, 40), min_size=len(flow), max_size=len(flow))))
    flow = np.array(flow)
    trace = flow_limit_meter(flow, dt, beta, C)
    assert (trace.flow <= trace.limit * (1 + 1e-12)).all()
    original = (1.16 * dt * flow).sum()
    delivered = (1.16 * dt * trace.flow).sum()
    assert delivered <= original * (1 + 1e-9) + 1e-9
    assert delivered + trace.remaining + trace.expired == pytest.approx(original, rel=1e-6, abs=1e-9)


def test_fl_conservation_on_synthetic(synthetic_month):
    ds = synthetic_month
    c = Constants()
    for m in ds.meters:
        trace = flow_limit_meter(m.flow, m.delta_t, 0.2, c)
        heat = c.rho_cp * m.delta_t * trace.flow
        orig = c.rho_cp * m.delta_t * m.flow
        balance = heat.sum() + trace.remaining + trace.expired
        assert balance == pytest.approx(orig.sum(), rel=1e-6)


def test_fl_excluded_meters_are_untouched(synthetic_month):
    ds = synthetic_month
    out = limit_flow_rate(ds, 0.2, included=[3]).dataset
    for m_in, m_out in zip(ds.meters, out.meters):
        if m_in.meter_id != 3:
            assert m_out.equals(m_in)


def test_unaltered_hours_keep_heat_bits(synthetic_month):
    ds = synthetic_month
    out = limit_flow_rate(ds, 0.2).dataset
    same = out.flow == ds.flow
    assert np.array_equal(out.heat[same], ds.heat[same])


# ---------------------------------------------------------------------------
# naming and composition

def test_parse_chain():
    assert parse_chain("original") == []
    assert parse_chain("tl+ls20") == [StrategyConfig("tl"), StrategyConfig("ls", 0.2)]
    assert parse_chain("fl", beta=0.1) == [StrategyConfig("fl", 0.1)]
    assert chain_name(parse_chain("TL + LS20")) == "tl+ls20"
    assert StrategyConfig("ls", 0.125).name == "ls12.5"
    with pytest.raises(ValueError):
        parse_chain("ls")
    with pytest.raises(ValueError):
        parse_chain("xx10")
    with pytest.raises(ValueError):
        StrategyConfig("fl", 1.0)


def test_compose_trivial_chains(synthetic_month):
    ds = synthetic_month
    ident = compose(ds, [])
    assert ident.dataset.equals(ds) and ident.strategy == StrategyKind.IDENTITY
    degenerate = compose(ds, [StrategyConfig("ls", 0.0), StrategyConfig("fl", 0.0)])
    assert degenerate.dataset.equals(ds)
    assert degenerate.strategy == StrategyKind.COMPOSITE


def test_compose_runs_stages_in_order(synthetic_month):
    ds = synthetic_month
    tl = limit_return_temperature(ds).dataset
    both = compose(ds, parse_chain("tl+ls20"))
    direct = apply_load_shifting(tl, 0.2).dataset
    assert both.dataset.equals(direct)
    assert both.chain == ("tl", "ls20")
    assert aggregate_flow(both.dataset).max() <= aggregate_flow(tl).max() * (1 + 1e-9)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xhaul.hfc import (RFFT, RPHY, HfcScenario, PollingState, _cm_arrivals, dpp_grant_cycle,
                       node_uplink_transform, priority_link, run_hfc, water_fill)


def lindley(rate, times, bits):
    dep, free = [], 0.0
    for t, b in zip(times, bits):
        free = max(free, t) + b / rate
        dep.append(free)
    return np.asarray(dep)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50), st.floats(1.0, 1e7))
def test_water_fill_properties(reqs, cap):
    r = np.asarray(reqs)
    g = water_fill(r, cap)
    assert np.all(g <= r + 1e-9) and np.all(g >= 0)
    assert g.sum() <= max(cap, 0) * (1 + 1e-9) + 1e-6
    if r.sum() <= cap:
        assert np.allclose(g, r)
    else:
        assert g.sum() == pytest.approx(cap, rel=1e-9)
        # max-min: anyone cut short sits at the common level
        cut = g < r - 1e-9
        if cut.any():
            assert np.allclose(g[cut], g[cut].max())
            assert np.all(g[~cut] <= g[cut].max() + 1e-9)


def test_dpp_alternates_groups_and_caps_phase():
    st_ = PollingState(num_cms=6, cable_rate=1e9, max_cycle=2e-3, maintenance=0.2)
    cap = st_.phase_cap
    assert cap == pytest.approx(0.8 * 1e9 * 2e-3 / 2)
    rep = np.full(6, 1e7)
    g0 = dpp_grant_cycle(st_, rep)
    g1 = dpp_grant_cycle(st_, rep)
    assert np.all(g0[st_.members(1)] == 0) and np.all(g1[st_.members(0)] == 0)
    assert g0.sum() == pytest.approx(cap) and g1.sum() == pytest.approx(cap)
    assert st_.cycles == 1
    with pytest.raises(ValueError):
        dpp_grant_cycle(st_, -rep)


def test_node_transform_values():
    assert node_uplink_transform(RFFT, 200e6) / 1e6 == pytest.approx(370, rel=0.002)
    assert node_uplink_transform(RFFT, 600e6) / 1e6 == pytest.approx(1110, rel=0.002)
    assert node_uplink_transform(RPHY, 200e6) == 200e6
    assert node_uplink_transform(RPHY, 200e6, encapsulation=0.05) == pytest.approx(210e6)
    with pytest.raises(ValueError):
        node_uplink_transform("RMAC", 1.0)
    with pytest.raises(ValueError):
        node_uplink_transform(RFFT, -1.0)


def test_priority_link_without_priority_is_lindley():
    rng = np.random.default_rng(3)
    t = np.sort(rng.uniform(0, 1, 2000))
    b = rng.exponential(400, 2000)
    lo, hi, free = priority_link(1e6, t, b)
    assert np.allclose(lo, lindley(1e6, t, b))
    assert hi.size == 0 and free == pytest.approx(lo[-1])


def test_priority_link_serves_high_first_without_preemption():
    # low job in service at t=0.5 keeps the server; the waiting high job jumps the queued low one
    lo, hi, _ = priority_link(1.0, [0.0, 0.2], [1.0, 1.0], [0.5], [0.5])
    assert hi[0] == pytest.approx(1.5)
    assert lo == pytest.approx([1.0, 2.5])


def test_priority_link_work_conserving():
    rng = np.random.default_rng(4)
    lt = np.sort(rng.uniform(0, 1, 500))
    lb = rng.exponential(1500, 500)
    ht = np.sort(rng.uniform(0, 1, 300))
    hb = rng.exponential(500, 300)
    _, _, free = priority_link(1e6, lt, lb, ht, hb)
    allt = np.concatenate([lt, ht])
    allb = np.concatenate([lb, hb])
    o = np.argsort(allt)
    assert free == pytest.approx(lindley(1e6, allt[o], allb[o])[-1])


def test_scenario_validation():
    with pytest.raises(ValueError):
        HfcScenario(node_kind="RMAC")
    with pytest.raises(ValueError):
        HfcScenario(hurst=1.2)
    with pytest.raises(ValueError):
        HfcScenario(cable_load=-0.1)
    assert HfcScenario(distance=10).propagation == pytest.approx(50e-6)
    assert HfcScenario().analytic_optical_load() == pytest.approx(0.5 + 0.2 * 1.852 * 0.1, rel=1e-3)


def _run(**kw):
    horizon = kw.pop("horizon", 5.0)
    seed = kw.pop("seed", 2)
    return run_hfc(HfcScenario(**kw), horizon=horizon, seed=seed)


@pytest.mark.parametrize("hurst", [0.5, 0.8])
def test_cable_throughput_matches_generated_traffic(hurst):
    scn = HfcScenario(cable_load=0.2, lte_load=0.3, hurst=hurst)
    horizon, seed = 20.0, 2
    r = run_hfc(scn, horizon=horizon, seed=seed)
    times, bits, _ = _cm_arrivals(scn, horizon, seed)
    t0 = 0.1 * horizon
    offered = sum(b[t >= t0].sum() for t, b in zip(times, bits)) / (horizon - t0)
    assert r.stable
    assert r.cable_throughput <= offered * 1.02
    assert r.cable_throughput == pytest.approx(offered, rel=0.02)
    if hurst == 0.5:
        assert r.lte_throughput == pytest.approx(0.3 * 10e9, rel=0.02)


def test_distance_adds_one_way_propagation():
    near = _run(distance=10)
    far = _run(distance=50)
    assert (far.docsis_delay - near.docsis_delay) * 1e3 == pytest.approx(0.2, abs=1e-6)
    assert (far.lte_delay - near.lte_delay) * 1e3 == pytest.approx(0.2, abs=1e-6)


def test_fft_node_never_faster_than_phy_node():
    a = _run(node_kind=RFFT, lte_load=0.6)
    b = _run(node_kind=RPHY, lte_load=0.6)
    assert a.docsis_delay >= b.docsis_delay
    assert a.optical_load > b.optical_load


def test_delay_grows_with_lte_load():
    d = [_run(lte_load=x).docsis_delay for x in (0.2, 0.6, 0.9)]
    assert d[0] <= d[1] <= d[2]


def test_delay_grows_with_burstiness():
    # pooled over seeds: single long-range dependent runs are noisy
    d = {h: np.mean([_run(hurst=h, seed=s, horizon=10.0).docsis_delay for s in (1, 2, 3)])
         for h in (0.5, 0.65, 0.8)}
    assert d[0.5] < d[0.65] < d[0.8]


def test_overload_flagged_unstable():
    assert not _run(lte_load=0.99, cable_load=0.2).stable
    assert _run(lte_load=0.5, cable_load=0.2).stable


def test_same_seed_same_result():
    a, b = _run(horizon=2.0), _run(horizon=2.0)
    assert a.csv_row() == b.csv_row()


@pytest.mark.parametrize("kind", [RFFT, RPHY])
def test_frontier_at_higher_cable_load(kind):
    scn = HfcScenario(node_kind=kind, cable_load=0.6, lte_load=0.0)
    edge = 1 - scn.analytic_optical_load()
    assert _run(node_kind=kind, cable_load=0.6, lte_load=round(edge - 0.02, 3), horizon=10.0).stable
    assert not _run(node_kind=kind, cable_load=0.6, lte_load=round(edge + 0.02, 3), horizon=10.0).stable

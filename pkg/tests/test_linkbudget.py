import pytest

from xhaul.linkbudget import (PRINTED_SIB_MEMORY_BITS, FronthaulParams, baseband_rate, budget_table,
                              cache_memory, docsis_cache_overhead, freq_domain_rate, inflation_factor,
                              lte_cache_overheads, lte_cache_symbol_counts, passband_rate)


def test_time_domain_rates():
    assert passband_rate() == pytest.approx(2 * 2 * 2e9 * 10)
    assert baseband_rate() == pytest.approx(2 * 2 * 30.72e6 * 2 * 10)
    assert round(baseband_rate() / 1e9, 2) == 2.46


def test_freq_domain_rate():
    assert freq_domain_rate() == pytest.approx(2 * 1200 / 66.7e-6 * 20)
    assert round(freq_domain_rate() / 1e6) == 720
    assert freq_domain_rate(FronthaulParams(symbol_duration=66.6e-6)) == pytest.approx(720.72e6, rel=1e-4)


def test_lte_overheads_full_grid():
    o = lte_cache_overheads()
    grid = 1200 * 14 * 10
    assert o["RS"] == pytest.approx(8 / 168)
    assert o["PBCH"] == pytest.approx(240 / grid)
    assert o["SCH"] == pytest.approx(288 / grid)
    assert o["SIB"] == pytest.approx(1280 / (2 * grid))


def test_lte_overheads_smallest_grid():
    o = lte_cache_overheads(72)
    grid = 72 * 14 * 10
    assert o["PBCH"] == pytest.approx(240 / grid)
    assert round(o["PBCH"] * 100, 1) == 2.4
    assert o["SIB"] * 100 == pytest.approx(6.349, abs=1e-3)
    with pytest.raises(ValueError):
        lte_cache_overheads(60)


def test_docsis_overhead():
    assert docsis_cache_overhead() == pytest.approx(228 / 7680)


def test_memory_per_channel():
    mem = cache_memory(lte_cache_symbol_counts(1200))
    assert (mem["RS"], mem["PBCH"], mem["SCH"], mem["SIB"]) == (4000, 4800, 5760, 25600)
    assert mem["SIB"] != PRINTED_SIB_MEMORY_BITS
    with pytest.raises(ValueError):
        cache_memory({"x": -1})


def test_inflation():
    assert inflation_factor() == pytest.approx(20 / (0.9 * 12))
    assert round(inflation_factor(), 3) == 1.852
    with pytest.raises(ValueError):
        inflation_factor(code_rate=0)


def test_budget_table_rows():
    rows = {b.channel: b for b in budget_table()}
    assert rows["DOCSIS-pilots"].memory_bits == 4560
    assert sum(r.memory_bits for r in rows.values()) == 4000 + 4800 + 5760 + 25600 + 4560
    assert all(r.overhead_fraction > 0 for r in rows.values())


def test_partial_allocation_raises_overhead():
    full = lte_cache_overheads()
    half = lte_cache_overheads(allocated_fraction=0.5)
    assert all(half[k] == pytest.approx(2 * full[k]) for k in full)


LTE_GRIDS = (72, 180, 300, 600, 900, 1200)  # 1.4 to 20 MHz


def test_combined_overhead_per_bandwidth():
    docsis = 228 / 7680
    for n in LTE_GRIDS:
        grid = n * 14 * 10
        lte = 8 / 168 + 240 / grid + 288 / grid + 1280 / (2 * grid)
        assert sum(lte_cache_overheads(n).values()) + docsis_cache_overhead() == pytest.approx(lte + docsis)


def test_combined_overhead_within_seven_to_eighteen_percent():
    # full allocation over every standard LTE bandwidth plus the DOCSIS pilots
    totals = {n: (sum(lte_cache_overheads(n).values()) + docsis_cache_overhead()) * 100 for n in LTE_GRIDS}
    assert all(7.0 <= v <= 18.0 for v in totals.values()), totals


def test_rates_ordered_and_linear():
    p = FronthaulParams()
    assert freq_domain_rate(p) < baseband_rate(p) < passband_rate(p)
    double = p.with_(num_rrus=2)
    for f in (passband_rate, baseband_rate, freq_domain_rate):
        assert f(double) == pytest.approx(2 * f(p))
        assert f(p.with_(bits_per_component=20)) == pytest.approx(2 * f(p))


def test_memory_totals_both_readings():
    mem = cache_memory(lte_cache_symbol_counts(1200))
    lte = mem["RS"] + mem["PBCH"] + mem["SCH"]
    assert lte + mem["SIB"] + 4560 == 44_720
    # the quoted 19,120-bit total leaves SIB out altogether
    assert lte + 4560 == 19_120
    assert lte + PRINTED_SIB_MEMORY_BITS + 4560 == 24_880

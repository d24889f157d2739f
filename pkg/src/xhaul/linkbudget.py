"""Fronthaul I/Q data rates and QAM-symbol caching budgets."""
from __future__ import annotations

from dataclasses import dataclass, replace

__all__ = [
    "FronthaulParams",
    "CacheBudget",
    "passband_rate",
    "baseband_rate",
    "freq_domain_rate",
    "lte_cache_overheads",
    "docsis_cache_overhead",
    "cache_memory",
    "inflation_factor",
    "lte_cache_symbol_counts",
    "budget_table",
    "PRINTED_SIB_MEMORY_BITS",
]

# value printed for the SIB cache memory in the source analysis; the formula
# beside it evaluates to 25,600 bits
PRINTED_SIB_MEMORY_BITS = 5760

RE_PER_RB = 12
SYMBOLS_PER_SUBFRAME = 14


@dataclass(frozen=True)
class FronthaulParams:
    """Defaults are the typical 20 MHz LTE CRAN link."""

    num_rrus: int = 1
    antennas: int = 2
    carrier_freq: float = 2e9
    sampling_freq: float = 30.72e6
    bits_per_component: int = 10
    oversample: float = 2.0
    subcarriers_used: int = 1200
    symbol_duration: float = 66.7e-6

    def with_(self, **kw) -> "FronthaulParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class CacheBudget:
    channel: str
    cached_symbol_count: int
    overhead_fraction: float
    memory_bits: int


def passband_rate(p: FronthaulParams = FronthaulParams()) -> float:
    """Sampling at twice the carrier, one real sample per antenna."""
    return p.num_rrus * p.antennas * 2 * p.carrier_freq * p.bits_per_component


def baseband_rate(p: FronthaulParams = FronthaulParams()) -> float:
    return p.num_rrus * p.antennas * (p.oversample * p.sampling_freq) * (2 * p.bits_per_component)


def freq_domain_rate(p: FronthaulParams = FronthaulParams()) -> float:
    if p.symbol_duration <= 0:
        raise ValueError("symbol_duration must be positive")
    return (p.num_rrus * p.antennas * p.subcarriers_used / p.symbol_duration
            * (2 * p.bits_per_component))


def _check_allocated(allocated_fraction):
    if not 0 < allocated_fraction <= 1:
        raise ValueError("allocated_fraction must lie in (0, 1]")


def lte_cache_symbol_counts(subcarriers: int = 1200) -> dict[str, int]:
    """Cached resource elements per channel for one antenna port.

    RS counts one OFDM symbol's worth (2 tones per RB); PBCH, SCH and SIB are
    the per-occurrence element counts net of embedded RS tones.
    """
    rbs = subcarriers // RE_PER_RB
    return {
        "RS": 2 * rbs,
        "PBCH": 6 * RE_PER_RB * 4 - 8 * 6,
        "SCH": 6 * RE_PER_RB * 4,
        "SIB": 8 * RE_PER_RB * SYMBOLS_PER_SUBFRAME - 8 * 8,
    }


def lte_cache_overheads(subcarriers: int = 1200, symbols_per_subframe: int = SYMBOLS_PER_SUBFRAME,
                        subframes: int = 10, allocated_fraction: float = 1.0) -> dict[str, float]:
    """Fraction of the LTE resource grid taken by each cacheable channel.

    ``allocated_fraction`` shrinks the denominator for partially loaded grids
    (1.0 is the full-allocation case).
    """
    if subcarriers < 72:
        raise ValueError("an LTE grid has at least 72 subcarriers (6 RBs)")
    _check_allocated(allocated_fraction)
    counts = lte_cache_symbol_counts(subcarriers)
    frame = subcarriers * symbols_per_subframe * subframes * allocated_fraction
    return {
        "RS": 8 / (RE_PER_RB * symbols_per_subframe * allocated_fraction),
        "PBCH": counts["PBCH"] / frame,
        "SCH": counts["SCH"] / frame,
        # SIB1/SIB2 repeat every two radio frames
        "SIB": counts["SIB"] / (2 * frame),
    }


def docsis_cache_overhead(total_subc: int = 7680, guard: int = 80, cont_pilots: int = 88,
                          scat_pilots: int = 60, allocated_fraction: float = 1.0) -> float:
    _check_allocated(allocated_fraction)
    return (guard + cont_pilots + scat_pilots) / (total_subc * allocated_fraction)


def cache_memory(counts: dict[str, int], bits_per_component: int = 10) -> dict[str, int]:
    """Memory per channel (I and Q each ``bits_per_component``) plus ``total``."""
    out = {}
    for name, n in counts.items():
        if n < 0:
            raise ValueError(f"negative symbol count for {name}")
        out[name] = int(n) * 2 * bits_per_component
    out["total"] = sum(out.values())
    return out


def inflation_factor(code_rate: float = 0.9, qam_bits: int = 12, iq_bits_per_component: int = 10) -> float:
    """Optical bits carried per cable payload bit after frequency-domain digitization."""
    if not 0 < code_rate <= 1:
        raise ValueError("code_rate must lie in (0, 1]")
    if qam_bits <= 0:
        raise ValueError("qam_bits must be positive")
    return (1 / code_rate) * (1 / qam_bits) * 2 * iq_bits_per_component


def budget_table(subcarriers: int = 1200, bits_per_component: int = 10, docsis_total_subc: int = 7680,
                 docsis_guard: int = 80, docsis_cont: int = 88, docsis_scat: int = 60,
                 allocated_fraction: float = 1.0) -> list[CacheBudget]:
    """Per-channel cache budget rows for one LTE grid and one DOCSIS grid."""
    over = lte_cache_overheads(subcarriers, allocated_fraction=allocated_fraction)
    counts = lte_cache_symbol_counts(subcarriers)
    counts["DOCSIS-pilots"] = docsis_guard + docsis_cont + docsis_scat
    over["DOCSIS-pilots"] = docsis_cache_overhead(docsis_total_subc, docsis_guard, docsis_cont,
                                                  docsis_scat, allocated_fraction)
    mem = cache_memory(counts, bits_per_component)
    return [CacheBudget(ch, counts[ch], over[ch], mem[ch]) for ch in counts]

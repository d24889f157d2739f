"""Hybrid fiber-coax uplink: cable modems polled over a shared cable segment,
whose traffic joins LTE fronthaul on one optical link to the headend.

The remote node either forwards demodulated cable bits (``RPHY``) or their
frequency-domain I/Q samples (``RFFT``, inflated by ``inflation_factor``).
Cable bits received during one OFDM symbol leave as one optical frame at the
end of that symbol. The polling scheduler sits at the remote node, so the
fiber distance only adds the one-way propagation to each delivered packet.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linkbudget import inflation_factor
from .simcore import RngStream
from .traffic import SelfSimilarParams, self_similar_source

__all__ = [
    "RPHY",
    "RFFT",
    "HfcScenario",
    "PollingState",
    "HfcResult",
    "dpp_grant_cycle",
    "water_fill",
    "node_uplink_transform",
    "priority_link",
    "run_hfc",
    "CSV_FIELDS",
]

RPHY, RFFT = "RPHY", "RFFT"
FIBER_SPEED = 2e8  # m/s
FFT_SYMBOL = {"4K": 40e-6, "8K": 80e-6}
CSV_FIELDS = ("node_kind", "d", "H", "rho_c", "rho_L", "docsis_delay_ms", "lte_delay_ms",
              "cable_tput_mbps", "lte_tput_mbps", "stable")


@dataclass(frozen=True)
class HfcScenario:
    node_kind: str = RFFT
    optical_rate: float = 10e9
    cable_rate: float = 1e9
    distance: float = 10.0  # km
    num_cms: int = 200
    cable_load: float = 0.2
    lte_load: float = 0.5
    hurst: float = 0.5
    fft_size: str = "4K"
    qam_bits: int = 12
    code_rate: float = 0.9
    iq_bits: int = 10
    cm_packet_bytes: float = 472e3
    lte_packet_bytes: float = 9000
    encapsulation: float = 0.0  # RPHY framing overhead fraction
    req_bytes: float = 64  # per requesting CM, RPHY only
    maintenance: float = 0.2
    max_cycle: float = 20e-3
    min_phase: float = 0.25e-3
    onoff_mean_period: float = 0.1  # LTE sub-sources, ON and OFF alike
    cm_burst_period: float = 10e-3  # mean ON period of a CM, sent at the cable rate
    subsources_per_cm: int = 1

    def __post_init__(self):
        errors = []
        if self.node_kind not in (RPHY, RFFT):
            errors.append(f"node_kind must be {RPHY} or {RFFT}")
        for name in ("cable_load", "lte_load"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                errors.append(f"{name}={v} outside [0, 1]")
        if not 0.5 <= self.hurst < 1.0:
            errors.append(f"hurst={self.hurst} outside [0.5, 1)")
        if self.fft_size not in FFT_SYMBOL:
            errors.append(f"fft_size must be one of {sorted(FFT_SYMBOL)}")
        if self.distance < 0 or self.num_cms < 2:
            errors.append("distance must be >= 0 and num_cms >= 2")
        if self.cm_burst_period <= 0 or self.onoff_mean_period <= 0:
            errors.append("on/off periods must be positive")
        if not 0 <= self.maintenance < 1:
            errors.append("maintenance fraction must lie in [0, 1)")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def symbol_period(self) -> float:
        return FFT_SYMBOL[self.fft_size]

    @property
    def propagation(self) -> float:
        return self.distance * 1e3 / FIBER_SPEED

    @property
    def inflation(self) -> float:
        if self.node_kind == RFFT:
            return inflation_factor(self.code_rate, self.qam_bits, self.iq_bits)
        return 1.0 + self.encapsulation

    def analytic_optical_load(self) -> float:
        return self.lte_load + self.inflation * self.cable_load * self.cable_rate / self.optical_rate


@dataclass
class PollingState:
    """Two-group polling bookkeeping: even CMs form group 0, odd CMs group 1."""

    num_cms: int
    cable_rate: float
    max_cycle: float = 20e-3
    maintenance: float = 0.2
    phase: int = 0
    cycles: int = 0
    granted: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.granted is None:
            self.granted = np.zeros(self.num_cms)

    def members(self, group: int) -> np.ndarray:
        return np.arange(group, self.num_cms, 2)

    @property
    def phase_cap(self) -> float:
        """Data bits one phase may grant; two phases make a full cycle."""
        return (1 - self.maintenance) * self.cable_rate * self.max_cycle / 2


def water_fill(requests, cap: float) -> np.ndarray:
    """Max-min fair split of ``cap`` over ``requests``; nobody gets more than asked."""
    r = np.asarray(requests, dtype=float)
    if r.sum() <= cap:
        return r.copy()
    order = np.sort(r)
    n = r.size
    spent = 0.0
    level = 0.0
    for i, v in enumerate(order):
        share = (cap - spent) / (n - i)
        if v >= share:
            level = share
            break
        spent += v
    return np.minimum(r, level)


def dpp_grant_cycle(state: PollingState, reports) -> np.ndarray:
    """Grant the group whose phase it is from its reported backlogs.

    Returns per-CM grants [bit]; the other group gets zero this phase.
    """
    rep = np.asarray(reports, dtype=float)
    if rep.shape != (state.num_cms,) or (rep < 0).any():
        raise ValueError("reports must be one non-negative backlog per CM")
    grants = np.zeros(state.num_cms)
    idx = state.members(state.phase)
    grants[idx] = water_fill(rep[idx], state.phase_cap)
    state.granted += grants
    state.phase ^= 1
    if state.phase == 0:
        state.cycles += 1
    return grants


def node_uplink_transform(kind: str, payload_bits, code_rate: float = 0.9, qam_bits: int = 12,
                          iq_bits: int = 10, encapsulation: float = 0.0):
    """Optical bits the remote node emits for ``payload_bits`` of cable data."""
    if np.any(np.asarray(payload_bits) < 0):
        raise ValueError("payload must be non-negative")
    if kind == RFFT:
        return payload_bits * inflation_factor(code_rate, qam_bits, iq_bits)
    if kind == RPHY:
        return payload_bits * (1.0 + encapsulation)
    raise ValueError(f"unknown node kind {kind!r}")


def priority_link(rate, lo_times, lo_bits, hi_times=None, hi_bits=None):
    """Non-preemptive two-class priority server; FIFO within a class.

    Returns ``(lo_departures, hi_departures, final_free_time)``.
    """
    lo_t = np.asarray(lo_times, dtype=float).tolist()
    lo_s = (np.asarray(lo_bits, dtype=float) / rate).tolist()
    hi_t = [] if hi_times is None else np.asarray(hi_times, dtype=float).tolist()
    hi_s = [] if hi_bits is None else (np.asarray(hi_bits, dtype=float) / rate).tolist()
    nl, nh = len(lo_t), len(hi_t)
    lo_d = [0.0] * nl
    hi_d = [0.0] * nh
    inf = math.inf
    i = j = 0
    free = 0.0
    while i < nl or j < nh:
        th = hi_t[j] if j < nh else inf
        tl = lo_t[i] if i < nl else inf
        start = free if free > (th if th < tl else tl) else (th if th < tl else tl)
        if th <= start:
            free = start + hi_s[j]
            hi_d[j] = free
            j += 1
        else:
            free = start + lo_s[i]
            lo_d[i] = free
            i += 1
    return np.asarray(lo_d), np.asarray(hi_d), free


@dataclass
class HfcResult:
    scenario: HfcScenario
    docsis_delay: float
    lte_delay: float
    cable_throughput: float
    lte_throughput: float
    optical_load: float  # measured offered load on the optical link
    final_backlog: float  # unfinished optical work at the horizon [s]
    stable: bool
    packets: dict = field(default_factory=dict)

    def csv_row(self) -> dict:
        s = self.scenario
        return {
            "node_kind": s.node_kind, "d": s.distance, "H": s.hurst, "rho_c": s.cable_load,
            "rho_L": s.lte_load, "docsis_delay_ms": self.docsis_delay * 1e3,
            "lte_delay_ms": self.lte_delay * 1e3, "cable_tput_mbps": self.cable_throughput / 1e6,
            "lte_tput_mbps": self.lte_throughput / 1e6, "stable": self.stable,
        }


def _cm_arrivals(scn: HfcScenario, horizon: float, seed: int):
    per_cm = scn.cable_load * scn.cable_rate / scn.num_cms
    times, bits, cms = [], [], []
    for c in range(scn.num_cms):
        p = SelfSimilarParams(load=per_cm / scn.cable_rate, link_rate=scn.cable_rate, hurst=scn.hurst,
                              mean_packet_size=scn.cm_packet_bytes * 8,
                              num_sources=scn.subsources_per_cm, mean_period=scn.cm_burst_period,
                              peak_rate=scn.cable_rate)
        t, b = self_similar_source(p, RngStream(seed, 1 + c)).generate(horizon)
        times.append(t)
        bits.append(b)
        cms.append(np.full(t.size, c))
    return times, bits, cms


def _run_cable(scn: HfcScenario, times, bits, horizon):
    """Polling loop; returns per-CM grant bursts ``(start, served_before, amount)``."""
    state = PollingState(scn.num_cms, scn.cable_rate, scn.max_cycle, scn.maintenance)
    all_t = np.concatenate(times)
    all_b = np.concatenate(bits)
    all_c = np.concatenate([np.full(t.size, c) for c, t in enumerate(times)])
    order = np.argsort(all_t, kind="stable")
    all_t, all_b, all_c = all_t[order], all_b[order], all_c[order]

    arrived = np.zeros(scn.num_cms)
    served = np.zeros(scn.num_cms)
    bursts = [[] for _ in range(scn.num_cms)]
    phase_starts, requesters = [], []
    t, p = 0.0, 0
    R = scn.cable_rate
    while t < horizon:
        q = int(np.searchsorted(all_t, t, side="left"))
        if q > p:
            arrived += np.bincount(all_c[p:q], weights=all_b[p:q], minlength=scn.num_cms)
            p = q
        phase_starts.append(t)
        grants = dpp_grant_cycle(state, arrived - served)
        requesters.append(int(np.count_nonzero(grants)))
        offset = t
        for c in np.flatnonzero(grants):
            g = grants[c]
            bursts[c].append((offset, served[c], g))
            served[c] += g
            offset += g / R
        data_time = offset - t
        t += max(data_time / (1 - scn.maintenance), scn.min_phase)
    return bursts, np.asarray(phase_starts), np.asarray(requesters), state


def run_hfc(scn: HfcScenario, horizon: float = 20.0, seed: int = 0, warmup: float = 0.1,
            saturation_backlog: float = 0.01) -> HfcResult:
    """Simulate ``horizon`` seconds and report delays and throughputs.

    A run is unstable when the optical link's measured offered load reaches
    one or when the unfinished optical work at the horizon exceeds
    ``saturation_backlog`` times the horizon.
    """
    T_D = scn.symbol_period
    R_c, R_o = scn.cable_rate, scn.optical_rate
    times, bits, _ = _cm_arrivals(scn, horizon, seed)
    bursts, phase_starts, requesters, _ = _run_cable(scn, times, bits, horizon)

    # per-CM packet completion at the remote node
    done_node = []
    knots_t, knots_v = [], []
    for c in range(scn.num_cms):
        t_c = np.full(times[c].size, np.inf)
        if bursts[c] and times[c].size:
            b = np.asarray(bursts[c])
            start, before, amount = b[:, 0], b[:, 1], b[:, 2]
            after = before + amount
            end_pos = np.cumsum(bits[c])
            j = np.searchsorted(after, end_pos - 1e-6, side="left")
            ok = j < len(b)
            jj = j[ok]
            t_c[ok] = start[jj] + (end_pos[ok] - before[jj]) / R_c
            knots_t.append(start)
            knots_v.append(amount)
        done_node.append(t_c)

    # cable bits received per OFDM symbol, via the cumulative received curve
    if knots_t:
        s = np.concatenate(knots_t)
        a = np.concatenate(knots_v)
        o = np.argsort(s)
        s, a = s[o], a[o]
        kt = np.column_stack([s, s + a / R_c]).ravel()
        kv = np.column_stack([np.cumsum(a) - a, np.cumsum(a)]).ravel()
        n_sym = int(math.ceil(kt[-1] / T_D)) + 1
        edges = np.arange(n_sym + 1) * T_D
        per_sym = np.diff(np.interp(edges, kt, kv, left=0.0, right=kv[-1]))
    else:
        n_sym, per_sym = 0, np.empty(0)
    sym_idx = np.flatnonzero(per_sym > 1e-9)
    frame_t = (sym_idx + 1) * T_D
    frame_bits = node_uplink_transform(scn.node_kind, per_sym[sym_idx], scn.code_rate, scn.qam_bits,
                                       scn.iq_bits, scn.encapsulation)

    lte = self_similar_source(
        SelfSimilarParams(load=scn.lte_load, link_rate=R_o, hurst=scn.hurst,
                          mean_packet_size=scn.lte_packet_bytes * 8, num_sources=32,
                          mean_period=scn.onoff_mean_period),
        RngStream(seed, 0),
    )
    lte_t, lte_b = lte.generate(horizon)
    # optical FIFO over LTE packets and cable frames; frames first on ties
    kinds = np.concatenate([np.zeros(frame_t.size, dtype=np.int8), np.ones(lte_t.size, dtype=np.int8)])
    ot = np.concatenate([frame_t, lte_t])
    ob = np.concatenate([frame_bits, lte_b])
    order = np.lexsort((kinds, ot))
    hi_t = hi_b = None
    if scn.node_kind == RPHY and scn.req_bytes > 0:
        # one report frame per polling phase carrying the requests of backlogged CMs
        has = requesters > 0
        hi_t = phase_starts[has]
        hi_b = requesters[has] * scn.req_bytes * 8.0
    dep_sorted, _, free = priority_link(R_o, ot[order], ob[order], hi_t, hi_b)
    dep = np.empty_like(dep_sorted)
    dep[order] = dep_sorted
    frame_dep, lte_dep = dep[: frame_t.size], dep[frame_t.size:]

    prop = scn.propagation
    t0 = warmup * horizon
    window = horizon - t0
    frame_of = {int(m): k for k, m in enumerate(sym_idx)}
    d_sum, d_cnt, cable_bits = 0.0, 0, 0.0
    for c in range(scn.num_cms):
        t_c = done_node[c]
        fin = np.isfinite(t_c)
        if not fin.any():
            continue
        m = np.ceil(t_c[fin] / T_D - 1e-9).astype(int) - 1
        k = np.fromiter((frame_of.get(int(x), -1) for x in m), dtype=int, count=m.size)
        arr = np.full(t_c.size, np.inf)
        good = k >= 0
        sub = np.flatnonzero(fin)[good]
        arr[sub] = frame_dep[k[good]] + prop
        delivered = (arr >= t0) & (arr < horizon)
        d_sum += float((arr[delivered] - times[c][delivered]).sum())
        d_cnt += int(delivered.sum())
        cable_bits += float(bits[c][delivered].sum())
    lte_arr = lte_dep + prop
    lte_ok = (lte_arr >= t0) & (lte_arr < horizon)

    offered = (frame_bits[(frame_t >= t0) & (frame_t < horizon)].sum()
               + lte_b[lte_t >= t0].sum()) / (R_o * window)
    if hi_t is not None:
        offered += hi_b[hi_t >= t0].sum() / (R_o * window)
    backlog = max(free - horizon, 0.0)
    stable = bool(offered < 1.0 and backlog <= saturation_backlog * horizon)
    return HfcResult(
        scenario=scn,
        docsis_delay=d_sum / d_cnt if d_cnt else math.nan,
        lte_delay=float(np.mean(lte_arr[lte_ok] - lte_t[lte_ok])) if lte_ok.any() else math.nan,
        cable_throughput=cable_bits / window,
        lte_throughput=float(lte_b[lte_ok].sum()) / window,
        optical_load=float(offered),
        final_backlog=backlog,
        stable=stable,
        packets={"docsis": d_cnt, "lte": int(lte_ok.sum()), "frames": int(frame_t.size)},
    )


def scenario_dict(scn: HfcScenario) -> dict:
    return asdict(scn)

"""Smart-gateway uplink grant scheduling and fairness metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .simcore import FifoLink, RngStream, StatAccumulator, batch_accumulator
from .traffic import TwoStateBurstParams, two_state_source

__all__ = [
    "SchedulerConfig",
    "CycleRequest",
    "CycleGrant",
    "FairTarget",
    "DegenerateInputError",
    "equal_share_limit",
    "excess_share_amounts",
    "excess_share_grants",
    "fair_targets",
    "fairness_index",
    "scheduling_overhead",
    "GatewayRunResult",
    "run_gateway_cycle",
    "MODES",
]

MODES = ("none", "equal", "excess")
QUEUE_20MB = 20e6 * 8


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class SchedulerConfig:
    uplink_rate: float = 1e9
    cycle: float = 1e-3
    num_enbs: int = 20

    def __post_init__(self):
        if self.uplink_rate <= 0 or self.cycle <= 0 or self.num_enbs < 1:
            raise ValueError("uplink_rate and cycle must be positive and num_enbs >= 1")


@dataclass(frozen=True)
class CycleRequest:
    enb_id: int
    operator_id: int
    amount: float
    cycle_index: int = 0


@dataclass(frozen=True)
class CycleGrant:
    enb_id: int
    operator_id: int
    amount: float
    cycle_index: int = 0


@dataclass(frozen=True)
class FairTarget:
    enb_id: int
    target: float
    cls: str


def equal_share_limit(cfg: SchedulerConfig) -> float:
    """Bits per cycle each eNB may send under equal sharing."""
    return cfg.uplink_rate * cfg.cycle / cfg.num_enbs


def excess_share_amounts(requests, limit: float) -> np.ndarray:
    """Vectorised excess-share allocation over one cycle's requests [bit].

    eNBs asking for at most ``limit`` are served in full; what they leave unused
    forms a pool shared equally by the others, each capped at its request.
    """
    rho = np.asarray(requests, dtype=float)
    light = rho <= limit
    heavy_count = rho.size - int(light.sum())
    if heavy_count == 0:
        return rho.copy()
    pool = float((limit - rho[light]).sum())
    return np.where(light, rho, np.minimum(rho, limit + pool / heavy_count))


def excess_share_grants(requests: Sequence[CycleRequest], limit: float) -> list[CycleGrant]:
    if limit < 0:
        raise ValueError("grant limit must be non-negative")
    ids = [r.enb_id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate enb_id in cycle requests")
    amounts = excess_share_amounts([r.amount for r in requests], limit)
    return [CycleGrant(r.enb_id, r.operator_id, float(a), r.cycle_index)
            for r, a in zip(requests, amounts)]


def fair_targets(loads, G: float) -> list[FairTarget]:
    """Fair target throughput per eNB from its long-run offered load.

    An eNB is light when its load is below the equal share ``G / N``.
    """
    T = np.asarray(loads, dtype=float)
    if (T < 0).any():
        raise ValueError("loads must be non-negative")
    share = G / T.size
    light = T < share
    heavy = ~light
    targets = T.copy()
    if T.sum() > G and heavy.any():
        residual = max(G - T[light].sum(), 0.0) / heavy.sum()
        targets[heavy] = np.minimum(T[heavy], residual)
    return [FairTarget(n, float(t), "light" if l else "heavy")
            for n, (t, l) in enumerate(zip(targets, light))]


def fairness_index(observed, targets) -> float:
    """Normalised Euclidean distance between observed and target throughputs."""
    tau = np.asarray(observed, dtype=float)
    omega = np.asarray([t.target if isinstance(t, FairTarget) else t for t in targets], dtype=float)
    if tau.shape != omega.shape:
        raise ValueError("observed and targets differ in length")
    denom = math.sqrt(float(np.dot(omega, omega)))
    if denom == 0.0:
        raise DegenerateInputError("fairness index undefined when every target is zero")
    err = tau - omega
    return math.sqrt(float(np.dot(err, err))) / denom


def scheduling_overhead(message_bytes: float = 70, link_rate: float = 1e9, path_length: float = 500.0,
                        cycle: float = 1e-3, processing: float = 1e-6,
                        propagation_speed: float = 2e8) -> float:
    """Fraction of a cycle spent on request/grant signalling.

    Counts the request and grant transmission times, the propagation time
    over ``path_length`` metres of round-trip path, and schedule processing.
    """
    tx = 2 * message_bytes * 8 / link_rate
    return (tx + path_length / propagation_speed + processing) / cycle


@dataclass
class GatewayRunResult:
    mode: str
    loads: np.ndarray
    throughput: np.ndarray  # per eNB [bit/s]
    delay: np.ndarray  # per eNB mean packet delay [s]
    dropped_bits: np.ndarray
    targets: list
    fairness: float
    stats: dict = field(default_factory=dict)  # StatAccumulator per metric

    def class_mask(self, cls: str) -> np.ndarray:
        return np.array([t.cls == cls for t in self.targets])

    def class_throughput(self, cls: str) -> float:
        m = self.class_mask(cls)
        return float(self.throughput[m].mean()) if m.any() else math.nan

    def class_delay(self, cls: str) -> float:
        m = self.class_mask(cls)
        return float(np.nanmean(self.delay[m])) if m.any() else math.nan

    @property
    def converged(self) -> dict:
        return {k: acc.converged() for k, acc in self.stats.items()}


def _arrivals(loads, horizon, seed, burst):
    out = []
    for n, rate in enumerate(loads):
        src = two_state_source(replace(burst, target_mean_rate=float(rate)), RngStream(seed, n))
        out.append(src.generate(horizon))
    return out


def _run_none(arrivals, cfg, gateway_buffer_bits):
    """Every packet goes straight into one tail-drop FIFO at the uplink rate."""
    enb = np.concatenate([np.full(t.size, n) for n, (t, _) in enumerate(arrivals)])
    times = np.concatenate([t for t, _ in arrivals])
    bits = np.concatenate([b for _, b in arrivals])
    order = np.argsort(times, kind="stable")
    link = FifoLink(cfg.uplink_rate, gateway_buffer_bits)
    dep = np.empty(order.size)
    offer = link.offer
    for j, (t, b) in enumerate(zip(times[order].tolist(), bits[order].tolist())):
        dep[j] = offer(t, b)
    departures = np.empty_like(dep)
    departures[order] = dep
    out, start = [], 0
    for t, _ in arrivals:
        out.append(departures[start:start + t.size])
        start += t.size
    return out


def _run_cycles(arrivals, cfg, mode, enb_buffer_bits):
    """Request/grant/transmit cycles with fluid eNB queues.

    Requests are the backlog at cycle start; each eNB sends its grant at the
    cycle start and the gateway interleaves the granted bursts in proportion
    to their size, so an eNB's bits leave the gateway within the cycle.
    """
    N, W, G = cfg.num_enbs, cfg.cycle, cfg.uplink_rate
    limit = equal_share_limit(cfg)
    horizon = max((t[-1] for t, _ in arrivals if t.size), default=0.0)
    n_cycles = int(math.ceil(horizon / W)) + 1
    edges = np.arange(n_cycles + 1) * W
    cum = [np.concatenate([[0.0], np.cumsum(b)]) for _, b in arrivals]
    # packets arrived strictly before each cycle start
    idx = np.array([np.searchsorted(t, edges, side="left") for t, _ in arrivals])
    arrived_cum = np.array([c[i] for c, i in zip(cum, idx)])

    accepted = [np.ones(t.size, dtype=bool) for t, _ in arrivals]
    acc_bits = np.zeros(N)  # accepted cumulative bits
    served = np.zeros(N)
    served_hist = np.zeros((n_cycles + 1, N))
    grants = np.zeros((n_cycles + 1, N))
    for w in range(n_cycles + 1):
        if w > 0:
            new = arrived_cum[:, w] - arrived_cum[:, w - 1]
            space = enb_buffer_bits - (acc_bits - served)
            over = new > space
            for n in np.flatnonzero(over):
                i0, i1 = idx[n, w - 1], idx[n, w]
                c = cum[n]
                # tail-drop: keep the prefix of this cycle's packets that fits
                keep = int(np.searchsorted(c[i0 + 1:i1 + 1], c[i0] + space[n], side="right"))
                accepted[n][i0 + keep:i1] = False
                new[n] = c[i0 + keep] - c[i0]
            acc_bits += new
        rho = acc_bits - served
        if mode == "equal":
            gamma = np.minimum(rho, limit)
        else:
            gamma = excess_share_amounts(rho, limit)
        served += gamma
        served_hist[w] = served
        grants[w] = gamma

    out = []
    for n, (t, b) in enumerate(arrivals):
        dep = np.full(t.size, np.nan)
        ok = accepted[n]
        end_pos = np.cumsum(np.where(ok, b, 0.0))[ok]
        w = np.searchsorted(served_hist[:, n], end_pos - 1e-6, side="left")
        valid = w <= n_cycles
        w = np.minimum(w, n_cycles)
        before = np.where(w > 0, served_hist[np.maximum(w - 1, 0), n], 0.0)
        g = grants[w, n]
        frac = np.where(g > 0, (end_pos - before) / np.where(g > 0, g, 1.0), 1.0)
        total = grants[w].sum(axis=1) if grants.ndim == 2 else grants[w]
        d = edges[w] + frac * total / G
        d[~valid] = np.inf  # still queued at the end of the run
        dep[ok] = d
        out.append(dep)
    return out


def _still_queued(dep, t):
    return np.isinf(dep)


def run_gateway_cycle(mode: str, loads, cfg: SchedulerConfig = SchedulerConfig(), horizon: float = 10.0,
                      seed: int = 0, warmup: float = 0.1, batches: int = 20,
                      burst: TwoStateBurstParams = TwoStateBurstParams(0.0),
                      enb_buffer_bits: float = QUEUE_20MB,
                      gateway_buffer_bits: float = QUEUE_20MB) -> GatewayRunResult:
    """Simulate one Sm-GW uplink with two-state bursty eNBs.

    ``loads`` are the eNB mean rates [bit/s]. Throughput counts delivered bits
    of packets that arrive after the warmup; delay is arrival at the eNB to
    departure from the gateway egress.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    loads = np.asarray(loads, dtype=float)
    if loads.size != cfg.num_enbs:
        raise ValueError(f"{loads.size} loads given for {cfg.num_enbs} eNBs")
    if not 0 <= warmup < 1 or batches < 2:
        raise ValueError("warmup must lie in [0, 1) and batches >= 2")
    arrivals = _arrivals(loads, horizon, seed, burst)
    if mode == "none":
        departures = _run_none(arrivals, cfg, gateway_buffer_bits)
    else:
        departures = _run_cycles(arrivals, cfg, mode, enb_buffer_bits)

    t0 = warmup * horizon
    span = (horizon - t0) / batches
    targets = fair_targets(loads, cfg.uplink_rate)
    light = np.array([t.cls == "light" for t in targets])
    N = loads.size
    tput = np.zeros(N)
    delay = np.full(N, np.nan)
    dropped = np.zeros(N)
    batch_tput = np.zeros((batches, N))
    batch_dsum = np.zeros((batches, N))
    batch_dcnt = np.zeros((batches, N))
    for n, ((t, b), dep) in enumerate(zip(arrivals, departures)):
        lost = np.isnan(dep) & (t < horizon)
        if mode != "none":
            lost &= ~_still_queued(dep, t)
        dropped[n] = b[lost & (t >= t0)].sum()
        ok = (dep >= t0) & (dep < horizon)
        tput[n] = b[ok].sum() / (horizon - t0)
        if ok.any():
            delay[n] = float(np.mean(dep[ok] - t[ok]))
        k = np.minimum(((dep[ok] - t0) // span).astype(int), batches - 1)
        batch_tput[:, n] = np.bincount(k, weights=b[ok], minlength=batches) / span
        batch_dsum[:, n] = np.bincount(k, weights=dep[ok] - t[ok], minlength=batches)
        batch_dcnt[:, n] = np.bincount(k, minlength=batches)

    stats = {}
    for cls, mask in (("light", light), ("heavy", ~light)):
        if not mask.any():
            continue
        stats[f"{cls}_throughput"] = batch_accumulator(f"{cls}_throughput", batch_tput[:, mask].mean(axis=1))
        cnt = batch_dcnt[:, mask].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            stats[f"{cls}_delay"] = batch_accumulator(f"{cls}_delay", batch_dsum[:, mask].sum(axis=1) / cnt)
    return GatewayRunResult(mode, loads, tput, delay, dropped, targets,
                            fairness_index(tput, targets), stats)

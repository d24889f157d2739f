"""Packet traffic sources.

Both sources are pull-based: ``generate(t_end)`` returns the arrivals in
``[previous t_end, t_end)`` as ``(times, bits)`` arrays, so a simulation can
advance a source in whatever slices suit its clock.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .simcore import RngStream

__all__ = [
    "ConfigError",
    "TwoStateBurstParams",
    "SelfSimilarParams",
    "TwoStateSource",
    "SelfSimilarSource",
    "PoissonSource",
    "two_state_source",
    "self_similar_source",
    "variance_time",
    "hurst_from_variance_time",
    "index_of_dispersion",
]

LOW, HEAVY = 0, 1


class ConfigError(ValueError):
    pass


def _packet_sizes(gen, n, mean_bits, dist):
    if dist == "constant":
        return np.full(n, float(mean_bits))
    if dist == "exponential":
        return gen.exponential(mean_bits, n)
    raise ConfigError(f"unknown packet size distribution {dist!r}")


@dataclass(frozen=True)
class TwoStateBurstParams:
    target_mean_rate: float
    sojourn_lo: float = 1e-3
    sojourn_hi: float = 4e-3
    p_switch_from_low: float = 0.7
    p_switch_from_heavy: float = 0.3
    rate_ratio_heavy_to_low: float = 4.0
    mean_packet_size: float = 1500 * 8
    packet_size_dist: str = "constant"

    def validate(self) -> "TwoStateBurstParams":
        errors = []
        for name in ("p_switch_from_low", "p_switch_from_heavy"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                errors.append(f"{name}={p} is not a probability")
        if not 0 < self.sojourn_lo < self.sojourn_hi:
            errors.append("need 0 < sojourn_lo < sojourn_hi")
        if not self.rate_ratio_heavy_to_low > 1:
            errors.append("rate_ratio_heavy_to_low must exceed 1")
        if self.p_switch_from_low + self.p_switch_from_heavy == 0:
            errors.append("at least one switching probability must be positive")
        if self.target_mean_rate < 0:
            errors.append("target_mean_rate cannot be negative (no non-negative state rates reach it)")
        if self.mean_packet_size <= 0:
            errors.append("mean_packet_size must be positive")
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    @property
    def heavy_fraction(self) -> float:
        """Long-run fraction of time in the heavy state.

        Both states draw sojourns from the same distribution, so the time
        fraction equals the stationary probability of the embedded chain.
        """
        a, b = self.p_switch_from_low, self.p_switch_from_heavy
        return a / (a + b)

    def state_rates(self) -> tuple[float, float]:
        self.validate()
        pi_h = self.heavy_fraction
        low = self.target_mean_rate / ((1 - pi_h) + self.rate_ratio_heavy_to_low * pi_h)
        return low, low * self.rate_ratio_heavy_to_low


class _PullSource:
    """Buffering helper: subclasses append whole blocks via ``_extend``."""

    def __init__(self):
        self._horizon = 0.0  # generated up to here
        self._cursor = 0.0   # handed out up to here
        self._times = [np.empty(0)]
        self._bits = [np.empty(0)]

    def _extend(self):
        raise NotImplementedError

    def generate(self, t_end: float):
        if t_end < self._cursor:
            raise ValueError("sources only move forward in time")
        while self._horizon < t_end:
            self._extend()
        times = np.concatenate(self._times)
        bits = np.concatenate(self._bits)
        k = int(np.searchsorted(times, t_end, side="left"))
        self._times, self._bits = [times[k:]], [bits[k:]]
        self._cursor = t_end
        return times[:k], bits[:k]

    def _push(self, times, bits, new_horizon):
        # blocks are disjoint and ordered, so sorting within a block suffices
        order = np.argsort(times, kind="stable")
        self._times.append(times[order])
        self._bits.append(bits[order])
        self._horizon = new_horizon


class TwoStateSource(_PullSource):
    """Low/heavy bursty source with uniform sojourns and Poisson packets."""

    block = 256

    def __init__(self, params: TwoStateBurstParams, stream: RngStream):
        super().__init__()
        self.params = params.validate()
        self.gen = stream.generator
        self.rates = params.state_rates()
        self.state = HEAVY if self.gen.random() < params.heavy_fraction else LOW
        self.log_start: list[np.ndarray] = []
        self.log_length: list[np.ndarray] = []
        self.log_state: list[np.ndarray] = []

    def _extend(self):
        p, g, n = self.params, self.gen, self.block
        lengths = g.uniform(p.sojourn_lo, p.sojourn_hi, n)
        u = g.random(n)
        states = np.empty(n, dtype=np.int8)
        s = self.state
        for i in range(n):
            states[i] = s
            stay_p = 1 - (p.p_switch_from_heavy if s == HEAVY else p.p_switch_from_low)
            if u[i] >= stay_p:
                s = 1 - s
        self.state = s
        starts = self._horizon + np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
        self.log_start.append(starts)
        self.log_length.append(lengths)
        self.log_state.append(states)
        rate = np.where(states == HEAVY, self.rates[1], self.rates[0])
        counts = g.poisson(rate * lengths / p.mean_packet_size)
        total = int(counts.sum())
        times = np.repeat(starts, counts) + g.random(total) * np.repeat(lengths, counts)
        bits = _packet_sizes(g, total, p.mean_packet_size, p.packet_size_dist)
        self._push(times, bits, starts[-1] + lengths[-1])

    def sojourns(self):
        """``(start, length, state)`` arrays for every sojourn drawn so far."""
        if not self.log_start:
            return np.empty(0), np.empty(0), np.empty(0, dtype=np.int8)
        return (np.concatenate(self.log_start), np.concatenate(self.log_length),
                np.concatenate(self.log_state))


@dataclass(frozen=True)
class SelfSimilarParams:
    load: float
    link_rate: float
    hurst: float = 0.5
    mean_packet_size: float = 472e3 * 8
    packet_size_dist: str = "exponential"
    num_sources: int = 32
    mean_period: float = 1e-3
    peak_rate: Optional[float] = None  # per sub-source ON rate; None means twice its share

    def validate(self) -> "SelfSimilarParams":
        if not 0.5 <= self.hurst < 1.0:
            raise ValueError(f"hurst must lie in [0.5, 1), got {self.hurst}")
        if self.load < 0 or self.link_rate <= 0:
            raise ConfigError("load must be non-negative and link_rate positive")
        if self.num_sources < 1 or self.mean_period <= 0 or self.mean_packet_size <= 0:
            raise ConfigError("num_sources, mean_period and mean_packet_size must be positive")
        if self.peak_rate is not None and self.peak_rate <= self.mean_rate / self.num_sources:
            raise ConfigError("peak_rate must exceed each sub-source's share of the mean rate")
        return self

    @property
    def mean_rate(self) -> float:
        return self.load * self.link_rate

    @property
    def pareto_shape(self) -> float:
        return 3.0 - 2.0 * self.hurst

    @property
    def source_peak_rate(self) -> float:
        share = self.mean_rate / self.num_sources
        return 2.0 * share if self.peak_rate is None else self.peak_rate

    @property
    def off_scale(self) -> float:
        """Mean OFF period over mean ON period, fixed by the load."""
        share = self.mean_rate / self.num_sources
        return self.source_peak_rate / share - 1.0 if share > 0 else 1.0


class PoissonSource(_PullSource):
    def __init__(self, rate_bps: float, mean_packet_size: float, stream: RngStream,
                 packet_size_dist: str = "exponential", block: float = 0.05):
        super().__init__()
        self.gen = stream.generator
        self.lam = rate_bps / mean_packet_size
        self.mean_packet_size = mean_packet_size
        self.dist = packet_size_dist
        self.block = block

    def _extend(self):
        a, b = self._horizon, self._horizon + self.block
        n = int(self.gen.poisson(self.lam * self.block))
        times = a + self.gen.random(n) * self.block
        self._push(times, _packet_sizes(self.gen, n, self.mean_packet_size, self.dist), b)


class SelfSimilarSource(_PullSource):
    """Superposition of on/off sources with Pareto periods (shape 3 - 2H).

    ON and OFF periods share the Pareto shape. By default each sub-source
    emits at twice its share of the mean rate while ON and OFF periods have
    the same mean as ON periods (``mean_period``). Setting ``peak_rate``
    makes ON periods bursts at that rate instead, with OFF periods stretched
    to keep the mean rate. Packets are evenly spaced in accumulated ON time,
    which keeps short-scale noise out of variance-time estimates. Every
    sub-source starts in its stationary regime so there is no warm-up bias.
    """

    def __init__(self, params: SelfSimilarParams, stream: RngStream, block: float = 0.1):
        super().__init__()
        self.params = params.validate()
        self.gen = stream.generator
        self.block = block
        if params.hurst == 0.5:
            self._poisson = PoissonSource(params.mean_rate, params.mean_packet_size, stream,
                                          params.packet_size_dist, block)
            return
        self._poisson = None
        a = params.pareto_shape
        self.xm = params.mean_period * (a - 1) / a
        n = params.num_sources
        self.off_scale = params.off_scale
        self.on = self.gen.random(n) < 1.0 / (1.0 + self.off_scale)
        # upcoming switch times per sub-source, refilled in batches; the
        # period ending at the last switch keeps the current state because
        # batches are even
        first = self._residual(n) * np.where(self.on, 1.0, self.off_scale)
        self.switches = [np.array([r]) for r in first]
        self.tail_on = self.on.copy()
        self.peak_pps = params.source_peak_rate / params.mean_packet_size if params.mean_rate > 0 else 0.0
        self.phase = self.gen.random(n)
        self._batch = 2 * max(8, int(2 * block / params.mean_period))

    def _pareto(self, n):
        return self.xm * (1.0 + self.gen.pareto(self.params.pareto_shape, n))

    def _residual(self, n):
        # inverse of the equilibrium residual-life distribution of the Pareto law
        a, m, xm = self.params.pareto_shape, self.params.mean_period, self.xm
        v = 1.0 - self.gen.random(n)
        return np.where(v > 1 / a, m * (1 - v), xm * (v * a) ** (-1 / (a - 1)))

    def _extend(self):
        if self._poisson is not None:
            t, b = self._poisson.generate(self._horizon + self.block)
            self._push(t, b, self._horizon + self.block)
            return
        a, b = self._horizon, self._horizon + self.block
        out = []
        for i in range(self.params.num_sources):
            sw = self.switches[i]
            scale = (np.array([self.off_scale, 1.0]) if self.tail_on[i]
                     else np.array([1.0, self.off_scale]))
            while sw[-1] <= b:
                lengths = self._pareto(self._batch) * np.tile(scale, self._batch // 2)
                sw = np.concatenate([sw, sw[-1] + np.cumsum(lengths)])
            k = int(np.searchsorted(sw, b, side="right"))
            edges = np.concatenate([[a], sw[:k], [b]])
            # the state flips at every switch; pick the ON stretches
            on_idx = np.arange(0 if self.on[i] else 1, k + 1, 2)
            starts, ends = edges[on_idx], edges[on_idx + 1]
            self.on[i] ^= bool(k % 2)
            self.switches[i] = sw[k:]
            on_time = np.concatenate([[0.0], np.cumsum(ends - starts)])
            # constant packet spacing in accumulated ON time, phase carried over
            due = on_time[-1] * self.peak_pps + self.phase[i]
            n = int(due)
            pos = (np.arange(n) + 1 - self.phase[i]) / self.peak_pps
            j = np.minimum(np.searchsorted(on_time, pos, side="right") - 1, starts.size - 1)
            out.append(starts[j] + pos - on_time[j])
            self.phase[i] = due - n
        times = np.concatenate(out)
        bits = _packet_sizes(self.gen, times.size, self.params.mean_packet_size, self.params.packet_size_dist)
        self._push(times, bits, b)


def two_state_source(params: TwoStateBurstParams, stream: RngStream) -> TwoStateSource:
    return TwoStateSource(params, stream)


def self_similar_source(params: SelfSimilarParams, stream: RngStream) -> SelfSimilarSource:
    return SelfSimilarSource(params, stream)


def variance_time(series, scales):
    """Variance of the block means of ``series`` at each aggregation level."""
    x = np.asarray(series, dtype=float)
    out = []
    for m in scales:
        nb = x.size // m
        blocks = x[: nb * m].reshape(nb, m).mean(axis=1)
        out.append(blocks.var(ddof=1))
    return np.asarray(out)


def hurst_from_variance_time(series, scales) -> tuple[float, float]:
    """Least-squares slope of log-variance vs log-scale and the implied H."""
    v = variance_time(series, scales)
    slope = float(np.polyfit(np.log(scales), np.log(v), 1)[0])
    return slope, 1.0 + slope / 2.0


def index_of_dispersion(times, window: float, horizon: float) -> float:
    """Variance-to-mean ratio of arrival counts in windows of length ``window``."""
    counts, _ = np.histogram(times, bins=np.arange(0.0, horizon + window / 2, window))
    return float(counts.var(ddof=1) / counts.mean())

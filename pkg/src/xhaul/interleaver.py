"""Sharing one FFT engine between two OFDM technologies.

Technology ``a`` has the longer symbol period (``T_L``, e.g. LTE) and
technology ``b`` the shorter one (``T_D``, e.g. DOCSIS). Every symbol period a
technology enqueues one FFT job of its compute duration; one server runs the
jobs first-come first-served without preemption, each followed by a guard
interval.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .simcore import Simulator

__all__ = [
    "OfdmTechConfig",
    "InterleaveConfig",
    "InterleaveStats",
    "Stability",
    "hyper_period",
    "is_stable",
    "max_tau",
    "interleave_fit",
    "multi_tech_stable",
    "simulate_interleaving",
    "beta_sweep",
]

INCOMMENSURABLE = "incommensurable"


@dataclass(frozen=True)
class OfdmTechConfig:
    name: str
    symbol_period: float
    compute_duration: float

    def __post_init__(self):
        if self.symbol_period <= 0:
            raise ValueError(f"{self.name}: symbol period must be positive")
        if not 0 <= self.compute_duration < self.symbol_period:
            raise ValueError(f"{self.name}: compute duration must lie in [0, symbol period)")


@dataclass(frozen=True)
class InterleaveConfig:
    tech_a: OfdmTechConfig
    tech_b: OfdmTechConfig
    guard: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.guard < 0:
            raise ValueError("guard time must be non-negative")
        if self.tech_a.symbol_period < self.tech_b.symbol_period:
            a, b = self.tech_b, self.tech_a
            object.__setattr__(self, "tech_a", a)
            object.__setattr__(self, "tech_b", b)

    @classmethod
    def from_values(cls, T_L, T_D, tau_L, tau_D, guard=0.0, offset=0.0):
        return cls(OfdmTechConfig("LTE", T_L, tau_L), OfdmTechConfig("DOCSIS", T_D, tau_D),
                   guard, offset)

    @property
    def beta(self) -> float:
        """Compute-duration ratio tau_L / tau_D."""
        tb = self.tech_b.compute_duration
        return self.tech_a.compute_duration / tb if tb else math.inf

    @property
    def load(self) -> float:
        """Guard-inclusive work arriving per unit time."""
        return sum((t.compute_duration + self.guard) / t.symbol_period
                   for t in (self.tech_a, self.tech_b))


@dataclass
class InterleaveStats:
    avg_wait: dict
    utilization: float
    busy_fraction: float
    unstable: bool
    jobs: dict = field(default_factory=dict)
    max_workload: float = 0.0
    final_workload: float = 0.0
    deadline_misses: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Stability:
    stable: bool
    slack: float

    def __bool__(self):
        return self.stable


def hyper_period(T_L: float, T_D: float, rel_tol: float = 1e-9, max_den: int = 10**4):
    """Smallest (k, l) with ``k * T_D == l * T_L`` or ``"incommensurable"``.

    >>> hyper_period(71.4e-6, 40e-6)
    (357, 200)

    The denominator cap keeps the tolerance meaningful: with denominators up
    to ``q`` every real ratio is within about ``1/q**2`` of some fraction.
    """
    if T_L <= 0 or T_D <= 0:
        raise ValueError("periods must be positive")
    ratio = T_L / T_D
    frac = Fraction(ratio).limit_denominator(max_den)
    if abs(float(frac) - ratio) > rel_tol * ratio:
        return INCOMMENSURABLE
    return frac.numerator, frac.denominator


def _values(cfg: InterleaveConfig):
    a, b = cfg.tech_a, cfg.tech_b
    return a.symbol_period, b.symbol_period, a.compute_duration, b.compute_duration, cfg.guard


def is_stable(cfg: InterleaveConfig, rel_tol: float = 1e-12) -> Stability:
    """Guard-inclusive stability inequality; ``slack`` is RHS minus LHS [s^2]."""
    T_L, T_D, tau_L, tau_D, theta = _values(cfg)
    rhs = T_D * T_L - theta * (T_L + T_D)
    lhs = tau_D * T_L + tau_L * T_D
    s = rhs - lhs
    return Stability(bool(s >= -rel_tol * T_D * T_L), float(s))


def max_tau(T_L: float, T_D: float, tau_L: float, guard: float = 0.0) -> Optional[float]:
    """Largest stable compute duration for the short-period technology.

    Returns ``None`` when no non-negative duration is stable.
    """
    v = (T_D * T_L - guard * (T_L + T_D) - tau_L * T_D) / T_L
    return v if v >= 0 else None


def interleave_fit(cfg: InterleaveConfig) -> bool:
    """Room to slot the longer job between two jobs of the shorter-period technology."""
    T_L, T_D, tau_L, tau_D, _ = _values(cfg)
    short_period = min(T_L, T_D)
    longer_job, shorter_job = (tau_D, tau_L) if tau_D >= tau_L else (tau_L, tau_D)
    return longer_job <= 2 * short_period - 2 * shorter_job + 1e-15


def multi_tech_stable(techs: Sequence[OfdmTechConfig], guard: float = 0.0) -> bool:
    """n-technology extension: guard-inclusive utilization at most one."""
    return sum((t.compute_duration + guard) / t.symbol_period for t in techs) <= 1 + 1e-12


def simulate_interleaving(cfg: InterleaveConfig, horizon: float) -> InterleaveStats:
    """Event-driven run of the shared FFT engine up to ``horizon`` seconds.

    ``utilization`` counts compute time only; ``busy_fraction`` includes
    guards. The run is flagged unstable when the unfinished work seen by an
    arrival in the second half of the run exceeds one guard-inclusive job of
    each technology, which a system with load at most one can never reach.
    """
    techs = (cfg.tech_a, cfg.tech_b)
    theta = cfg.guard
    sim = Simulator()
    queue: deque = deque()
    state = {"busy": False, "busy_until": 0.0}
    waits = {t.name: [] for t in techs}
    misses = {t.name: 0 for t in techs}
    counts = {t.name: 0 for t in techs}
    acc = {"compute": 0.0, "busy": 0.0, "max_w": 0.0, "queued": 0.0}
    bound = sum(t.compute_duration + theta for t in techs)
    half = horizon / 2

    def account(start, tech):
        # only the share of service falling inside the horizon counts
        end_c = min(start + tech.compute_duration, horizon)
        end_b = min(start + tech.compute_duration + theta, horizon)
        acc["compute"] += max(end_c - start, 0.0)
        acc["busy"] += max(end_b - start, 0.0)

    def start_job(now):
        arrival, tech = queue.popleft()
        acc["queued"] -= tech.compute_duration + theta
        waits[tech.name].append(now - arrival)
        account(now, tech)
        done = now + tech.compute_duration + theta
        if now + tech.compute_duration > arrival + tech.symbol_period + 1e-15:
            misses[tech.name] += 1
        state["busy"] = True
        state["busy_until"] = done
        sim.schedule(done, on_done, kind="done")

    def on_done(s, ev):
        state["busy"] = False
        if queue:
            start_job(s.now)

    def on_arrival(s, ev):
        tech, n, origin = ev.payload
        now = s.now
        counts[tech.name] += 1
        job = tech.compute_duration + theta
        work = acc["queued"] + job
        if state["busy"]:
            work += state["busy_until"] - now
        if now >= half:
            acc["max_w"] = max(acc["max_w"], work)
        queue.append((now, tech))
        acc["queued"] += job
        nxt = origin + (n + 1) * tech.symbol_period
        if nxt < horizon:
            s.schedule(nxt, on_arrival, kind=tech.name, payload=(tech, n + 1, origin))
        if not state["busy"]:
            start_job(now)

    if cfg.offset < horizon:
        sim.schedule(cfg.offset, on_arrival, kind=cfg.tech_a.name, payload=(cfg.tech_a, 0, cfg.offset))
    sim.schedule(0.0, on_arrival, kind=cfg.tech_b.name, payload=(cfg.tech_b, 0, 0.0))
    # drain only what started before the horizon
    sim.run_until(horizon)

    final = sum(t.compute_duration + theta for _, t in queue)
    if state["busy"]:
        final += max(state["busy_until"] - horizon, 0.0)
    unstable = acc["max_w"] > bound * (1 + 1e-9) + 1e-15
    return InterleaveStats(
        avg_wait={k: (float(np.mean(v)) if v else 0.0) for k, v in waits.items()},
        utilization=acc["compute"] / horizon,
        busy_fraction=acc["busy"] / horizon,
        unstable=unstable,
        jobs=counts,
        max_workload=acc["max_w"],
        final_workload=final,
        deadline_misses=misses,
    )


def beta_sweep(T_L: float, T_D: float, tau_L: float, guard: float, betas, horizon: float):
    """Sweep the short-period compute duration as ``beta * T_L``.

    Yields ``(beta, cfg, stats)`` per grid point; points with
    ``beta * T_L >= T_D`` are skipped because the job would outlast its period.
    """
    for beta in betas:
        tau_D = beta * T_L
        if tau_D >= T_D:
            continue
        cfg = InterleaveConfig.from_values(T_L, T_D, tau_L, tau_D, guard)
        yield float(beta), cfg, simulate_interleaving(cfg, horizon)

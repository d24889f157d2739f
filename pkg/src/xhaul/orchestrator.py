"""SDN orchestration of operator uplink capacity across smart gateways.

Rows of every matrix index smart gateways (``s``), columns index operators
(``o``). All rates are bit/s.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "OrchestratorError",
    "smooth_request",
    "proportional_grants",
    "static_equal_grants",
    "classify_operators",
    "slack",
    "grants_with_sharing",
    "optimize_grants",
    "flows",
    "Orchestrator",
    "SHARING",
    "EXCESS",
    "NEITHER",
]

SHARING, EXCESS, NEITHER = "sharing", "excess", "neither"


class OrchestratorError(ValueError):
    pass


def smooth_request(prev: float, cycle_requests, W: float, alpha: float = 0.25,
                   aggregate: str = "mean") -> float:
    """Exponentially weighted request rate for one (gateway, operator) pair.

    ``cycle_requests`` holds the per-eNB request amounts [bit] of one cycle of
    length ``W``. ``aggregate="mean"`` averages them over the eNBs;
    ``"sum"`` adds them up, which yields the gateway's aggregate demand.
    """
    if not 0.0 <= alpha <= 1.0:
        raise OrchestratorError(f"alpha must lie in [0, 1], got {alpha}")
    rho = np.asarray(cycle_requests, dtype=float)
    if rho.size == 0:
        raise OrchestratorError("at least one eNB request is needed (N_s = 0)")
    if aggregate == "mean":
        sample = rho.mean() / W
    elif aggregate == "sum":
        sample = rho.sum() / W
    else:
        raise OrchestratorError(f"unknown aggregate {aggregate!r}")
    return alpha * sample + (1.0 - alpha) * prev


def _as_inputs(R, K):
    R = np.atleast_2d(np.asarray(R, dtype=float))
    K = np.asarray(K, dtype=float).reshape(-1)
    if R.shape[1] != K.size:
        raise OrchestratorError(f"request matrix has {R.shape[1]} operators but K has {K.size}")
    if (R < 0).any() or (K < 0).any():
        raise OrchestratorError("requests and constraints must be non-negative")
    return R, K


def _proportional_columns(R, budget):
    col = R.sum(axis=0)
    G = R.copy()
    over = col > budget
    # over implies col > 0, so the division is safe
    G[:, over] = R[:, over] * (budget[over] / col[over])
    return G


def proportional_grants(R, K) -> np.ndarray:
    """Grant requests in full when a column fits its budget, else pro rata."""
    R, K = _as_inputs(R, K)
    return _proportional_columns(R, K)


def static_equal_grants(R, K) -> np.ndarray:
    """Benchmark: each gateway holds K_o / S regardless of demand; flows are capped by it."""
    R, K = _as_inputs(R, K)
    S = R.shape[0]
    return np.broadcast_to(K / S, R.shape).copy()


def classify_operators(R, K) -> list[str]:
    R, K = _as_inputs(R, K)
    col = R.sum(axis=0)
    return [SHARING if c < k else EXCESS if c > k else NEITHER for c, k in zip(col, K)]


def slack(R, K, m: int) -> float:
    R, K = _as_inputs(R, K)
    z = K[m] - R[:, m].sum()
    if not z > 0:
        raise OrchestratorError(f"operator {m} has no slack (sum of requests >= K)")
    return float(z)


def grants_with_sharing(R, K, sharing: int, excess: int) -> np.ndarray:
    """Proportional grants where operator ``excess`` borrows the slack of ``sharing``."""
    R, K = _as_inputs(R, K)
    z = K[sharing] - R[:, sharing].sum()
    if z <= 0:
        return _proportional_columns(R, K)
    budget = K.copy()
    budget[excess] += z
    return _proportional_columns(R, budget)


def optimize_grants(R, K, sharing: bool = False):
    """Grant matrix plus the (sharing, excess) pair used, if any.

    With ``sharing`` enabled, at most one operator may be in excess and the
    first operator with slack lends to it.
    """
    R, K = _as_inputs(R, K)
    if not sharing:
        return _proportional_columns(R, K), None
    tags = classify_operators(R, K)
    excess_ops = [o for o, t in enumerate(tags) if t == EXCESS]
    sharing_ops = [o for o, t in enumerate(tags) if t == SHARING]
    if len(excess_ops) > 1:
        raise OrchestratorError("more than one operator in excess is not supported")
    if not excess_ops or not sharing_ops:
        return _proportional_columns(R, K), None
    m, e = sharing_ops[0], excess_ops[0]
    return grants_with_sharing(R, K, m, e), (m, e)


def flows(R, G) -> np.ndarray:
    """Long-run flow rates: a gateway sends what it needs, up to its grant."""
    return np.minimum(np.asarray(R, dtype=float), np.asarray(G, dtype=float))


@dataclass
class GatewayView:
    """What a gateway keeps from the orchestrator: its grant row and the derived Γ."""

    num_enbs: int
    cycle: float
    grants: np.ndarray = field(default=None)

    @property
    def grant_limits(self) -> np.ndarray:
        return self.grants * self.cycle / self.num_enbs


class Orchestrator:
    """Event-driven grant optimizer.

    Re-optimizes whenever a gateway request vector or an operator constraint
    arrives and pushes the new grant row to every registered gateway.
    """

    def __init__(self, num_gateways: int, num_operators: int, K=None, sharing: bool = False,
                 mode: str = "proportional"):
        if mode not in ("proportional", "static_equal"):
            raise OrchestratorError(f"unknown mode {mode!r}")
        self.R = np.zeros((num_gateways, num_operators))
        self.K = np.zeros(num_operators) if K is None else np.asarray(K, dtype=float).copy()
        self.sharing = sharing
        self.mode = mode
        self.G = np.zeros_like(self.R)
        self.pair: Optional[tuple[int, int]] = None
        self._subscribers: dict[int, Callable[[int, np.ndarray], None]] = {}
        self.reoptimizations = 0

    def subscribe(self, s: int, callback: Callable[[int, np.ndarray], None]) -> None:
        self._subscribers[s] = callback

    def attach_gateway(self, s: int, view: GatewayView) -> None:
        def push(_s, row, view=view):
            view.grants = row.copy()
        self.subscribe(s, push)

    def on_request_vector(self, s: int, vector) -> np.ndarray:
        self.R[s] = np.asarray(vector, dtype=float)
        return self._reoptimize()

    def on_constraint(self, o: int, value: float) -> np.ndarray:
        self.K[o] = float(value)
        return self._reoptimize()

    def _reoptimize(self) -> np.ndarray:
        if self.mode == "static_equal":
            G, pair = static_equal_grants(self.R, self.K), None
        else:
            G, pair = optimize_grants(self.R, self.K, sharing=self.sharing)
        self.G, self.pair = G, pair
        self.reoptimizations += 1
        log.debug("re-optimized grants (pair=%s): %s", pair, G.tolist())
        for s, cb in self._subscribers.items():
            cb(s, G[s])
        return G

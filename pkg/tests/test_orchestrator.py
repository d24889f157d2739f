import numpy as np
import pytest
from scipy.optimize import linprog

from xhaul.orchestrator import (EXCESS, NEITHER, SHARING, GatewayView, Orchestrator, OrchestratorError,
                                classify_operators, flows, grants_with_sharing, optimize_grants,
                                proportional_grants, slack, smooth_request, static_equal_grants)

MB = 1e6


def lp_best_total(R, K, pair=None):
    """Largest total flow: X <= R per cell and column budgets K (pooled for a sharing pair)."""
    S, O = R.shape
    n = S * O
    rows, rhs = [], []
    budgets = [[o] for o in range(O)]
    if pair is not None:
        m, e = pair
        budgets = [[o] for o in range(O) if o not in pair] + [[m, e]]
    for group in budgets:
        row = np.zeros(n)
        for o in group:
            row[o::O] = 1
        rows.append(row)
        rhs.append(sum(K[o] for o in group))
    if pair is not None:
        # the lender keeps its own demand
        m, _ = pair
        row = np.zeros(n)
        row[m::O] = 1
        rows.append(row)
        rhs.append(K[m])
    res = linprog(-np.ones(n), A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(0, r) for r in R.ravel()], method="highs")
    assert res.status == 0
    return -res.fun


def opti1(R):
    return np.array([[2 * R, 50 * MB], [R, 50 * MB]]), np.array([100 * MB, 100 * MB])


def test_smoothing():
    assert smooth_request(0.0, [1000, 3000], 1e-3, alpha=0.5) == pytest.approx(0.5 * 2000 / 1e-3)
    assert smooth_request(10.0, [1000, 3000], 1e-3, alpha=0.0) == 10.0
    assert smooth_request(0.0, [1000, 3000], 1e-3, alpha=1.0, aggregate="sum") == pytest.approx(4e6)
    with pytest.raises(OrchestratorError):
        smooth_request(0.0, [], 1e-3)
    with pytest.raises(OrchestratorError):
        smooth_request(0.0, [1.0], 1e-3, alpha=2)


def test_uncongested_grants_equal_requests():
    R, K = opti1(20 * MB)
    assert np.allclose(proportional_grants(R, K), R)


def test_opti1_breakpoints():
    for R in (20 * MB, 25 * MB):
        X = flows(*opti1(R)[:1], static_equal_grants(*opti1(R)))
        assert X[0, 0] == pytest.approx(2 * R)
    X = flows(opti1(30 * MB)[0], static_equal_grants(*opti1(30 * MB)))
    assert X[0, 0] == pytest.approx(50 * MB)
    G = proportional_grants(*opti1(100 * MB / 3))
    assert G[:, 0] == pytest.approx([200 * MB / 3, 100 * MB / 3])
    G = proportional_grants(*opti1(40 * MB))
    assert G[:, 0] == pytest.approx([200 * MB / 3, 100 * MB / 3])


def test_roam2_with_and_without_sharing():
    R = np.array([[100 * MB, 0], [20 * MB, 20 * MB]])
    K = np.array([50 * MB, 50 * MB])
    G, pair = optimize_grants(R, K)
    assert pair is None
    assert G[:, 0] / MB == pytest.approx([41.6667, 8.3333], abs=1e-3)
    assert classify_operators(R, K) == [EXCESS, SHARING]
    assert slack(R, K, 1) == pytest.approx(30 * MB)
    G, pair = optimize_grants(R, K, sharing=True)
    assert pair == (1, 0)
    assert G[:, 0] / MB == pytest.approx([66.6667, 13.3333], abs=1e-3)
    assert G[:, 1] == pytest.approx(R[:, 1])


def test_classification_and_errors():
    R = np.array([[10.0, 20.0, 5.0]])
    assert classify_operators(R, [20, 10, 5]) == [SHARING, EXCESS, NEITHER]
    with pytest.raises(OrchestratorError):
        slack(R, [20, 10, 5], 2)
    with pytest.raises(OrchestratorError):
        optimize_grants(np.array([[10.0, 20.0]]), [5, 5], sharing=True)
    with pytest.raises(OrchestratorError):
        proportional_grants(np.array([[1.0, 2.0]]), [1.0])
    with pytest.raises(OrchestratorError):
        proportional_grants(np.array([[-1.0]]), [1.0])


def test_sharing_without_slack_falls_back():
    R = np.array([[30.0, 60.0]])
    K = np.array([30.0, 50.0])
    assert np.allclose(grants_with_sharing(R, K, 0, 1), proportional_grants(R, K))


def test_random_instances_match_lp_oracle():
    rng = np.random.default_rng(7)
    shared = 0
    for _ in range(1000):
        S, O = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        R = rng.uniform(0, 100, (S, O)) * rng.integers(0, 2, (S, O))
        K = rng.uniform(10, 200, O)
        tags = classify_operators(R, K)
        sharing = tags.count(EXCESS) <= 1
        G, pair = optimize_grants(R, K, sharing=sharing)
        X = flows(R, G)
        assert np.all(G >= -1e-12)
        assert np.all(X <= R + 1e-9)
        col = G.sum(axis=0)
        if pair is None:
            assert np.all(col <= K + 1e-7)
        else:
            shared += 1
            m, e = pair
            assert col[m] <= K[m] + 1e-7
            assert col[m] + col[e] <= K[m] + K[e] + 1e-7
        assert X.sum() == pytest.approx(lp_best_total(R, K, pair), rel=1e-7, abs=1e-7)
    assert shared > 50


def test_orchestrator_pushes_rows_on_events():
    orch = Orchestrator(2, 2, K=[50 * MB, 50 * MB], sharing=True)
    views = [GatewayView(num_enbs=10, cycle=1e-3) for _ in range(2)]
    for s, v in enumerate(views):
        orch.attach_gateway(s, v)
    orch.on_request_vector(0, [100 * MB, 0])
    orch.on_request_vector(1, [20 * MB, 20 * MB])
    assert orch.reoptimizations == 2
    assert views[0].grants[0] / MB == pytest.approx(66.6667, abs=1e-3)
    assert views[0].grant_limits[0] == pytest.approx(66.6667 * MB * 1e-3 / 10, rel=1e-5)
    orch.on_constraint(1, 20 * MB)
    assert views[0].grants[0] / MB == pytest.approx(41.6667, abs=1e-3)


def test_static_equal_mode_ignores_demand():
    orch = Orchestrator(2, 1, K=[100 * MB], mode="static_equal")
    G = orch.on_request_vector(0, [90 * MB])
    assert G[:, 0] == pytest.approx([50 * MB, 50 * MB])
    with pytest.raises(OrchestratorError):
        Orchestrator(1, 1, mode="greedy")


def test_column_certificates_and_proportionality():
    rng = np.random.default_rng(11)
    for _ in range(500):
        S, O = int(rng.integers(2, 6)), int(rng.integers(1, 5))
        R = rng.uniform(1, 100, (S, O))
        K = rng.uniform(10, 300, O)
        G = proportional_grants(R, K)
        for o in range(O):
            full = np.allclose(G[:, o], R[:, o])
            assert full or G[:, o].sum() == pytest.approx(K[o])
            if not full:
                assert np.allclose(G[:, o] / R[:, o], G[0, o] / R[0, o])


def test_sharing_never_cuts_the_lender():
    rng = np.random.default_rng(12)
    checked = 0
    for _ in range(500):
        S = int(rng.integers(1, 5))
        R = rng.uniform(0, 100, (S, 2))
        K = rng.uniform(10, 200, 2)
        tags = classify_operators(R, K)
        if sorted(tags) != [EXCESS, SHARING]:
            continue
        m, e = tags.index(SHARING), tags.index(EXCESS)
        plain = proportional_grants(R, K)
        shared = grants_with_sharing(R, K, m, e)
        assert np.all(shared[:, m] >= plain[:, m] - 1e-9)
        assert np.all(shared[:, e] >= plain[:, e] - 1e-9)
        checked += 1
    assert checked > 50


def test_orchestrated_flow_beats_static_cap():
    for R in (26 * MB, 30 * MB, 60 * MB):
        Rm = np.array([[2 * R, 50 * MB], [R, 50 * MB]])
        K = [100 * MB, 100 * MB]
        assert flows(Rm, proportional_grants(Rm, K))[0, 0] > 50 * MB
        assert flows(Rm, static_equal_grants(Rm, K))[0, 0] == pytest.approx(50 * MB)

import math

import numpy as np
import pytest

from dirollout.blahut import BAAConfig, FunctionContinuation, ZeroContinuation, solve_stage
from dirollout.config import example1_config, random_config
from dirollout.costs import hamming
from dirollout.oracle import (OracleReport, OracleSizeError, analytic_rd_point,
                              binary_policy_grid, brute_force_horizon, brute_force_stage,
                              horizon_enumeration_count)

ZERO = ZeroContinuation()
UNI_B = np.full((2, 2), 0.5)
SYM_W = np.full((2, 2, 2), 0.5)


def random_stage(rng):
    b = rng.dirichlet(np.ones(2), size=2)
    w = rng.dirichlet(np.ones(2), size=(2, 2))
    rho = rng.uniform(0, 1, size=(2, 2))
    s = -rng.uniform(0.5, 4.0)
    scale = rng.uniform(0, 2)
    cont = FunctionContinuation(lambda st, u: scale * st[u, 0])
    return b, w, s, rho, cont


def test_analytic_point_values():
    D, R = analytic_rd_point(-2.0)
    assert D == pytest.approx(0.1192, abs=1e-4) and R == pytest.approx(0.3278, abs=1e-4)
    # Independent evaluation of the binary entropy in bits, converted to nats.
    hb_bits = -D * math.log2(D) - (1 - D) * math.log2(1 - D)
    assert R == pytest.approx((1 - hb_bits) * math.log(2), abs=1e-14)
    D, R = analytic_rd_point(-60.0)
    assert D < 1e-25 and R == pytest.approx(math.log(2), abs=1e-20)
    with pytest.raises(ValueError):
        analytic_rd_point(math.log(1.0))


def test_policy_grid_is_endpoint_inclusive_and_floored():
    g = binary_policy_grid(10)
    assert g.shape == (100, 2, 2)
    assert g[:, :, 0].min() == pytest.approx(0.0, abs=1e-11) and g[:, :, 0].max() == pytest.approx(1.0)
    assert g.min() > 0
    with pytest.raises(ValueError):
        brute_force_stage(UNI_B, SYM_W, -1.0, 0.1, hamming(2), ZERO, 0, m=5)


def test_unconstrained_stage_minimum_is_zero():
    assert abs(brute_force_stage(UNI_B, SYM_W, 0.0, 0.1, hamming(2), ZERO, 0, m=20)) < 1e-10


def test_symmetric_stage_minimum_matches_analytic():
    D, R = analytic_rd_point(-2.0)
    assert brute_force_stage(UNI_B, SYM_W, -2.0, D, hamming(2), ZERO, 0) == pytest.approx(R, abs=1e-4)


def test_solver_never_beaten_by_grid(rng):
    for _ in range(10):
        b, w, s, rho, _ = random_stage(rng)
        for c in range(2):
            q = solve_stage(b, w, s, 0.1, rho, ZERO, c, BAAConfig(epsilon=1e-10)).q_value
            bf = brute_force_stage(b, w, s, 0.1, rho, ZERO, c)
            assert q <= bf + 1e-9
            assert bf - q <= 1e-3


def test_solution_is_optimal_for_its_frozen_continuation(rng):
    # A successor-dependent continuation makes the stage problem nonconvex, so
    # the fixed point is only certified against the values it settled on.
    for _ in range(10):
        b, w, s, rho, cont = random_stage(rng)
        sol = solve_stage(b, w, s, 0.1, rho, cont, 0, BAAConfig(epsilon=1e-10))
        px = np.einsum("cp,cpx->cx", b, w)[0]
        succ = (px[:, None] * sol.mu_star / sol.nu_star).T
        frozen = [cont.f(succ, u) for u in range(2)]
        bf = brute_force_stage(b, w, s, 0.1, rho, FunctionContinuation(lambda st, u: frozen[u]), 0)
        assert sol.q_value <= bf + 1e-9


def test_nested_resolutions_are_monotone(rng):
    # 11, 21, 101, 201 points give nested grids, so the minimum cannot rise.
    for _ in range(10):
        b, w, s, rho, cont = random_stage(rng)
        v = [brute_force_stage(b, w, s, 0.1, rho, cont, 0, m=m) for m in (11, 21, 101, 201)]
        assert all(b2 <= b1 for b1, b2 in zip(v, v[1:]))


def test_horizon_zero_reduces_to_stage_search():
    config = example1_config(n=4, N=2, Ns=1)
    full = brute_force_horizon(config, m=12, horizon=0, optimize_initial=True)
    stage = brute_force_stage(np.ones((1, 1)), config.kernel(0), float(config.s[0]),
                              float(config.D[0]), config.distortion, ZERO, 0, m=12)
    assert full == pytest.approx(stage, abs=1e-12)


def test_unconstrained_horizon_minimum_is_zero(rng):
    config = random_config(rng, N=2, Ns=1, n=4, s=0.0)
    assert abs(brute_force_horizon(config, m=6, optimize_initial=True)) < 1e-10


def test_horizon_size_limits():
    config = example1_config(n=4, N=4, Ns=1)
    with pytest.raises(OracleSizeError):
        brute_force_horizon(config, m=10)
    config = example1_config(n=4, N=3, Ns=1)
    with pytest.raises(OracleSizeError):
        brute_force_horizon(config, m=25, horizon=2)
    with pytest.raises(OracleSizeError, match=str(horizon_enumeration_count(3, 20))):
        brute_force_horizon(config, m=20, optimize_initial=True)


def test_enumeration_count_formula():
    # Stage 0 fixed: one root, 2 successors scanned over M, then 2M * 2 more.
    M = 100
    assert horizon_enumeration_count(2, 10, optimize_initial=False) == 1 + 2 * M + 4 * M ** 2
    assert horizon_enumeration_count(0, 10) == M


def test_zoom_refines_the_search():
    config = example1_config(n=4, N=1, Ns=1)
    coarse = brute_force_horizon(config, m=6)
    fine = brute_force_horizon(config, m=6, zoom=2)
    assert fine <= coarse


def test_oracle_report_gaps():
    rep = OracleReport(instance={}, oracle_values={"q": 1.0, "r": 2.0},
                       solver_values={"q": 1.0005, "r": 2.1}, tolerances={"q": 1e-3, "r": 1e-3})
    assert rep.passed == {"q": True, "r": False}
    assert rep.to_dict()["gaps"]["r"] == pytest.approx(0.1)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirollout.costs import (LagrangeSchedule, NumericalConsistencyError, directed_information,
                             expected_distortion, hamming, lagrangian_stage_cost,
                             stage_mutual_information)
from dirollout.probability import output_distribution, state_marginal

RHO = hamming(2)


def random_instance(rng):
    b = rng.dirichlet(np.ones(2), size=2)
    mu = rng.dirichlet(np.ones(2), size=(2, 2))
    w = rng.dirichlet(np.ones(2), size=(2, 2))
    m = rng.dirichlet(np.ones(2))
    return b, mu, w, m


def test_mi_zero_when_policy_ignores_state():
    b = np.array([[0.3, 0.7], [0.6, 0.4]])
    w = np.full((2, 2, 2), 0.5)
    mu = np.broadcast_to(np.array([[0.2, 0.8], [0.9, 0.1]])[:, None, :], (2, 2, 2))
    assert abs(stage_mutual_information(b, mu, w)) < 1e-15


def test_mi_of_revealing_policy_is_ln2():
    b = np.full((2, 2), 0.5)
    w = np.full((2, 2, 2), 0.5)
    mu = np.broadcast_to(np.eye(2), (2, 2, 2))
    assert stage_mutual_information(b, mu, w, m=np.array([0.3, 0.7])) == pytest.approx(math.log(2), abs=1e-12)


def test_mi_matches_joint_double_sum(rng):
    for _ in range(20):
        b, mu, w, m = random_instance(rng)
        total = 0.0
        for c in range(2):
            joint = np.zeros((2, 2))
            for xp in range(2):
                for x in range(2):
                    for u in range(2):
                        joint[x, u] += b[c, xp] * w[c, xp, x] * mu[c, x, u]
            px, pu = joint.sum(1), joint.sum(0)
            total += m[c] * sum(joint[x, u] * math.log(joint[x, u] / (px[x] * pu[u]))
                                for x in range(2) for u in range(2))
        assert stage_mutual_information(b, mu, w, m=m) == pytest.approx(total, abs=1e-10)


def test_negative_matched_mi_raises(monkeypatch):
    import dirollout.costs as costs
    b, mu, w = np.full((2, 2), 0.5), np.full((2, 2, 2), 0.5), np.full((2, 2, 2), 0.5)
    # An unnormalized output law is the only way to push the matched value below zero.
    monkeypatch.setattr(costs, "output_distribution", lambda *a: np.full((2, 2), 2.0))
    with pytest.raises(NumericalConsistencyError):
        costs.stage_mutual_information(b, mu, w)


def test_directed_information_examples():
    assert directed_information([0.0, 0.0, 0.0]) == 0.0
    assert directed_information([math.log(2)] * 2) == pytest.approx(2 * math.log(2), abs=1e-15)


def test_expected_distortion_examples(rng):
    b, _, w, m = random_instance(rng)
    assert expected_distortion(b, np.broadcast_to(np.eye(2), (2, 2, 2)), w, RHO, m) == 0.0
    assert expected_distortion(b, np.full((2, 2, 2), 0.5), w, RHO, m) == pytest.approx(0.5, abs=1e-15)


def test_lagrangian_stage_cost_examples():
    assert lagrangian_stage_cost(0.0, 0.1, -2.0, 0.1) == 0.0
    assert lagrangian_stage_cost(0.5, 0.2, -2.0, 0.1) == pytest.approx(0.7, abs=1e-15)
    assert lagrangian_stage_cost(0.42, 0.3, 0.0, 0.1) == 0.42
    with pytest.raises(ValueError):
        lagrangian_stage_cost(0.1, 0.1, 0.5, 0.1)


def test_lagrange_schedule_validation():
    sched = LagrangeSchedule.constant(-2.0, 0.1, horizon=3)
    assert len(sched) == 4
    with pytest.raises(ValueError):
        LagrangeSchedule(s=(-1.0, 0.5), D=(0.1, 0.1))
    with pytest.raises(ValueError):
        LagrangeSchedule(s=(-1.0,), D=(-0.1,))
    with pytest.raises(ValueError):
        LagrangeSchedule(s=(-1.0,), D=(0.1, 0.2))


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_matched_output_law_minimizes_mi(seed):
    rng = np.random.default_rng(seed)
    b, mu, w, m = random_instance(rng)
    matched = stage_mutual_information(b, mu, w, m=m)
    assert matched >= -1e-9
    for nu in rng.dirichlet(np.ones(2), size=(100, 2)):
        assert stage_mutual_information(b, mu, w, nu=nu, m=m) >= matched - 1e-12


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0, 1))
def test_distortion_is_linear_in_policy(seed, lam):
    rng = np.random.default_rng(seed)
    b, mu1, w, m = random_instance(rng)
    mu2 = rng.dirichlet(np.ones(2), size=(2, 2))
    rho = rng.uniform(0, 1, size=(2, 2))
    mixed = expected_distortion(b, lam * mu1 + (1 - lam) * mu2, w, rho, m)
    parts = lam * expected_distortion(b, mu1, w, rho, m) + (1 - lam) * expected_distortion(b, mu2, w, rho, m)
    assert mixed == pytest.approx(parts, abs=1e-12)

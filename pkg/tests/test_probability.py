import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirollout.config import example1_kernel
from dirollout.probability import (DegenerateDistributionError, UnreachableOutputError,
                                   belief_update, control_marginal_update, floor_and_renormalize,
                                   normalize, output_distribution, propagate_information_state,
                                   successor_beliefs)

from enumeration import joint_table, posterior_x_given_pair, posterior_x_given_u

UNIFORM_KERNEL = example1_kernel(0.5, 0.5)
EX1 = example1_kernel(0.4, 0.8)


@pytest.mark.parametrize("v, expected", [([2, 2], [0.5, 0.5]), ([1, 0], [1, 0]),
                                         ([0.29, 0.21], [0.58, 0.42])])
def test_normalize_examples(v, expected):
    np.testing.assert_allclose(normalize(v), expected, rtol=0, atol=1e-15)


def test_normalize_rejects_zero_and_negative():
    with pytest.raises(DegenerateDistributionError):
        normalize([0.0, 0.0])
    with pytest.raises(ValueError):
        normalize([-1.0, 2.0])


def test_floor_and_renormalize_keeps_simplex():
    p = floor_and_renormalize(np.array([1.0, 0.0]), floor=1e-6)
    assert p[1] > 0 and abs(p.sum() - 1) < 1e-15


def test_belief_update_uniform_symmetry():
    b = np.full((2, 2), 0.5)
    mu = np.full((2, 2, 2), 0.5)
    for up in range(2):
        for u in range(2):
            np.testing.assert_allclose(belief_update(b, mu, UNIFORM_KERNEL, up, u), [0.5, 0.5])


def test_belief_update_example1_hand_value():
    # 0.9 * [0.6, 0.4] + 0.1 * [0.4, 0.6]; a policy constant in x cancels.
    b = np.array([[0.9, 0.1], [0.5, 0.5]])
    mu = np.full((2, 2, 2), 0.5)
    np.testing.assert_allclose(belief_update(b, mu, EX1, 0, 1), [0.58, 0.42], atol=1e-15)


def test_belief_update_identity_kernel_point_mass():
    w = np.broadcast_to(np.eye(2), (2, 2, 2))
    b = np.array([[0.0, 1.0], [0.5, 0.5]])
    mu = np.full((2, 2, 2), 0.5)
    np.testing.assert_array_equal(belief_update(b, mu, w, 0, 0), [0.0, 1.0])


def test_successor_beliefs_flags_unreachable():
    w = np.broadcast_to(np.eye(2), (2, 2, 2))
    b = np.array([[1.0, 0.0], [0.5, 0.5]])
    mu = np.broadcast_to(np.eye(2), (2, 2, 2))           # u = x
    out = successor_beliefs(b, mu, w, 0)
    assert out[1] is None
    np.testing.assert_array_equal(out[0], [1.0, 0.0])
    with pytest.raises(UnreachableOutputError):
        belief_update(b, mu, w, 0, 1)


def test_successor_beliefs_match_belief_update(rng):
    for _ in range(20):
        b = rng.dirichlet(np.ones(2), size=2)
        mu = rng.dirichlet(np.ones(2), size=(2, 2))
        w = rng.dirichlet(np.ones(2), size=(2, 2))
        for up in range(2):
            out = successor_beliefs(b, mu, w, up)
            assert set(out) == {0, 1}
            for u in range(2):
                np.testing.assert_array_equal(out[u], belief_update(b, mu, w, up, u))
                assert abs(out[u].sum() - 1) < 1e-12


def test_output_distribution_examples():
    b = np.array([[0.9, 0.1], [0.5, 0.5]])
    q = np.array([0.3, 0.7])
    mu_const = np.broadcast_to(q, (2, 2, 2))
    np.testing.assert_allclose(output_distribution(b, mu_const, EX1, 0), q, rtol=0, atol=1e-16)

    ident = np.broadcast_to(np.eye(2), (2, 2, 2))
    np.testing.assert_allclose(output_distribution(np.full((2, 2), 0.5), ident, UNIFORM_KERNEL, 1),
                               [0.5, 0.5])

    mu = np.array([[[0.8, 0.2], [0.3, 0.7]], [[0.5, 0.5], [0.5, 0.5]]])
    # Oracle: explicit sum over (x_prev, x) of the joint in context 0.
    expected = sum(b[0, xp] * EX1[0, xp, x] * mu[0, x, 0] for xp in range(2) for x in range(2))
    assert expected == pytest.approx(0.590, abs=1e-12)
    assert output_distribution(b, mu, EX1, 0)[0] == pytest.approx(expected, abs=1e-15)


def test_control_marginal_update_examples():
    nu = np.array([[0.7, 0.3], [0.2, 0.8]])
    np.testing.assert_allclose(control_marginal_update([0.6, 0.4], nu), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(control_marginal_update([1.0, 0.0], nu), nu[0])
    same = np.array([[0.1, 0.9], [0.1, 0.9]])
    np.testing.assert_allclose(control_marginal_update([0.3, 0.7], same), [0.1, 0.9])


def test_propagate_marks_dead_contexts():
    b = np.array([[1.0, 0.0], [0.5, 0.5]])
    w = np.broadcast_to(np.eye(2), (2, 2, 2))
    mu = np.broadcast_to(np.eye(2), (2, 2, 2))
    b_next, m_next, dead = propagate_information_state(b, mu, w, np.array([1.0, 0.0]))
    np.testing.assert_array_equal(dead, [False, True])
    np.testing.assert_array_equal(m_next, [1.0, 0.0])
    np.testing.assert_array_equal(b_next[1], [0.5, 0.5])


simplex2 = st.floats(0.01, 0.99).map(lambda a: np.array([a, 1 - a]))


def _arrays(draw, shape):
    return np.array([draw(simplex2) for _ in range(int(np.prod(shape)))]).reshape(shape + (2,))


@st.composite
def instances(draw):
    return (_arrays(draw, (2,)), _arrays(draw, (2, 2)), _arrays(draw, (2, 2)))


@settings(max_examples=300, deadline=None)
@given(instances())
def test_every_distribution_output_is_normalized(inst):
    b, mu, w = inst
    m = b[0]
    for out in (output_distribution(b, mu, w), control_marginal_update(m, output_distribution(b, mu, w)),
                propagate_information_state(b, mu, w, m)[0]):
        assert np.all(out >= 0) and np.all(out <= 1)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, rtol=0, atol=1e-9)
    for up in range(2):
        for u in range(2):
            p = belief_update(b, mu, w, up, u)
            assert abs(p.sum() - 1) <= 1e-9


@st.composite
def histories(draw, T=3):
    x0 = draw(simplex2)
    mu0 = _arrays(draw, (2,))
    kernels = [_arrays(draw, (2, 2)) for _ in range(T)]
    policies = [_arrays(draw, (2, 2)) for _ in range(T)]
    return x0, mu0, kernels, policies


def check_against_enumeration(x0, mu0, kernels, policies):
    """Chain the memory-1 recursion and compare every stage with the enumerated joint."""
    T = len(kernels)
    table = joint_table(x0, mu0, kernels, policies)
    b, m, _ = propagate_information_state(np.ones((1, 1)), mu0[None], x0[None, None, :],
                                          np.ones(1))
    worst = 0.0
    for t in range(1, T + 1):
        w, mu = kernels[t - 1], policies[t - 1]
        pair = posterior_x_given_pair(table, t, 2, 2)
        for up in range(2):
            for u in range(2):
                worst = max(worst, np.abs(belief_update(b, mu, w, up, u) - pair[up, u]).max())
        b_exact_prev, m_exact_prev = posterior_x_given_u(table, t - 1, 2, 2)
        m_check = control_marginal_update(m, output_distribution(b, mu, w))
        b, m, _ = propagate_information_state(b, mu, w, m)
        b_exact, m_exact = posterior_x_given_u(table, t, 2, 2)
        worst = max(worst, np.abs(b - b_exact).max(), np.abs(m - m_exact).max(),
                    np.abs(m_check - m_exact).max())
    return worst


@settings(max_examples=150, deadline=None)
@given(histories())
def test_recursion_matches_enumerated_joint(h):
    assert check_against_enumeration(*h) <= 1e-10

"""Probability primitives and the controlled-source system model.

Array conventions used throughout the package (memory-1 truncation, the
previous control ``u_prev`` acts as the context):

``b``   information state, shape ``(C, X)``; ``b[u_prev, x_prev]``.
``w``   transition kernel for one stage, shape ``(C, Xp, X)``;
        ``w[u_prev, x_prev, x] = P(x_t = x | x_{t-1} = x_prev, u_{t-1} = u_prev)``.
``mu``  control policy, shape ``(C, X, U)``; ``mu[u_prev, x, u]``.
``nu``  output distribution, shape ``(C, U)``; ``nu[u_prev, u]``.
``m``   control marginal ``P(u_{t-1})``, shape ``(C,)``.

Stage 0 is expressed with a single dummy context and a single dummy
previous state, so ``w[0, 0, :]`` is the initial state distribution.
"""
from __future__ import annotations

import numpy as np

SIMPLEX_ATOL = 1e-9
PROB_FLOOR = 1e-12


class DegenerateDistributionError(ValueError):
    """Raised when a vector with no positive mass is normalized."""


class UnreachableOutputError(ValueError):
    """Raised when a belief is requested for a control of probability zero."""


def normalize(v, axis=-1):
    """Scale nonnegative ``v`` so it sums to one along ``axis``."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("normalize expects nonnegative entries")
    total = v.sum(axis=axis, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateDistributionError("cannot normalize an all-zero vector")
    return v / total


def is_simplex(p, axis=-1, atol=SIMPLEX_ATOL):
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= 0) and np.allclose(p.sum(axis=axis), 1.0, rtol=0, atol=atol))


def check_simplex(p, name="distribution", axis=-1, atol=SIMPLEX_ATOL):
    """Return ``p`` as a float array, raising if any row leaves the simplex."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    sums = p.sum(axis=axis)
    if not np.allclose(sums, 1.0, rtol=0, atol=atol):
        raise ValueError(f"{name} rows must sum to 1 (got {np.ravel(sums)[:4]})")
    return p


def floor_and_renormalize(p, floor=PROB_FLOOR, axis=-1):
    """Clamp every entry to at least ``floor`` and renormalize."""
    p = np.maximum(np.asarray(p, dtype=float), floor)
    return p / p.sum(axis=axis, keepdims=True)


def state_marginal(b, w):
    """Predicted distribution of ``x_t`` per context: ``sum_xp w[c, xp, x] b[c, xp]``."""
    return np.einsum("cp,cpx->cx", b, w)


def _joint_xu(b, mu, w, u_prev):
    px = state_marginal(b, w)[u_prev]
    return px[:, None] * mu[u_prev]  # (X, U)


def belief_update(b, mu, w, u_prev, u):
    """Posterior over ``x_t`` after observing control ``u`` in context ``u_prev``.

    Raises :class:`UnreachableOutputError` when ``u`` has zero probability.
    """
    joint = _joint_xu(b, mu, w, u_prev)[:, u]
    z = joint.sum()
    if z <= 0:
        raise UnreachableOutputError(
            f"control {u} is unreachable in context u_prev={u_prev}")
    return joint / z


def successor_beliefs(b, mu, w, u_prev):
    """Beliefs for every control outcome; unreachable controls map to ``None``."""
    joint = _joint_xu(b, mu, w, u_prev)
    out = {}
    for u in range(joint.shape[1]):
        z = joint[:, u].sum()
        out[u] = joint[:, u] / z if z > 0 else None
    return out


def output_distribution(b, mu, w, u_prev=None):
    """Induced ``nu(u | u_prev)``.

    With ``u_prev=None`` returns the full ``(C, U)`` table.
    """
    nu = np.einsum("cx,cxu->cu", state_marginal(b, w), mu)
    nu = nu / nu.sum(axis=-1, keepdims=True)
    return nu if u_prev is None else nu[u_prev]


def control_marginal_update(m, nu):
    """``m'(u) = sum_c nu(u | c) m(c)``."""
    m_next = np.asarray(m, dtype=float) @ np.asarray(nu, dtype=float)
    return m_next / m_next.sum()


def propagate_information_state(b, mu, w, m, floor=0.0):
    """Next information state and control marginal under memory-1 truncation.

    The successor row for the new context ``u`` is the exact posterior
    ``P(x_t | u_t = u)``, i.e. the per-context posteriors of
    :func:`belief_update` mixed with weights ``P(u_{t-1} | u_t)``.
    Contexts whose new marginal is below ``floor`` (or zero) get a uniform
    placeholder row and are reported in the returned mask.
    """
    px = state_marginal(b, w)                          # (C, X)
    joint = m[:, None, None] * px[:, :, None] * mu     # (C, X, U)
    joint_xu = joint.sum(axis=0)                       # (X, U)
    m_next = joint_xu.sum(axis=0)                      # (U,)
    dead = m_next <= floor
    b_next = np.empty((joint_xu.shape[1], joint_xu.shape[0]))
    for u in range(joint_xu.shape[1]):
        if dead[u]:
            b_next[u] = 1.0 / joint_xu.shape[0]
        else:
            b_next[u] = joint_xu[:, u] / m_next[u]
    return b_next, m_next / m_next.sum(), dead

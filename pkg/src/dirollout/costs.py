"""Information and distortion costs of one stage, all in nats."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .probability import PROB_FLOOR, output_distribution, state_marginal


class NumericalConsistencyError(ArithmeticError):
    pass


def hamming(x_size=2, u_size=None):
    u_size = x_size if u_size is None else u_size
    return 1.0 - np.eye(x_size, u_size)


@dataclass(frozen=True)
class LagrangeSchedule:
    """Per-stage multipliers ``s_t <= 0`` and thresholds ``D_t >= 0``."""

    s: tuple
    D: tuple

    def __post_init__(self):
        if len(self.s) != len(self.D):
            raise ValueError("s and D schedules must have equal length")
        if any(v > 0 for v in self.s):
            raise ValueError("Lagrange multipliers must satisfy s_t <= 0")
        if any(v < 0 for v in self.D):
            raise ValueError("distortion thresholds must be nonnegative")

    @classmethod
    def constant(cls, s, D, horizon):
        return cls(s=(float(s),) * (horizon + 1), D=(float(D),) * (horizon + 1))

    def __len__(self):
        return len(self.s)


def _log_ratio(mu, nu, floor):
    return np.log(np.maximum(mu, floor)) - np.log(np.maximum(nu, floor))


def stage_mutual_information(b, mu, w, nu=None, m=None, floor=PROB_FLOOR):
    """Conditional mutual information ``I(X_t; U_t | U_{t-1})`` in nats.

    ``nu`` may be any output distribution; when omitted the one induced by
    ``(b, mu, w)`` is used and the result is checked for nonnegativity.
    ``m`` weights the contexts (uniform weight 1 for a single context).
    """
    matched = nu is None
    if matched:
        nu = output_distribution(b, mu, w)
    if m is None:
        m = np.ones(b.shape[0]) / b.shape[0]
    px = state_marginal(b, w)
    terms = np.where(mu > 0, mu * _log_ratio(mu, nu[:, None, :], floor), 0.0)
    per_context = np.einsum("cx,cxu->c", px, terms)
    value = float(np.dot(m, per_context))
    if matched and value < -1e-9:
        raise NumericalConsistencyError(f"negative mutual information {value}")
    return value


def directed_information(stage_costs):
    # Left-to-right sum, so it agrees bit-for-bit with a running cumulative column.
    return float(sum((float(c) for c in stage_costs), 0.0))


def expected_distortion(b, mu, w, rho, m=None):
    if m is None:
        m = np.ones(b.shape[0]) / b.shape[0]
    px = state_marginal(b, w)
    per_context = np.einsum("cx,cxu,xu->c", px, mu, rho)
    return float(np.dot(m, per_context))


def lagrangian_stage_cost(mi, dist, s_t, D_t):
    if s_t > 0:
        raise ValueError("s_t must be <= 0")
    return mi - s_t * (dist - D_t)

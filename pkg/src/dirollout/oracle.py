"""Independent checks: exhaustive policy search and the analytic binary Hamming point.

Nothing here calls the alternating-minimization solver; the searches only
evaluate the stage objective on grids of candidate policies.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blahut import evaluate_q
from .probability import PROB_FLOOR, state_marginal

MAX_ENUMERATION = 50_000_000


class OracleSizeError(ValueError):
    pass


def analytic_rd_point(s):
    """Distortion and rate (nats) of the uniform binary source under Hamming distortion at slope ``s``."""
    if not s < 0:
        raise ValueError("analytic rate-distortion point needs s < 0")
    D = np.exp(s) / (1.0 + np.exp(s))
    h = -D * np.log(D) - (1 - D) * np.log1p(-D)
    return float(D), float(np.log(2.0) - h)


def binary_policy_grid(m, floor=PROB_FLOOR):
    """All ``m * m`` binary policies with ``mu(0|x)`` on an endpoint-inclusive grid, ``(m*m, 2, 2)``."""
    if m < 2:
        raise ValueError("resolution must be >= 2")
    v = np.clip(np.linspace(0.0, 1.0, m), floor, 1.0 - floor)
    a, b = np.meshgrid(v, v, indexing="ij")
    return _policies(np.stack([a.ravel(), b.ravel()], axis=-1))


def _policies(p0):
    """Policies from ``mu(0|x)`` parameters of shape ``(..., 2)``."""
    return np.stack([p0, 1.0 - p0], axis=-1)


def brute_force_stage(b, w, s_t, D_t, rho, cont, u_prev, m=200, floor=PROB_FLOOR):
    """Smallest stage Q value over an ``m x m`` grid of binary policies, with matched output law."""
    b = np.asarray(b, float)
    rho = np.asarray(rho, float)
    if rho.shape != (2, 2):
        raise ValueError("brute_force_stage supports binary alphabets only")
    if m < 10:
        raise ValueError("resolution must be >= 10")
    px = state_marginal(b, np.asarray(w, float))[u_prev]
    mus = binary_policy_grid(m, floor)
    pxs = np.broadcast_to(px, (len(mus), 2))
    nus = np.einsum("bx,bxu->bu", pxs, mus)
    q, _, _ = evaluate_q(pxs, mus, nus, s_t, D_t, rho, cont, floor)
    return float(q.min())


# -- full-history horizon search ---------------------------------------------

def _stage_terms(px, mus, s, D, rho, floor):
    """Stage cost, output law and successors for states ``px (K, X)`` and candidates ``mus (K, M, X, U)``."""
    joint = px[:, None, :, None] * mus                      # (K, M, X, U)
    nu = joint.sum(axis=2)                                  # (K, M, U)
    lr = np.log(np.maximum(mus, floor)) - np.log(np.maximum(nu, floor))[:, :, None, :]
    mi = np.sum(np.where(mus > 0, joint * lr, 0.0), axis=(2, 3))
    dist = np.einsum("kmxu,xu->km", joint, rho)
    g = mi - s * (dist - D)
    succ = np.swapaxes(joint, 2, 3) / np.where(nu > 0, nu, 1.0)[..., None]   # (K, M, U, X)
    return g, nu, succ


class _HorizonSearch:
    def __init__(self, config, horizon, m, zoom, floor):
        self.c = config
        self.N = horizon
        self.m = m
        self.zoom = zoom
        self.floor = floor
        self.rho = np.asarray(config.distortion, float)
        self.evaluations = 0

    def kernel_rows(self, t, beliefs, ups):
        """Predicted state law for beliefs ``(K, X)`` in contexts ``ups (K,)``."""
        if t == 0:
            X = len(self.c.initial_state)
            return np.broadcast_to(self.c.initial_state, (len(beliefs), X)).copy()
        w = self.c.kernel(t)                                # (C, Xp, X)
        return np.einsum("kp,kpx->kx", beliefs, w[ups])

    def value(self, t, beliefs, ups, fixed=None):
        """Optimal cost-to-go from stage ``t`` for each state; ``fixed`` pins the stage policy."""
        K = len(beliefs)
        if t > self.N or K == 0:
            return np.zeros(K)
        px = self.kernel_rows(t, beliefs, ups)
        s, D = float(self.c.s[t]), float(self.c.D[t])
        if fixed is not None:
            return self._evaluate(t, px, np.broadcast_to(fixed, (K, 1) + fixed.shape), s, D)[:, 0]
        grid = np.linspace(0.0, 1.0, self.m)
        params = np.broadcast_to(np.stack(np.meshgrid(grid, grid, indexing="ij"), -1)
                                 .reshape(-1, 2), (K, self.m ** 2, 2))
        step = grid[1] - grid[0]
        best_val = np.full(K, np.inf)
        for level in range(self.zoom + 1):
            p = np.clip(params, self.floor, 1.0 - self.floor)
            vals = self._evaluate(t, px, _policies(p), s, D)
            j = np.argmin(vals, axis=1)
            best_val = np.minimum(best_val, vals[np.arange(K), j])
            if level == self.zoom:
                break
            centre = p[np.arange(K), j]                     # (K, 2)
            local = np.linspace(-step, step, self.m)
            offs = np.stack(np.meshgrid(local, local, indexing="ij"), -1).reshape(-1, 2)
            params = np.clip(centre[:, None, :] + offs[None], 0.0, 1.0)
            step = local[1] - local[0]
        return best_val

    def _evaluate(self, t, px, mus, s, D):
        K, M = mus.shape[:2]
        self.evaluations += K * M
        g, nu, succ = _stage_terms(px, mus, s, D, self.rho, self.floor)
        U = nu.shape[-1]
        ups = np.broadcast_to(np.arange(U), (K, M, U)).reshape(-1)
        nxt = self.value(t + 1, succ.reshape(-1, succ.shape[-1]), ups).reshape(K, M, U)
        return g + np.sum(nu * nxt, axis=-1)


def horizon_enumeration_count(horizon, m, zoom=0, optimize_initial=True, u_size=2):
    """Number of candidate-policy evaluations performed by :func:`brute_force_horizon`."""
    M = (zoom + 1) * m * m
    count, states = 0, 1
    for t in range(horizon + 1):
        per_state = M if (t > 0 or optimize_initial) else 1
        count += states * per_state
        states *= per_state * u_size
    return count


def brute_force_horizon(config, m=10, horizon=None, optimize_initial=False, zoom=0,
                        floor=PROB_FLOOR, budget=MAX_ENUMERATION):
    """Exact full-history minimum of the Lagrangian total cost over grid policies.

    Each history node picks its own policy from an ``m x m`` grid (refined
    ``zoom`` times around the incumbent), so no memory truncation is applied.
    With ``optimize_initial=False`` the stage-0 policy is the configured one.
    """
    N = config.horizon if horizon is None else horizon
    if N > 3:
        raise OracleSizeError("brute_force_horizon supports N <= 3")
    if m > 20:
        raise OracleSizeError("brute_force_horizon supports m <= 20")
    if np.asarray(config.distortion).shape != (2, 2):
        raise ValueError("brute_force_horizon supports binary alphabets only")
    count = horizon_enumeration_count(N, m, zoom, optimize_initial)
    if count > budget:
        raise OracleSizeError(f"enumeration of {count} candidate evaluations exceeds budget {budget}")
    search = _HorizonSearch(config, N, m, zoom, floor)
    root = np.ones((1, 1))
    fixed = None if optimize_initial else np.asarray(config.initial_policy, float)
    return float(search.value(0, root, np.zeros(1, dtype=int), fixed=fixed)[0])


@dataclass
class OracleReport:
    instance: dict
    oracle_values: dict
    solver_values: dict
    tolerances: dict
    gaps: dict = field(init=False)
    passed: dict = field(init=False)

    def __post_init__(self):
        self.gaps = {k: abs(self.oracle_values[k] - self.solver_values[k])
                     for k in self.oracle_values}
        self.passed = {k: bool(self.gaps[k] <= self.tolerances.get(k, np.inf)) for k in self.gaps}

    def to_dict(self):
        return {"instance": self.instance, "oracle_values": self.oracle_values,
                "solver_values": self.solver_values, "tolerances": self.tolerances,
                "gaps": self.gaps, "passed": self.passed}

"""Online truncated rollout, repeated rollout, and the full-horizon baseline."""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .blahut import BAAConfig, ZeroContinuation, evaluate_q, solve_batch
from .costs import directed_information, lagrangian_stage_cost
from .grid import build_uniform_grid, refine_from_trajectory
from .offline import StaleArtifactError, TableContinuation, train
from .probability import propagate_information_state, state_marginal

log = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-12


class PropagationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RolloutConfig:
    rounds: int = 1
    baseline: bool = False
    baa: BAAConfig | None = None
    # Candidates scored at the online belief, always including the base grid
    # policy: "lookahead" adds a fresh inner minimization, "stored" every
    # stored grid policy, "combined" both.
    selection: str = "lookahead"

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.selection not in ("lookahead", "stored", "combined"):
            raise ValueError(f"unknown selection mode {self.selection!r}")


@dataclass
class RolloutTrajectory:
    """Per-stage record for t = 0..N.  Beliefs and weights are stored for t = 1..N."""

    beliefs: list = field(default_factory=list)          # (C, X) for t = 1..N
    context_weights: list = field(default_factory=list)  # (C,)  for t = 1..N
    policies: list = field(default_factory=list)         # t = 0..N
    outputs: list = field(default_factory=list)          # t = 0..N
    stage_mi: list = field(default_factory=list)
    distortion: list = field(default_factory=list)
    lagrangian: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    lookahead_q: list = field(default_factory=list)      # averaged Q of chosen policy, t >= 1
    base_q: list = field(default_factory=list)           # averaged Q of base grid policy, t >= 1
    source: list = field(default_factory=list)           # which candidate won, per stage

    @property
    def cumulative_di(self):
        return list(itertools.accumulate((float(v) for v in self.stage_mi), initial=0.0))[1:]

    @property
    def total_di(self):
        return directed_information(self.stage_mi)

    @property
    def total_cost(self):
        return float(sum((float(v) for v in self.lagrangian), 0.0))

    @property
    def horizon(self):
        return len(self.stage_mi) - 1


def _record(traj, t, config, b, w, mu, m, seconds):
    px = state_marginal(b, w)
    nu = np.einsum("cx,cxu->cu", px, mu)
    floor = config.prob_floor
    lr = np.log(np.maximum(mu, floor)) - np.log(np.maximum(nu, floor))[:, None, :]
    mi_c = np.einsum("cx,cxu->c", px, np.where(mu > 0, mu * lr, 0.0))
    dist_c = np.einsum("cx,cxu,xu->c", px, mu, config.distortion)
    mi, dist = float(m @ mi_c), float(m @ dist_c)
    traj.policies.append(mu)
    traj.outputs.append(nu)
    traj.stage_mi.append(mi)
    traj.distortion.append(dist)
    traj.lagrangian.append(lagrangian_stage_cost(mi, dist, float(config.s[t]), float(config.D[t])))
    traj.seconds.append(seconds)


def _initial_stage(config, traj):
    start = time.perf_counter()
    b0 = np.ones((1, 1))
    w0 = config.kernel(0)
    mu0 = config.initial_policy[None]
    m0 = np.ones(1)
    b1, m1, _ = propagate_information_state(b0, mu0, w0, m0)
    _record(traj, 0, config, b0, w0, mu0, m0, time.perf_counter() - start)
    return b1, m1


def _continuation(artifact, t, N):
    if t >= N:
        return ZeroContinuation()
    return TableContinuation(artifact.tables[max(t + 1, artifact.first_stage)], artifact.grid)


def _base_table(artifact, t):
    return artifact.tables[max(t, artifact.first_stage)]


def lookahead_q(b, artifact, t, config, baa=None):
    """Fresh per-context stage solves at the online belief ``b``; returns a BatchSolution."""
    if not 1 <= t <= config.horizon:
        raise ValueError(f"stage {t} outside 1..{config.horizon}")
    baa = config.baa if baa is None else baa
    px = state_marginal(np.asarray(b, float), config.kernel(t))
    cont = _continuation(artifact, t, config.horizon)
    return solve_batch(px, float(config.s[t]), float(config.D[t]), config.distortion, cont, baa)


def rollout_policy_select(solutions, m, placeholder=None):
    """Assemble the stage policy from per-context minimizers and average their Q values.

    ``solutions`` is a sequence of objects with ``mu_star`` and ``q_value``.
    Contexts with weight below 1e-12 get a uniform placeholder policy.
    """
    m = np.asarray(m, dtype=float)
    mus = []
    for c, sol in enumerate(solutions):
        mu = np.asarray(sol.mu_star, dtype=float)
        if m[c] < ZERO_WEIGHT:
            mu = np.full_like(mu, 1.0 / mu.shape[-1]) if placeholder is None else placeholder
        mus.append(mu)
    q = np.array([sol.q_value for sol in solutions])
    return np.stack(mus), float(np.dot(np.where(m < ZERO_WEIGHT, 0.0, m), q))


def _best_stored(mu_all, px, s, D, rho, cont, floor):
    """Per context, the stored grid policy with the lowest Q at the state ``px``."""
    G, C = mu_all.shape[:2]
    mu = np.empty(mu_all.shape[1:])
    q = np.empty(C)
    for c in range(C):
        cand = mu_all[:, c]
        pxc = np.broadcast_to(px[c], (G, px.shape[1]))
        qc, _, _ = evaluate_q(pxc, cand, np.einsum("bx,bxu->bu", pxc, cand), s, D, rho, cont, floor)
        j = int(np.argmin(qc))
        mu[c], q[c] = cand[j], qc[j]
    return mu, q


def _stage_candidates(config, artifact, t, b, baa, selection):
    """Per-context chosen policies, their Q values, base Q values and winner labels."""
    s, D = float(config.s[t]), float(config.D[t])
    rho = config.distortion
    px = state_marginal(b, config.kernel(t))
    cont = _continuation(artifact, t, config.horizon)
    base = _base_table(artifact, t)
    idx = artifact.grid.lookup(b[None])[0]
    mu_base = base.mu_star[idx]
    nu_base = np.einsum("cx,cxu->cu", px, mu_base)
    q_base, _, _ = evaluate_q(px, mu_base, nu_base, s, D, rho, cont, config.prob_floor)

    labels = ["base"] * len(q_base)
    mu, q = mu_base, q_base
    if selection in ("stored", "combined"):
        mu_s, q_s = _best_stored(base.mu_star, px, s, D, rho, cont, config.prob_floor)
        take = q_s < q
        mu = np.where(take[:, None, None], mu_s, mu)
        q = np.where(take, q_s, q)
        labels = ["stored" if k else lbl for k, lbl in zip(take, labels)]
    if selection in ("lookahead", "combined"):
        fresh = solve_batch(px, s, D, rho, cont, baa)
        take = fresh.q_value < q
        mu = np.where(take[:, None, None], fresh.mu, mu)
        q = np.where(take, fresh.q_value, q)
        labels = ["fresh" if k else lbl for k, lbl in zip(take, labels)]
    return mu, q, q_base, labels


def _forward(config, artifact, policy_at, traj):
    b, m = _initial_stage(config, traj)
    for t in range(1, config.horizon + 1):
        start = time.perf_counter()
        w = config.kernel(t)
        mu, q, q_base, labels = policy_at(t, b)
        dead = m < ZERO_WEIGHT
        if np.any(dead):
            mu = mu.copy()
            mu[dead] = 1.0 / mu.shape[-1]
        weights = np.where(dead, 0.0, m)
        traj.beliefs.append(b)
        traj.context_weights.append(m)
        if q is not None:
            traj.lookahead_q.append(float(weights @ q))
            traj.base_q.append(float(weights @ q_base))
            traj.source.append(labels)
        b_next, m_next, _ = propagate_information_state(b, mu, w, m)
        if not (np.all(np.isfinite(b_next)) and np.all(np.isfinite(m_next))):
            raise PropagationError(f"stage {t}: belief propagation produced non-finite values")
        _record(traj, t, config, b, w, mu, m, time.perf_counter() - start)
        b, m = b_next, m_next
    return traj


def run_online(config, artifact, rcfg=RolloutConfig()):
    """Forward rollout pass over t = 1..N against a trained artifact."""
    if artifact.fingerprint != config.fingerprint():
        raise StaleArtifactError("artifact was trained for a different configuration")
    baa = rcfg.baa or config.baa

    def policy_at(t, b):
        return _stage_candidates(config, artifact, t, b, baa, rcfg.selection)

    return _forward(config, artifact, policy_at, RolloutTrajectory())


def evaluate_base_policy(config, artifact):
    """Forward pass applying the stored grid policy at the nearest grid point (no online solve)."""

    def policy_at(t, b):
        idx = artifact.grid.lookup(b[None])[0]
        return _base_table(artifact, t).mu_star[idx], None, None, None

    return _forward(config, artifact, policy_at, RolloutTrajectory())


def run_baseline(config, rcfg=RolloutConfig(), grid=None, artifact=None):
    """Full-horizon training followed by nearest-grid policy lookup.

    Returns ``(artifact, trajectory)``.
    """
    if artifact is None:
        grid = build_uniform_grid(config.quantization, config.x_size, config.u_size) \
            if grid is None else grid
        artifact = train(config, grid, rolling_horizon=config.horizon, baa=rcfg.baa)
    return artifact, evaluate_base_policy(config, artifact)


def run_repeated(config, rcfg=RolloutConfig()):
    """Train and roll out ``rcfg.rounds`` times, refining the grid to the visited range."""
    grid = build_uniform_grid(config.quantization, config.x_size, config.u_size)
    rounds = []
    for r in range(rcfg.rounds):
        if r > 0:
            grid = refine_from_trajectory(rounds[-1][1], config.quantization)
        artifact = train(config, grid, baa=rcfg.baa)
        rounds.append((artifact, run_online(config, artifact, rcfg)))
    return rounds

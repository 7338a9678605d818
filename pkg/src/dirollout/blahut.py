"""Per-stage alternating minimization (Blahut-Arimoto style) with certified stopping.

For one information state and one context ``u_prev`` the stage problem is

    min_mu min_nu  sum_{x,u} P(x) mu(u|x) [log(mu/nu) - s rho(x,u) + Q_next(u)] + s D

where ``P(x)`` is the predicted state distribution in that context and
``Q_next(u)`` is the continuation value at the successor information
state reached by control ``u``.  Because the successor depends on ``mu``,
the continuation is re-read from the current iterate on every sweep, until
the lookup starts cycling, after which it is held fixed for that row.

Everything here works on batches: ``px`` has shape ``(B, X)`` and each row
is an independent problem, so results never depend on batch composition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .probability import PROB_FLOOR, state_marginal

log = logging.getLogger(__name__)


class NumericalRegressionError(ArithmeticError):
    """The objective rose during a frozen-continuation sweep."""


@dataclass(frozen=True)
class BAAConfig:
    epsilon: float = 1e-6
    max_iterations: int = 100_000
    prob_floor: float = PROB_FLOOR
    exponent_cap: float = 700.0
    # Continuation changes tolerated before the lookup is frozen for a row.
    max_switches: int = 50
    # Evaluate the monotonicity and sandwich checks on every sweep (slower).
    check: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.prob_floor > 0:
            raise ValueError("prob_floor must be positive")


class ZeroContinuation:
    """Terminal continuation, identically zero."""

    def __call__(self, succ):
        return np.zeros(succ.shape[:-1])


class FunctionContinuation:
    """Wrap ``f(state, u) -> float`` for a single successor state of shape ``(U, X)``."""

    def __init__(self, f):
        self.f = f

    def __call__(self, succ):
        out = np.empty(succ.shape[:-1])
        for i in range(succ.shape[0]):
            for u in range(succ.shape[1]):
                out[i, u] = self.f(succ[i], u)
        return out


@dataclass
class StageSolution:
    mu_star: np.ndarray      # (X, U)
    nu_star: np.ndarray      # (U,)
    q_value: float
    iterations: int
    final_gap: float
    converged: bool
    mutual_information: float
    distortion: float
    cap_hits: int = 0
    regressions: int = 0
    frozen: bool = False


@dataclass
class BatchSolution:
    mu: np.ndarray           # (B, X, U)
    nu: np.ndarray           # (B, U)
    q_value: np.ndarray      # (B,)
    iterations: np.ndarray
    final_gap: np.ndarray
    converged: np.ndarray
    mutual_information: np.ndarray
    distortion: np.ndarray
    cap_hits: np.ndarray = field(default=None)
    regressions: np.ndarray = field(default=None)
    frozen: np.ndarray = field(default=None)

    def row(self, i):
        return StageSolution(
            mu_star=self.mu[i], nu_star=self.nu[i], q_value=float(self.q_value[i]),
            iterations=int(self.iterations[i]), final_gap=float(self.final_gap[i]),
            converged=bool(self.converged[i]),
            mutual_information=float(self.mutual_information[i]),
            distortion=float(self.distortion[i]),
            cap_hits=int(self.cap_hits[i]), regressions=int(self.regressions[i]),
            frozen=bool(self.frozen[i]))


# -- batched kernels -------------------------------------------------------

def successor_states(px, mu):
    """Successor information states ``(B, U, X)``: row ``u`` is ``P(x | u)``."""
    joint = px[:, :, None] * mu                       # (B, X, U)
    z = joint.sum(axis=1)                             # (B, U)
    reach = z > 0
    if reach.all():
        return joint.transpose(0, 2, 1) / z[:, :, None]
    succ = joint.transpose(0, 2, 1) / np.where(reach, z, 1.0)[:, :, None]
    # Unreachable controls fall back to the prior; they carry no weight.
    return np.where(reach[:, :, None], succ, px[:, None, :])


def _exponent_from(qn, s, rho, cap):
    e = s * rho[None, :, :] - qn[:, None, :]
    hits = np.abs(e) > cap
    return np.exp(np.clip(e, -cap, cap)), hits.reshape(len(qn), -1).sum(axis=1)


def _exponent(px, mu, s, rho, cont, cap):
    return _exponent_from(cont(successor_states(px, mu)), s, rho, cap)


def _objective(px, mu, nu, logA, floor):
    """``sum px mu [log(mu/nu) - log A]`` per row (frozen exponent)."""
    lr = np.log(np.maximum(mu, floor)) - np.log(np.maximum(nu, floor))[:, None, :]
    terms = np.where(mu > 0, mu * (lr - logA), 0.0)
    return np.einsum("bx,bxu->b", px, terms)


def _mi(px, mu, nu, floor):
    lr = np.log(np.maximum(mu, floor)) - np.log(np.maximum(nu, floor))[:, None, :]
    return np.einsum("bx,bxu->b", px, np.where(mu > 0, mu * lr, 0.0))


def evaluate_q(px, mu, nu, s, D, rho, cont, floor=PROB_FLOOR):
    """Lagrangian Q value of each row with continuation read at the successors of ``mu``."""
    qn = cont(successor_states(px, mu))               # (B, U)
    mi = _mi(px, mu, nu, floor)
    dist = np.einsum("bx,bxu,xu->b", px, mu, rho)
    nxt = np.einsum("bx,bxu,bu->b", px, mu, qn)
    return mi - s * dist + nxt + s * D, mi, dist


def solve_batch(px, s, D, rho, cont, cfg=BAAConfig(), nu0=None, trace=None):
    """Solve ``B`` independent stage problems.

    ``trace``, if given, is called with one dict per row and sweep holding
    ``row, iteration, gap, upper, lower, objective``.
    """
    px = np.asarray(px, dtype=float)
    rho = np.asarray(rho, dtype=float)
    B, X = px.shape
    U = rho.shape[1]
    floor = cfg.prob_floor
    if s > 0:
        raise ValueError("s_t must be <= 0")
    if nu0 is None:
        nu = np.full((B, U), 1.0 / U)
    else:
        nu = np.broadcast_to(np.asarray(nu0, dtype=float), (B, U)).copy()
        if np.any(nu <= 0):
            raise ValueError("initial output distribution needs non-zero components")
    mu = np.repeat(nu[:, None, :], X, axis=1)
    srho = s * rho[None, :, :]

    out_mu, out_nu = mu.copy(), nu.copy()
    iterations = np.zeros(B, dtype=int)
    gap = np.full(B, np.inf)
    cap_hits = np.zeros(B, dtype=int)
    regressions = np.zeros(B, dtype=int)
    frozen_out = np.zeros(B, dtype=bool)

    # Working arrays hold only the rows still iterating; ``rows`` maps them back.
    rows = np.arange(B)
    P = px.copy()
    # Continuation values seen one and two sweeps back.  A row whose lookup
    # flips back to the values of two sweeps ago (a 2-cycle across a lookup
    # cell boundary), or keeps switching, has its continuation frozen.
    q1 = np.full((B, U), np.nan)
    q2 = np.full((B, U), np.nan)
    switches = np.zeros(B, dtype=int)
    frozen = np.zeros(B, dtype=bool)
    hits = np.zeros(B, dtype=int)
    regress = np.zeros(B, dtype=int)
    prev_obj = np.full(B, np.inf)

    for k in range(cfg.max_iterations):
        if rows.size == 0:
            break
        if not frozen.any():
            qn = cont(successor_states(P, mu))
        else:
            qn = q1.copy()
            live = ~frozen
            if live.any():
                qn[live] = cont(successor_states(P[live], mu[live]))
        if k > 0:
            changed = (qn != q1).any(axis=1) & ~frozen
            if changed.any():
                switches += changed
                frozen |= (changed & (qn == q2).all(axis=1)) | (switches >= cfg.max_switches)
        q2, q1 = q1, qn

        e = srho - qn[:, None, :]
        over = np.abs(e) > cfg.exponent_cap
        if over.any():
            hits += over.reshape(len(e), -1).sum(axis=1)
            e = np.clip(e, -cfg.exponent_cap, cfg.exponent_cap)
        A = np.exp(e)
        nuA = nu[:, None, :] * A                       # (b, X, U)
        z = nuA.sum(axis=2)                            # (b, X)
        mu_new = nuA / z[:, :, None]
        c = np.einsum("bx,bxu->bu", P, A / z[:, :, None])
        logc = np.log(c)
        t_upper = -(nu * c * logc).sum(axis=1)
        t_lower = -logc.max(axis=1)
        g = t_upper - t_lower
        nu_new = nu * c
        nu_new /= nu_new.sum(axis=1, keepdims=True)
        if (nu_new < floor).any():
            nu_new = np.maximum(nu_new, floor)
            nu_new /= nu_new.sum(axis=1, keepdims=True)

        if cfg.check or trace is not None:
            logA = np.log(A)
            head = -np.einsum("bx,bx->b", P, np.log(z))
            d_s = np.einsum("bx,bxu,xu->b", P, mu_new, rho)
            upper = head + t_upper + s * d_s
            lower = head + t_lower + s * d_s
            # Frozen-exponent objective at the new iterate, with D_t taken as D_s.
            objective = _objective(P, mu_new, nu_new, logA, floor) + s * d_s
            if cfg.check:
                before = _objective(P, mu, nu, logA, floor)
                after = objective - s * d_s
                if np.any(after - before > 1e-9 * np.maximum(1.0, np.abs(before))):
                    raise NumericalRegressionError(
                        f"objective increased in a frozen sweep at iteration {k + 1}")
                if np.any(g < -1e-9):
                    raise NumericalRegressionError(f"negative bound gap at iteration {k + 1}")
            if trace is not None:
                for j, row in enumerate(rows):
                    trace({"row": int(row), "iteration": k + 1, "gap": float(g[j]),
                           "upper": float(upper[j]), "lower": float(lower[j]),
                           "objective": float(objective[j])})
            regress += objective > prev_obj + 1e-6
            prev_obj = objective

        mu, nu = mu_new, nu_new
        done = g <= cfg.epsilon
        if done.any() or k + 1 == cfg.max_iterations:
            fin = done if k + 1 < cfg.max_iterations else np.ones_like(done)
            r = rows[fin]
            out_mu[r], out_nu[r], gap[r] = mu[fin], nu[fin], g[fin]
            iterations[r] = k + 1
            cap_hits[r], regressions[r], frozen_out[r] = hits[fin], regress[fin], frozen[fin]
            keep = ~fin
            rows, P, mu, nu = rows[keep], P[keep], mu[keep], nu[keep]
            q1, q2, switches, frozen = q1[keep], q2[keep], switches[keep], frozen[keep]
            hits, regress, prev_obj = hits[keep], regress[keep], prev_obj[keep]

    converged = gap <= cfg.epsilon
    if not np.all(converged):
        log.warning("%d of %d stage solves hit max_iterations=%d",
                    int((~converged).sum()), B, cfg.max_iterations)
    if np.any(cap_hits):
        log.warning("exponent cap %.0f hit in %d solves", cfg.exponent_cap,
                    int((cap_hits > 0).sum()))
    q, mi, dist = evaluate_q(px, out_mu, out_nu, s, D, rho, cont, floor)
    return BatchSolution(mu=out_mu, nu=out_nu, q_value=q, iterations=iterations, final_gap=gap,
                         converged=converged, mutual_information=mi, distortion=dist,
                         cap_hits=cap_hits, regressions=regressions, frozen=frozen_out)


# -- single-context operations --------------------------------------------

def _px(b, w, u_prev):
    return state_marginal(np.asarray(b, float), np.asarray(w, float))[u_prev][None, :]


def exponent_factor(b, w, s_t, rho, cont, mu_current, u_prev, cap=700.0):
    """Table ``A(x, u) = exp(s rho(x, u) - Q_next(u))`` for one context."""
    A, hits = _exponent(_px(b, w, u_prev), np.asarray(mu_current, float)[None],
                        s_t, np.asarray(rho, float), cont, cap)
    if hits[0]:
        log.warning("exponent cap %.0f hit", cap)
    return A[0]


def policy_update(nu_k, A):
    """``mu(u|x) = nu(u) A(x,u) / sum_u' nu(u') A(x,u')``."""
    nu_k = np.asarray(nu_k, float)
    if np.any(nu_k <= 0):
        raise ValueError("output distribution must have non-zero components")
    nuA = nu_k[None, :] * np.asarray(A, float)
    return nuA / nuA.sum(axis=1, keepdims=True)


def output_update(nu_k, A, b, w, u_prev):
    nu_k = np.asarray(nu_k, float)
    A = np.asarray(A, float)
    px = _px(b, w, u_prev)[0]
    z = A @ nu_k
    nxt = nu_k * (px @ (A / z[:, None]))
    return nxt / nxt.sum()


def q_evaluate(b, w, mu_k, nu_k, cont, s_t, D_t, rho, u_prev, floor=PROB_FLOOR):
    q, _, _ = evaluate_q(_px(b, w, u_prev), np.asarray(mu_k, float)[None],
                         np.asarray(nu_k, float)[None], s_t, D_t,
                         np.asarray(rho, float), cont, floor)
    return float(q[0])


def bounds(nu_k, A, b, w, u_prev, s_t, D_s):
    """Upper and lower bounds on the stage optimum and their gap ``T_U - T_L``.

    Ties in ``max_u log c(u)`` resolve to the lowest symbol (``np.argmax``).
    """
    nu_k = np.asarray(nu_k, float)
    A = np.asarray(A, float)
    px = _px(b, w, u_prev)[0]
    z = A @ nu_k
    c = px @ (A / z[:, None])
    logc = np.log(c)
    head = -np.dot(px, np.log(z))
    t_upper = -np.sum(nu_k * c * logc)
    t_lower = -logc[np.argmax(logc)]
    gap = t_upper - t_lower
    if gap < -1e-9:
        raise NumericalRegressionError(f"negative bound gap {gap}")
    return head + t_upper + s_t * D_s, head + t_lower + s_t * D_s, gap


def solve_stage(b, w, s_t, D_t, rho, cont, u_prev, cfg=BAAConfig(), nu0=None, trace=None):
    """Minimize the stage Lagrangian Q for one information state and context."""
    sol = solve_batch(_px(b, w, u_prev), s_t, D_t, rho, cont, cfg, nu0, trace)
    return sol.row(0)

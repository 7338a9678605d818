"""Finite grids over the information-state space and nearest-point lookup.

Only binary state alphabets are supported, so one context row of a belief is
fixed by its first component.  A grid is the Cartesian product of one 1-D
level set per context, ordered lexicographically with context 0 major.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class GridConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BeliefGrid:
    levels: tuple  # one sorted 1-D array of first components per context

    def __post_init__(self):
        levels = tuple(np.asarray(lv, dtype=float) for lv in self.levels)
        if not levels:
            raise GridConfigError("grid needs at least one context")
        if len({len(lv) for lv in levels}) != 1:
            raise GridConfigError("every context must have the same number of levels")
        for lv in levels:
            if np.any(lv <= 0) or np.any(lv >= 1):
                raise GridConfigError("grid values must lie in the open interval (0, 1)")
        object.__setattr__(self, "levels", levels)
        # Stacked copies for the vectorized lookup.
        stacked = np.stack(levels)
        object.__setattr__(self, "_first", stacked)
        object.__setattr__(self, "_second", 1.0 - stacked)
        object.__setattr__(self, "_place", len(levels[0]) ** np.arange(len(levels) - 1, -1, -1))

    @property
    def n(self):
        return len(self.levels[0])

    @property
    def contexts(self):
        return len(self.levels)

    @property
    def size(self):
        return self.n ** self.contexts

    @property
    def points(self):
        """All grid information states, shape ``(size, C, 2)``."""
        firsts = np.array(list(itertools.product(*self.levels)))  # (G, C)
        return np.stack([firsts, 1.0 - firsts], axis=-1)

    def index_of(self, per_context):
        """Flat index from per-context level indices (lexicographic)."""
        idx = 0
        for i in per_context:
            idx = idx * self.n + int(i)
        return idx

    def lookup(self, states):
        """Vectorized nearest grid index for states of shape ``(..., C, 2)``.

        L1 distance summed over contexts separates across contexts on a
        product grid, so each context is matched independently; ``argmin``
        keeps the lowest index on ties, which is also the lowest flat index.
        """
        states = np.asarray(states, dtype=float)
        d = np.abs(states[..., 0:1] - self._first) + np.abs(states[..., 1:2] - self._second)
        return np.argmin(d, axis=-1) @ self._place

    def __eq__(self, other):
        return (isinstance(other, BeliefGrid) and len(self.levels) == len(other.levels)
                and all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels)))

    def __hash__(self):
        return hash(tuple(lv.tobytes() for lv in self.levels))


def _midpoints(lo, hi, n):
    return lo + (np.arange(1, n + 1) - 0.5) * (hi - lo) / n


def build_uniform_grid(n, x_size=2, u_size=2):
    if n < 2:
        raise GridConfigError("quantization level n must be >= 2")
    if x_size != 2:
        raise GridConfigError(f"only binary state alphabets are supported (got {x_size})")
    if u_size < 1:
        raise GridConfigError("u_size must be positive")
    return BeliefGrid(tuple(_midpoints(0.0, 1.0, n) for _ in range(u_size)))


def nearest(grid, b):
    """Index of the grid point closest to ``b`` in total L1 distance (exhaustive scan)."""
    b = np.asarray(b, dtype=float)
    d = np.abs(grid.points - b[None]).sum(axis=(1, 2))
    return int(np.argmin(d))


def l1_distance(grid, b):
    b = np.asarray(b, dtype=float)
    return float(np.abs(grid.points[nearest(grid, b)] - b).sum())


MIN_REFINED_WIDTH = 1e-6


def refine_from_trajectory(traj, n, pad=0.05, min_weight=1e-12):
    """Grid placed over the belief range visited by a rollout trajectory.

    Per context: the visited range of first components, padded by ``pad`` of
    its width on each side (or +-0.05 around a single value) and clamped to
    [0, 1], holds ``n`` evenly spaced cell midpoints.  Ranges narrower than
    ``MIN_REFINED_WIDTH`` count as a single value, since midpoints of a
    vanishing interval at 0 or 1 would fall on the boundary in floating point.
    """
    beliefs = np.asarray(traj.beliefs, dtype=float)      # (T, C, 2)
    weights = np.asarray(traj.context_weights, dtype=float)  # (T, C)
    if beliefs.size == 0:
        raise ValueError("trajectory is empty")
    levels = []
    for c in range(beliefs.shape[1]):
        vals = beliefs[weights[:, c] > min_weight, c, 0]
        if vals.size == 0:
            vals = beliefs[:, c, 0]
        lo, hi = float(vals.min()), float(vals.max())
        if hi - lo < MIN_REFINED_WIDTH:
            lo, hi = lo - 0.05, hi + 0.05
        else:
            width = hi - lo
            lo, hi = lo - pad * width, hi + pad * width
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        levels.append(_midpoints(lo, hi, n))
    return BeliefGrid(tuple(levels))

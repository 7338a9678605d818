"""Backward training of the base policy over a rolling horizon, and the artifact file."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .blahut import BAAConfig, ZeroContinuation, solve_batch
from .grid import BeliefGrid

log = logging.getLogger(__name__)

ARTIFACT_FORMAT = "dirollout-artifact"
ARTIFACT_VERSION = 1
MAX_UNCONVERGED_FRACTION = 0.10
DEFAULT_CHUNK = 16


class TrainingError(RuntimeError):
    pass


class StaleArtifactError(ValueError):
    pass


class ArtifactFormatError(ValueError):
    pass


@dataclass(eq=False)
class QTable:
    stage: int
    q_value: np.ndarray      # (G, C)
    mu_star: np.ndarray      # (G, C, X, U)
    nu_star: np.ndarray      # (G, C, U)
    converged: np.ndarray    # (G, C) bool
    iterations: np.ndarray   # (G, C) int
    final_gap: np.ndarray    # (G, C)

    def __eq__(self, other):
        if not isinstance(other, QTable) or self.stage != other.stage:
            return False
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("q_value", "mu_star", "nu_star", "converged",
                             "iterations", "final_gap"))


@dataclass(eq=False)
class OfflineArtifact:
    fingerprint: str
    grid: BeliefGrid
    tables: dict             # stage -> QTable, stages N .. N-N_s+1
    stage_seconds: dict = field(default_factory=dict)

    @property
    def stages(self):
        return sorted(self.tables, reverse=True)

    @property
    def first_stage(self):
        return min(self.tables)

    def __eq__(self, other):
        # Wall times are run metadata and are not compared.
        return (isinstance(other, OfflineArtifact) and self.fingerprint == other.fingerprint
                and self.grid == other.grid and self.stages == other.stages
                and all(self.tables[t] == other.tables[t] for t in self.tables))


class TableContinuation:
    """Continuation read from a trained table at the nearest grid point."""

    def __init__(self, table, grid):
        if table.q_value.size == 0:
            raise ValueError("continuation table is empty")
        self.table = table
        self.grid = grid

    def __call__(self, succ):
        return self.table.q_value[self.grid.lookup(succ)]


def continuation_lookup(table, grid, b, u):
    if table is None:
        return 0.0
    return float(TableContinuation(table, grid)(np.asarray(b, float)[None])[0, u])


def grid_state_marginals(grid, w):
    """Predicted state distribution for every grid point and context, ``(G, C, X)``."""
    return np.einsum("gcp,cpx->gcx", grid.points, w)


def _solve_chunk(args):
    px, s, D, rho, cont, baa = args
    return solve_batch(px, s, D, rho, cont, baa)


def solve_grid_stage(grid, w, s, D, rho, cont, baa, workers=1, chunk=DEFAULT_CHUNK):
    """Solve every (grid point, context) pair of one stage in fixed-size chunks."""
    px = grid_state_marginals(grid, w)
    G, C, X = px.shape
    flat = px.reshape(G * C, X)
    step = chunk * C
    jobs = [(flat[i:i + step], s, D, rho, cont, baa) for i in range(0, G * C, step)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_solve_chunk, jobs))
    else:
        parts = [_solve_chunk(j) for j in jobs]
    U = rho.shape[1]
    cat = lambda k: np.concatenate([getattr(p, k) for p in parts])
    return dict(
        q_value=cat("q_value").reshape(G, C),
        mu_star=cat("mu").reshape(G, C, X, U),
        nu_star=cat("nu").reshape(G, C, U),
        converged=cat("converged").reshape(G, C),
        iterations=cat("iterations").reshape(G, C),
        final_gap=cat("final_gap").reshape(G, C))


def train(config, grid, rolling_horizon=None, baa=None, workers=None, chunk=DEFAULT_CHUNK):
    """Train Q tables backward from stage N down to N - N_s + 1.

    Stage N uses the zero terminal continuation; every earlier stage reads
    its continuation from the table just trained for the following stage.
    """
    N = config.horizon
    Ns = config.rolling_horizon if rolling_horizon is None else rolling_horizon
    if not 1 <= Ns <= N:
        raise ValueError(f"rolling horizon must satisfy 1 <= N_s <= N (got {Ns}, N={N})")
    if grid.contexts != config.u_size:
        raise ValueError("grid context count must equal the control alphabet size")
    baa = config.baa if baa is None else baa
    workers = config.workers if workers is None else workers
    rho = config.distortion

    tables, seconds = {}, {}
    cont = ZeroContinuation()
    for t in range(N, N - Ns, -1):
        start = time.perf_counter()
        arrays = solve_grid_stage(grid, config.kernel(t), float(config.s[t]),
                                  float(config.D[t]), rho, cont, baa, workers, chunk)
        table = QTable(stage=t, **arrays)
        bad = float(np.mean(~table.converged))
        if bad > MAX_UNCONVERGED_FRACTION:
            raise TrainingError(
                f"stage {t}: {bad:.1%} of grid solves did not converge within "
                f"{baa.max_iterations} iterations")
        if bad:
            log.warning("stage %d: %.1f%% of grid solves flagged as non-converged", t, 100 * bad)
        tables[t] = table
        seconds[t] = time.perf_counter() - start
        cont = TableContinuation(table, grid)
    return OfflineArtifact(fingerprint=config.fingerprint(), grid=grid, tables=tables,
                           stage_seconds=seconds)


# -- artifact file ---------------------------------------------------------

def artifact_to_dict(a):
    tables = []
    for t in a.stages:
        tb = a.tables[t]
        G, C, X, U = tb.mu_star.shape
        tables.append({
            "stage": t,
            "shape": {"grid": G, "contexts": C, "x": X, "u": U},
            "q_value": tb.q_value.ravel().tolist(),
            "mu_star": tb.mu_star.ravel().tolist(),
            "nu_star": tb.nu_star.ravel().tolist(),
            "converged": tb.converged.ravel().astype(int).tolist(),
            "iterations": tb.iterations.ravel().tolist(),
            "final_gap": tb.final_gap.ravel().tolist(),
        })
    return {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "fingerprint": a.fingerprint,
        "grid": {"levels": [lv.tolist() for lv in a.grid.levels]},
        "tables": tables,
    }


def artifact_from_dict(d):
    try:
        if d.get("format") != ARTIFACT_FORMAT:
            raise ArtifactFormatError(f"not a {ARTIFACT_FORMAT} file")
        if d.get("version") != ARTIFACT_VERSION:
            raise ArtifactFormatError(
                f"artifact version {d.get('version')} is not supported "
                f"(this build reads version {ARTIFACT_VERSION})")
        grid = BeliefGrid(tuple(np.array(lv, dtype=float) for lv in d["grid"]["levels"]))
        tables = {}
        for e in d["tables"]:
            sh = e["shape"]
            G, C, X, U = sh["grid"], sh["contexts"], sh["x"], sh["u"]
            tables[int(e["stage"])] = QTable(
                stage=int(e["stage"]),
                q_value=np.array(e["q_value"], dtype=float).reshape(G, C),
                mu_star=np.array(e["mu_star"], dtype=float).reshape(G, C, X, U),
                nu_star=np.array(e["nu_star"], dtype=float).reshape(G, C, U),
                converged=np.array(e["converged"], dtype=bool).reshape(G, C),
                iterations=np.array(e["iterations"], dtype=int).reshape(G, C),
                final_gap=np.array(e["final_gap"], dtype=float).reshape(G, C))
        return OfflineArtifact(fingerprint=d["fingerprint"], grid=grid, tables=tables)
    except ArtifactFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ArtifactFormatError(f"malformed artifact: {exc!r}") from exc


def save_artifact(a, path):
    # json writes floats with repr(), the shortest string that round-trips exactly.
    with open(path, "w") as fh:
        json.dump(artifact_to_dict(a), fh, allow_nan=False, separators=(",", ":"))
        fh.write("\n")


def load_artifact(path, config=None):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArtifactFormatError(f"artifact is not valid JSON: {exc}") from exc
    a = artifact_from_dict(d)
    if config is not None and a.fingerprint != config.fingerprint():
        raise StaleArtifactError(
            f"artifact fingerprint {a.fingerprint[:12]} does not match the "
            f"configuration ({config.fingerprint()[:12]})")
    return a

"""Experiment orchestration: run pipelines, time them, and write CSV / JSON results."""
from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blahut import ZeroContinuation, solve_batch
from .config import ConfigError, parse_config
from .grid import build_uniform_grid
from .offline import load_artifact, save_artifact, train
from .oracle import OracleReport, analytic_rd_point, brute_force_horizon, brute_force_stage
from .probability import propagate_information_state
from .rollout import RolloutConfig, evaluate_base_policy, run_online, run_repeated

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "stage_mi_nats", "expected_distortion", "lagrangian_stage_cost",
               "cumulative_di_nats", "wall_time_ms")

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_TRAINING = 4
EXIT_PROPAGATION = 5
EXIT_BENCH_FIT = 6
EXIT_ARTIFACT = 7

DEFAULT_SWEEP = {"n": [10, 20, 40], "rolling_horizon": [2, 4, 8], "horizon": [25, 50, 100]}


class BenchFitError(ValueError):
    pass


def resolve_workers(flag=None, config_value=1):
    """``--workers`` wins, then ``DIROLLOUT_WORKERS``, then the config file."""
    if flag is not None:
        return int(flag)
    env = os.environ.get("DIROLLOUT_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError([f"DIROLLOUT_WORKERS: expected integer, got {env!r}"]) from exc
        if value < 1:
            raise ConfigError(["DIROLLOUT_WORKERS: must be >= 1"])
        return value
    return config_value


def load_config(path, seed=None, workers=None, epsilon=None):
    config = parse_config(path)
    over = {"workers": resolve_workers(workers, config.workers)}
    if seed is not None:
        over["seed"] = int(seed)
    if epsilon is not None:
        if not epsilon > 0:
            raise ConfigError(["--epsilon: must be positive"])
        over["epsilon"] = float(epsilon)
    return config.with_overrides(**over)


# -- run reports -----------------------------------------------------------

@dataclass
class RunReport:
    rows: list
    fingerprint: str
    offline_seconds: float = 0.0
    online_seconds: float = 0.0
    totals: dict = field(init=False)

    def __post_init__(self):
        self.totals = column_totals(self.rows)


def column_totals(rows):
    # Same left-to-right order as the cumulative column.
    tot = {k: sum((r[k] for r in rows), 0.0) for k in CSV_COLUMNS[1:4]}
    tot["directed_information_nats"] = tot["stage_mi_nats"]
    return tot


def report_from_trajectory(traj, config, offline_seconds=0.0, online_seconds=None):
    rows = []
    for t, (mi, d, g, cum, sec) in enumerate(zip(traj.stage_mi, traj.distortion, traj.lagrangian,
                                                 traj.cumulative_di, traj.seconds)):
        rows.append({"t": t, "stage_mi_nats": float(mi), "expected_distortion": float(d),
                     "lagrangian_stage_cost": float(g), "cumulative_di_nats": float(cum),
                     "wall_time_ms": 1000.0 * sec})
    if online_seconds is None:
        online_seconds = float(sum(traj.seconds))
    return RunReport(rows, config.fingerprint(), offline_seconds, online_seconds)


def write_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in report.rows:
            # repr keeps every float exactly, so totals survive a round trip.
            w.writerow([r["t"]] + [repr(r[k]) for k in CSV_COLUMNS[1:]])


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{k: int(v) if k == "t" else float(v) for k, v in row.items()} for row in reader]


def summary_dict(report, config, command, extra=None):
    d = {
        "command": command,
        "config_fingerprint": report.fingerprint,
        "seed": config.seed,
        "workers": config.workers,
        "epsilon_nats": config.epsilon,
        "horizon": config.horizon,
        "rolling_horizon": config.rolling_horizon,
        "quantization": config.quantization,
        "totals": report.totals,
        "offline_seconds": report.offline_seconds,
        "online_seconds": report.online_seconds,
        "stages": len(report.rows),
    }
    d.update(extra or {})
    return d


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _emit(out, stem, report, config, command, extra=None):
    write_csv(out / f"{stem}.csv", report)
    summary = summary_dict(report, config, command, extra)
    write_json(out / f"{stem}_summary.json", summary)
    return summary


def _timed_train(config, **kw):
    start = time.perf_counter()
    grid = kw.pop("grid", None) or build_uniform_grid(config.quantization, config.x_size,
                                                      config.u_size)
    artifact = train(config, grid, **kw)
    return artifact, time.perf_counter() - start


# -- commands ---------------------------------------------------------------

def cmd_train(config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    artifact, secs = _timed_train(config)
    save_artifact(artifact, out / "artifact.json")
    report = RunReport([], config.fingerprint(), offline_seconds=secs)
    write_json(out / "train_summary.json", summary_dict(report, config, "train", {
        "stages_trained": artifact.stages,
        "max_iterations_used": int(max(t.iterations.max() for t in artifact.tables.values())),
    }))
    return report


def cmd_rollout(config, out, artifact_path=None):
    """Roll out against ``artifact_path`` if given, otherwise train first."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if artifact_path is not None:
        artifact, secs = load_artifact(artifact_path, config), 0.0
    else:
        artifact, secs = _timed_train(config)
    save_artifact(artifact, out / "artifact.json")
    start = time.perf_counter()
    traj = run_online(config, artifact)
    report = report_from_trajectory(traj, config, secs, time.perf_counter() - start)
    _emit(out, "rollout", report, config, "rollout")
    return report


def cmd_baseline(config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    artifact, secs = _timed_train(config, rolling_horizon=config.horizon)
    save_artifact(artifact, out / "baseline_artifact.json")
    start = time.perf_counter()
    traj = evaluate_base_policy(config, artifact)
    report = report_from_trajectory(traj, config, secs, time.perf_counter() - start)
    _emit(out, "baseline", report, config, "baseline")
    return report


def cmd_repeat(config, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    rounds = run_repeated(config, RolloutConfig(rounds=config.rounds))
    elapsed = time.perf_counter() - start
    reports = []
    for r, (artifact, traj) in enumerate(rounds, start=1):
        save_artifact(artifact, out / f"round{r}_artifact.json")
        report = report_from_trajectory(traj, config, float(sum(artifact.stage_seconds.values())))
        _emit(out, f"round{r}", report, config, "repeat", {
            "round": r, "grid_levels": [lv.tolist() for lv in artifact.grid.levels]})
        reports.append(report)
    write_json(out / "repeat_summary.json", {
        "config_fingerprint": config.fingerprint(), "rounds": len(reports),
        "totals": [rep.totals["lagrangian_stage_cost"] for rep in reports],
        "wall_seconds": elapsed})
    return reports


def oracle_report(config, m=20, zoom=2, stage_resolution=200):
    """Compare the solvers with the exhaustive searches on ``config``."""
    oracle_values, solver_values, tol, instance = {}, {}, {}, {
        "config_fingerprint": config.fingerprint(), "horizon": config.horizon}
    rho = config.distortion

    # Last-stage solve at the state reached after stage 0, in context u_prev = 0.
    b1, _, _ = propagate_information_state(np.ones((1, 1)), config.initial_policy[None],
                                           config.kernel(0), np.ones(1))
    t = config.horizon
    px = np.einsum("cp,cpx->cx", b1, config.kernel(t))[:1]
    sol = solve_batch(px, float(config.s[t]), float(config.D[t]), rho, ZeroContinuation(),
                      config.baa)
    oracle_values["stage_q"] = brute_force_stage(b1, config.kernel(t), float(config.s[t]),
                                                 float(config.D[t]), rho, ZeroContinuation(), 0,
                                                 m=stage_resolution)
    solver_values["stage_q"] = float(sol.q_value[0])
    tol["stage_q"] = 1e-3

    if config.distortion_spec == "hamming" and config.s[t] < 0:
        D, R = analytic_rd_point(float(config.s[t]))
        sym = solve_batch(np.array([[0.5, 0.5]]), float(config.s[t]), 0.0, rho,
                          ZeroContinuation(), config.baa)
        oracle_values.update(analytic_distortion=D, analytic_rate_nats=R)
        solver_values.update(analytic_distortion=float(sym.distortion[0]),
                             analytic_rate_nats=float(sym.mutual_information[0]))
        tol.update(analytic_distortion=1e-4, analytic_rate_nats=1e-4)

    if config.horizon <= 3:
        exact = brute_force_horizon(config, m=m, zoom=zoom)
        artifact = train(config, build_uniform_grid(config.quantization))
        rollout_total = run_online(config, artifact).total_cost
        instance.update(full_history_minimum=exact, rollout_total=rollout_total,
                        truncation_excess=rollout_total - exact,
                        rollout_not_below_minimum=bool(rollout_total >= exact - 1e-6))
    return OracleReport(instance=instance, oracle_values=oracle_values,
                        solver_values=solver_values, tolerances=tol)


def cmd_oracle(config, out, m=20, zoom=2):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = oracle_report(config, m=m, zoom=zoom)
    write_json(out / "oracle_report.json", report.to_dict())
    return report


# -- scaling benchmark -------------------------------------------------------

def median_time(fn, repeats=3, warmup=1):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples), samples


def loglog_slope(xs, ys):
    if len(xs) < 3:
        raise BenchFitError(f"need at least 3 sweep points to fit a slope, got {len(xs)}")
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise BenchFitError("sweep values and timings must be positive")
    if len(np.unique(xs)) < 2:
        raise BenchFitError("sweep values must not all be equal")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def bench_sweep(spec=None):
    spec = dict(DEFAULT_SWEEP, **(spec or {}))
    for k in DEFAULT_SWEEP:
        if len(spec[k]) < 3:
            raise BenchFitError(f"sweep {k!r} has {len(spec[k])} points; at least 3 are needed")
    return spec


def cmd_bench(config, out, spec=None, repeats=3, warmup=1):
    """Median-of-``repeats`` timings and log-log slopes for the offline and online phases."""
    spec = bench_sweep(spec)
    results = {"workers": config.workers, "repeats": repeats, "warmup": warmup,
               "config_fingerprint": config.fingerprint()}

    def offline(cfg, n, Ns):
        grid = build_uniform_grid(n)
        return median_time(lambda: train(cfg, grid, rolling_horizon=Ns), repeats, warmup)

    rows = []
    for n in spec["n"]:
        med, samples = offline(config, n, config.rolling_horizon)
        rows.append({"sweep": "offline_vs_n", "n": n, "rolling_horizon": config.rolling_horizon,
                     "horizon": config.horizon, "median_s": med, "samples_s": samples})
    for Ns in spec["rolling_horizon"]:
        if Ns > config.horizon:
            raise BenchFitError(f"rolling horizon {Ns} exceeds the horizon {config.horizon}")
        med, samples = offline(config, config.quantization, Ns)
        rows.append({"sweep": "offline_vs_rolling_horizon", "n": config.quantization,
                     "rolling_horizon": Ns, "horizon": config.horizon,
                     "median_s": med, "samples_s": samples})
    for N in spec["horizon"]:
        cfg = _with_horizon(config, N)
        artifact = train(cfg, build_uniform_grid(cfg.quantization))
        med, samples = median_time(lambda: run_online(cfg, artifact), repeats, warmup)
        rows.append({"sweep": "online_vs_horizon", "n": cfg.quantization,
                     "rolling_horizon": cfg.rolling_horizon, "horizon": N,
                     "median_s": med, "samples_s": samples})

    def fit(sweep, key):
        sel = [r for r in rows if r["sweep"] == sweep]
        return loglog_slope([r[key] for r in sel], [r["median_s"] for r in sel])

    results["timings"] = rows
    results["slopes"] = {
        "offline_vs_n": fit("offline_vs_n", "n"),
        "offline_vs_rolling_horizon": fit("offline_vs_rolling_horizon", "rolling_horizon"),
        "online_vs_horizon": fit("online_vs_horizon", "horizon"),
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "bench_report.json", results)
        with open(out / "bench_timings.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep", "n", "rolling_horizon", "horizon", "median_s"])
            for r in rows:
                w.writerow([r["sweep"], r["n"], r["rolling_horizon"], r["horizon"],
                            repr(r["median_s"])])
    return results


def _with_horizon(config, N):
    """Same problem over horizon ``N``, extending time-invariant data."""
    if not (np.all(config.kernels == config.kernels[0]) and np.all(config.s == config.s[0])
            and np.all(config.D == config.D[0])):
        raise BenchFitError("horizon sweeps need a time-invariant kernel and schedule")
    Ns = min(config.rolling_horizon, N)
    return config.with_overrides(
        horizon=N, rolling_horizon=Ns,
        kernels=np.repeat(config.kernels[:1], N, axis=0),
        s=np.full(N + 1, config.s[0]), D=np.full(N + 1, config.D[0]))

"""Problem configuration: JSON ingestion, validation and fingerprinting."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .blahut import BAAConfig
from .costs import hamming

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation with its field path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def example1_kernel(alpha0, alpha1):
    """Binary symmetric controlled chain, shape ``(u_prev, x_prev, x)``."""
    return np.array([[[1 - alpha0, alpha0], [alpha0, 1 - alpha0]],
                     [[1 - alpha1, alpha1], [alpha1, 1 - alpha1]]])


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    horizon: int
    rolling_horizon: int
    quantization: int
    kernels: np.ndarray            # (N, C, X, X); entry t-1 drives stage t
    initial_state: np.ndarray      # P_0(x_0)
    initial_policy: np.ndarray     # mu_0, (X, U)
    distortion: np.ndarray         # rho, (X, U)
    s: np.ndarray                  # (N+1,)
    D: np.ndarray                  # (N+1,)
    epsilon: float = 1e-6
    max_iterations: int = 100_000
    prob_floor: float = 1e-12
    rounds: int = 1
    seed: int = 0
    workers: int = 1
    kernel_spec: dict = field(default=None)
    distortion_spec: object = field(default=None)

    @property
    def x_size(self):
        return self.distortion.shape[0]

    @property
    def u_size(self):
        return self.distortion.shape[1]

    @property
    def baa(self):
        return BAAConfig(epsilon=self.epsilon, max_iterations=self.max_iterations,
                         prob_floor=self.prob_floor)

    def kernel(self, t):
        """Kernel driving stage ``t``; stage 0 uses a dummy context and state."""
        if t == 0:
            return self.initial_state[None, None, :]
        return self.kernels[t - 1]

    @property
    def initial_marginal(self):
        return self.initial_state @ self.initial_policy

    def with_overrides(self, **kw):
        return replace(self, **kw)

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        kspec = self.kernel_spec or {"matrices": self.kernels.tolist()}
        dspec = self.distortion_spec if self.distortion_spec is not None else self.distortion.tolist()
        return {
            "version": CONFIG_VERSION,
            "x_size": self.x_size,
            "u_size": self.u_size,
            "horizon": self.horizon,
            "rolling_horizon": self.rolling_horizon,
            "quantization": self.quantization,
            "kernel": kspec,
            "initial_state_distribution": self.initial_state.tolist(),
            "initial_policy": self.initial_policy.tolist(),
            "distortion": dspec,
            "s": self.s.tolist(),
            "D": self.D.tolist(),
            "epsilon_nats": self.epsilon,
            "max_iterations": self.max_iterations,
            "prob_floor": self.prob_floor,
            "rollout_rounds": self.rounds,
            "seed": self.seed,
            "workers": self.workers,
        }

    def fingerprint(self):
        """Hash of every field that influences training results."""
        d = self.to_dict()
        for k in ("rollout_rounds", "seed", "workers"):
            d.pop(k)
        d["kernel"] = self.kernels.tolist()
        d["distortion"] = self.distortion.tolist()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _schedule(value, n, path, errors):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(n, float(value))
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{path}: expected a number or a list of numbers")
        return None
    if arr.ndim != 1 or len(arr) != n:
        errors.append(f"{path}: schedule length must be N+1 = {n} (got {arr.size})")
        return None
    return arr


def _stochastic(value, shape, path, errors):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        errors.append(f"{path}: expected numeric array")
        return None
    if arr.shape != shape:
        errors.append(f"{path}: expected shape {shape}, got {arr.shape}")
        return None
    if np.any(arr < 0) or not np.allclose(arr.sum(axis=-1), 1.0, atol=1e-9):
        errors.append(f"{path}: rows must be probability distributions")
        return None
    return arr


def config_from_dict(d):
    """Validate a configuration mapping, reporting every violation at once."""
    errors = []
    if not isinstance(d, dict):
        raise ConfigError(["<root>: expected a JSON object"])

    def need(key, kind):
        if key not in d:
            errors.append(f"{key}: missing field")
            return None
        v = d[key]
        if kind is int and (not isinstance(v, int) or isinstance(v, bool)):
            errors.append(f"{key}: expected integer")
            return None
        if kind is float and (not isinstance(v, (int, float)) or isinstance(v, bool)):
            errors.append(f"{key}: expected number")
            return None
        return v

    version = d.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        errors.append(f"version: unsupported config version {version} (expected {CONFIG_VERSION})")
    x_size = d.get("x_size", 2)
    u_size = d.get("u_size", 2)
    if x_size != 2 or u_size != 2:
        errors.append("x_size/u_size: only binary alphabets are supported")
        x_size = u_size = 2

    N = need("horizon", int)
    Ns = need("rolling_horizon", int)
    n = need("quantization", int)
    if N is not None and N < 1:
        errors.append("horizon: must be >= 1")
    if Ns is not None and Ns < 1:
        errors.append("rolling_horizon: must be >= 1")
    if N is not None and Ns is not None and Ns > N:
        errors.append(f"rolling_horizon: N_s = {Ns} exceeds horizon N = {N}")
    if n is not None and n < 2:
        errors.append("quantization: must be >= 2")

    kernels = None
    kspec = d.get("kernel")
    if kspec is None:
        errors.append("kernel: missing field")
    elif isinstance(kspec, dict) and "alpha0" in kspec:
        ok = True
        for key in ("alpha0", "alpha1"):
            a = kspec.get(key)
            if not isinstance(a, (int, float)) or isinstance(a, bool):
                errors.append(f"kernel.{key}: expected number")
                ok = False
            elif not 0 < a < 1:
                errors.append(f"kernel.{key}: must lie in (0, 1), got {a}")
                ok = False
        if ok and N is not None and N >= 1:
            kernels = np.repeat(example1_kernel(kspec["alpha0"], kspec["alpha1"])[None], N, axis=0)
    elif isinstance(kspec, dict) and "matrices" in kspec:
        mats = kspec["matrices"]
        if N is not None and N >= 1:
            arr = np.asarray(mats, dtype=float)
            if arr.shape == (u_size, x_size, x_size):
                arr = np.repeat(arr[None], N, axis=0)
            kernels = _stochastic(arr, (N, u_size, x_size, x_size), "kernel.matrices", errors)
    else:
        errors.append("kernel: expected {alpha0, alpha1} or {matrices}")

    x0 = _stochastic(d.get("initial_state_distribution", [0.5, 0.5]), (x_size,),
                     "initial_state_distribution", errors)
    mu0 = _stochastic(d.get("initial_policy", [[0.5, 0.5], [0.5, 0.5]]), (x_size, u_size),
                      "initial_policy", errors)
    if "initial_control_marginal" in d and x0 is not None and mu0 is not None:
        given = np.asarray(d["initial_control_marginal"], dtype=float)
        if given.shape != (u_size,) or not np.allclose(given, x0 @ mu0, atol=1e-9):
            errors.append("initial_control_marginal: inconsistent with initial policy and state")

    dspec = d.get("distortion", "hamming")
    if dspec == "hamming":
        rho = hamming(x_size, u_size)
    else:
        try:
            rho = np.asarray(dspec, dtype=float)
        except (TypeError, ValueError):
            rho = None
        if rho is None or rho.shape != (x_size, u_size):
            errors.append(f"distortion: expected 'hamming' or a {x_size}x{u_size} matrix")
            rho = None
        elif np.any(rho < 0) or not np.all(np.isfinite(rho)):
            errors.append("distortion: entries must be finite and >= 0")

    s = D = None
    if N is not None and N >= 1:
        s = _schedule(d.get("s"), N + 1, "s", errors) if "s" in d else None
        if "s" not in d:
            errors.append("s: missing field")
        elif s is not None and np.any(s > 0):
            bad = [i for i, v in enumerate(s) if v > 0]
            errors.append(f"s: Lagrange multipliers must satisfy s_t <= 0 (violated at t={bad})")
        D = _schedule(d.get("D", 0.0), N + 1, "D", errors)
        if D is not None and np.any(D < 0):
            errors.append("D: thresholds must be >= 0")

    eps = d.get("epsilon_nats", 1e-6)
    if not isinstance(eps, (int, float)) or not eps > 0:
        errors.append("epsilon_nats: must be positive")
    max_it = d.get("max_iterations", 100_000)
    if not isinstance(max_it, int) or max_it < 1:
        errors.append("max_iterations: must be a positive integer")
    floor = d.get("prob_floor", 1e-12)
    if not isinstance(floor, (int, float)) or not 0 < floor < 1e-3:
        errors.append("prob_floor: must lie in (0, 1e-3)")
    rounds = d.get("rollout_rounds", 1)
    if not isinstance(rounds, int) or rounds < 1:
        errors.append("rollout_rounds: must be >= 1")
    workers = d.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        errors.append("workers: must be >= 1")

    if errors:
        raise ConfigError(errors)
    return ProblemConfig(
        horizon=N, rolling_horizon=Ns, quantization=n, kernels=kernels,
        initial_state=x0, initial_policy=mu0, distortion=rho, s=s, D=D,
        epsilon=float(eps), max_iterations=max_it, prob_floor=float(floor),
        rounds=rounds, seed=int(d.get("seed", 0)), workers=workers,
        kernel_spec=kspec if isinstance(kspec, dict) and "alpha0" in kspec else None,
        distortion_spec="hamming" if dspec == "hamming" else None)


def parse_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError([f"<file>: {path} does not exist"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON ({exc})"]) from exc
    return config_from_dict(data)


def example1_config(n=20, alpha0=0.4, alpha1=0.8, s=-2.0, N=100, Ns=5, **kw):
    """The time-invariant binary symmetric controlled chain of the numerical study."""
    d = {
        "horizon": N, "rolling_horizon": Ns, "quantization": n,
        "kernel": {"alpha0": alpha0, "alpha1": alpha1},
        "initial_state_distribution": [0.5, 0.5],
        "initial_policy": [[0.88, 0.12], [0.12, 0.88]],
        "distortion": "hamming",
        "s": s,
        "D": float(np.exp(s) / (1 + np.exp(s))) if s < 0 else 0.0,
    }
    d.update(kw)
    return config_from_dict(d)


def random_config(rng, N=20, Ns=3, n=10, **kw):
    """Random binary instance: kernels, initial law and policy, distortion and multiplier."""
    kern = rng.dirichlet(np.ones(2), size=(2, 2))
    d = {
        "horizon": N, "rolling_horizon": Ns, "quantization": n,
        "kernel": {"matrices": kern.tolist()},
        "initial_state_distribution": rng.dirichlet(np.ones(2)).tolist(),
        "initial_policy": rng.dirichlet(np.ones(2), size=2).tolist(),
        "distortion": rng.uniform(0, 1, size=(2, 2)).tolist(),
        "s": float(-rng.uniform(0.5, 4.0)),
        "D": float(rng.uniform(0.05, 0.3)),
    }
    d.update(kw)
    return config_from_dict(d)

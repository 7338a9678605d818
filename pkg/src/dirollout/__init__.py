"""Truncated rollout for control under a directed-information cost.

A finite-horizon problem over a binary controlled Markov source: a base
policy is trained offline on a belief grid over the last few stages, and an
online one-step lookahead improves on it stage by stage.
"""
from .blahut import BAAConfig, solve_batch, solve_stage
from .config import ConfigError, ProblemConfig, example1_config, parse_config, random_config
from .grid import BeliefGrid, build_uniform_grid
from .offline import OfflineArtifact, load_artifact, save_artifact, train
from .rollout import (RolloutConfig, RolloutTrajectory, evaluate_base_policy, run_baseline,
                      run_online, run_repeated)

__version__ = "0.1.0"

__all__ = [
    "BAAConfig", "BeliefGrid", "ConfigError", "OfflineArtifact", "ProblemConfig",
    "RolloutConfig", "RolloutTrajectory", "build_uniform_grid", "evaluate_base_policy",
    "example1_config", "load_artifact", "parse_config", "random_config", "run_baseline",
    "run_online", "run_repeated", "save_artifact", "solve_batch", "solve_stage", "train",
]

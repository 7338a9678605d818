"""Command-line entry point ``dirollout``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness as H
from .config import ConfigError
from .offline import ArtifactFormatError, StaleArtifactError, TrainingError
from .oracle import OracleSizeError
from .rollout import PropagationError

EPILOG = f"""\
exit status:
  {H.EXIT_OK}  success
  2  command-line usage error
  {H.EXIT_CONFIG}  configuration error (every violated field is listed)
  {H.EXIT_TRAINING}  offline training failure
  {H.EXIT_PROPAGATION}  belief propagation failure during a rollout
  {H.EXIT_BENCH_FIT}  benchmark sweep too small or otherwise unfittable
  {H.EXIT_ARTIFACT}  artifact file stale, malformed, or oracle instance too large

environment:
  DIROLLOUT_WORKERS  worker count used when --workers is not given
"""


def build_parser():
    p = argparse.ArgumentParser(
        prog="dirollout",
        description="Truncated rollout for directed-information constrained control.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=["train", "rollout", "repeat", "baseline", "oracle", "bench"])
    p.add_argument("--config", required=True, metavar="PATH", help="problem configuration JSON")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="recorded in every summary")
    p.add_argument("--workers", type=int, default=None, help="offline grid worker processes")
    p.add_argument("--epsilon", type=float, default=None, help="stopping tolerance in nats")
    p.add_argument("--artifact", default=None, metavar="PATH",
                   help="rollout: reuse a trained artifact instead of training")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _bench_spec(path):
    with open(path) as fh:
        return json.load(fh).get("bench")


def run(args):
    config = H.load_config(args.config, args.seed, args.workers, args.epsilon)
    cmd = args.command
    if cmd == "train":
        rep = H.cmd_train(config, args.out)
        print(f"trained {config.rolling_horizon} stages in {rep.offline_seconds:.3f} s")
    elif cmd == "rollout":
        rep = H.cmd_rollout(config, args.out, args.artifact)
        print(f"rollout total cost {rep.totals['lagrangian_stage_cost']:.6f}, "
              f"DI {rep.totals['directed_information_nats']:.6f} nats")
    elif cmd == "baseline":
        rep = H.cmd_baseline(config, args.out)
        print(f"baseline total cost {rep.totals['lagrangian_stage_cost']:.6f}, "
              f"DI {rep.totals['directed_information_nats']:.6f} nats")
    elif cmd == "repeat":
        for r, rep in enumerate(H.cmd_repeat(config, args.out), start=1):
            print(f"round {r}: total cost {rep.totals['lagrangian_stage_cost']:.6f}")
    elif cmd == "oracle":
        rep = H.cmd_oracle(config, args.out)
        for k, ok in rep.passed.items():
            print(f"{k}: gap {rep.gaps[k]:.3e} {'ok' if ok else 'FAIL'}")
    elif cmd == "bench":
        res = H.cmd_bench(config, args.out, _bench_spec(args.config))
        for k, v in res["slopes"].items():
            print(f"slope {k}: {v:.3f}")
    return H.EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return H.EXIT_CONFIG
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return H.EXIT_TRAINING
    except PropagationError as exc:
        print(f"propagation failed: {exc}", file=sys.stderr)
        return H.EXIT_PROPAGATION
    except H.BenchFitError as exc:
        print(f"bench fit failed: {exc}", file=sys.stderr)
        return H.EXIT_BENCH_FIT
    except (StaleArtifactError, ArtifactFormatError, OracleSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return H.EXIT_ARTIFACT


if __name__ == "__main__":
    sys.exit(main())

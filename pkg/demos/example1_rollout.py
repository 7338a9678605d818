"""Binary symmetric controlled chain: rollout against the full-horizon baseline.

Trains the base policy over the last five stages, rolls it out online over
100 stages, then repeats once on a grid refined to the visited beliefs.
The full-horizon baseline is trained for comparison.

    python demos/example1_rollout.py
"""
import time

import numpy as np

from dirollout import RolloutConfig, example1_config, run_baseline, run_repeated

config = example1_config(n=20, alpha0=0.4, alpha1=0.8, s=-2.0, N=100, Ns=5)

start = time.perf_counter()
rounds = run_repeated(config, RolloutConfig(rounds=2))
print(f"rollout, two rounds: {time.perf_counter() - start:.2f} s")

start = time.perf_counter()
_, base = run_baseline(config)
print(f"baseline: {time.perf_counter() - start:.2f} s\n")

rows = [("baseline", base)] + [(f"rollout round {r}", tr) for r, (_, tr) in enumerate(rounds, 1)]
print(f"{'':18s}{'total cost':>12s}{'DI (nats)':>12s}{'mean MI':>10s}{'mean dist':>11s}")
for name, tr in rows:
    print(f"{name:18s}{tr.total_cost:12.6f}{tr.total_di:12.6f}"
          f"{np.mean(tr.stage_mi):10.6f}{np.mean(tr.distortion):11.6f}")

# The stage MI settles quickly; show the first few stages and the tail.
tr = rounds[0][1]
print("\nstage   MI (rollout)   MI (baseline)")
for t in list(range(6)) + list(range(96, 101)):
    print(f"{t:5d}   {tr.stage_mi[t]:.6f}       {base.stage_mi[t]:.6f}")

"""One-stage solves checked against the analytic point and an exhaustive search.

    python demos/one_stage_oracles.py
"""
import numpy as np

from dirollout import BAAConfig, solve_stage
from dirollout.blahut import ZeroContinuation
from dirollout.costs import hamming
from dirollout.oracle import analytic_rd_point, brute_force_stage

# Uniform source, Hamming distortion: the solver should land on the closed form.
uniform_b, uniform_w = np.full((2, 2), 0.5), np.full((2, 2, 2), 0.5)
for s in (-0.5, -1.0, -2.0, -4.0):
    D, R = analytic_rd_point(s)
    sol = solve_stage(uniform_b, uniform_w, s, D, hamming(2), ZeroContinuation(), 0,
                      BAAConfig(epsilon=1e-10))
    print(f"s={s:5.1f}  D={sol.distortion:.6f} (exact {D:.6f})  "
          f"I={sol.mutual_information:.6f} (exact {R:.6f})  {sol.iterations} iterations")

# Random stages: compare with the best of 200 x 200 candidate policies.
rng = np.random.default_rng(7)
print()
for _ in range(5):
    b = rng.dirichlet(np.ones(2), size=2)
    w = rng.dirichlet(np.ones(2), size=(2, 2))
    rho = rng.uniform(0, 1, size=(2, 2))
    s, D = -rng.uniform(0.5, 4.0), rng.uniform(0.05, 0.3)
    sol = solve_stage(b, w, s, D, rho, ZeroContinuation(), 0, BAAConfig(epsilon=1e-9))
    grid_min = brute_force_stage(b, w, s, D, rho, ZeroContinuation(), 0, m=200)
    print(f"Q*={sol.q_value:.7f}  grid search={grid_min:.7f}  gap={sol.final_gap:.1e}")

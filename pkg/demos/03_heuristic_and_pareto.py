"""Single-leaf heuristic versus the exact loop, and the distance/radius trade-off.

On the straddle tree the best robust ball overlaps two positive leaves, which
the heuristic cannot express, so it pays extra distance. The Pareto sweep on
the jump tree shows a distance jump when the optimum changes leaf.
"""
import numpy as np

from robustce import UncertaintySet, load_fixture, solve_heuristic_tree, solve_robust_ce
from robustce.calibration import pareto_front, write_csv

model = load_fixture("straddle")
factual = model.meta["factual"]
print(f"{'rho':>5} {'exact':>10} {'heuristic':>10} {'iters':>6}")
for rho in (0.0, 0.02, 0.04, 0.08):
    u = UncertaintySet("linf", rho)
    exact = solve_robust_ce(model, factual, u)
    heur = solve_heuristic_tree(model, factual, u)
    print(f"{rho:5.2f} {exact.distance:10.6f} {heur.distance:10.6f} {exact.iterations:6d}")

jump = load_fixture("jump_tree")
points = pareto_front(jump, jump.meta["factual"], np.linspace(0.0, 0.2, 11))
print("\nPareto front for jump_tree:")
print(write_csv(points), end="")

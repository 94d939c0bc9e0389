"""Why trees need the Lipschitz surrogate.

On the step tree (class +1 iff x2 <= 1/2) the raw score is flat on the
negative side, so any flipping perturbation is an adversarial optimum. Feeding
the master problem s_i = (1, 1/2 + sum_j 4^-j) makes the iterates drift to
(0, -1/3), which is not robust. The surrogate-driven engine instead picks the
deepest violation and stops at distance 2.5.
"""
import numpy as np

from robustce import MasterProblem, UncertaintySet, load_fixture, solve_robust_ce

model = load_fixture("step_tree")
factual = [0.0, 2.0]

mp = MasterProblem(model, factual)
mp.add_scenario(np.zeros(2))
geometric = 0.0
print("raw-score scenarios:")
for i in range(1, 9):
    x = mp.point(mp.solve())
    geometric += 0.25 ** i
    mp.add_scenario(np.array([1.0, 0.5 + geometric]))
    print(f"  iter {i}: x = {np.round(x, 8)}")
print("  limit (0, -1/3) + (0, 1) is still negative\n")

res = solve_robust_ce(model, factual, UncertaintySet("linf", 1.0))
print(f"surrogate engine: {res.status.value} after {res.iterations} iterations")
for rec in res.trace:
    print(f"  iter {rec.index}: x = {np.round(rec.point, 6)}  violation = {rec.ap_violation:.3g}")
print(f"  distance {res.distance:.6f}, certified radius {res.rho_certified:.6f}")

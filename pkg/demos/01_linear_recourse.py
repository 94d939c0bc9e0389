"""Robust recourse on a linear model: closed form against the adversarial loop.

The classifier accepts a point when x2 >= 1. For a factual at
(rho / (2 rho_mod), 0) the closest point that survives every rho-perturbation
is lifted to x2 = 1 + rho; the adversarial loop and the dual-norm closed form
agree on it.
"""
import numpy as np

from robustce import EngineConfig, UncertaintySet, load_fixture, solve_robust_ce

model = load_fixture("linear_x2")

print(f"{'rho':>5} {'rho_mod':>8} {'closed form':>22} {'adversarial loop':>22}")
for rho in (0.1, 0.5, 1.0):
    for rho_mod in (0.25, 0.5):
        factual = np.array([rho / (2 * rho_mod), 0.0])
        u = UncertaintySet("linf", rho)
        closed = solve_robust_ce(model, factual, u)
        loop = solve_robust_ce(model, factual, u, cfg=EngineConfig(linear_closed_form=False))
        print(f"{rho:5.2f} {rho_mod:8.2f} {str(np.round(closed.point, 6)):>22} "
              f"{str(np.round(loop.point, 6)):>22}  ({loop.iterations} iterations)")


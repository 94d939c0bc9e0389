"""Choosing a radius from a noise model, then checking the result by sampling.

Under Gaussian implementation noise with scale sigma, calibrate() turns a target
coverage into a radius. The radius is then used for a robust counterfactual
on the 2-8-1 ReLU network, and the point is audited with random draws.
"""
from robustce import UncertaintySet, load_fixture, solve_robust_ce
from robustce.calibration import CAVEAT, CalibrationQuery, calibrate
from robustce.oracle import sample_audit

q = calibrate(CalibrationQuery(k=2, norm="l2", alpha=0.9, sigma=0.02))
print(f"alpha={q.alpha} sigma={q.sigma} -> rho={q.rho:.6f}")
print(CAVEAT)

model = load_fixture("relu281")
u = UncertaintySet("l2", q.rho)
res = solve_robust_ce(model, model.meta["factual"], u)
print(f"\n{res.status.value}: x = {res.point}, distance {res.distance:.6f}, {res.iterations} iterations")
min_score, worst, ok = sample_audit(model, res.point, u, 10_000, seed=0)
print(f"audit over 10^4 draws: all valid = {ok}, lowest score {min_score:.6f} (tau = {model.tau})")

"""Profile likelihood confidence interval for the infection rate.

After the point estimate, fix lambda on a grid, re-maximize over the other
free parameters at each grid value, and read the 95% interval off the points
where the profiled log likelihood drops 1.92 below the maximum.

Run:  python3 demos/05_profile_interval.py   (a few minutes)
"""

import time

import numpy as np

from epikalman import (
    design_grid,
    fit,
    get_model,
    observe,
    profile_ci,
    simulate_nonextinct,
)

model = get_model("sir")
N = 10_000
trajs = simulate_nonextinct(model, np.array([1.0, 1 / 3]), N,
                            np.array([9_900, 100]), n_keep=1, seed=31)
_, grids = design_grid(model, trajs, n_target=100)
series = observe(trajs[0], grids[0], p=0.8, tau=0.0,
                 rng=np.random.SeedSequence(32))

result = fit(model, series.times, series.values, N,
             free=("lambda", "gamma", "p", "i0"), fixed={"tau": 0.0},
             start={"lambda": 1.2, "gamma": 0.4, "p": 0.7, "i0": 0.02},
             n_starts=4, seed=5)
print(f"point estimate lambda = {result.params['lambda']:.4f} "
      f"(loglik {result.loglik:.3f})\n")

t0 = time.perf_counter()
prof = profile_ci(model, series.times, series.values, N, result, "lambda",
                  n_grid=12, n_starts=6, seed=9)
secs = time.perf_counter() - t0

drop = prof.loglik_ref - prof.values
print("lambda    loglik drop")
for g, d in zip(prof.grid, drop):
    bar = "#" * min(60, int(8 * d))
    print(f"{g:6.4f}   {d:7.3f}  {bar}")
print(f"\n95% interval: [{prof.lo:.4f}, {prof.hi:.4f}]  "
      f"(threshold {prof.threshold}, {secs:.0f}s, "
      f"{prof.n_evals} evaluations)")
if prof.at_lower_edge or prof.at_upper_edge:
    print("warning: interval touches the search grid edge; widen span=")

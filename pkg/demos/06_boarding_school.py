"""Fit the 1978 boarding school influenza outbreak.

The bundled data set records boys confined to bed each day during a flu
outbreak in a school of 763. We fit an SIR model with estimated reporting
rate and observation noise, starting from a single initial case, then check
the fit by simulating from the estimate and comparing percentile bands
against the observations.

Run:  python3 demos/06_boarding_school.py   (about half a minute)
"""

import numpy as np

from epikalman import (
    band_coverage,
    boarding_school,
    fit,
    get_model,
    post_predictive,
)

series = boarding_school()
model = get_model("sir")
print(f"data: {series.n_obs} daily counts, N = {series.N}, "
      f"peak {int(round(series.values.max() * series.N))} in bed\n")

result = fit(
    model, series.times, series.values, series.N,
    free=("lambda", "gamma", "p", "tau"),
    fixed={"i0": 1.0 / series.N},      # index case: one infectious boy
    start={"lambda": 1.5, "gamma": 0.5, "p": 0.9, "tau": 1.0},
    n_starts=8,
    seed=0,
)

est = result.params
print(f"loglik {result.loglik:.3f} ({result.n_evals} evaluations)")
print(f"  infection rate    lambda = {est['lambda']:.3f}")
print(f"  recovery rate     gamma  = {est['gamma']:.3f}")
print(f"  basic reproduction number R0 = {est['lambda'] / est['gamma']:.2f}")
print(f"  reporting rate    p      = {est['p']:.3f}"
      + ("  (boundary)" if "p" in result.at_boundary else ""))
print(f"  noise scale       tau    = {est['tau']:.3f}")
print(f"  mean infectious period   = {1 / est['gamma']:.2f} days\n")

pp = post_predictive(model, result.theta, series.times, series.N,
                     n_sims=500, seed=1, obs_map=series.obs_map)
cover = band_coverage(pp, series.values)
print("day   observed   median    5%..95% band")
for k, t in enumerate(series.times):
    obs = series.values[k, 0] * series.N
    print(f"{int(t):3d}   {obs:7.0f}   {pp.q50[k, 0] * series.N:7.1f}   "
          f"[{pp.q05[k, 0] * series.N:6.1f}, {pp.q95[k, 0] * series.N:6.1f}]")
print(f"\n{cover:.0%} of the observations fall inside the 5-95% band")

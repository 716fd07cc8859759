"""Simulate exact SIR outbreaks and turn them into noisy observations.

Walks through the raw simulation layer: draw jump-process paths, see which
ones take off, pick a common sampling interval, and generate the reported
(thinned and noise-corrupted) counts a surveillance system would record.

Run:  python3 demos/01_simulate_epidemics.py
"""

import numpy as np

from epikalman import (
    design_grid,
    extinction_time,
    final_size,
    get_model,
    gillespie,
    is_nonextinct,
    nonextinction_probability,
    observe,
    simulate_nonextinct,
)

model = get_model("sir")
zeta = np.array([1.0, 1.0 / 3.0])   # infection rate 1, recovery rate 1/3
N = 10_000
x0 = np.array([N - 100, 100])       # 1% initially infectious

# Raw paths: a fair share die out early when I0 is small.
print("20 raw paths with a single initial case (I0 = 1):")
kids = np.random.SeedSequence(7).spawn(20)
outcomes = []
for k in kids:
    traj = gillespie(model, zeta, N, np.array([N - 1, 1]), rng=k)
    outcomes.append(is_nonextinct(model, traj))
print(f"  {sum(outcomes)} / 20 grew into outbreaks; branching theory predicts "
      f"{nonextinction_probability(zeta, 1):.3f} per path\n")

# The estimation experiments only use outbreaks, so sample until we have them.
trajs = simulate_nonextinct(model, zeta, N, x0, n_keep=3, seed=11)
for i, traj in enumerate(trajs):
    print(f"path {i}: {len(traj.times) - 1} events, "
          f"extinct at t={extinction_time(model, traj):.1f}, "
          f"final size {final_size(model, traj)} of {N}")

# One shared sampling interval sized so a typical path yields ~100 points.
delta, grids = design_grid(model, trajs, n_target=100)
print(f"\nsampling interval delta = {delta:.3f} "
      f"(grids of {[len(g) for g in grids]} points)")

# Reported data: binomial reporting at p=0.8 plus count-scaled Gaussian noise.
series = observe(trajs[0], grids[0], p=0.8, tau=1.0,
                 rng=np.random.SeedSequence(23))
true_i = trajs[0].states_at(series.times)[:, 1] / N
print("\n  t      true I/N   reported")
for t, y, x in list(zip(series.times, series.values[:, 0], true_i))[:8]:
    print(f"  {t:5.2f}   {x:.4f}     {y:.4f}")
print("  ...")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for traj in trajs:
        ax.plot(traj.times, traj.states[:, 1] / N, lw=0.8, alpha=0.7)
    ax.plot(series.times, series.values[:, 0], "k.", label="reported (path 0)")
    ax.set(xlabel="t", ylabel="infectious fraction", title="SIR outbreaks")
    ax.legend()
    fig.tight_layout()
    fig.savefig("demo01_paths.png", dpi=120)
    print("\nwrote demo01_paths.png")
except ImportError:
    print("\n(matplotlib not installed, skipping the figure)")

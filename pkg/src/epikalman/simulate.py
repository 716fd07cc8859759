"""Exact stochastic simulation of compartmental epidemics and observation draws.

The simulator is the classic direct method: exponential holding times at the
total event rate, categorical choice of the channel.  Count-level intensities
are obtained from the normalized rates as N * beta(k / N), which reproduces
the usual mass-action intensities exactly (e.g. lambda * S * I / N).

Random numbers are consumed from pre-drawn blocks of one generator per
trajectory, so runs are bit-reproducible for a fixed seed and independent
across trajectories when seeds are spawned from a common SeedSequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, SimulationError
from .model import CompartmentalModel, get_model

__all__ = [
    "Trajectory",
    "ObservationSeries",
    "gillespie",
    "observe",
    "extinction_time",
    "final_size",
    "is_nonextinct",
    "simulate_nonextinct",
    "design_grid",
    "nonextinction_probability",
    "proportions_to_counts",
]


@dataclass
class Trajectory:
    """Piecewise-constant sample path of the counting process.

    ``times[0] == 0`` holds the initial state; row k of ``states`` is the
    count vector right after the k-th event.  ``t_end`` is the time up to
    which the path is known: infinity when the process was absorbed, the
    requested horizon when simulation was stopped early.
    """

    times: np.ndarray
    states: np.ndarray
    jump_idx: np.ndarray
    N: int
    model_name: str
    t_end: float

    def state_at(self, t: float) -> np.ndarray:
        return self.states_at(np.array([float(t)]))[0]

    def states_at(self, query: np.ndarray) -> np.ndarray:
        """States at the query times (right-continuous step function)."""
        query = np.asarray(query, dtype=float)
        if query.size and float(np.max(query)) > self.t_end + 1e-12:
            raise ValueError(
                f"query time {np.max(query):.6g} exceeds simulated horizon {self.t_end:.6g}"
            )
        idx = np.searchsorted(self.times, query, side="right") - 1
        return self.states[np.clip(idx, 0, len(self.times) - 1)]


@dataclass
class ObservationSeries:
    """Noisy reported counts, normalized by the population size.

    ``values[k, i]`` is (binomial thinning + additive noise) / N for the
    observed compartment ``obs_map[i]`` at ``times[k]``.  Values may be
    negative: the additive noise is not truncated.
    """

    times: np.ndarray
    values: np.ndarray
    N: int
    obs_map: tuple[int, ...]
    model_name: str
    meta: dict = field(default_factory=dict)

    @property
    def n_obs(self) -> int:
        return len(self.times)

    @property
    def q(self) -> int:
        return self.values.shape[1]


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _count_rate_fn(model: CompartmentalModel, zeta: np.ndarray, N: int):
    """Closure computing per-channel count-level intensities from counts."""
    if model.name == "sir":
        lam, gam = float(zeta[0]), float(zeta[1])

        def rates(c):
            return (lam * c[0] * c[1] / N, gam * c[1])

        return rates
    if model.name == "seir":
        lam, eps, gam = float(zeta[0]), float(zeta[1]), float(zeta[2])

        def rates(c):
            return (lam * c[0] * c[2] / N, eps * c[1], gam * c[2])

        return rates

    jumps = model.jumps
    zeta = np.asarray(zeta, dtype=float)

    def rates(c):
        x = np.asarray(c, dtype=float) / N
        return tuple(float(N * j.rate(x, zeta)) for j in jumps)

    return rates


def gillespie(
    model: CompartmentalModel,
    zeta: np.ndarray,
    N: int,
    x0_counts: np.ndarray,
    t_max: float = math.inf,
    rng=None,
    max_events: int | None = None,
) -> Trajectory:
    """Simulate one exact sample path until absorption, ``t_max`` or the event cap.

    ``max_events`` defaults to ``10 * N * len(jumps)``; exceeding it raises
    SimulationError (a runaway simulation, usually a bad parameter set).
    """
    gen = _as_generator(rng)
    counts = [int(v) for v in np.asarray(x0_counts)]
    if len(counts) != model.d:
        raise ValueError(f"expected {model.d} initial counts, got {len(counts)}")
    if min(counts) < 0 or sum(counts) > N:
        raise SimulationError("initial counts must be nonnegative and sum to at most N")
    cap = int(max_events) if max_events is not None else 10 * N * len(model.jumps)
    rates_fn = _count_rate_fn(model, zeta, N)
    changes = [tuple(int(v) for v in j.change) for j in model.jumps]
    n_channels = len(changes)
    builtin = model.name in ("sir", "seir")

    block = min(65536, max(512, 2 * N))
    exps = gen.standard_exponential(block)
    us = gen.random(block)
    ptr = 0

    times = [0.0]
    states = [tuple(counts)]
    picks: list[int] = []
    t = 0.0
    truncated = False
    while True:
        rs = rates_fn(counts)
        total = 0.0
        for r in rs:
            total += r
        if total <= 0.0:
            break
        if ptr == block:
            exps = gen.standard_exponential(block)
            us = gen.random(block)
            ptr = 0
        wait = exps[ptr] / total
        u = us[ptr]
        ptr += 1
        if t + wait > t_max:
            truncated = True
            break
        t += wait
        target = u * total
        j = 0
        acc = rs[0]
        while target >= acc and j < n_channels - 1:
            j += 1
            acc += rs[j]
        ch = changes[j]
        counts = [c + dc for c, dc in zip(counts, ch)]
        if not builtin and min(counts) < 0:
            raise SimulationError("a jump produced negative counts; check rate functions")
        times.append(t)
        states.append(tuple(counts))
        picks.append(j)
        if len(picks) >= cap:
            raise SimulationError(
                f"event cap {cap} reached at t={t:.4g}; raise max_events if intended"
            )

    return Trajectory(
        times=np.asarray(times),
        states=np.asarray(states, dtype=np.int64),
        jump_idx=np.asarray(picks, dtype=np.int16),
        N=N,
        model_name=model.name,
        t_end=t_max if truncated else math.inf,
    )


def observe(
    traj: Trajectory,
    times: np.ndarray,
    p,
    tau,
    rng=None,
    obs_map: tuple[int, ...] | None = None,
) -> ObservationSeries:
    """Draw reported values at the given times from a simulated path.

    Each observed coordinate i is ``(Binomial(C_i, p_i) + Normal(0, tau_i^2 C_i)) / N``
    where ``C_i`` is the true count at the observation time.
    """
    gen = _as_generator(rng)
    times = np.asarray(times, dtype=float)
    if obs_map is None:
        model = get_model(traj.model_name)
        obs_map = (model.infected[-1],)
    obs_map = tuple(int(i) for i in obs_map)
    q = len(obs_map)
    p = np.broadcast_to(np.asarray(p, dtype=float), (q,))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (q,))
    counts = traj.states_at(times)[:, obs_map]
    reported = gen.binomial(counts, p)
    noise = gen.standard_normal(counts.shape) * (tau * np.sqrt(counts))
    values = (reported + noise) / traj.N
    return ObservationSeries(
        times=times,
        values=values,
        N=traj.N,
        obs_map=obs_map,
        model_name=traj.model_name,
    )


def extinction_time(model: CompartmentalModel, traj: Trajectory) -> float | None:
    """First time the infected compartments are all empty, or None."""
    pool = traj.states[:, list(model.infected)].sum(axis=1)
    hits = np.flatnonzero(pool == 0)
    if hits.size == 0:
        return None
    return float(traj.times[hits[0]])


def final_size(model: CompartmentalModel, traj: Trajectory) -> int:
    """Number of individuals ever infected, including the initial cases."""
    s = model.susceptible
    pool0 = int(traj.states[0, list(model.infected)].sum())
    return pool0 + int(traj.states[0, s] - traj.states[-1, s])


def is_nonextinct(
    model: CompartmentalModel,
    traj: Trajectory,
    multiplier: float = 10.0,
    fraction: float = 0.05,
) -> bool:
    """Classify a path as a genuine outbreak rather than early extinction.

    The path counts as non-extinct when its final size exceeds
    ``max(multiplier * I0, fraction * N)`` where I0 is the initial number
    of infected (exposed plus infectious) individuals.
    """
    pool0 = int(traj.states[0, list(model.infected)].sum())
    threshold = max(multiplier * pool0, fraction * traj.N)
    return final_size(model, traj) > threshold


def simulate_nonextinct(
    model: CompartmentalModel,
    zeta: np.ndarray,
    N: int,
    x0_counts: np.ndarray,
    n_keep: int,
    seed,
    t_max: float = math.inf,
    multiplier: float = 10.0,
    fraction: float = 0.05,
    max_attempts: int | None = None,
    max_events: int | None = None,
) -> list[Trajectory]:
    """Simulate until ``n_keep`` non-extinct paths are collected.

    Each attempt uses its own child seed (spawned by attempt index), so the
    result does not depend on how the caller batches the work.
    """
    cap = max_attempts if max_attempts is not None else 50 * n_keep
    children = np.random.SeedSequence(seed).spawn(cap)
    kept: list[Trajectory] = []
    for child in children:
        traj = gillespie(model, zeta, N, x0_counts, t_max=t_max, rng=child,
                         max_events=max_events)
        if is_nonextinct(model, traj, multiplier=multiplier, fraction=fraction):
            kept.append(traj)
            if len(kept) == n_keep:
                return kept
    raise SimulationError(
        f"only {len(kept)} non-extinct paths in {cap} attempts; "
        "check parameters or raise max_attempts"
    )


def design_grid(
    model: CompartmentalModel,
    trajectories: list[Trajectory],
    n_target: int,
) -> tuple[float, list[np.ndarray]]:
    """Common sampling interval and per-path observation grids.

    The interval is (mean epidemic duration) / n_target; each path gets the
    grid 0, delta, 2*delta, ... up to its own extinction time.  All supplied
    paths must reach extinction.
    """
    durations = []
    for traj in trajectories:
        t_ext = extinction_time(model, traj)
        if t_ext is None:
            raise DegenerateDataError(
                "a trajectory never reaches extinction; simulate without a horizon"
            )
        durations.append(t_ext)
    delta = float(np.mean(durations)) / n_target
    grids = [np.arange(math.floor(t / delta) + 1) * delta for t in durations]
    return delta, grids


def nonextinction_probability(zeta: np.ndarray, i0_count: int) -> float:
    """Branching-process probability that an outbreak takes off.

    Equals ``max(0, 1 - (gamma/lambda)^I0)`` with lambda the infection rate
    (first entry of zeta) and gamma the recovery rate (last entry).
    """
    lam, gam = float(zeta[0]), float(zeta[-1])
    if lam <= 0:
        return 0.0
    return max(0.0, 1.0 - (gam / lam) ** int(i0_count))


def proportions_to_counts(x0: np.ndarray, N: int) -> np.ndarray:
    """Round proportions to integer counts for a population of size N."""
    counts = np.rint(np.asarray(x0, dtype=float) * N).astype(np.int64)
    if counts.sum() > N:
        raise ValueError("initial proportions exceed the population size")
    return counts

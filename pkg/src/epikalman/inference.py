"""Maximum likelihood fitting, profile intervals, and predictive checks.

Parameters are optimized on an unconstrained scale: positive rates and the
noise scale through ``exp``, unit-interval fractions through a reciprocal
logistic map. A multi-start downhill simplex search (no gradients; the
likelihood is only piecewise smooth in the data) maximizes the filter
likelihood. Confidence intervals come from the profile likelihood with the
conventional 95% chi-square drop of 1.92 on the log scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, DomainError, NumericsError
from .kalman import DEGENERATE_LOGLIK, log_likelihood
from .model import CompartmentalModel, ThetaFull
from .simulate import (
    gillespie,
    observe,
    proportions_to_counts,
    simulate_nonextinct,
)
from .state_space import ApproxSettings, build_system

__all__ = [
    "PROFILE_THRESHOLD",
    "FitResult",
    "NMResult",
    "ParamSpace",
    "PostPredictive",
    "ProfileResult",
    "band_coverage",
    "fit",
    "from_unconstrained",
    "loglik_at",
    "make_objective",
    "make_space",
    "nelder_mead",
    "param_universe",
    "post_predictive",
    "profile_ci",
    "to_unconstrained",
]

PROFILE_THRESHOLD = 1.92

# fractions saturate to exactly 1 below this point on the unconstrained scale
_SATURATE_AT_ONE = -30.0

# parameters living in (0, 1]; everything else is positive and log-mapped
UNIT_PARAMS = frozenset({"p", "i0", "e0"})


def param_universe(model: CompartmentalModel) -> tuple[str, ...]:
    """Every fittable parameter name for the model, in canonical order."""
    if model.name == "sir":
        init = ("i0",)
    elif model.name == "seir":
        init = ("e0", "i0")
    else:
        raise ConfigError(f"no parameter layout known for model {model.name!r}")
    return model.zeta_names + init + ("p", "tau")


def from_unconstrained(name: str, mu: float) -> float:
    """Map one coordinate from the optimizer scale to its natural scale."""
    mu = float(mu)
    if name in UNIT_PARAMS:
        if mu < _SATURATE_AT_ONE:
            return 1.0
        if mu > 0:
            e = math.exp(-mu)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(mu))
    return math.exp(mu)


def to_unconstrained(name: str, value: float) -> float:
    """Inverse of :func:`from_unconstrained`."""
    value = float(value)
    if name in UNIT_PARAMS:
        if not 0.0 < value <= 1.0:
            raise DomainError(f"{name}={value} outside (0, 1]")
        if value == 1.0:
            return _SATURATE_AT_ONE - 1.0
        return math.log1p(-value) - math.log(value)
    if value <= 0.0:
        raise DomainError(f"{name}={value} must be positive on the log scale")
    return math.log(value)


@dataclass(frozen=True)
class ParamSpace:
    """Split of the parameter universe into free and fixed coordinates.

    ``decode`` turns an unconstrained vector (one entry per free parameter,
    in ``free`` order) into a full :class:`ThetaFull`; ``encode`` is its
    partial inverse from natural-scale values.
    """

    model: CompartmentalModel
    free: tuple[str, ...]
    fixed: dict[str, float]
    obs_map: tuple[int, ...]

    def encode(self, naturals: Mapping[str, float]) -> np.ndarray:
        try:
            return np.array([to_unconstrained(k, naturals[k]) for k in self.free])
        except KeyError as err:
            raise ConfigError(f"missing start value for parameter {err}") from None

    def natural(self, mu) -> dict[str, float]:
        mu = np.asarray(mu, dtype=float)
        return {k: from_unconstrained(k, mu[i]) for i, k in enumerate(self.free)}

    def decode(self, mu) -> ThetaFull:
        values = dict(self.fixed)
        values.update(self.natural(mu))
        zeta = np.array([values[k] for k in self.model.zeta_names])
        if not np.isfinite(zeta).all():
            raise DomainError("rate parameters are not finite")
        i0 = values["i0"]
        if self.model.name == "sir":
            x0 = np.array([1.0 - i0, i0])
        else:
            e0 = values["e0"]
            s0 = 1.0 - e0 - i0
            if s0 <= 1e-12:
                raise DomainError(
                    f"initial fractions e0={e0}, i0={i0} leave no susceptibles"
                )
            x0 = np.array([s0, e0, i0])
        p = np.full(len(self.obs_map), values["p"])
        return ThetaFull(zeta=zeta, x0=x0, p=p, tau2=values["tau"] ** 2)


def make_space(
    model: CompartmentalModel,
    free,
    fixed: Mapping[str, float],
    obs_map: tuple[int, ...] | None = None,
) -> ParamSpace:
    """Validate a free/fixed split against the model's parameter universe."""
    universe = param_universe(model)
    free = tuple(free)
    fixed = dict(fixed)
    for k in list(free) + list(fixed):
        if k not in universe:
            raise ConfigError(f"unknown parameter {k!r}; expected one of {universe}")
    overlap = set(free) & set(fixed)
    if overlap:
        raise ConfigError(f"parameters both free and fixed: {sorted(overlap)}")
    missing = [k for k in universe if k not in free and k not in fixed]
    if missing:
        raise ConfigError(f"parameters neither free nor fixed: {missing}")
    if len(set(free)) != len(free):
        raise ConfigError("duplicate names in free parameter list")
    for k, v in fixed.items():
        v = float(v)
        if k in UNIT_PARAMS:
            lo_ok = v > 0.0 or (k == "e0" and v == 0.0)
            if not (lo_ok and v <= 1.0):
                raise ConfigError(f"fixed {k}={v} outside its valid range")
        elif k == "tau":
            if v < 0.0:
                raise ConfigError(f"fixed tau={v} must be nonnegative")
        elif v <= 0.0:
            raise ConfigError(f"fixed {k}={v} must be positive")
    e0 = fixed.get("e0", 0.0)
    i0 = fixed.get("i0", 0.0)
    if "e0" in fixed and "i0" in fixed and e0 + i0 >= 1.0:
        raise ConfigError(f"fixed e0 + i0 = {e0 + i0} leaves no susceptibles")
    if obs_map is None:
        obs_map = (model.infected[-1],)
    return ParamSpace(model=model, free=free, fixed=fixed,
                      obs_map=tuple(int(i) for i in obs_map))


# ---------------------------------------------------------------------------
# downhill simplex


@dataclass
class NMResult:
    x: np.ndarray
    value: float
    n_evals: int
    converged: bool


def nelder_mead(
    fn: Callable[[np.ndarray], float],
    x0,
    step=0.25,
    ftol: float = 1e-8,
    xtol: float = 1e-6,
    max_evals: int | None = None,
) -> NMResult:
    """Minimize ``fn`` with the downhill simplex method.

    Standard coefficients (reflect 1, expand 2, contract 0.5, shrink 0.5).
    Stops when the value spread across the simplex drops below ``ftol`` and
    its diameter below ``xtol`` (relative to the best point), or after
    ``max_evals`` evaluations (default ``2000 * dim``). The size condition
    matters: a simplex straddling the minimum symmetrically can have zero
    value spread while still being far from it.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    dim = x0.size
    if dim == 0:
        raise ConfigError("cannot optimize over zero parameters")
    if max_evals is None:
        max_evals = 2000 * dim
    step_vec = np.broadcast_to(np.asarray(step, dtype=float), (dim,))
    pts = [x0.copy()]
    for i in range(dim):
        v = x0.copy()
        v[i] += step_vec[i]
        pts.append(v)
    vals = np.array([fn(p) for p in pts])
    evals = dim + 1
    converged = False
    while True:
        order = np.argsort(vals, kind="stable")
        pts = [pts[i] for i in order]
        vals = vals[order]
        size = max(float(np.max(np.abs(p - pts[0]))) for p in pts[1:])
        scale = 1.0 + float(np.max(np.abs(pts[0])))
        if vals[-1] - vals[0] < ftol and size < xtol * scale:
            converged = True
            break
        if evals >= max_evals:
            break
        centroid = np.mean(pts[:-1], axis=0)
        xr = centroid + (centroid - pts[-1])
        fr = fn(xr)
        evals += 1
        if fr < vals[0]:
            xe = centroid + 2.0 * (centroid - pts[-1])
            fe = fn(xe)
            evals += 1
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
        elif fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
        else:
            if fr < vals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = fn(xc)
                evals += 1
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (pts[-1] - centroid)
                fc = fn(xc)
                evals += 1
                accept = fc < vals[-1]
            if accept:
                pts[-1], vals[-1] = xc, fc
            else:
                for i in range(1, dim + 1):
                    if evals >= max_evals:
                        break
                    pts[i] = pts[0] + 0.5 * (pts[i] - pts[0])
                    vals[i] = fn(pts[i])
                    evals += 1
    best = int(np.argmin(vals))
    return NMResult(x=pts[best].copy(), value=float(vals[best]),
                    n_evals=evals, converged=converged)


# ---------------------------------------------------------------------------
# likelihood objective


def loglik_at(model, times, values, N, theta: ThetaFull,
              settings: ApproxSettings | None = None,
              obs_map: tuple[int, ...] | None = None) -> float:
    """Filter log likelihood of the data at one full parameter point."""
    sys = build_system(model, theta, times, N, settings=settings, obs_map=obs_map)
    return log_likelihood(sys, values).value


def make_objective(model, times, values, N, space: ParamSpace,
                   settings: ApproxSettings | None = None):
    """Log likelihood as a function of the unconstrained free vector.

    Invalid regions (parameters off the simplex, exploding dynamics,
    singular covariances) return the degenerate sentinel instead of raising,
    so the optimizer can step through them.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)

    def objective(mu) -> float:
        try:
            theta = space.decode(mu)
            sys = build_system(model, theta, times, N, settings=settings,
                               obs_map=space.obs_map)
        except (DomainError, NumericsError, FloatingPointError, OverflowError):
            return DEGENERATE_LOGLIK
        return log_likelihood(sys, values).value

    return objective


@dataclass
class FitResult:
    theta: ThetaFull | None
    params: dict[str, float]
    loglik: float
    mu: np.ndarray
    space: ParamSpace
    n_evals: int
    converged: bool
    status: str
    start_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    # unit-interval parameters whose estimate saturated at 1
    at_boundary: tuple[str, ...] = ()


def fit(
    model,
    times,
    values,
    N,
    free,
    fixed: Mapping[str, float],
    start: Mapping[str, float],
    n_starts: int = 8,
    seed=0,
    settings: ApproxSettings | None = None,
    obs_map: tuple[int, ...] | None = None,
    step=0.25,
    ftol: float = 1e-8,
    max_evals: int | None = None,
) -> FitResult:
    """Multi-start maximum likelihood fit.

    The first search starts at ``start``; the rest start from independent
    multiplicative perturbations of it (factors in [0.5, 1.5], unit-interval
    parameters clipped inside (0, 1)). The best run wins.
    """
    space = make_space(model, free, fixed, obs_map=obs_map)
    base = {k: float(start[k]) for k in space.free if k in start}
    if len(base) != len(space.free):
        missing = [k for k in space.free if k not in start]
        raise ConfigError(f"start values missing for {missing}")
    objective = make_objective(model, times, values, N, space, settings)

    def neg(mu):
        return -objective(mu)

    starts = [base]
    if n_starts > 1:
        for child in np.random.SeedSequence(seed).spawn(n_starts - 1):
            rng = np.random.default_rng(child)
            jittered = {}
            for k, v in base.items():
                w = v * rng.uniform(0.5, 1.5)
                if k in UNIT_PARAMS:
                    w = min(max(w, 1e-4), 1.0 - 1e-4)
                jittered[k] = w
            starts.append(jittered)

    best: NMResult | None = None
    start_values = []
    total_evals = 0
    for s in starts:
        res = nelder_mead(neg, space.encode(s), step=step, ftol=ftol,
                          max_evals=max_evals)
        total_evals += res.n_evals
        start_values.append(-res.value)
        if best is None or res.value < best.value:
            best = res
    loglik = -best.value
    if loglik <= DEGENERATE_LOGLIK / 2:
        return FitResult(theta=None, params={}, loglik=loglik, mu=best.x,
                         space=space, n_evals=total_evals,
                         converged=best.converged, status="degenerate",
                         start_values=np.array(start_values))
    params = space.natural(best.x)
    return FitResult(
        theta=space.decode(best.x),
        params=params,
        loglik=loglik,
        mu=best.x,
        space=space,
        n_evals=total_evals,
        converged=best.converged,
        status="ok",
        start_values=np.array(start_values),
        at_boundary=tuple(k for k, v in params.items()
                          if k in UNIT_PARAMS and v == 1.0),
    )


# ---------------------------------------------------------------------------
# profile likelihood intervals


def _interval_from_profile(grid, values, loglik_ref, threshold):
    """Crossing points of a profile curve with ``loglik_ref - threshold``.

    ``grid`` must be increasing. Crossings are linearly interpolated between
    neighbouring grid points; an interval end that never crosses inside the
    grid is clamped to the grid edge and flagged.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    target = loglik_ref - threshold
    above = values >= target
    center = int(np.argmax(values))
    if not above.any():
        return float(grid[center]), float(grid[center]), True, True

    def cross(a, b):
        # values[a] above target, values[b] below; linear interpolation
        va, vb = values[a], values[b]
        return float(grid[a] + (grid[b] - grid[a]) * (va - target) / (va - vb))

    i = center
    while i > 0 and above[i - 1]:
        i -= 1
    if i == 0:
        lo, lo_edge = float(grid[0]), True
    else:
        lo, lo_edge = cross(i, i - 1), False
    j = center
    while j < len(grid) - 1 and above[j + 1]:
        j += 1
    if j == len(grid) - 1:
        hi, hi_edge = float(grid[-1]), True
    else:
        hi, hi_edge = cross(j, j + 1), False
    return lo, hi, lo_edge, hi_edge


def _auto_span(model, times, values, N, space, fit_result, idx, threshold,
               settings, delta: float = 0.05) -> float:
    """Grid half-width from a second difference along one coordinate.

    A quadratic with curvature h crosses the threshold at
    sqrt(2 threshold / h); profiling over the nuisance parameters only
    widens that, so the factor 2.5 leaves room for strong correlation.
    Falls back to a wide default when the curvature estimate is unusable.
    """
    objective = make_objective(model, times, values, N, space, settings)
    mu = np.array(fit_result.mu, dtype=float)
    lo = np.array(mu)
    hi = np.array(mu)
    lo[idx] -= delta
    hi[idx] += delta
    f_lo, f_hi = objective(lo), objective(hi)
    if min(f_lo, f_hi) <= DEGENERATE_LOGLIK / 2:
        return 1.2
    curvature = -(f_lo - 2.0 * fit_result.loglik + f_hi) / delta**2
    if not np.isfinite(curvature) or curvature <= 0.0:
        return 1.2
    return float(np.clip(2.5 * math.sqrt(2.0 * threshold / curvature),
                         0.15, 4.0))


@dataclass
class ProfileResult:
    param: str
    grid: np.ndarray
    values: np.ndarray
    loglik_ref: float
    lo: float
    hi: float
    threshold: float
    at_lower_edge: bool
    at_upper_edge: bool
    n_evals: int


def profile_ci(
    model,
    times,
    values,
    N,
    fit_result: FitResult,
    param: str,
    n_grid: int = 20,
    n_starts: int = 10,
    span: float | None = None,
    seed=0,
    settings: ApproxSettings | None = None,
    threshold: float = PROFILE_THRESHOLD,
    step=0.25,
    ftol: float = 1e-8,
    max_evals: int | None = None,
) -> ProfileResult:
    """Profile likelihood confidence interval for one fitted parameter.

    The parameter is pinned on an unconstrained-scale grid around its
    estimate and the remaining free parameters are re-optimized at every
    grid value, sweeping outward from the center so each point warm-starts
    from its neighbour. The interval is where the profile stays within
    ``threshold`` of its maximum.

    When ``span`` is not given, the grid half-width is scaled from the local
    curvature of the objective, so sharp profiles (lots of data) still get
    several grid points inside the interval. A fixed span cannot do both: a
    half-width that suits a flat profile steps right over a narrow one.
    """
    space = fit_result.space
    if param not in space.free:
        raise ConfigError(f"parameter {param!r} was not free in the fit")
    if fit_result.status != "ok":
        raise ConfigError("cannot profile a degenerate fit")
    idx = space.free.index(param)
    center_mu = float(fit_result.mu[idx])
    if span is None:
        span = _auto_span(model, times, values, N, space, fit_result,
                          idx, threshold, settings)
    grid_mu = np.linspace(center_mu - span, center_mu + span, n_grid)
    free2 = tuple(k for k in space.free if k != param)
    base2 = np.array([fit_result.mu[i] for i, k in enumerate(space.free)
                      if k != param])

    children = np.random.SeedSequence(seed).spawn(max(n_grid, 1))
    prof = np.empty(n_grid)
    total_evals = 0
    sweep = np.argsort(np.abs(grid_mu - center_mu), kind="stable")
    warm: dict[str, np.ndarray] = {}
    for pos in sweep:
        pinned = from_unconstrained(param, grid_mu[pos])
        fixed2 = dict(space.fixed)
        fixed2[param] = pinned
        space2 = make_space(model, free2, fixed2, obs_map=space.obs_map)
        objective2 = make_objective(model, times, values, N, space2, settings)
        if not free2:
            prof[pos] = objective2(np.empty(0))
            continue
        side = "lo" if grid_mu[pos] < center_mu else "hi"
        start_mu = warm.get(side, base2)
        rng = np.random.default_rng(children[pos])
        best: NMResult | None = None
        for trial in range(n_starts):
            mu0 = start_mu if trial == 0 else (
                start_mu + rng.normal(scale=0.4, size=len(free2))
            )
            res = nelder_mead(lambda m: -objective2(m), mu0, step=step,
                              ftol=ftol, max_evals=max_evals)
            total_evals += res.n_evals
            if best is None or res.value < best.value:
                best = res
        prof[pos] = -best.value
        warm[side] = best.x

    grid_nat = np.array([from_unconstrained(param, g) for g in grid_mu])
    order = np.argsort(grid_nat, kind="stable")
    grid_nat = grid_nat[order]
    prof = prof[order]
    loglik_ref = float(max(prof.max(), fit_result.loglik))
    lo, hi, lo_edge, hi_edge = _interval_from_profile(
        grid_nat, prof, loglik_ref, threshold
    )
    return ProfileResult(
        param=param, grid=grid_nat, values=prof, loglik_ref=loglik_ref,
        lo=lo, hi=hi, threshold=threshold,
        at_lower_edge=lo_edge, at_upper_edge=hi_edge, n_evals=total_evals,
    )


# ---------------------------------------------------------------------------
# predictive bands


@dataclass
class PostPredictive:
    times: np.ndarray
    mean: np.ndarray
    q05: np.ndarray
    q50: np.ndarray
    q95: np.ndarray
    n_sims: int
    model_name: str


def post_predictive(
    model,
    theta: ThetaFull,
    times,
    N,
    n_sims: int = 200,
    seed=0,
    obs_map: tuple[int, ...] | None = None,
    nonextinct_only: bool = True,
) -> PostPredictive:
    """Simulated observation bands under the fitted parameters.

    Draws jump-process paths at ``theta`` (conditioned on non-extinction by
    default, matching how data sets for fitting are selected), pushes each
    through the reporting model, and summarizes per-time quantiles of the
    normalized values.
    """
    times = np.asarray(times, dtype=float)
    if obs_map is None:
        obs_map = (model.infected[-1],)
    x0_counts = proportions_to_counts(theta.x0, N)
    s1, s2 = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    t_max = float(times[-1])
    if nonextinct_only:
        trajs = simulate_nonextinct(model, theta.zeta, N, x0_counts,
                                    n_keep=n_sims, seed=int(s1), t_max=t_max)
    else:
        kids = np.random.SeedSequence(int(s1)).spawn(n_sims)
        trajs = [gillespie(model, theta.zeta, N, x0_counts, t_max=t_max, rng=c)
                 for c in kids]
    obs_kids = np.random.SeedSequence(int(s2)).spawn(len(trajs))
    sims = np.stack([
        observe(traj, times, p=theta.p, tau=theta.tau, rng=c,
                obs_map=obs_map).values
        for traj, c in zip(trajs, obs_kids)
    ])
    return PostPredictive(
        times=times,
        mean=sims.mean(axis=0),
        q05=np.quantile(sims, 0.05, axis=0),
        q50=np.quantile(sims, 0.50, axis=0),
        q95=np.quantile(sims, 0.95, axis=0),
        n_sims=len(trajs),
        model_name=model.name,
    )


def band_coverage(pp, values) -> float:
    """Fraction of finite observed rows lying inside the [q05, q95] band."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    inside = (values >= pp.q05) & (values <= pp.q95)
    finite = np.isfinite(values)
    return float(inside[finite].sum() / finite.sum())

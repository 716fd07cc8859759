"""Discrete Gaussian state-space approximation of the scaled jump process.

For a population of size N the normalized epidemic fluctuates around the
deterministic limit path x(t).  Between observation knots the scaled process
is approximated by a linear Gaussian recursion

    X_k = F_k + A_{k-1} X_{k-1} + U_k,       U_k ~ N(0, T_k),

where A is the resolvent of the drift linearized along x(t), F matches the
recursion mean to x(t_k), and T_k integrates the transported local diffusion
(one factor 1/N).  Observations enter through a scaled projection B and a
diagonal noise covariance Q_k built from the reporting parameters.

All interval quantities (transition products and the covariance quadrature)
share one grid of Simpson nodes per interval, so a single vectorized pass
produces the whole system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fastpath
from .errors import BlowUpError, ConfigError
from .model import (
    CompartmentalModel,
    ThetaFull,
    check_simplex,
    diffusion_matrix,
    drift,
    drift_jacobian,
)

__all__ = [
    "ApproxSettings",
    "OdeSolution",
    "DiscreteSystem",
    "solve_ode",
    "resolvent",
    "build_FA",
    "build_T",
    "build_obs",
    "build_system",
    "build_small_delta",
]

# admissible overshoot of the ODE solution outside the simplex
_BLOWUP_TOL = 1e-6


@dataclass(frozen=True)
class ApproxSettings:
    """Numerical knobs of the state-space construction.

    ode_h:
        RK4 step; defaults to min(smallest knot spacing, 0.01).
    quad_nodes:
        Simpson nodes per interval (odd, >= 3); defaults to
        max(5, 2 * ceil(spacing / ode_h) + 1).  The same nodes define the
        substeps of the transition-matrix products.
    t0_scale:
        Diagonal of the initial state covariance.
    q_floor:
        Lower bound for the diagonal observation variances.
    """

    ode_h: float | None = None
    quad_nodes: int | None = None
    t0_scale: float = 1e-6
    q_floor: float = 1e-12


@dataclass
class OdeSolution:
    """RK4 solution on a uniform grid with cubic Hermite dense output."""

    t: np.ndarray
    x: np.ndarray
    f: np.ndarray
    h: float
    zeta: np.ndarray
    x0: np.ndarray
    model_name: str

    def at(self, query: np.ndarray) -> np.ndarray:
        """Interpolated states, shape ``query.shape + (d,)``."""
        q = np.asarray(query, dtype=float)
        t_end = float(self.t[-1])
        tol = 1e-8 * max(1.0, t_end)
        if q.size and (float(q.min()) < -tol or float(q.max()) > t_end + tol):
            raise ValueError(
                f"query times must lie in [0, {t_end:.6g}], "
                f"got [{q.min():.6g}, {q.max():.6g}]"
            )
        pos = q / self.h
        idx = np.clip(np.floor(pos).astype(np.int64), 0, len(self.t) - 2)
        th = np.clip(pos - idx, 0.0, 1.0)[..., None]
        one = 1.0 - th
        h00 = (1.0 + 2.0 * th) * one * one
        h10 = th * one * one
        h01 = th * th * (3.0 - 2.0 * th)
        h11 = th * th * (th - 1.0)
        return (
            h00 * self.x[idx]
            + h10 * self.h * self.f[idx]
            + h01 * self.x[idx + 1]
            + h11 * self.h * self.f[idx + 1]
        )


@dataclass
class DiscreteSystem:
    """The assembled linear Gaussian system on the observation grid.

    ``times`` has n+1 knots starting at 0; ``obs_mask[k]`` says whether an
    observation exists at knot k (the origin may be an unobserved anchor).
    Interval quantities F, A, T are indexed by k = 1..n (array row k-1).
    ``Qdiag`` stores the diagonal observation noise per knot.
    """

    times: np.ndarray
    obs_mask: np.ndarray
    F: np.ndarray
    A: np.ndarray
    T: np.ndarray
    B: np.ndarray
    Qdiag: np.ndarray
    xi0: np.ndarray
    T0: np.ndarray
    N: int
    x_grid: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.times) - 1

    @property
    def d(self) -> int:
        return self.x_grid.shape[1]

    @property
    def q(self) -> int:
        return self.B.shape[0]


def solve_ode(
    model: CompartmentalModel,
    zeta: np.ndarray,
    x0: np.ndarray,
    t_end: float,
    h: float,
) -> OdeSolution:
    """Classical RK4 on a uniform grid covering [0, t_end].

    The step is shrunk so the grid lands on t_end exactly.  The solution
    must stay within 1e-6 of the simplex; anything else raises BlowUpError
    (degenerate parameters are expected to fail here, loudly).
    """
    zeta = np.asarray(zeta, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    check_simplex(x0)
    if not (np.isfinite(t_end) and t_end > 0.0):
        raise ValueError(f"t_end must be positive and finite, got {t_end}")
    if not (np.isfinite(h) and h > 0.0):
        raise ValueError(f"h must be positive and finite, got {h}")
    n_steps = max(1, int(math.ceil(t_end / h - 1e-12)))
    h_eff = t_end / n_steps

    with np.errstate(all="ignore"):
        grid = _fastpath.rk4_grid(model.name, zeta, x0, h_eff, n_steps)
        if grid is None:
            grid = _rk4_generic(model, zeta, x0, h_eff, n_steps)
        _check_solution(grid)
        f = drift(model, zeta, grid, validate=False)
    t = np.arange(n_steps + 1) * h_eff
    return OdeSolution(
        t=t, x=grid, f=f, h=h_eff, zeta=zeta, x0=x0, model_name=model.name
    )


def _rk4_generic(model, zeta, x0, h, n_steps):
    out = np.empty((n_steps + 1, x0.size))
    out[0] = x = x0
    for k in range(n_steps):
        k1 = drift(model, zeta, x, validate=False)
        k2 = drift(model, zeta, x + 0.5 * h * k1, validate=False)
        k3 = drift(model, zeta, x + 0.5 * h * k2, validate=False)
        k4 = drift(model, zeta, x + h * k3, validate=False)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out


def _check_solution(grid: np.ndarray) -> None:
    if not np.all(np.isfinite(grid)):
        raise BlowUpError("ODE solution diverged (non-finite states)")
    low = float(grid.min())
    high = float(grid.sum(axis=1).max())
    if low < -_BLOWUP_TOL or high > 1.0 + _BLOWUP_TOL:
        raise BlowUpError(
            f"ODE solution left the simplex (min {low:.3e}, max mass {high:.6f})"
        )


def resolvent(
    model: CompartmentalModel,
    zeta: np.ndarray,
    ode: OdeSolution,
    s: float,
    t: float,
    n_substeps: int,
) -> np.ndarray:
    """Linearized flow map over [s, t] along the deterministic path.

    Computed as the time-ordered product of first-order factors
    ``I + delta * J(x(a_j))`` over ``n_substeps`` equal substeps, with the
    Jacobian evaluated at the left endpoint of each.
    """
    if t < s:
        raise ValueError("resolvent requires t >= s")
    d = model.d
    if t == s:
        return np.eye(d)
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")
    delta = (t - s) / n_substeps
    a = s + delta * np.arange(n_substeps)
    jac = drift_jacobian(model, zeta, ode.at(a), validate=False)
    out = np.eye(d)
    for j in range(n_substeps):
        out = (np.eye(d) + delta * jac[j]) @ out
    return out


def _resolve_nodes(settings: ApproxSettings | None, ode: OdeSolution, dt: np.ndarray) -> int:
    settings = settings or ApproxSettings()
    if settings.quad_nodes is not None:
        m = int(settings.quad_nodes)
        if m < 3 or m % 2 == 0:
            raise ConfigError(f"quad_nodes must be odd and >= 3, got {m}")
        return m
    return max(5, 2 * int(math.ceil(float(dt.max()) / ode.h - 1e-9)) + 1)


def _transition_pass(model, zeta, ode, times, m, want_integrand):
    """Shared per-interval pass: node states, transport products, diffusion."""
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    if np.any(dt <= 0.0):
        raise ValueError("knot times must be strictly increasing")
    n = len(dt)
    d = model.d
    frac = np.linspace(0.0, 1.0, m)
    nodes = times[:-1, None] + dt[:, None] * frac[None, :]
    xn = ode.at(nodes)
    jac = drift_jacobian(model, zeta, xn, validate=False)
    delta = (dt / (m - 1))[:, None, None]
    eye = np.eye(d)
    phis = np.empty((n, m, d, d))
    phis[:, m - 1] = eye
    phi = np.broadcast_to(eye, (n, d, d)).copy()
    for j in range(m - 2, -1, -1):
        phi = phi @ (eye + delta * jac[:, j])
        phis[:, j] = phi
    sig = diffusion_matrix(model, zeta, xn, validate=False) if want_integrand else None
    return dt, xn, phis, sig


def build_FA(
    model: CompartmentalModel,
    zeta: np.ndarray,
    ode: OdeSolution,
    times: np.ndarray,
    settings: ApproxSettings | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Intercepts F_k and transition matrices A_{k-1} on the knot grid.

    By construction F_k + A_{k-1} x(t_{k-1}) = x(t_k).
    """
    times = np.asarray(times, dtype=float)
    m = _resolve_nodes(settings, ode, np.diff(times))
    _, _, phis, _ = _transition_pass(model, zeta, ode, times, m, want_integrand=False)
    A = phis[:, 0]
    xk = ode.at(times)
    F = xk[1:] - np.einsum("kij,kj->ki", A, xk[:-1])
    return F, A


def build_T(
    model: CompartmentalModel,
    zeta: np.ndarray,
    ode: OdeSolution,
    times: np.ndarray,
    N: int,
    settings: ApproxSettings | None = None,
) -> np.ndarray:
    """Per-interval noise covariances T_k (composite Simpson quadrature).

    Integrates the transported diffusion Phi Sigma Phi^T over each interval
    and scales by 1/N; the result is symmetrized and eigenvalue-floored at 0.
    """
    times = np.asarray(times, dtype=float)
    m = _resolve_nodes(settings, ode, np.diff(times))
    dt, _, phis, sig = _transition_pass(model, zeta, ode, times, m, want_integrand=True)
    integrand = np.einsum("kmab,kmbc,kmdc->kmad", phis, sig, phis)
    coef = np.ones(m)
    coef[1:-1:2] = 4.0
    coef[2:-1:2] = 2.0
    T = np.einsum("m,kmad->kad", coef, integrand) * (dt / (3.0 * (m - 1)))[:, None, None]
    T /= N
    T = 0.5 * (T + np.swapaxes(T, 1, 2))
    w, v = np.linalg.eigh(T)
    w = np.clip(w, 0.0, None)
    return np.einsum("kab,kb,kcb->kac", v, w, v)


def build_obs(
    model: CompartmentalModel,
    ode: OdeSolution,
    times: np.ndarray,
    N: int,
    p: np.ndarray,
    tau2: np.ndarray,
    obs_map: tuple[int, ...] | None = None,
    q_floor: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled observation projection B and diagonal noise variances per knot.

    Row i of B picks the observed coordinate obs_map[i] scaled by p_i; the
    variance combines binomial reporting noise and the additive term,
    (p_i (1 - p_i) + tau2_i) * x_i(t_k) / N, floored at q_floor.
    """
    if obs_map is None:
        obs_map = (model.infected[-1],)
    obs_map = tuple(int(i) for i in obs_map)
    p = np.asarray(p, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    q = len(obs_map)
    base = np.zeros((q, model.d))
    base[np.arange(q), obs_map] = 1.0
    B = p[:, None] * base
    signal = ode.at(np.asarray(times, dtype=float))[:, obs_map]
    Q = np.maximum(q_floor, (p * (1.0 - p) + tau2) * signal / N)
    return B, Q


def build_system(
    model: CompartmentalModel,
    theta: ThetaFull,
    times: np.ndarray,
    N: int,
    settings: ApproxSettings | None = None,
    obs_map: tuple[int, ...] | None = None,
) -> DiscreteSystem:
    """Assemble the full discrete system for observation times ``times``.

    ``times`` need not include 0: if the first observation is later, an
    unobserved anchor knot at t = 0 is prepended (that is where the initial
    state xi0 = x0 lives).
    """
    settings = settings or ApproxSettings()
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1 or not np.all(np.isfinite(times)):
        raise ValueError("times must be a finite 1-d array")
    if np.any(np.diff(times) <= 0.0) or times[0] < 0.0:
        raise ValueError("times must be nonnegative and strictly increasing")
    if times[0] > 1e-12:
        grid = np.concatenate([[0.0], times])
        obs_mask = np.concatenate([[False], np.ones(len(times), dtype=bool)])
    else:
        grid = times.copy()
        obs_mask = np.ones(len(times), dtype=bool)
    if len(grid) < 2:
        raise ValueError("need at least one interval after anchoring at t=0")

    dt = np.diff(grid)
    h = settings.ode_h if settings.ode_h is not None else min(0.01, float(dt.min()))
    ode = solve_ode(model, theta.zeta, theta.x0, t_end=float(grid[-1]), h=h)
    m = _resolve_nodes(settings, ode, dt)
    F, A = build_FA(model, theta.zeta, ode, grid, settings=ApproxSettings(quad_nodes=m))
    T = build_T(model, theta.zeta, ode, grid, N, settings=ApproxSettings(quad_nodes=m))
    B, Qdiag = build_obs(
        model, ode, grid, N, theta.p, theta.tau2,
        obs_map=obs_map, q_floor=settings.q_floor,
    )
    d = model.d
    return DiscreteSystem(
        times=grid,
        obs_mask=obs_mask,
        F=F,
        A=A,
        T=T,
        B=B,
        Qdiag=Qdiag,
        xi0=np.array(theta.x0, dtype=float),
        T0=settings.t0_scale * np.eye(d),
        N=N,
        x_grid=ode.at(grid),
        meta={"ode_h": ode.h, "quad_nodes": m},
    )


def build_small_delta(
    model: CompartmentalModel,
    zeta: np.ndarray,
    ode: OdeSolution,
    times: np.ndarray,
    N: int,
) -> DiscreteSystem:
    """First-order (short interval) variant of the system matrices.

    Every interval quantity is frozen at the left knot:
    F = dt (b - J x), A = I + dt J, T = dt Sigma / N.  No observation part
    is attached (q = 0); use it to study discretization error against the
    full construction.
    """
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    if np.any(dt <= 0.0):
        raise ValueError("knot times must be strictly increasing")
    x = ode.at(times)
    xl = x[:-1]
    b = drift(model, zeta, xl, validate=False)
    jac = drift_jacobian(model, zeta, xl, validate=False)
    sig = diffusion_matrix(model, zeta, xl, validate=False)
    d = model.d
    F = dt[:, None] * (b - np.einsum("kij,kj->ki", jac, xl))
    A = np.eye(d) + dt[:, None, None] * jac
    T = dt[:, None, None] * sig / N
    return DiscreteSystem(
        times=times,
        obs_mask=np.zeros(len(times), dtype=bool),
        F=F,
        A=A,
        T=T,
        B=np.zeros((0, d)),
        Qdiag=np.zeros((len(times), 0)),
        xi0=x[0].copy(),
        T0=np.zeros((d, d)),
        N=N,
        x_grid=x,
        meta={"variant": "small_delta"},
    )

"""Exact Gaussian filtering for the discrete linear system.

Two equivalent recursions are provided. ``filter_forward`` alternates a
predict step with a conditioning update and keeps both the predicted and the
updated moments at every time. ``filter_innovation`` folds the update into
the one-step propagation through a gain matrix, which is the cheaper form
used by ``log_likelihood``. Both produce the same predictive marginals;
tests enforce agreement to 1e-10.

The log likelihood is the sum of the predictive log densities of the
observations from time index 1 on. A time-0 observation, when present,
conditions the initial state but contributes no term of its own, so the
value is comparable across data sets that share the later grid. The additive
``-(q/2) log(2 pi)`` per term is dropped throughout; only differences of the
returned values are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularMatrixError
from .state_space import DiscreteSystem

__all__ = [
    "DEGENERATE_LOGLIK",
    "FilterStep",
    "LogLikResult",
    "align_observations",
    "filter_forward",
    "filter_innovation",
    "gaussian_condition",
    "log_likelihood",
]

DEGENERATE_LOGLIK = -1.0e12

# relative eigenvalue spread beyond which a covariance is treated as singular
_COND_LIMIT = 1.0e14


def _sym_inverse(S: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of a symmetric positive definite matrix.

    Uses the eigendecomposition so that near-singularity is detected from the
    eigenvalue range rather than from a failed factorization.
    """
    S = 0.5 * (S + S.T)
    w, v = np.linalg.eigh(S)
    if not np.isfinite(w).all() or w[0] <= 0.0 or w[-1] / w[0] > _COND_LIMIT:
        raise SingularMatrixError(
            f"covariance is numerically singular (eigenvalue range {w[0]:.3e}"
            f" to {w[-1]:.3e})"
        )
    return (v / w) @ v.T, float(np.log(w).sum())


def gaussian_condition(xi, T, B, Q, y):
    """Moments of the state given one linear observation ``y = B x + noise``.

    ``Q`` is the observation noise covariance, accepted as a diagonal vector
    or a full matrix. Returns the conditional mean and covariance. Raises
    :class:`SingularMatrixError` when the observation covariance
    ``B T B' + Q`` is numerically singular.
    """
    xi = np.asarray(xi, dtype=float)
    T = np.asarray(T, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    y = np.asarray(y, dtype=float)
    Qm = np.diag(Q) if Q.ndim == 1 else Q
    cross = T @ B.T
    S = B @ cross + Qm
    S_inv, _ = _sym_inverse(S)
    gain = cross @ S_inv
    mean = xi + gain @ (y - B @ xi)
    cov = T - gain @ cross.T
    return mean, 0.5 * (cov + cov.T)


@dataclass
class FilterStep:
    """Filtering moments at one grid time.

    ``predicted_*`` are the moments of the state given strictly earlier
    observations; ``obs_*`` the implied one-step predictive moments of the
    observation. ``updated_*`` hold the conditioned state moments and are
    ``None`` on grid rows without an observation (and always on the
    innovation route, which never forms them).
    """

    k: int
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray
    obs_mean: np.ndarray
    obs_cov: np.ndarray
    innovation: np.ndarray | None = None
    updated_mean: np.ndarray | None = None
    updated_cov: np.ndarray | None = None


@dataclass
class LogLikResult:
    """Likelihood value plus the per-step predictive moments.

    ``status`` is ``"ok"`` or ``"degenerate"``; on a degenerate evaluation
    ``value`` is the large negative sentinel ``DEGENERATE_LOGLIK`` so that
    optimizers simply avoid the region. Rows of the recorded arrays are NaN
    where no observation was processed.
    """

    value: float
    status: str
    n_terms: int
    obs_means: np.ndarray
    obs_covs: np.ndarray
    innovations: np.ndarray


def align_observations(sys: DiscreteSystem, values) -> np.ndarray:
    """Expand observed values onto the full grid of the system.

    Accepts either an array aligned with ``sys.times`` (one row per grid
    time, masked rows arbitrary) or one with a row per observed time only;
    the latter is padded with NaN on the unobserved rows. A flat vector is
    treated as a single observed coordinate.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    n_rows = sys.n + 1
    if vals.shape == (n_rows, sys.q):
        return vals
    n_obs = int(sys.obs_mask.sum())
    if vals.shape != (n_obs, sys.q):
        raise ConfigError(
            f"observations have shape {vals.shape}; expected ({n_rows}, {sys.q})"
            f" aligned with the grid or ({n_obs}, {sys.q}) for observed rows"
        )
    full = np.full((n_rows, sys.q), np.nan)
    full[sys.obs_mask] = vals
    return full


def filter_forward(sys: DiscreteSystem, y) -> list[FilterStep]:
    """Predict/update recursion keeping all intermediate moments."""
    y = align_observations(sys, y)
    B = sys.B
    steps: list[FilterStep] = []
    mean = np.array(sys.xi0, dtype=float)
    cov = np.array(sys.T0, dtype=float)
    for k in range(sys.n + 1):
        if k > 0:
            prev = steps[-1]
            if prev.updated_mean is not None:
                m_prev, c_prev = prev.updated_mean, prev.updated_cov
            else:
                m_prev, c_prev = prev.predicted_mean, prev.predicted_cov
            A = sys.A[k - 1]
            mean = sys.F[k - 1] + A @ m_prev
            cov = A @ c_prev @ A.T + sys.T[k - 1]
            cov = 0.5 * (cov + cov.T)
        obs_mean = B @ mean
        obs_cov = B @ cov @ B.T + np.diag(sys.Qdiag[k])
        step = FilterStep(k, mean, cov, obs_mean, 0.5 * (obs_cov + obs_cov.T))
        if sys.obs_mask[k]:
            step.innovation = y[k] - obs_mean
            step.updated_mean, step.updated_cov = gaussian_condition(
                mean, cov, B, sys.Qdiag[k], y[k]
            )
        steps.append(step)
    return steps


def filter_innovation(sys: DiscreteSystem, y) -> list[FilterStep]:
    """Gain-form recursion propagating predicted moments only."""
    y = align_observations(sys, y)
    B = sys.B
    steps: list[FilterStep] = []
    mean = np.array(sys.xi0, dtype=float)
    cov = np.array(sys.T0, dtype=float)
    for k in range(sys.n + 1):
        obs_mean = B @ mean
        obs_cov = B @ cov @ B.T + np.diag(sys.Qdiag[k])
        obs_cov = 0.5 * (obs_cov + obs_cov.T)
        innov = y[k] - obs_mean if sys.obs_mask[k] else None
        steps.append(FilterStep(k, mean, cov, obs_mean, obs_cov, innovation=innov))
        if k == sys.n:
            break
        A, F, T_next = sys.A[k], sys.F[k], sys.T[k]
        if sys.obs_mask[k]:
            S_inv, _ = _sym_inverse(obs_cov)
            gain = A @ cov @ B.T @ S_inv
            mean = F + A @ mean + gain @ innov
            cov = (A - gain @ B) @ cov @ A.T + T_next
        else:
            mean = F + A @ mean
            cov = A @ cov @ A.T + T_next
        cov = 0.5 * (cov + cov.T)
    return steps


def log_likelihood(sys: DiscreteSystem, y) -> LogLikResult:
    """Approximate log likelihood of the observations under the system.

    Singular predictive covariances and non-finite inputs do not raise; they
    yield ``status="degenerate"`` with the sentinel value.
    """
    y = align_observations(sys, y)
    n, q = sys.n, sys.q
    obs_means = np.full((n + 1, q), np.nan)
    obs_covs = np.full((n + 1, q, q), np.nan)
    innovations = np.full((n + 1, q), np.nan)

    def bad() -> LogLikResult:
        return LogLikResult(
            DEGENERATE_LOGLIK, "degenerate", 0, obs_means, obs_covs, innovations
        )

    if not np.isfinite(y[sys.obs_mask]).all():
        return bad()
    if q == 1:
        b = sys.B[0]
        Q = sys.Qdiag[:, 0]
        yv = y[:, 0]
        mean = np.array(sys.xi0, dtype=float)
        cov = np.array(sys.T0, dtype=float)
        total = 0.0
        n_terms = 0
        for k in range(n + 1):
            cov_b = cov @ b
            om = float(b @ cov_b) + Q[k]
            m = float(b @ mean)
            obs_means[k, 0] = m
            obs_covs[k, 0, 0] = om
            eps = 0.0
            if sys.obs_mask[k]:
                if not np.isfinite(om) or om <= 0.0:
                    return bad()
                eps = yv[k] - m
                innovations[k, 0] = eps
                if k > 0:
                    total -= 0.5 * (np.log(om) + eps * eps / om)
                    n_terms += 1
            if k == n:
                break
            A, F, T_next = sys.A[k], sys.F[k], sys.T[k]
            if sys.obs_mask[k]:
                gain = (A @ cov_b) / om
                mean = F + A @ mean + gain * eps
                cov = (A - np.outer(gain, b)) @ cov @ A.T + T_next
            else:
                mean = F + A @ mean
                cov = A @ cov @ A.T + T_next
            cov = 0.5 * (cov + cov.T)
    else:
        B = sys.B
        mean = np.array(sys.xi0, dtype=float)
        cov = np.array(sys.T0, dtype=float)
        total = 0.0
        n_terms = 0
        for k in range(n + 1):
            obs_cov = B @ cov @ B.T + np.diag(sys.Qdiag[k])
            obs_cov = 0.5 * (obs_cov + obs_cov.T)
            obs_mean = B @ mean
            obs_means[k] = obs_mean
            obs_covs[k] = obs_cov
            eps = None
            if sys.obs_mask[k]:
                try:
                    S_inv, logdet = _sym_inverse(obs_cov)
                except SingularMatrixError:
                    return bad()
                eps = y[k] - obs_mean
                innovations[k] = eps
                if k > 0:
                    total -= 0.5 * (logdet + eps @ S_inv @ eps)
                    n_terms += 1
            if k == n:
                break
            A, F, T_next = sys.A[k], sys.F[k], sys.T[k]
            if sys.obs_mask[k]:
                gain = A @ cov @ B.T @ S_inv
                mean = F + A @ mean + gain @ eps
                cov = (A - gain @ B) @ cov @ A.T + T_next
            else:
                mean = F + A @ mean
                cov = A @ cov @ A.T + T_next
            cov = 0.5 * (cov + cov.T)
    if not np.isfinite(total):
        return bad()
    return LogLikResult(float(total), "ok", n_terms, obs_means, obs_covs, innovations)

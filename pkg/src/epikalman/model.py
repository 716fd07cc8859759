"""Density-dependent compartmental jump-process models.

A model is a list of jump directions with state-dependent rates on the
normalized state x = counts / N (proportions of the population).  From the
jump list the local drift b(x), diffusion matrix Sigma(x) and the Jacobian
of the drift are assembled; these are all the ingredients the simulation,
Gaussian approximation and likelihood layers need.

States live on the simplex {x : x_i >= 0, sum(x) <= 1}; the remaining mass
1 - sum(x) is the implicit removed/recovered compartment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError

# roundoff-sized violations of the simplex constraints are tolerated
SIMPLEX_TOL = 1e-9

RateFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
JacFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Jump:
    """One reaction channel: a jump direction and its normalized rate.

    ``rate(x, zeta)`` must broadcast over leading axes of ``x`` with shape
    ``(..., d)`` and return a nonnegative array of shape ``(...)``.
    """

    change: np.ndarray
    rate: RateFn
    label: str


@dataclass(frozen=True, eq=False)
class CompartmentalModel:
    """A compartmental epidemic model given by its jump channels.

    Attributes
    ----------
    name:
        Registry key, e.g. ``"sir"``.
    compartments:
        Names of the tracked coordinates of x, in order.
    zeta_names:
        Names of the transition-rate parameters, in the order expected by
        every ``zeta`` argument in this package.
    jumps:
        The reaction channels.
    jacobian:
        Closed-form Jacobian of the drift, ``jacobian(x, zeta) -> (..., d, d)``.
    susceptible:
        Index of the susceptible coordinate (used for final-size bookkeeping).
    infected:
        Indices of compartments that carry infection; the epidemic is over
        once they are all empty.
    """

    name: str
    compartments: tuple[str, ...]
    zeta_names: tuple[str, ...]
    jumps: tuple[Jump, ...]
    jacobian: JacFn
    susceptible: int = 0
    infected: tuple[int, ...] = field(default=(1,))

    @property
    def d(self) -> int:
        return len(self.compartments)

    @property
    def n_zeta(self) -> int:
        return len(self.zeta_names)


@dataclass(frozen=True, eq=False)
class EpidemicParams:
    """Parameters of the latent epidemic: rates and initial proportions."""

    zeta: np.ndarray
    x0: np.ndarray


@dataclass(frozen=True, eq=False)
class ThetaFull:
    """Epidemic parameters plus the observation parameters.

    ``p`` holds per-coordinate reporting probabilities and ``tau2`` the
    variance scales of the additive observation noise (one entry per
    observed coordinate).
    """

    zeta: np.ndarray
    x0: np.ndarray
    p: np.ndarray
    tau2: np.ndarray

    @property
    def eta(self) -> EpidemicParams:
        return EpidemicParams(zeta=self.zeta, x0=self.x0)

    @property
    def tau(self) -> np.ndarray:
        return np.sqrt(self.tau2)


def check_simplex(x: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    """Raise DomainError unless all states in x lie on the simplex within tol."""
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("state contains non-finite entries")
    low = float(np.min(x))
    high = float(np.max(np.sum(x, axis=-1)))
    if low < -tol or high > 1.0 + tol:
        raise DomainError(
            f"state outside simplex: min coordinate {low:.3e}, max mass {high:.6f}"
        )


def drift(
    model: CompartmentalModel,
    zeta: np.ndarray,
    x: np.ndarray,
    validate: bool = True,
) -> np.ndarray:
    """Drift b(x) = sum over jumps of rate(x) * change, shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    if validate:
        check_simplex(x)
    out = np.zeros(x.shape)
    for jump in model.jumps:
        r = np.asarray(jump.rate(x, zeta))
        out += r[..., None] * jump.change
    return out


def diffusion_matrix(
    model: CompartmentalModel,
    zeta: np.ndarray,
    x: np.ndarray,
    validate: bool = True,
) -> np.ndarray:
    """Diffusion Sigma(x) = sum of rate(x) * change change^T, shape ``(..., d, d)``."""
    x = np.asarray(x, dtype=float)
    if validate:
        check_simplex(x)
    d = model.d
    out = np.zeros(x.shape[:-1] + (d, d))
    for jump in model.jumps:
        r = np.asarray(jump.rate(x, zeta))
        out += r[..., None, None] * np.outer(jump.change, jump.change)
    return out


def drift_jacobian(
    model: CompartmentalModel,
    zeta: np.ndarray,
    x: np.ndarray,
    validate: bool = True,
) -> np.ndarray:
    """Jacobian of the drift with respect to x, shape ``(..., d, d)``."""
    x = np.asarray(x, dtype=float)
    if validate:
        check_simplex(x)
    return model.jacobian(x, zeta)


def diffusion_factor(
    model: CompartmentalModel,
    zeta: np.ndarray,
    x: np.ndarray,
    validate: bool = True,
) -> np.ndarray:
    """Lower-triangular factor sigma with sigma sigma^T = Sigma(x).

    Works for singular diffusion matrices (columns of the factor are zeroed
    when a pivot vanishes), so boundary states such as "no infectives left"
    are fine.  Single states only, ``x`` of shape ``(d,)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("diffusion_factor expects a single state of shape (d,)")
    sig = diffusion_matrix(model, zeta, x, validate=validate)
    return _psd_cholesky(sig)


def _psd_cholesky(mat: np.ndarray) -> np.ndarray:
    """Cholesky factor of a symmetric positive semidefinite matrix."""
    d = mat.shape[0]
    scale = max(float(np.max(np.abs(np.diag(mat)))), 1e-300)
    low = np.zeros_like(mat)
    for j in range(d):
        pivot = mat[j, j] - low[j, :j] @ low[j, :j]
        if pivot < -1e-10 * scale:
            raise DomainError("matrix is not positive semidefinite")
        if pivot <= 1e-13 * scale:
            continue  # zero column: direction not excited
        low[j, j] = np.sqrt(pivot)
        low[j + 1 :, j] = (mat[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


# -- built-in models ----------------------------------------------------------


def _sir_jacobian(x: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    lam, gam = zeta
    s, i = x[..., 0], x[..., 1]
    jac = np.empty(x.shape[:-1] + (2, 2))
    jac[..., 0, 0] = -lam * i
    jac[..., 0, 1] = -lam * s
    jac[..., 1, 0] = lam * i
    jac[..., 1, 1] = lam * s - gam
    return jac


def _seir_jacobian(x: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    lam, eps, gam = zeta
    s, i = x[..., 0], x[..., 2]
    jac = np.zeros(x.shape[:-1] + (3, 3))
    jac[..., 0, 0] = -lam * i
    jac[..., 0, 2] = -lam * s
    jac[..., 1, 0] = lam * i
    jac[..., 1, 1] = -eps
    jac[..., 1, 2] = lam * s
    jac[..., 2, 1] = eps
    jac[..., 2, 2] = -gam
    return jac


_SIR = CompartmentalModel(
    name="sir",
    compartments=("s", "i"),
    zeta_names=("lambda", "gamma"),
    jumps=(
        Jump(
            change=np.array([-1.0, 1.0]),
            rate=lambda x, z: z[0] * x[..., 0] * x[..., 1],
            label="infection",
        ),
        Jump(
            change=np.array([0.0, -1.0]),
            rate=lambda x, z: z[1] * x[..., 1],
            label="recovery",
        ),
    ),
    jacobian=_sir_jacobian,
    susceptible=0,
    infected=(1,),
)

_SEIR = CompartmentalModel(
    name="seir",
    compartments=("s", "e", "i"),
    zeta_names=("lambda", "epsilon", "gamma"),
    jumps=(
        Jump(
            change=np.array([-1.0, 1.0, 0.0]),
            rate=lambda x, z: z[0] * x[..., 0] * x[..., 2],
            label="infection",
        ),
        Jump(
            change=np.array([0.0, -1.0, 1.0]),
            rate=lambda x, z: z[1] * x[..., 1],
            label="progression",
        ),
        Jump(
            change=np.array([0.0, 0.0, -1.0]),
            rate=lambda x, z: z[2] * x[..., 2],
            label="recovery",
        ),
    ),
    jacobian=_seir_jacobian,
    susceptible=0,
    infected=(1, 2),
)

_REGISTRY = {"sir": _SIR, "seir": _SEIR}


def sir_model() -> CompartmentalModel:
    """Susceptible-infective-removed model with rates (lambda*s*i, gamma*i)."""
    return _SIR


def seir_model() -> CompartmentalModel:
    """SEIR model with rates (lambda*s*i, epsilon*e, gamma*i)."""
    return _SEIR


def get_model(name: str) -> CompartmentalModel:
    """Look up a built-in model by registry name ("sir" or "seir")."""
    return _REGISTRY[name]

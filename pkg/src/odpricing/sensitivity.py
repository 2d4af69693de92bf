"""Analytic Jacobians of the clearing system and of the multiplier map.

The clearing residual ``g(pi, phi)`` stacks the net driver inflow at
locations ``1..n-1`` and the unused supply ``m - sum d * qhat``.  Its
derivatives only need durations and the augmented demand slopes
``qhat'(p)`` at the current prices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .economy import AugmentedDemand, Economy, Phantom, induced_prices
from .errors import DomainError, SingularSystem

RIDGE_SCALE = 1e-12


@dataclass(frozen=True)
class ClearingJacobians:
    """``D_pi g`` (n x n) and ``D_phi g`` (n x (n-1)) at one point.

    The block properties follow the usual partition: ``A`` is the leading
    (n-1) x (n-1) block of ``D_pi g``, ``beta`` its last column, ``gamma`` and
    ``lam`` the supply row; ``B`` and ``theta`` split ``D_phi g`` the same way.
    """

    d_pi_g: NDArray
    d_phi_g: NDArray
    singular: bool = False

    @property
    def n(self) -> int:
        return self.d_pi_g.shape[0]

    @property
    def A(self) -> NDArray:
        return self.d_pi_g[:-1, :-1]

    @property
    def beta(self) -> NDArray:
        return self.d_pi_g[:-1, -1]

    @property
    def gamma(self) -> NDArray:
        return self.d_pi_g[-1, :-1]

    @property
    def lam(self) -> float:
        return float(self.d_pi_g[-1, -1])

    @property
    def B(self) -> NDArray:
        return self.d_phi_g[:-1, :]

    @property
    def theta(self) -> NDArray:
        return self.d_phi_g[-1, :]

    def to_dict(self) -> dict:
        return {"d_pi_g": self.d_pi_g.tolist(), "d_phi_g": self.d_phi_g.tolist(),
                "singular": self.singular}


@dataclass(frozen=True)
class MultiplierSensitivity:
    """Jacobian of the clearing multipliers with respect to ``phi_1..phi_{n-1}``."""

    d_Pi: NDArray
    ridge_applied: bool = False

    def to_dict(self) -> dict:
        return {"d_Pi": self.d_Pi.tolist(), "ridge_applied": self.ridge_applied}


def _looks_singular(M: NDArray) -> bool:
    diag = np.abs(np.diag(M))
    if not np.all(np.isfinite(M)) or diag.max(initial=0.0) == 0.0:
        return True
    with np.errstate(all="ignore"):
        return not np.linalg.cond(M) < 1e14


def solve_with_ridge(M: NDArray, rhs: NDArray) -> tuple[NDArray, bool]:
    """Solve ``M x = rhs`` by LU with partial pivoting.

    When the factorization fails or is numerically singular, retry once with
    ``M + mu I``, ``mu = 1e-12 * max|diag M|``.  Returns ``(x, ridge_applied)``.
    """
    if not _looks_singular(M):
        try:
            x = scipy.linalg.solve(M, rhs)
            if np.all(np.isfinite(x)):
                return x, False
        except (np.linalg.LinAlgError, ValueError):
            pass
    mu = RIDGE_SCALE * max(np.abs(np.diag(M)).max(initial=0.0), 1.0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            x = scipy.linalg.solve(M + mu * np.eye(M.shape[0]), rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"matrix is singular even with ridge {mu:g}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem(f"matrix is singular even with ridge {mu:g}")
    return x, True


def clearing_jacobians(economy: Economy, phantom: Phantom, pi: NDArray,
                       phi: NDArray) -> ClearingJacobians:
    """Assemble ``D_pi g`` and ``D_phi g`` at ``(pi, phi)``; ``phi`` has length n."""
    p = induced_prices(economy, pi, phi)
    if np.any(p < -1e-10):
        i, j = np.unravel_index(np.argmin(p), p.shape)
        raise DomainError(f"negative price {p[i, j]:.3g} on OD ({i}, {j})", od=(int(i), int(j)))
    p = np.maximum(p, 0.0)
    n = economy.n
    d = economy.d
    w = AugmentedDemand(economy, phantom).q_prime(p)
    wd = w * d

    d_pi = np.empty((n, n))
    d_pi[:-1] = (wd.T - np.diag(wd.sum(axis=1)))[:-1]
    d_pi[-1] = -(wd * d).sum(axis=1)

    d_phi = np.empty((n, n - 1))
    d_phi[:-1] = (w.T + w - np.diag(w.sum(axis=0) + w.sum(axis=1)))[:-1, :-1]
    d_phi[-1] = (wd.sum(axis=0) - wd.sum(axis=1))[:-1]
    return ClearingJacobians(d_pi, d_phi, _looks_singular(d_pi))


def assemble_jacobians(economy: Economy, phantom: Phantom, outcome) -> ClearingJacobians:
    """Jacobians at a clearing outcome (anything with ``pi`` and ``phi``)."""
    return clearing_jacobians(economy, phantom, outcome.pi, outcome.phi)


def jacobian_Pi(jacobians: ClearingJacobians) -> MultiplierSensitivity:
    """Implicit-function derivative ``-(D_pi g)^{-1} D_phi g``."""
    sol, ridge = solve_with_ridge(jacobians.d_pi_g, jacobians.d_phi_g)
    return MultiplierSensitivity(-sol, ridge)

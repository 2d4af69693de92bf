"""Welfare, dual objective, duality-gap terms and the Lyapunov function."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .economy import Economy, Phantom, induced_prices
from .errors import DomainError
from .market_clearing import adjustments


def primal_welfare(outcome, economy: Economy) -> float:
    """Rider surplus integrals minus driver costs.

    ``outcome`` only needs ``x`` and ``y`` attributes, so hand-built flows
    work as well as solver outputs.
    """
    x = np.asarray(outcome.x, dtype=float)
    y = np.asarray(outcome.y, dtype=float)
    return float(economy.surplus(x).sum() - (economy.c * y).sum())


def omega_of(pi: ArrayLike) -> float:
    return max(float(np.max(pi)), 0.0)


def dual_objective(economy: Economy, phi: ArrayLike, pi: ArrayLike) -> float:
    """``m * max(max pi, 0)`` plus the rider tail integrals at induced prices."""
    pi = np.asarray(pi, dtype=float)
    phi = adjustments(phi, economy.n)
    p = induced_prices(economy, pi, phi)
    if np.any(p < -1e-10):
        i, j = np.unravel_index(np.argmin(p), p.shape)
        raise DomainError(f"negative price {p[i, j]:.3g} on OD ({i}, {j})", od=(int(i), int(j)))
    return float(economy.m * omega_of(pi) + economy.tail(np.maximum(p, 0.0)).sum())


def _rider_gap(economy: Economy, p: NDArray, x: NDArray) -> float:
    q = economy.q(p)
    return float((economy.surplus(q) - economy.surplus(x) - p * (q - x)).sum())


def duality_gap_decomposition(outcome, economy: Economy) -> NDArray:
    """The four best-response violations whose sum is ``dual - primal``.

    Rider shortfall, unpaid relocation, on-trip surplus below ``omega``, and
    idle supply.  The identity with ``dual - primal`` needs balanced flows.
    """
    p = np.maximum(outcome.p, 0.0)
    pi = np.asarray(outcome.pi, dtype=float)
    omega = omega_of(pi)
    z = (economy.d * outcome.y).sum(axis=1)
    return np.array([
        _rider_gap(economy, p, outcome.x),
        float((p * (outcome.y - outcome.x)).sum()),
        float((z * (omega - pi)).sum()),
        omega * (economy.m - z.sum()),
    ])


def suboptimality_bounds(outcome, economy: Economy, phantom: Phantom) -> dict[str, float]:
    """Observable upper bounds on welfare lost by a clearing outcome."""
    pi = np.asarray(outcome.pi, dtype=float)
    omega = omega_of(pi)
    z = (economy.d * outcome.y).sum(axis=1)
    detailed = float((z * (omega - pi)).sum() + (outcome.p * (outcome.y - outcome.x)).sum())
    coarse = float(economy.m * (omega - pi.min()) + phantom.slack().sum())
    return {"bound_detailed": detailed, "bound_coarse": coarse}


@dataclass(frozen=True)
class WelfareReport:
    primal: float
    dual: float
    omega: float
    gap_terms: tuple[float, float, float, float]
    bound_detailed: float
    bound_coarse: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["gap_terms"] = list(self.gap_terms)
        return out


def welfare_report(outcome, economy: Economy, phantom: Phantom) -> WelfareReport:
    bounds = suboptimality_bounds(outcome, economy, phantom)
    return WelfareReport(
        primal=primal_welfare(outcome, economy),
        dual=dual_objective(economy, outcome.phi, outcome.pi),
        omega=omega_of(outcome.pi),
        gap_terms=tuple(float(t) for t in duality_gap_decomposition(outcome, economy)),
        **bounds,
    )


# Lyapunov function on the multipliers

def lyapunov_f(pi: ArrayLike) -> float:
    """Sum of squared deviations of ``pi`` from its mean."""
    pi = np.asarray(pi, dtype=float)
    dev = pi - pi.mean()
    return float(dev @ dev)


def grad_f(pi: ArrayLike, d_Pi) -> NDArray:
    """Gradient of ``f(Pi(phi))`` with respect to ``phi_1..phi_{n-1}``."""
    pi = np.asarray(pi, dtype=float)
    jac = np.asarray(getattr(d_Pi, "d_Pi", d_Pi), dtype=float)
    return 2.0 * jac.T @ (pi - pi.mean())


@dataclass(frozen=True)
class LyapunovValue:
    f: float
    grad_f: NDArray

    @classmethod
    def at(cls, pi: ArrayLike, d_Pi) -> LyapunovValue:
        return cls(lyapunov_f(pi), grad_f(pi, d_Pi))

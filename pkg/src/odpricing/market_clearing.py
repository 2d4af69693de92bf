"""Origin-based market clearing for given OD adjustments.

Given ``phi`` (with ``phi[-1] == 0``) the clearing multipliers ``pi`` are the
unique root of the n-dimensional residual :func:`residual_g`.  We find it by
damped Newton with the analytic Jacobian, staying inside the domain where
every induced price is nonnegative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from .economy import AugmentedDemand, Economy, Phantom, induced_prices
from .errors import DomainError, DomainStuck, NoConvergence
from .sensitivity import clearing_jacobians, solve_with_ridge

log = logging.getLogger(__name__)

DOMAIN_MARGIN = 1e-12
STEP_SCALE = 10.0
FLAT_TAIL = 70.0


def adjustments(phi: ArrayLike | None, n: int) -> NDArray:
    """Normalize OD adjustments to a length-n vector with the last entry 0.

    Accepts ``None`` (all zeros), a length ``n - 1`` vector, or a length ``n``
    vector whose last entry is exactly zero.
    """
    if phi is None:
        return np.zeros(n)
    phi = np.asarray(phi, dtype=float).ravel()
    if phi.shape == (n - 1,):
        phi = np.append(phi, 0.0)
    elif phi.shape != (n,):
        raise ValueError(f"phi must have length {n - 1} or {n}, got {phi.shape[0]}")
    elif phi[-1] != 0.0:
        raise ValueError("the last OD adjustment is pinned to 0")
    if not np.all(np.isfinite(phi)):
        raise ValueError("OD adjustments must be finite")
    return phi


def pi_lower_bound(economy: Economy, phi: NDArray) -> NDArray:
    """Smallest ``pi_i`` keeping every trip out of ``i`` at a nonnegative price."""
    return np.max((phi[None, :] - phi[:, None] - economy.c) / economy.d, axis=1)


def pi_upper_bound(economy: Economy, phantom: Phantom, phi: NDArray) -> NDArray:
    """A ``pi_i`` past which demand out of ``i`` is numerically zero.

    Every trip from ``i`` is then priced beyond the phantom support and at
    least ``FLAT_TAIL`` rider-value scales, so ``g`` no longer moves with
    ``pi_i``.
    """
    dead = np.maximum(phantom.r_max * (phantom.K > 0), FLAT_TAIL * economy.theta * (economy.Q > 0))
    return np.max((dead + phi[None, :] - phi[:, None] - economy.c) / economy.d, axis=1)


@dataclass(frozen=True)
class Tolerances:
    supply: float = 1e-9
    flow: float = 1e-8
    price: float = 1e-10


@dataclass(frozen=True)
class MarketOutcome:
    """A market-clearing outcome and solver metadata.

    ``z[i]`` is the on-trip supply of drivers on trips originating at ``i``.
    """

    phi: NDArray
    pi: NDArray
    p: NDArray
    x: NDArray
    y: NDArray
    z: NDArray
    residual_inf: float
    iterations: int
    ridge_applied: bool = False

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "phi": self.phi.tolist(),
            "pi": self.pi.tolist(),
            "p": self.p.ravel().tolist(),
            "x": self.x.ravel().tolist(),
            "y": self.y.ravel().tolist(),
            "z": self.z.tolist(),
            "residual_inf": self.residual_inf,
            "iterations": self.iterations,
            "ridge_applied": self.ridge_applied,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> MarketOutcome:
        n = int(doc["n"])
        mat = lambda key: np.asarray(doc[key], dtype=float).reshape(n, n)  # noqa: E731
        return cls(np.asarray(doc["phi"], float), np.asarray(doc["pi"], float), mat("p"),
                   mat("x"), mat("y"), np.asarray(doc["z"], float),
                   float(doc["residual_inf"]), int(doc["iterations"]),
                   bool(doc.get("ridge_applied", False)))


def _checked_prices(economy: Economy, pi: NDArray, phi: NDArray, tol: float = 1e-10) -> NDArray:
    p = induced_prices(economy, pi, phi)
    if np.any(p < -tol):
        i, j = np.unravel_index(np.argmin(p), p.shape)
        raise DomainError(f"negative price {p[i, j]:.3g} on OD ({i}, {j})", od=(int(i), int(j)))
    return np.maximum(p, 0.0)


def _residual(economy: Economy, phantom: Phantom, qhat: NDArray) -> NDArray:
    g = np.empty(economy.n)
    g[:-1] = (qhat.sum(axis=0) - qhat.sum(axis=1))[:-1]
    g[-1] = economy.m - (economy.d * qhat).sum()
    return g


def residual_g(economy: Economy, phantom: Phantom, pi: ArrayLike, phi: ArrayLike) -> NDArray:
    """Clearing residual: net inflow at locations ``1..n-1``, then unused supply."""
    phi = adjustments(phi, economy.n)
    p = _checked_prices(economy, np.asarray(pi, float), phi)
    return _residual(economy, phantom, AugmentedDemand(economy, phantom).q(p))


def _total_supply(economy: Economy, phantom: Phantom, pi: NDArray, phi: NDArray) -> float:
    p = np.maximum(induced_prices(economy, pi, phi), 0.0)
    return float((economy.d * AugmentedDemand(economy, phantom).q(p)).sum())


def _cold_start(economy: Economy, phantom: Phantom, phi: NDArray, low: NDArray) -> NDArray:
    base = low + DOMAIN_MARGIN
    excess = lambda s: _total_supply(economy, phantom, base + s, phi) - economy.m  # noqa: E731
    if excess(0.0) <= 0:
        return base
    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            return base
    return base + brentq(excess, 0.0, hi, xtol=1e-12)


def _build_outcome(economy, phantom, pi, phi, iterations, ridge) -> MarketOutcome:
    p = _checked_prices(economy, pi, phi)
    x = economy.q(p)
    y = x + phantom.q(p)
    g = _residual(economy, phantom, y)
    return MarketOutcome(phi.copy(), pi.copy(), p, x, y, (economy.d * y).sum(axis=1),
                         float(np.max(np.abs(g))), iterations, ridge)


def clear_market(economy: Economy, phantom: Phantom, phi: ArrayLike | None = None,
                 warm_start: ArrayLike | None = None, *, tol_supply: float = 1e-9,
                 max_iter: int = 200, polish_steps: int = 2) -> MarketOutcome:
    """Solve for the unique market-clearing multipliers at ``phi``.

    Damped Newton on ``g(pi) = 0`` with merit ``0.5 * |g|^2``.  Each step is
    first shortened to keep all prices nonnegative and within a trust
    radius, then halved until the merit decreases.  Entries are clipped at
    :func:`pi_upper_bound`, beyond which the residual is flat.  Once ``|g|_inf <= tol_supply * max(1, m)`` a few extra
    Newton steps are taken while they keep improving the residual.

    A failed warm start is retried once from the cold start, which sits at
    low prices where phantom demand keeps the Jacobian well conditioned.

    Raises:
        SingularSystem: the Jacobian could not be factorized even with a ridge.
        DomainStuck: no damped step stays in the nonnegative-price domain.
        NoConvergence: ``max_iter`` reached; the best iterate is attached.
    """
    phi = adjustments(phi, economy.n)
    if warm_start is not None:
        try:
            return _newton(economy, phantom, phi, warm_start, tol_supply, max_iter, polish_steps)
        except NoConvergence as exc:
            log.debug("warm start failed (%s); retrying from the cold start", exc)
    return _newton(economy, phantom, phi, None, tol_supply, max_iter, polish_steps)


def _newton(economy, phantom, phi, warm_start, tol_supply, max_iter, polish_steps) -> MarketOutcome:
    low = pi_lower_bound(economy, phi)
    high = np.maximum(pi_upper_bound(economy, phantom, phi), low + 1.0)
    if warm_start is None:
        pi = _cold_start(economy, phantom, phi, low)
    else:
        pi = np.clip(np.asarray(warm_start, dtype=float), low + DOMAIN_MARGIN, high)
    trust = STEP_SCALE * (1.0 + np.max(np.abs(pi)) + np.max(high - low))

    aug = AugmentedDemand(economy, phantom)
    tol = tol_supply * max(1.0, economy.m)

    def evaluate(v):
        p = np.maximum(induced_prices(economy, v, phi), 0.0)
        return _residual(economy, phantom, aug.q(p))

    g = evaluate(pi)
    merit = 0.5 * g @ g
    ridge_any = False
    converged_at = None
    for it in range(1, max_iter + 1):
        if converged_at is None and np.max(np.abs(g)) <= tol:
            converged_at = it - 1
        if converged_at is not None and it - 1 - converged_at >= polish_steps:
            break
        jac = clearing_jacobians(economy, phantom, pi, phi)
        step, ridge = solve_with_ridge(jac.d_pi_g, -g)
        ridge_any |= ridge

        shrinking = step < 0
        room = pi - low - DOMAIN_MARGIN
        t_max = np.min(np.maximum(room[shrinking], 0.0) / -step[shrinking]) if shrinking.any() else np.inf
        # near-flat directions can produce huge steps
        t = min(1.0, t_max, trust / max(np.max(np.abs(step)), 1e-300))
        if t <= 0.0:
            if converged_at is not None:
                break
            raise DomainStuck("Newton step points out of the nonnegative-price domain",
                              best=pi, residual=float(np.max(np.abs(g))))
        for _ in range(60):
            cand = np.minimum(pi + t * step, high)
            g_new = evaluate(cand)
            merit_new = 0.5 * g_new @ g_new
            if merit_new < merit:
                break
            t *= 0.5
        else:
            if converged_at is not None:
                break
            raise NoConvergence("line search failed to decrease the clearing residual",
                                best=pi, residual=float(np.max(np.abs(g))))
        pi, g, merit = cand, g_new, merit_new
    else:
        if np.max(np.abs(g)) > tol:
            raise NoConvergence(f"no clearing after {max_iter} Newton steps", best=pi,
                                residual=float(np.max(np.abs(g))))
    return _build_outcome(economy, phantom, pi, phi, it - 1, ridge_any)


# ---------------------------------------------------------------------------
# verification


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass
class CheckReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "worst": c.worst, "detail": c.detail}
                for c in self.checks}


def verify_outcome(outcome: MarketOutcome, economy: Economy, phantom: Phantom,
                   tolerances: Tolerances = Tolerances()) -> CheckReport:
    """Check feasibility (F1-F4) and clearing conditions (MC1, MC2)."""
    tol_flow = tolerances.flow * (1.0 + float(outcome.y.sum()))
    m = economy.m
    p, x, y = outcome.p, outcome.x, outcome.y
    report = CheckReport()

    def add(name, worst, limit, detail=""):
        report.checks.append(Check(name, bool(worst <= limit), float(worst), detail))

    expected_p = induced_prices(economy, outcome.pi, outcome.phi)
    add("price_form", np.max(np.abs(p - expected_p)), tolerances.price * (1 + np.abs(p).max()))
    add("F1", max(0.0, -p.min()), tolerances.price)
    add("F2", max(0.0, (x - y).max()), tol_flow)
    supply = float((economy.d * y).sum())
    add("F3", max(0.0, supply - m), tolerances.supply * max(1.0, m))
    imbalance = y.sum(axis=0) - y.sum(axis=1)
    bad = np.flatnonzero(np.abs(imbalance) > tol_flow)
    add("F4", np.max(np.abs(imbalance)), tol_flow,
        f"unbalanced locations {bad.tolist()}" if bad.size else "")
    p_safe = np.maximum(p, 0.0)
    mc1 = max(np.max(np.abs(x - economy.q(p_safe))),
              np.max(np.abs(y - x - phantom.q(p_safe))))
    add("MC1", mc1, tol_flow)
    add("MC2", abs(supply - m), tolerances.supply * max(1.0, m))
    return report

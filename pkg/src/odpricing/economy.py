"""Spatial economy model: demand curves, phantom relocation curves, economies.

Scalar curve objects (:class:`DemandCurve`, :class:`PhantomCurve`) are used
for single-OD evaluation and serialization.  The solvers never loop over OD
pairs; they use the vectorized matrix forms held by :class:`Economy` and
:class:`Phantom`, where a zero curve is encoded as ``Q == 0`` (resp.
``K == 0``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

EXPONENTIAL = "exponential"
BUMP = "bump"
ZERO = "zero"


def _frozen(a: ArrayLike, dtype=float) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _check_price(r) -> None:
    if np.any(np.asarray(r) < 0):
        raise ValueError(f"demand curves are only defined for nonnegative prices, got {r}")


# ---------------------------------------------------------------------------
# scalar curves


@dataclass(frozen=True)
class DemandCurve:
    """Rider demand for one OD pair: ``q(r) = Q exp(-r / theta)`` or zero.

    ``Q`` is riders per unit time at zero price and ``theta`` the mean rider
    value in dollars.
    """

    kind: str = ZERO
    Q: float = 0.0
    theta: float = 1.0

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL, ZERO):
            raise ValueError(f"unknown demand kind {self.kind!r}")
        if self.kind == EXPONENTIAL and (self.Q < 0 or self.theta <= 0):
            raise ValueError("exponential demand needs Q >= 0 and theta > 0")

    @classmethod
    def exponential(cls, Q: float, theta: float) -> DemandCurve:
        return cls(EXPONENTIAL, float(Q), float(theta))

    @classmethod
    def zero(cls) -> DemandCurve:
        return cls(ZERO, 0.0, 1.0)

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO or self.Q == 0.0

    @property
    def q0(self) -> float:
        return 0.0 if self.is_zero else self.Q


@dataclass(frozen=True)
class PhantomCurve:
    """Relocation curve ``K * max(0, 1 - r / r_max) ** power`` or zero."""

    kind: str = ZERO
    K: float = 0.0
    r_max: float = 1.0
    power: int = 4

    def __post_init__(self):
        if self.kind not in (BUMP, ZERO):
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if self.kind == BUMP:
            if self.K < 0 or self.r_max <= 0 or int(self.power) != self.power or self.power < 1:
                raise ValueError("bump phantom needs K >= 0, r_max > 0 and integer power >= 1")

    @classmethod
    def bump(cls, K: float, r_max: float, power: int = 4) -> PhantomCurve:
        return cls(BUMP, float(K), float(r_max), int(power))

    @classmethod
    def zero(cls) -> PhantomCurve:
        return cls(ZERO, 0.0, 1.0, 4)

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO or self.K == 0.0


def demand_eval(curve: DemandCurve, r: float) -> tuple[float, float]:
    """Return ``(q(r), q'(r))`` for a single curve."""
    _check_price(r)
    if curve.is_zero:
        return 0.0, 0.0
    q = curve.Q * math.exp(-r / curve.theta)
    return q, -q / curve.theta


def demand_inverse(curve: DemandCurve, s: float) -> float:
    """Value of the ``s``-th rider, with ``+inf`` for ``s <= 0`` and
    ``-inf`` for ``s > q(0)``."""
    if s <= 0:
        return math.inf
    if s > curve.q0:
        return -math.inf
    return curve.theta * math.log(curve.Q / s)


def tail_integral(curve: DemandCurve, p: float) -> float:
    """``int_p^inf q(r) dr``."""
    _check_price(p)
    if curve.is_zero:
        return 0.0
    return curve.Q * curve.theta * math.exp(-p / curve.theta)


def surplus_integral(curve: DemandCurve, x: float) -> float:
    """Total value of the ``x`` highest-value riders, ``int_0^x v(s) ds``."""
    if x < 0:
        raise ValueError("rider flow must be nonnegative")
    if x == 0:
        return 0.0
    if x > curve.q0 * (1 + 1e-12):
        raise ValueError(f"rider flow {x} exceeds q(0) = {curve.q0}")
    x = min(x, curve.Q)
    return curve.theta * x * (math.log(curve.Q / x) + 1.0)


def phantom_eval(curve: PhantomCurve, r: float) -> tuple[float, float]:
    _check_price(r)
    if curve.is_zero:
        return 0.0, 0.0
    u = max(0.0, 1.0 - r / curve.r_max)
    k = curve.power
    return curve.K * u**k, -curve.K * k / curve.r_max * u ** (k - 1) if u > 0 else 0.0


def phantom_slack(curve: PhantomCurve) -> float:
    """``sup_r r * phantom(r)``; attained at ``r_max / (power + 1)``."""
    if curve.is_zero:
        return 0.0
    k = curve.power
    return curve.K * curve.r_max * k**k / (k + 1) ** (k + 1)


# ---------------------------------------------------------------------------
# matrix forms


@dataclass(frozen=True)
class Economy:
    """The tuple ``(m, d, c, q)`` for ``n`` locations with exponential demand.

    ``Q[i, j] == 0`` marks a zero demand curve.  Arrays are copied and made
    read-only on construction.
    """

    m: float
    d: NDArray
    c: NDArray
    Q: NDArray
    theta: NDArray
    time_unit: str = "hour"

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("d must be a square matrix")
        n = d.shape[0]
        for name in ("d", "c", "Q", "theta"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (n, n):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(n, n)}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "m", float(self.m))
        theta = np.where(self.Q > 0, self.theta, 1.0)
        object.__setattr__(self, "theta", _frozen(theta))

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def curve(self, i: int, j: int) -> DemandCurve:
        if self.Q[i, j] == 0:
            return DemandCurve.zero()
        return DemandCurve.exponential(self.Q[i, j], self.theta[i, j])

    def replace(self, **changes) -> Economy:
        fields = dict(m=self.m, d=self.d, c=self.c, Q=self.Q, theta=self.theta,
                      time_unit=self.time_unit)
        fields.update(changes)
        return Economy(**fields)

    # vectorized evaluations; ``p`` is an n x n price matrix
    def q(self, p: NDArray) -> NDArray:
        return self.Q * np.exp(-p / self.theta)

    def q_prime(self, p: NDArray) -> NDArray:
        return -self.q(p) / self.theta

    def tail(self, p: NDArray) -> NDArray:
        return self.Q * self.theta * np.exp(-p / self.theta)

    def surplus(self, x: NDArray) -> NDArray:
        """Elementwise ``int_0^x v(s) ds``; raises when ``x > q(0)``."""
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-12):
            raise ValueError("rider flows must be nonnegative")
        over = x > self.Q * (1 + 1e-9) + 1e-12
        if np.any(over):
            i, j = np.argwhere(over)[0]
            raise ValueError(f"rider flow x[{i},{j}] = {x[i, j]} exceeds q(0) = {self.Q[i, j]}")
        x = np.clip(x, 0.0, self.Q)
        pos = x > 0
        out = np.zeros_like(x)
        out[pos] = self.theta[pos] * x[pos] * (np.log(self.Q[pos] / x[pos]) + 1.0)
        return out

    def value(self, x: NDArray) -> NDArray:
        """Marginal rider value ``v(x)`` elementwise (``+inf`` at ``x <= 0``)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.theta * np.log(self.Q / x)
        v = np.where(x <= 0, np.inf, v)
        return np.where(x > self.Q, -np.inf, v)


@dataclass(frozen=True)
class Phantom:
    """Matrix of bump relocation curves; ``K[i, j] == 0`` marks a zero curve."""

    K: NDArray
    r_max: NDArray
    power: NDArray

    def __post_init__(self):
        K = _frozen(self.K)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "r_max", _frozen(np.broadcast_to(self.r_max, K.shape)))
        power = np.broadcast_to(np.asarray(self.power), K.shape)
        if np.any(power < 1) or np.any(power != np.round(power)):
            raise ValueError("phantom power must be an integer >= 1")
        object.__setattr__(self, "power", _frozen(power, dtype=int))

    @classmethod
    def uniform(cls, n: int, K: float, r_max: float, power: int = 4) -> Phantom:
        """The same bump curve on every OD pair."""
        return cls(np.full((n, n), float(K)), np.full((n, n), float(r_max)),
                   np.full((n, n), int(power)))

    @classmethod
    def none(cls, n: int) -> Phantom:
        return cls(np.zeros((n, n)), np.ones((n, n)), np.full((n, n), 4))

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def curve(self, i: int, j: int) -> PhantomCurve:
        if self.K[i, j] == 0:
            return PhantomCurve.zero()
        return PhantomCurve.bump(self.K[i, j], self.r_max[i, j], int(self.power[i, j]))

    def q(self, p: NDArray) -> NDArray:
        u = np.maximum(0.0, 1.0 - p / self.r_max)
        return self.K * u**self.power

    def q_prime(self, p: NDArray) -> NDArray:
        u = np.maximum(0.0, 1.0 - p / self.r_max)
        return np.where(u > 0, -self.K * self.power / self.r_max * u ** (self.power - 1), 0.0)

    def slack(self) -> NDArray:
        k = self.power.astype(float)
        return self.K * self.r_max * k**k / (k + 1) ** (k + 1)


@dataclass(frozen=True)
class AugmentedDemand:
    """Rider demand plus phantom relocation demand on every OD pair."""

    economy: Economy
    phantom: Phantom

    def q(self, p: NDArray) -> NDArray:
        return self.economy.q(p) + self.phantom.q(p)

    def q_prime(self, p: NDArray) -> NDArray:
        return self.economy.q_prime(p) + self.phantom.q_prime(p)


def induced_prices(economy: Economy, pi: NDArray, phi: NDArray) -> NDArray:
    """``p_ij = c_ij + d_ij * pi_i + phi_i - phi_j`` for full-length ``phi``."""
    pi = np.asarray(pi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return economy.c + economy.d * pi[:, None] + phi[:, None] - phi[None, :]


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_economy(economy: Economy, phantom: Phantom | None = None) -> ValidationReport:
    """Report invariant violations; never raises."""
    report = ValidationReport()
    if economy.n < 2:
        report.violations.append("need at least two locations")
    if not economy.m > 0:
        report.violations.append("nonpositive driver supply")
    if np.any(~np.isfinite(economy.d)) or np.any(economy.d <= 0):
        bad = np.argwhere(~(economy.d > 0))
        report.violations.append(f"nonpositive duration at {[tuple(map(int, b)) for b in bad[:5]]}")
    if np.any(economy.c < 0):
        report.violations.append("negative trip cost")
    if np.any(economy.Q < 0):
        report.violations.append("negative demand level")
    if not np.any(economy.Q > 0):
        report.violations.append("no OD pair has positive demand")
    if phantom is not None:
        if phantom.K.shape != economy.d.shape:
            report.violations.append("phantom shape does not match economy")
        else:
            short = economy.d * phantom.K <= economy.m
            if np.any(short):
                report.warnings.append(
                    f"condition (II) unmet: d * phantom(0) <= m on {int(short.sum())} OD pairs")
    return report


# ---------------------------------------------------------------------------
# JSON


def economy_to_dict(economy: Economy, phantom: Phantom | None = None) -> dict[str, Any]:
    n = economy.n
    demand = []
    for i in range(n):
        for j in range(n):
            cv = economy.curve(i, j)
            demand.append({"kind": ZERO} if cv.is_zero
                          else {"kind": EXPONENTIAL, "Q": cv.Q, "theta": cv.theta})
    doc = {
        "n": n,
        "m": economy.m,
        "time_unit": economy.time_unit,
        "d": economy.d.ravel().tolist(),
        "c": economy.c.ravel().tolist(),
        "demand": demand,
    }
    if phantom is not None:
        doc["phantom"] = []
        for i in range(n):
            for j in range(n):
                pc = phantom.curve(i, j)
                doc["phantom"].append({"kind": ZERO} if pc.is_zero else
                                      {"kind": BUMP, "K": pc.K, "r_max": pc.r_max,
                                       "power": pc.power})
    return doc


def economy_from_dict(doc: dict[str, Any]) -> tuple[Economy, Phantom | None]:
    n = int(doc["n"])
    d = np.asarray(doc["d"], dtype=float).reshape(n, n)
    c = np.asarray(doc["c"], dtype=float).reshape(n, n)
    if len(doc["demand"]) != n * n:
        raise ValueError("demand must list n*n curves in row-major order")
    Q = np.zeros(n * n)
    theta = np.ones(n * n)
    for k, item in enumerate(doc["demand"]):
        if item["kind"] == EXPONENTIAL:
            Q[k], theta[k] = item["Q"], item["theta"]
        elif item["kind"] != ZERO:
            raise ValueError(f"unknown demand kind {item['kind']!r}")
    economy = Economy(doc["m"], d, c, Q.reshape(n, n), theta.reshape(n, n),
                      doc.get("time_unit", "hour"))
    phantom = None
    if doc.get("phantom") is not None:
        K = np.zeros(n * n)
        R = np.ones(n * n)
        P = np.full(n * n, 4)
        for k, item in enumerate(doc["phantom"]):
            if item["kind"] == BUMP:
                K[k], R[k], P[k] = item["K"], item["r_max"], item.get("power", 4)
            elif item["kind"] != ZERO:
                raise ValueError(f"unknown phantom kind {item['kind']!r}")
        phantom = Phantom(K.reshape(n, n), R.reshape(n, n), P.reshape(n, n))
    return economy, phantom


def save_economy(path: str | Path, economy: Economy, phantom: Phantom | None = None) -> None:
    Path(path).write_text(json.dumps(economy_to_dict(economy, phantom), indent=1))


def load_economy(path: str | Path) -> tuple[Economy, Phantom | None]:
    return economy_from_dict(json.loads(Path(path).read_text()))

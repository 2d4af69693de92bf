"""Reference solutions: the welfare-optimal dual, cycle decompositions, CE checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .economy import Economy
from .errors import Infeasible, NoConvergence, UnbalancedFlow
from .market_clearing import Check, CheckReport
from .sensitivity import solve_with_ridge
from .welfare import primal_welfare

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DualSolution:
    """Optimal ``(omega, phi)`` with the induced prices and the recovered flows.

    ``x`` is the rider flow ``q(prices)``; ``y`` adds the relocation flow read
    off the barrier multipliers, so it is balanced up to the centering error.
    """

    omega_star: float
    phi_star: NDArray
    prices: NDArray
    welfare_star: float
    gap: float
    x: NDArray
    y: NDArray
    iterations: int = 0

    @property
    def p(self) -> NDArray:
        return self.prices

    def to_dict(self) -> dict:
        return {
            "omega_star": self.omega_star,
            "phi_star": self.phi_star.tolist(),
            "prices": self.prices.ravel().tolist(),
            "welfare_star": self.welfare_star,
            "gap": self.gap,
            "x": self.x.ravel().tolist(),
            "y": self.y.ravel().tolist(),
            "iterations": self.iterations,
        }


def dual_value(economy: Economy, omega: float, phi: NDArray) -> float:
    p = economy.c + economy.d * omega + phi[:, None] - phi[None, :]
    return float(economy.m * omega + economy.tail(np.maximum(p, 0.0)).sum())


def _design(economy: Economy) -> NDArray:
    """Rows map ``(omega, phi_1..phi_{n-1})`` to the price of each OD pair."""
    n = economy.n
    A = np.zeros((n, n, n))
    A[:, :, 0] = economy.d
    idx = np.arange(n - 1)
    A[idx, :, 1 + idx] += 1.0
    A[:, idx, 1 + idx] -= 1.0
    return A.reshape(n * n, n)


def solve_optimal_dual(economy: Economy, tol: float | None = None, *,
                       omega0: float | None = None, phi0: ArrayLike | None = None,
                       mu_shrink: float = 0.2, max_newton: int = 2000) -> DualSolution:
    """Minimize the welfare dual over ``omega >= 0`` and ``phi`` (``phi_n = 0``).

    Log-barrier path following: for each barrier weight ``mu`` the centered
    point is found by damped Newton, then ``mu`` shrinks.  At a centered point
    ``y = q(p) + mu / p`` is a balanced primal flow, so the duality gap is
    ``mu * (n^2 + 1)`` and the loop stops once that falls below ``tol``.
    ``tol`` defaults to ``1e-9 * max(1, m)``.
    """
    n = economy.n
    m = economy.m
    tol = 1e-9 * max(1.0, m) if tol is None else float(tol)
    A = _design(economy)
    c = economy.c.ravel()

    v = np.zeros(n)
    if phi0 is not None:
        v[1:] = np.asarray(phi0, dtype=float).ravel()[: n - 1]
    if omega0 is None:
        scale = np.where(economy.Q > 0, economy.theta / economy.d, 0.0)
        omega0 = float(scale.max()) if scale.max() > 0 else 1.0
        omega0 += float(np.max(np.abs(v)) / economy.d.min())
    v[0] = omega0
    if np.any(A @ v + c <= 0) or v[0] <= 0:
        raise Infeasible("starting point is not strictly dual feasible")

    def parts(v):
        p = (A @ v + c).reshape(n, n)
        return p, economy.q(p), economy.q_prime(p)

    def barrier(v, mu):
        p = A @ v + c
        if v[0] <= 0 or np.any(p <= 0):
            return np.inf
        return dual_value(economy, v[0], np.append(v[1:], 0.0)) - mu * (np.log(p).sum() + np.log(v[0]))

    mu = max(dual_value(economy, v[0], np.append(v[1:], 0.0)), 1.0) / (n * n + 1)
    iters = 0
    while True:
        for _ in range(100):
            p, q, qp = parts(v)
            pf = p.ravel()
            grad = np.zeros(n)
            grad[0] = m - mu / v[0]
            grad -= A.T @ (q.ravel() + mu / pf)
            h = -qp.ravel() + mu / pf**2
            H = (A * h[:, None]).T @ A
            H[0, 0] += mu / v[0] ** 2
            step, _ = solve_with_ridge(H, -grad)
            decrement = float(-grad @ step)
            iters += 1
            if decrement <= 1e-13 * mu:
                break
            dp = A @ step
            t = 1.0
            neg = dp < 0
            if neg.any():
                t = min(t, 0.99 * np.min(-pf[neg] / dp[neg]))
            if step[0] < 0:
                t = min(t, 0.99 * -v[0] / step[0])
            f0 = barrier(v, mu)
            while barrier(v + t * step, mu) > f0 - 0.25 * t * decrement and t > 1e-16:
                t *= 0.5
            v = v + t * step
            if iters > max_newton:
                raise NoConvergence("barrier Newton did not center", best=v)
        if mu * (n * n + 1) <= tol:
            break
        mu *= mu_shrink

    p, q, _ = parts(v)
    y = q + _balanced_relocation(q, mu / p)
    phi = np.append(v[1:], 0.0)
    welfare = primal_welfare(_Flows(q, y), economy)
    gap = dual_value(economy, v[0], phi) - welfare
    log.debug("dual solved: omega=%.6g gap=%.3g newton=%d", v[0], gap, iters)
    return DualSolution(float(v[0]), phi, p, welfare, float(gap), q, y, iters)


def _balanced_relocation(x: NDArray, r0: NDArray) -> NDArray:
    """Smallest relative change to ``r0`` that balances ``x + r0`` exactly.

    Small prices lose relative precision to cancellation, so ``mu / p`` is
    only balanced to about 1e-6.  With ``r = r0 * (1 + lam_i - lam_j)`` the
    balance conditions become a weighted Laplacian system in ``lam``.
    """
    flow = x + r0
    excess = flow.sum(axis=0) - flow.sum(axis=1)
    w = r0 + r0.T
    lap = np.diag(w.sum(axis=1)) - w
    lam = np.linalg.lstsq(lap, excess, rcond=None)[0]
    r = r0 * (1.0 + lam[:, None] - lam[None, :])
    return np.maximum(r, 0.0)


@dataclass(frozen=True)
class _Flows:
    x: NDArray
    y: NDArray


# ---------------------------------------------------------------------------
# cycles


@dataclass(frozen=True)
class CycleDecomposition:
    """Cycles as location tuples, each rotated to start at its smallest node."""

    cycles: list[tuple[int, ...]] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.cycles)

    def __iter__(self):
        return iter(zip(self.cycles, self.weights))

    def reconstruct(self, n: int) -> NDArray:
        y = np.zeros((n, n))
        for cyc, w in self:
            for a, b in _edges(cyc):
                y[a, b] += w
        return y

    def to_dict(self) -> dict:
        return {"cycles": [list(c) for c in self.cycles], "weights": list(self.weights)}


def _edges(cycle):
    return zip(cycle, cycle[1:] + cycle[:1])


def _canonical(cycle: list[int]) -> tuple[int, ...]:
    k = cycle.index(min(cycle))
    return tuple(cycle[k:] + cycle[:k])


def cycle_decompose(y: ArrayLike, tol: float = 1e-9) -> CycleDecomposition:
    """Greedy cycle extraction from a balanced flow.

    Follows the heaviest outgoing edge until a node repeats, removes the cycle
    at its bottleneck weight, and repeats.  Raises ``UnbalancedFlow`` when
    inflow and outflow differ by more than ``tol * (1 + max y)``.
    """
    y = np.array(y, dtype=float)
    if np.any(y < -tol):
        raise UnbalancedFlow("flows must be nonnegative")
    y = np.maximum(y, 0.0)
    scale = 1.0 + (y.max() if y.size else 0.0)
    imbalance = y.sum(axis=0) - y.sum(axis=1)
    if np.any(np.abs(imbalance) > tol * scale):
        bad = np.flatnonzero(np.abs(imbalance) > tol * scale).tolist()
        raise UnbalancedFlow(f"inflow != outflow at locations {bad}")
    eps = 1e-13 * scale
    weights: dict[tuple[int, ...], float] = {}
    while True:
        out = y.max(axis=1)
        if out.max() <= eps:
            break
        node = int(np.argmax(out))
        path, seen = [node], {node: 0}
        while True:
            nxt = int(np.argmax(y[path[-1]]))
            if y[path[-1], nxt] <= eps:
                path = None
                break
            if nxt in seen:
                path = path[seen[nxt]:]
                break
            seen[nxt] = len(path)
            path.append(nxt)
        if path is None:
            # numerical dead end: what is left is rounding residue
            break
        w = min(y[a, b] for a, b in _edges(path))
        for a, b in _edges(path):
            y[a, b] = 0.0 if y[a, b] == w else y[a, b] - w
        key = _canonical(path)
        weights[key] = weights.get(key, 0.0) + w
    cycles = sorted(weights)
    return CycleDecomposition(cycles, [weights[c] for c in cycles])


def cycle_surplus(cycle, p: ArrayLike, c: ArrayLike, d: ArrayLike) -> float:
    """Driver surplus rate on a cycle: total margin over total time."""
    p, c, d = (np.asarray(a, dtype=float) for a in (p, c, d))
    cyc = list(cycle)
    rows = np.array(cyc)
    cols = np.array(cyc[1:] + cyc[:1])
    return float((p[rows, cols] - c[rows, cols]).sum() / d[rows, cols].sum())


def _positive_cycle(weight: NDArray, eps: float) -> list[int] | None:
    """Some cycle with total weight above ``eps``, by Bellman-Ford on max paths."""
    n = weight.shape[0]
    loops = np.diag(weight)
    if loops.max() > eps:
        return [int(np.argmax(loops))]
    dist = np.zeros(n)
    pred = np.full(n, -1)
    changed = -1
    for _ in range(n + 1):
        cand = dist[:, None] + weight
        best = np.argmax(cand, axis=0)
        val = cand[best, np.arange(n)]
        upd = val > dist + eps
        if not upd.any():
            return None
        dist[upd] = val[upd]
        pred[upd] = best[upd]
        changed = int(np.flatnonzero(upd)[0])
    node = changed
    for _ in range(n):
        node = int(pred[node])
    cycle = [node]
    cur = int(pred[node])
    while cur != node:
        cycle.append(cur)
        cur = int(pred[cur])
    cycle.reverse()
    total = sum(weight[a, b] for a, b in _edges(cycle))
    return cycle if total > eps else None


def max_mean_cycle(p: ArrayLike, c: ArrayLike, d: ArrayLike,
                   eps: float = 1e-12) -> tuple[float, tuple[int, ...]]:
    """Largest driver surplus rate over all simple cycles of the complete graph.

    Dinkelbach iteration: given the current best ratio ``lam``, look for a
    cycle with positive total ``p - c - lam * d``; its ratio strictly exceeds
    ``lam``.  Returns ``(ratio, cycle)``.
    """
    p, c, d = (np.asarray(a, dtype=float) for a in (p, c, d))
    margin = p - c
    diag = margin.diagonal() / d.diagonal()
    best = [int(np.argmax(diag))]
    lam = cycle_surplus(best, p, c, d)
    scale = 1.0 + np.abs(margin).max()
    for _ in range(10 * p.shape[0] ** 2 + 10):
        cyc = _positive_cycle(margin - lam * d, eps * scale)
        if cyc is None:
            break
        ratio = cycle_surplus(cyc, p, c, d)
        if ratio <= lam:
            break
        lam, best = ratio, cyc
    return lam, _canonical(best)


def verify_CE(outcome, economy: Economy, tol: float = 1e-6) -> CheckReport:
    """Check rider best response (R1) and the driver conditions D1-D4.

    ``outcome`` needs ``x``, ``y`` and ``p``.  D2 and D3 use a dead band of
    ``tol`` around zero for the best cycle surplus rate.
    """
    x = np.asarray(outcome.x, dtype=float)
    y = np.asarray(outcome.y, dtype=float)
    p = np.asarray(outcome.p, dtype=float)
    m = economy.m
    report = CheckReport()

    def add(name, passed, worst, detail=""):
        report.checks.append(Check(name, bool(passed), float(worst), detail))

    r1 = float(np.max(np.abs(x - economy.q(np.maximum(p, 0.0)))))
    add("R1", r1 <= tol * (1.0 + x.max()), r1)

    reloc = (y - x) > tol
    d1 = float(np.max(np.where(reloc, p, 0.0), initial=0.0))
    add("D1", d1 <= tol, d1)

    mu_star, best = max_mean_cycle(p, economy.c, economy.d)
    supply = float((economy.d * y).sum())
    if mu_star > tol:
        add("D2", abs(supply - m) <= tol * max(1.0, m), abs(supply - m), f"max surplus {mu_star:.6g}")
    else:
        add("D2", True, 0.0, "inactive")
    if mu_star < -tol:
        add("D3", supply <= tol * max(1.0, m), supply, f"max surplus {mu_star:.6g}")
    else:
        add("D3", True, 0.0, "inactive")

    try:
        dec = cycle_decompose(y, tol=max(tol, 1e-9))
    except UnbalancedFlow as exc:
        add("D4", False, np.inf, str(exc))
        return report
    shortfall, detail = 0.0, ""
    for cyc, w in dec:
        if w <= tol:
            continue
        gap = mu_star - cycle_surplus(cyc, p, economy.c, economy.d)
        if gap > shortfall:
            shortfall, detail = gap, f"cycle {list(cyc)} earns {mu_star - gap:.6g} < {mu_star:.6g}"
    add("D4", shortfall <= tol * (1.0 + abs(mu_star)), shortfall, detail)
    return report

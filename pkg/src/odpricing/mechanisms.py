"""Iterative pricing mechanisms: INP and the comparison variants.

Every update uses only what a platform sees after a clearing: the multipliers
``pi`` and the sensitivity ``d_Pi`` assembled from durations and demand slopes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .economy import Economy, Phantom
from .errors import PricingError
from .market_clearing import MarketOutcome, clear_market
from .sensitivity import MultiplierSensitivity, assemble_jacobians, jacobian_Pi, solve_with_ridge
from .welfare import dual_objective, grad_f, lyapunov_f, primal_welfare, suboptimality_bounds

log = logging.getLogger(__name__)

INP = "inp"
PURE_NEWTON = "pure_newton"
GRADIENT = "gradient"
SIMPLE = "simple"
VARIANTS = (INP, PURE_NEWTON, GRADIENT, SIMPLE)


@dataclass(frozen=True)
class InpParams:
    """Mechanism parameters.

    ``f_tol`` stops a run once the Lyapunov value falls below it; ``gamma``
    is only used by the simple variant.
    """

    tau: float = 1.0
    beta: float = 0.5
    sigma: float = 1e-3
    max_steps: int = 500
    f_tol: float = 1e-14
    backtracking_enabled: bool = True
    gamma: float = 0.01

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if self.f_tol < 0:
            raise ValueError("f_tol must be nonnegative")


@dataclass(frozen=True)
class Direction:
    delta: NDArray
    xi: float


def newton_direction(pi: NDArray, d_Pi) -> Direction:
    """Solve ``[-d_Pi | 1] [delta; xi] = pi``.

    The step ``delta`` is the change in adjustments that would equalize the
    multipliers at level ``xi`` if ``Pi`` were linear.
    """
    pi = np.asarray(pi, dtype=float)
    jac = np.asarray(getattr(d_Pi, "d_Pi", d_Pi), dtype=float)
    M = np.hstack([-jac, np.ones((pi.shape[0], 1))])
    sol, _ = solve_with_ridge(M, pi)
    return Direction(sol[:-1], float(sol[-1]))


def stepsize(delta: NDArray, d_Pi, tau: float) -> float:
    """``min(1, tau / |d_Pi delta|_inf)``; 1 for a null direction."""
    jac = np.asarray(getattr(d_Pi, "d_Pi", d_Pi), dtype=float)
    change = float(np.max(np.abs(jac @ delta), initial=0.0))
    if change == 0.0:
        return 1.0
    return min(1.0, tau / change)


@dataclass(frozen=True)
class MechanismState:
    """Mechanism memory between timesteps.

    ``phi`` has length n - 1.  ``t_prime`` indexes the outcome the current
    direction was computed at; ``f_anchor`` and ``grad_dot_step`` are the
    Armijo ingredients ``f(phi^(t'))`` and ``grad f(phi^(t'))^T alpha delta``.
    """

    t: int
    phi: NDArray
    delta: NDArray
    alpha: float
    t_prime: int
    phi_anchor: NDArray
    f_anchor: float
    grad_anchor: NDArray
    grad_dot_step: float = 0.0
    backtrack_count: int = 0
    backtracked: bool = False

    @classmethod
    def initial(cls, n: int) -> MechanismState:
        zero = np.zeros(n - 1)
        return cls(0, zero, zero, 1.0, 0, zero, np.inf, zero)


@dataclass(frozen=True)
class Observation:
    """What the platform observes after clearing at ``phi``."""

    pi: NDArray
    d_Pi: NDArray

    @property
    def f(self) -> float:
        return lyapunov_f(self.pi)

    @classmethod
    def of(cls, outcome: MarketOutcome, economy: Economy, phantom: Phantom) -> Observation:
        sens = jacobian_Pi(assemble_jacobians(economy, phantom, outcome))
        return cls(outcome.pi, sens.d_Pi)


def _fresh_direction(variant: str, obs: Observation, params: InpParams) -> tuple[NDArray, float]:
    if variant == GRADIENT:
        delta = -grad_f(obs.pi, obs.d_Pi)
    else:
        delta = newton_direction(obs.pi, obs.d_Pi).delta
    alpha = 1.0 if variant == PURE_NEWTON else stepsize(delta, obs.d_Pi, params.tau)
    return delta, alpha


def armijo_passed(state: MechanismState, f_latest: float, sigma: float) -> bool:
    return f_latest < state.f_anchor + sigma * state.grad_dot_step


def inp_step(state: MechanismState, obs: Observation, params: InpParams,
             variant: str = INP) -> MechanismState:
    """One mechanism update from the outcome observed at ``state.phi``.

    Takes a fresh direction at the first step, when backtracking is off, or
    when the sufficient-decrease test against the anchor passes.  Otherwise
    the step from the anchor is shrunk by ``beta`` along the old direction.
    """
    t = state.t + 1
    if variant == SIMPLE:
        delta = obs.pi[:-1] - obs.pi[-1]
        phi = state.phi + params.gamma * delta
        return replace(state, t=t, phi=phi, delta=delta, alpha=params.gamma, t_prime=t - 1,
                       phi_anchor=state.phi, f_anchor=obs.f, backtracked=False)

    fresh = t == 1 or not params.backtracking_enabled or armijo_passed(state, obs.f, params.sigma)
    if fresh:
        delta, alpha = _fresh_direction(variant, obs, params)
        g = grad_f(obs.pi, obs.d_Pi)
        return MechanismState(
            t=t, phi=state.phi + alpha * delta, delta=delta, alpha=alpha, t_prime=t - 1,
            phi_anchor=state.phi, f_anchor=obs.f, grad_anchor=g,
            grad_dot_step=float(g @ (alpha * delta)), backtrack_count=0, backtracked=False)
    alpha = params.beta * state.alpha
    return replace(
        state, t=t, phi=state.phi_anchor + alpha * state.delta, alpha=alpha,
        grad_dot_step=float(state.grad_anchor @ (alpha * state.delta)),
        backtrack_count=state.backtrack_count + 1, backtracked=True)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TrajectoryEntry:
    t: int
    phi: NDArray
    pi: NDArray
    f: float
    primal: float
    dual: float
    bound_detailed: float
    backtracked: bool
    alpha: float = float("nan")
    error: str = ""

    def to_dict(self) -> dict:
        return {"t": self.t, "phi": self.phi.tolist(), "pi": self.pi.tolist(), "f": self.f,
                "primal": self.primal, "dual": self.dual,
                "bound_detailed": self.bound_detailed, "backtracked": self.backtracked,
                "alpha": self.alpha, "error": self.error}


@dataclass
class Trajectory:
    variant: str
    params: InpParams
    entries: list[TrajectoryEntry] = field(default_factory=list)
    outcomes: list[MarketOutcome] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, k: int) -> TrajectoryEntry:
        return self.entries[k]

    @property
    def final(self) -> TrajectoryEntry:
        return self.entries[-1]

    @property
    def backtracks(self) -> int:
        return sum(e.backtracked for e in self.entries)

    @property
    def errors(self) -> list[TrajectoryEntry]:
        return [e for e in self.entries if e.error]

    def anchors(self) -> list[int]:
        """Timesteps whose outcome anchored a fresh direction.

        The last entry counts when it was reached by a fresh step, since its
        outcome would anchor the next direction.
        """
        idx = [e.t - 1 for e in self.entries[1:] if not e.backtracked]
        last = self.entries[-1]
        if not last.backtracked and not last.error and last.t not in idx:
            idx.append(last.t)
        return idx

    def anchored_f(self) -> list[float]:
        return [self.entries[t].f for t in self.anchors()]

    def column(self, name: str) -> NDArray:
        return np.array([getattr(e, name) for e in self.entries])

    def to_csv(self, path: str | Path | None = None) -> str:
        n = self.entries[0].pi.shape[0]
        header = (["t"] + [f"phi_{k + 1}" for k in range(n - 1)]
                  + [f"pi_{k + 1}" for k in range(n)]
                  + ["f", "primal", "dual", "bound_detailed", "backtracked"])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for e in self.entries:
            writer.writerow([e.t, *map(repr, e.phi.tolist()), *map(repr, e.pi.tolist()),
                             repr(e.f), repr(e.primal), repr(e.dual), repr(e.bound_detailed),
                             int(e.backtracked)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        return {"variant": self.variant, "params": self.params.__dict__,
                "converged": self.converged, "stop_reason": self.stop_reason,
                "entries": [e.to_dict() for e in self.entries]}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text


EconomyStream = Economy | Sequence[Economy] | Callable[[int], Economy]


def _stream(economies: EconomyStream) -> tuple[Callable[[int], Economy], bool]:
    if isinstance(economies, Economy):
        return (lambda t: economies), True
    if callable(economies):
        return economies, False
    seq = list(economies)
    return (lambda t: seq[min(t, len(seq) - 1)]), len(seq) == 1


def run_mechanism(economies: EconomyStream, phantom: Phantom, variant: str = INP,
                  params: InpParams = InpParams(), horizon: int | None = None, *,
                  fail_fast: bool = False, keep_outcomes: bool = False) -> Trajectory:
    """Run clear, observe, update for up to ``horizon`` steps.

    ``economies`` is one economy (stationary), a sequence indexed by
    timestep, or a callable ``t -> Economy``.  Non-stationary streams run
    without backtracking.  A failed clearing is recorded and the previous
    adjustments are kept, unless ``fail_fast`` is set.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    economy_at, stationary = _stream(economies)
    if not stationary and params.backtracking_enabled:
        params = replace(params, backtracking_enabled=False)
    horizon = params.max_steps if horizon is None else horizon
    first = economy_at(0)
    n = first.n
    traj = Trajectory(variant, params)
    state = MechanismState.initial(n)
    warm = None
    obs = None

    for t in range(horizon + 1):
        economy = economy_at(t)
        try:
            outcome = clear_market(economy, phantom, state.phi, warm_start=warm)
            obs = Observation.of(outcome, economy, phantom)
        except PricingError as exc:
            if fail_fast or obs is None:
                raise
            log.warning("step %d: clearing failed (%s); keeping previous adjustments", t, exc)
            last = next(e for e in reversed(traj.entries) if not e.error)
            traj.entries.append(replace(last, t=t, error=str(exc)))
            state = replace(state, phi=last.phi.copy())
            continue
        warm = outcome.pi
        bounds = suboptimality_bounds(outcome, economy, phantom)
        traj.entries.append(TrajectoryEntry(
            t=t, phi=state.phi.copy(), pi=outcome.pi.copy(), f=obs.f,
            primal=primal_welfare(outcome, economy),
            dual=dual_objective(economy, outcome.phi, outcome.pi),
            bound_detailed=bounds["bound_detailed"], backtracked=state.backtracked,
            alpha=state.alpha if t else float("nan")))
        if keep_outcomes:
            traj.outcomes.append(outcome)
        if obs.f <= params.f_tol:
            traj.converged, traj.stop_reason = True, "f_tol"
            break
        if t == horizon:
            traj.stop_reason = "horizon"
            break
        new_state = inp_step(state, obs, params, variant)
        if not new_state.backtracked and np.max(np.abs(new_state.delta), initial=0.0) <= 1e-12:
            traj.converged, traj.stop_reason = True, "null direction"
            break
        state = new_state
    return traj


def run_variants(economies: EconomyStream, phantom: Phantom, variants: Iterable[str],
                 params: InpParams, horizon: int | None = None) -> dict[str, Trajectory]:
    return {v: run_mechanism(economies, phantom, v, params, horizon) for v in variants}


def sensitivity_at(economy: Economy, phantom: Phantom, outcome: MarketOutcome) -> MultiplierSensitivity:
    return jacobian_Pi(assemble_jacobians(economy, phantom, outcome))

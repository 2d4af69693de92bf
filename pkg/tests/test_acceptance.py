"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``.  Set ``ODPRICING_DATASET``
to a trip CSV to add the real-data checks of criterion 9.
"""

import os
import time
from functools import lru_cache

import numpy as np
import pytest

from odpricing import (InpParams, assemble_jacobians, clear_market, cycle_decompose,
                       cycle_surplus, jacobian_Pi, lyapunov_f, primal_welfare, run_mechanism,
                       solve_optimal_dual, suboptimality_bounds)
from odpricing import data_pipeline as dp

import oracles
from conftest import naive_outcome

W1 = 459.91


@pytest.fixture
def report(capsys, request):
    """Print one verdict line per criterion, outside pytest's capture."""
    lines = []
    yield lines.append
    name = request.node.name.removeprefix("test_")
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    with capsys.disabled():
        print(f"\n[{'FAIL' if failed else 'PASS'}] {name}: " + "; ".join(lines))


@lru_cache(maxsize=None)
def surrogate():
    economy, phantom, _ = dp.chicago_surrogate(2020)
    return economy, phantom, solve_optimal_dual(economy).welfare_star


@lru_cache(maxsize=None)
def surrogate_run(variant, horizon, tau=10.0, gamma=0.01):
    economy, phantom, _ = surrogate()
    params = InpParams(tau=tau, beta=0.5, sigma=1e-3, gamma=gamma, f_tol=0.0)
    return run_mechanism(economy, phantom, variant, params, horizon)


def _timed(fun, *args, **kwargs):
    start = time.perf_counter()
    out = fun(*args, **kwargs)
    return out, time.perf_counter() - start


def test_c01_example1_optimum(report):
    sol, secs = _timed(solve_optimal_dual, dp.example1())
    p = sol.p
    report(f"omega*={sol.omega_star:.5f} dphi={sol.phi_star[0] - sol.phi_star[1]:.4f} "
           f"p={np.round(p.ravel(), 4).tolist()} W*={sol.welfare_star:.4f} in {secs:.2f}s")
    assert sol.omega_star == pytest.approx(0.916, abs=1e-3)
    assert sol.phi_star[0] - sol.phi_star[1] == pytest.approx(18.33, abs=0.01)
    assert p[0, 0] == pytest.approx(9.16, abs=0.01) and p[1, 1] == pytest.approx(9.16, abs=0.01)
    assert p[0, 1] == pytest.approx(36.65, abs=0.01)
    assert abs(p[1, 0]) <= 1e-6
    assert sol.welfare_star == pytest.approx(W1, abs=0.01)
    assert secs < 1.0


def test_c02_example1_naive_welfare(report):
    economy = dp.example1()
    value, secs = _timed(primal_welfare, naive_outcome(), economy)
    report(f"naive W={value:.4f} ratio={value / W1:.4f} in {secs * 1e3:.2f}ms")
    assert value == pytest.approx(332.10, abs=0.01)
    assert value / W1 == pytest.approx(0.722, abs=5e-4)
    assert secs < 0.1


def test_c03_inp_example1(report):
    economy, phantom = dp.example1(), dp.example1_phantom()
    params = InpParams(tau=1.0, beta=0.5, sigma=1e-3)
    traj, secs = _timed(run_mechanism, economy, phantom, "inp", params, 60, keep_outcomes=True)
    pi = traj.final.pi
    slack = phantom.slack().sum()
    loss = 459.90977556 - traj.final.primal
    bound = suboptimality_bounds(traj.outcomes[-1], economy, phantom)["bound_detailed"]
    report(f"steps={traj.final.t} |pi1-pi2|={abs(pi[0] - pi[1]):.2e} primal={traj.final.primal:.4f} "
           f"loss={loss:.4f} bound={bound:.4f} <= {slack:.4f} in {secs:.2f}s")
    assert traj.final.t <= 60 and abs(pi[0] - pi[1]) <= 1e-4
    assert traj.final.primal >= 0.99 * W1
    assert slack == pytest.approx(4 * 9.8304)
    assert loss <= bound <= slack + 1e-6
    assert secs < 5.0


def test_c04_bound_chain(report):
    start = time.perf_counter()
    worst_slack = np.inf
    checked = 0
    for k in range(20):
        n = (3, 4, 5)[k % 3]
        economy = dp.random_economy(n, seed=100 + k, imbalance=(k % 5) / 4)
        phantom = dp.synthetic_phantom({"kind": "random"}, economy)
        star = solve_optimal_dual(economy).welfare_star
        rng = np.random.default_rng(k)
        scale = float(np.median(economy.theta))
        for _ in range(5):
            out = clear_market(economy, phantom, rng.uniform(-0.5, 0.5, n - 1) * scale)
            b = suboptimality_bounds(out, economy, phantom)
            loss = star - primal_welfare(out, economy)
            tol = 1e-7 * max(1.0, star)
            assert -tol <= loss <= b["bound_detailed"] + tol, (k, loss, b)
            assert b["bound_detailed"] <= b["bound_coarse"] + tol
            worst_slack = min(worst_slack, b["bound_detailed"] - loss)
            checked += 1
    secs = time.perf_counter() - start
    report(f"{checked} outcomes, tightest bound_detailed - loss = {worst_slack:.3g}, {secs:.1f}s")
    assert secs < 60


def test_c05_jacobians(report):
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    worst_g, worst_pi = 0.0, 0.0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        economy, phantom = oracles.random_instance(rng, n)
        phi = rng.uniform(-0.3, 0.3, n - 1)
        out = clear_market(economy, phantom, phi)
        jac = assemble_jacobians(economy, phantom, out)
        h = 1e-6
        fd_pi = oracles.central_diff(lambda v: oracles.residual(economy, phantom, v, phi), out.pi, h)
        fd_phi = oracles.central_diff(lambda v: oracles.residual(economy, phantom, out.pi, v), phi, h)
        for a, b in ((jac.d_pi_g, fd_pi), (jac.d_phi_g, fd_phi)):
            worst_g = max(worst_g, np.abs(a - b).max() / np.abs(b).max())
        d_Pi = jacobian_Pi(jac).d_Pi
        fd = oracles.central_diff(
            lambda v: clear_market(economy, phantom, v, warm_start=out.pi, tol_supply=1e-13).pi,
            phi, 1e-4)
        worst_pi = max(worst_pi, np.abs(fd - d_Pi).max() / max(np.abs(d_Pi).max(), 1e-12))
    secs = time.perf_counter() - start
    report(f"max rel err D g={worst_g:.2e} (<=1e-5), D Pi={worst_pi:.2e} (<=1e-4), {secs:.1f}s")
    assert worst_g <= 1e-5 and worst_pi <= 1e-4 and secs < 60


def test_c06_clearing_uniqueness(report):
    rng = np.random.default_rng(6)
    worst_gap, worst_res = 0.0, 0.0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        economy, phantom = oracles.random_instance(rng, n)
        phi = rng.uniform(-0.5, 0.5, n - 1)
        a = clear_market(economy, phantom, phi)
        b = clear_market(economy, phantom, phi, warm_start=a.pi + rng.uniform(-0.5, 5, n))
        worst_gap = max(worst_gap, np.abs(a.pi - b.pi).max())
        for out in (a, b):
            g = oracles.residual(economy, phantom, out.pi, phi)
            worst_res = max(worst_res, np.abs(g).max() / max(1.0, economy.m))
    report(f"max |pi_a - pi_b|={worst_gap:.2e}, max |g|/max(1,m)={worst_res:.2e}")
    assert worst_gap <= 1e-6 and worst_res <= 1e-9


def test_c07_cycles(report):
    economy = dp.example1()
    naive = naive_outcome()
    dec = cycle_decompose(naive.y)
    weights = {c: float(w) for c, w in zip(dec.cycles, dec.weights)}
    mu3 = cycle_surplus((0, 1), naive.p, economy.c, economy.d)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        y = np.zeros((5, 5))
        for _ in range(int(rng.integers(1, 9))):
            nodes = list(rng.permutation(5)[: rng.integers(1, 6)])
            w = rng.uniform(0.01, 50)
            for i, j in zip(nodes, nodes[1:] + nodes[:1]):
                y[i, j] += w
        worst = max(worst, np.abs(cycle_decompose(y).reconstruct(5) - y).max())
    report(f"weights={weights} mu(k3)={mu3:.4f} max reconstruction err={worst:.1e}")
    assert weights == {(1,): 20.0, (0, 1): 1.0}
    assert mu3 == pytest.approx(2.30, abs=0.005)
    assert worst <= 1e-10


def test_c08_superlinear_tail(report):
    traj = run_mechanism(dp.example1(), dp.example1_phantom(), params=InpParams(tau=1.0), horizon=60)
    f = traj.anchored_f()
    ratios = [f[k + 1] / f[k] for k in range(len(f) - 4, len(f) - 1)]
    report("last anchored ratios " + ", ".join(f"{r:.3e}" for r in ratios))
    assert len(f) >= 4
    assert ratios[0] > ratios[1] > ratios[2]


def test_c09_surrogate(report):
    economy, phantom, star = surrogate()
    naive = primal_welfare(clear_market(economy, phantom), economy) / star
    traj = surrogate_run("inp", 25)
    ratios = traj.column("primal") / star
    hit = int(np.argmax(ratios >= 0.99)) if np.any(ratios >= 0.99) else None
    report(f"n={economy.n} m={economy.m:.0f} naive={naive:.4f} INP first >=99% at t={hit}, "
           f"final {ratios[-1]:.4f}, backtracks={traj.backtracks}")
    assert naive <= 0.90
    assert hit is not None and hit <= 25
    assert traj.backtracks == 0

    path = os.environ.get("ODPRICING_DATASET")
    if not path:
        report("dataset checks skipped (ODPRICING_DATASET unset)")
        return
    records = list(dp.parse_trips(path))
    window = dp.WeekWindow()
    _, spec = dp.build_week_economy(records, window)
    excluded = dp.detect_event_days(records, window=window)
    report(f"dataset m={spec.m:.2f} excluded weeks={len(excluded)}")
    assert round(spec.m) == 4475
    assert len(excluded) == 5


def _max_step(traj):
    pi = np.array([e.pi for e in traj.entries if not e.error])
    return float(np.abs(np.diff(pi, axis=0)).max())


def test_c10_variants(report):
    _, _, star = surrogate()
    inp = surrogate_run("inp", 80)
    newton = surrogate_run("pure_newton", 25)
    grad = surrogate_run("gradient", 80)
    simple = surrogate_run("simple", 60)
    best = {name: traj.column("primal").max() / star
            for name, traj in (("inp", inp), ("gradient", grad), ("simple", simple))}
    report(f"max step |dpi|: newton={_max_step(newton):.1f} inp={_max_step(inp):.1f}; "
           f"best ratio inp={best['inp']:.4f} gradient={best['gradient']:.4f} "
           f"simple={best['simple']:.4f}; newton failures={len(newton.errors)}")
    assert _max_step(newton) > _max_step(inp)
    assert best["inp"] >= 0.95 and best["gradient"] < 0.95
    assert best["simple"] >= 0.99


def test_c11_nonconvexity(report):
    economy, phantom = dp.example2(), dp.example2_phantom()
    a, b = np.array([-11.0, -1.0]), np.array([-2.0, 3.0])
    ts = np.linspace(0, 1, 11)
    f = np.array([lyapunov_f(clear_market(economy, phantom, (1 - t) * a + t * b).pi) for t in ts])
    k = int(np.argmax(f))
    report(f"f(a)={f[0]:.3f} f(b)={f[-1]:.3f} interior max {f[k]:.3f} at t={ts[k]:.1f}")
    assert 0 < k < len(ts) - 1
    assert f[k] > max(f[0], f[-1])

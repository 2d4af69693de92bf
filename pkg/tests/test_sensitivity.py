import numpy as np
import pytest

from odpricing import Economy, Phantom, assemble_jacobians, clear_market, jacobian_Pi
from odpricing.mechanisms import newton_direction
from odpricing.sensitivity import clearing_jacobians

import oracles


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def _fd_jacobians(economy, phantom, pi, phi, h=1e-6):
    d_pi = oracles.central_diff(lambda v: oracles.residual(economy, phantom, v, phi), pi, h)
    d_phi = oracles.central_diff(lambda v: oracles.residual(economy, phantom, pi, v), phi, h)
    return d_pi, d_phi


def test_jacobians_match_differences(rng):
    for _ in range(10):
        economy, phantom = oracles.random_instance(rng, 4)
        pi = rng.uniform(1.0, 3.0, 4)
        phi = rng.uniform(-0.3, 0.3, 3)
        jac = clearing_jacobians(economy, phantom, pi, np.append(phi, 0.0))
        d_pi, d_phi = _fd_jacobians(economy, phantom, pi, phi)
        assert _rel(jac.d_pi_g, d_pi) <= 1e-5
        assert _rel(jac.d_phi_g, d_phi) <= 1e-5


def test_B_block_symmetric(rng):
    economy, phantom = oracles.random_instance(rng, 5)
    out = clear_market(economy, phantom, rng.uniform(-0.2, 0.2, 4))
    B = assemble_jacobians(economy, phantom, out).B
    assert np.array_equal(B, B.T)


def test_degenerate_row_flags_ridge():
    n = 3
    d = np.ones((n, n))
    Q = np.ones((n, n))
    Q[0] = 0.0
    economy = Economy(2.0, d, np.zeros((n, n)), Q, np.ones((n, n)))
    K = np.full((n, n), 10.0)
    K[0] = 0.0
    phantom = Phantom(K, 1.0, 4)
    jac = clearing_jacobians(economy, phantom, np.array([1.0, 0.5, 0.5]), np.zeros(n))
    assert jac.A[0, 0] == 0.0
    assert jac.singular
    assert jacobian_Pi(jac).ridge_applied


def test_example1_sign_pattern(ex1):
    economy, phantom = ex1
    out = clear_market(economy, phantom)
    d_Pi = jacobian_Pi(assemble_jacobians(economy, phantom, out)).d_Pi
    assert d_Pi[0, 0] < 0 < d_Pi[1, 0]


def test_dPi_matches_reclearing(rng):
    h = 1e-4
    for _ in range(10):
        n = int(rng.integers(2, 5))
        economy, phantom = oracles.random_instance(rng, n)
        phi = rng.uniform(-0.3, 0.3, n - 1)
        out = clear_market(economy, phantom, phi)
        d_Pi = jacobian_Pi(assemble_jacobians(economy, phantom, out)).d_Pi
        fd = oracles.central_diff(
            lambda v: clear_market(economy, phantom, v, warm_start=out.pi, tol_supply=1e-13).pi, phi, h)
        assert np.max(np.abs(fd - d_Pi)) <= 1e-4 * max(1.0, np.abs(d_Pi).max())


def test_full_rank_and_dominance(rng):
    for _ in range(10):
        n = int(rng.integers(2, 6))
        economy, phantom = oracles.random_instance(rng, n)
        economy = economy.replace(Q=np.maximum(economy.Q, 0.2))
        out = clear_market(economy, phantom, rng.uniform(-0.3, 0.3, n - 1))
        jac = assemble_jacobians(economy, phantom, out)
        d_Pi = jacobian_Pi(jac).d_Pi
        sv = np.linalg.svd(np.hstack([-d_Pi, np.ones((n, 1))]), compute_uv=False)
        assert sv[-1] > 1e-10 * sv[0]
        A = jac.A
        if n > 2:
            off = np.abs(A).sum(axis=0) - np.abs(np.diag(A))
            assert np.all(np.abs(np.diag(A)) > off)
        assert np.all(np.linalg.inv(A) > 0)


def test_uniform_pi_gives_null_direction():
    n = 3
    d = np.ones((n, n))
    economy = Economy(5.0, d, 0.1 * d, np.full((n, n), 3.0), np.full((n, n), 2.0))
    phantom = Phantom.uniform(n, 20.0, 2.0, 4)
    out = clear_market(economy, phantom)
    d_Pi = jacobian_Pi(assemble_jacobians(economy, phantom, out)).d_Pi
    direction = newton_direction(out.pi, d_Pi)
    assert np.max(np.abs(direction.delta)) < 1e-10
    assert direction.xi == pytest.approx(out.pi[0])

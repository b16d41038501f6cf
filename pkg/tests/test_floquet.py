import math

import numpy as np
import pytest

from orbit_persist.exceptions import H1ppViolation, H1Violation, HyperbolicityViolation, InvalidInputError
from orbit_persist.floquet import (
    AUTONOMOUS,
    NON_AUTONOMOUS,
    analyze,
    analyze_monodromy,
    hyperbolic_split,
    solve_bordered,
)

E1 = np.array([1.0, 0.0])


class TestDiagonalCase:
    @pytest.fixture
    def fd(self):
        return analyze_monodromy(np.diag([1.0, 0.5]), E1, omega0=2.0)

    def test_projections(self, fd):
        np.testing.assert_allclose(fd.proj_parallel, [[1, 0], [0, 0]], atol=1e-15)
        np.testing.assert_allclose(fd.proj_perp, [[0, 0], [0, 1]], atol=1e-15)

    def test_M_const(self, fd):
        assert fd.M_const == pytest.approx((1 / 0.5) * 1 / 2.0)

    def test_bordered(self, fd):
        np.testing.assert_allclose(solve_bordered(fd, np.zeros(2)), 0.0)
        np.testing.assert_allclose(solve_bordered(fd, np.array([0.0, 1.0])), [0.0, 2.0], atol=1e-15)


def _prescribed(rng):
    V = rng.normal(size=(4, 4))
    D = np.zeros((4, 4))
    D[0, 0] = 1.0
    D[1, 1] = 0.3
    D[2:, 2:] = [[0.2, 0.1], [-0.1, 0.2]]
    return V @ D @ np.linalg.inv(V), V[:, 0]


def test_bordered_vs_least_squares_oracle():
    rng = np.random.default_rng(3)
    M, v = _prescribed(rng)
    fd = analyze_monodromy(M, v)
    rhs = rng.normal(size=4)
    u = solve_bordered(fd, rhs)
    A = np.eye(4) - M
    assert np.linalg.norm(A @ u - fd.proj_perp @ rhs) < 1e-10
    assert np.linalg.norm(fd.proj_parallel @ u) < 1e-10
    # least-squares oracle on the stacked system [(I - M); w^T] u = [Pi_perp rhs; 0]
    stacked = np.vstack([A, fd.left_unit_eigvec[None, :]])
    oracle = np.linalg.lstsq(stacked, np.concatenate([fd.proj_perp @ rhs, [0.0]]), rcond=None)[0]
    np.testing.assert_allclose(u, oracle, atol=1e-10)


def test_projection_identities_random():
    rng = np.random.default_rng(4)
    for _ in range(20):
        M, v = _prescribed(rng)
        fd = analyze_monodromy(M, v)
        Pp, Pq = fd.proj_parallel, fd.proj_perp
        I = np.eye(4)
        for lhs, rhs in ((Pp + Pq, I), (Pp @ Pp, Pp), (Pq @ Pq, Pq), (Pp @ Pq, 0 * I)):
            assert np.max(np.abs(lhs - rhs)) < 1e-10
        assert np.linalg.matrix_rank(Pp, tol=1e-8) == 1


class TestHopf:
    def test_multipliers(self, hopf):
        _, _, fd = hopf
        lam = sorted(np.abs(fd.multipliers))
        np.testing.assert_allclose(lam, [math.exp(-4 * math.pi), 1.0], atol=1e-6)

    def test_projections(self, hopf):
        _, seed, fd = hopf
        Pp, Pq = fd.proj_parallel, fd.proj_perp
        I = np.eye(2)
        assert np.max(np.abs(Pp + Pq - I)) < 1e-10
        assert np.max(np.abs(Pp @ Pp - Pp)) < 1e-10
        assert np.max(np.abs(Pq @ Pq - Pq)) < 1e-10
        assert np.max(np.abs(Pp @ Pq)) < 1e-10
        dk = seed.DK0.values[0]
        assert np.linalg.norm(Pp @ dk - dk) < 1e-8
        assert fd.alignment_angle < 1e-6
        # circle orbit: the split is orthogonal
        assert np.linalg.norm(Pq, 2) == pytest.approx(1.0, abs=1e-6)

    def test_bordered_on_orbit(self, hopf):
        _, _, fd = hopf
        rhs = np.array([0.3, -0.7])
        u = solve_bordered(fd, rhs)
        assert np.linalg.norm((np.eye(2) - fd.monodromy) @ u - fd.proj_perp @ rhs) < 1e-10
        assert np.linalg.norm(fd.proj_parallel @ u) < 1e-10

    def test_hyperbolic_split(self, hopf):
        _, _, fd = hopf
        hs = hyperbolic_split(fd)
        assert hs.stable_basis.shape == (2, 1) and hs.unstable_basis.shape == (2, 0)
        assert hs.mu_s == pytest.approx(4 * math.pi, rel=1e-6)
        assert hs.mu_u is None

    def test_json(self, hopf):
        _, _, fd = hopf
        js = fd.to_json()
        assert js["mode"] == AUTONOMOUS
        assert js["multiplier_moduli"][0] == pytest.approx(1.0, abs=1e-9)
        assert js["hyperbolic"]["dim_stable"] == 1


class TestForced:
    def test_non_autonomous_passes(self, forced):
        _, _, fd = forced
        assert fd.mode == NON_AUTONOMOUS
        np.testing.assert_allclose(np.abs(fd.multipliers), math.exp(-0.2 * math.pi), atol=1e-6)
        # the variational equation has constant coefficients: lambda^2 + 0.2 lambda + 1 = 0
        rate = np.roots([1, 0.2, 1])
        expected = np.sort_complex(np.exp(2 * math.pi * rate))
        np.testing.assert_allclose(np.sort_complex(fd.multipliers), expected, atol=1e-6)

    def test_autonomous_mode_fails(self, forced):
        _, seed, _ = forced
        with pytest.raises(H1Violation):
            analyze(seed, mode=AUTONOMOUS)


def test_non_autonomous_with_unit_multiplier():
    with pytest.raises(H1ppViolation):
        analyze_monodromy(np.diag([1.0, 0.5]), mode=NON_AUTONOMOUS)


def test_double_unit_multiplier():
    with pytest.raises(H1Violation):
        analyze_monodromy(np.eye(2), E1)


def test_misaligned_flow_direction():
    with pytest.raises(H1Violation):
        analyze_monodromy(np.diag([1.0, 0.5]), np.array([0.0, 1.0]))


def test_autonomous_needs_direction():
    with pytest.raises(InvalidInputError):
        analyze_monodromy(np.diag([1.0, 0.5]))


def test_split_diag():
    fd = analyze_monodromy(np.diag([1.0, 2.0, 0.5]), np.array([1.0, 0.0, 0.0]))
    hs = hyperbolic_split(fd)
    assert abs(abs(hs.unstable_basis[:, 0] @ [0, 1, 0]) - 1) < 1e-12
    assert abs(abs(hs.stable_basis[:, 0] @ [0, 0, 1]) - 1) < 1e-12
    assert hs.mu_s == pytest.approx(math.log(2)) and hs.mu_u == pytest.approx(math.log(2))
    np.testing.assert_allclose(hs.proj_stable + hs.proj_unstable + hs.proj_center, np.eye(3), atol=1e-12)


def test_split_rejects_unit_circle_multiplier():
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    M = np.zeros((3, 3))
    M[0, 0] = 1.0
    M[1:, 1:] = [[c, -s], [s, c]]
    fd = analyze_monodromy(M, np.array([1.0, 0.0, 0.0]))
    assert fd.hyperbolic_split is None
    with pytest.raises(HyperbolicityViolation):
        hyperbolic_split(fd)

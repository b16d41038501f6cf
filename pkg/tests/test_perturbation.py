import math
import warnings

import numpy as np
import pytest
from scipy.interpolate import CubicSpline
from scipy.optimize import bisect

from orbit_persist.exceptions import (
    ConvergenceError,
    InvalidInputError,
    PerturbationError,
    SpeedConditionError,
)
from orbit_persist.models import VectorField
from orbit_persist.periodic import PeriodicSamples, c0_norm, spectral_derivative, trig_eval
from orbit_persist.perturbation import (
    BallWarning,
    PerturbationSpec,
    delayed_arguments,
    eval_P,
    evaluate_delayed,
    implicit_delay_tau,
    small_delay_P,
)

from .conftest import random_trig


def test_zero_state_dependent_delay_is_identity(hopf):
    _, seed, _ = hopf
    spec = PerturbationSpec("state_dependent", delay={"r": lambda x: np.zeros(x.shape[:-1])})
    np.testing.assert_allclose(eval_P(spec, seed.K0, seed.omega0).values, seed.K0.values, atol=1e-14)


def test_single_atom_equals_constant_delay(hopf):
    _, seed, _ = hopf
    atom = PerturbationSpec("distributed", delay={"atoms": [(1.0, -0.8)]})
    const = PerturbationSpec("constant_delay", delay={"r": 0.8})
    a = eval_P(atom, seed.K0, seed.omega0).values
    b = eval_P(const, seed.K0, seed.omega0).values
    assert np.max(np.abs(a - b)) <= 1e-15


def test_distributed_linear_in_atoms(hopf):
    _, seed, _ = hopf
    K, w = seed.K0, seed.omega0
    one = PerturbationSpec("distributed", delay={"atoms": [(0.7, -0.3)], "segments": [(0.2, -1.0, -0.4)]})
    two = PerturbationSpec("distributed", delay={"atoms": [(-1.3, -2.0)]})
    both = PerturbationSpec("distributed", delay={"atoms": [(0.7, -0.3), (-1.3, -2.0)], "segments": [(0.2, -1.0, -0.4)]})
    lhs = eval_P(both, K, w).values
    rhs = eval_P(one, K, w).values + eval_P(two, K, w).values
    assert np.max(np.abs(lhs - rhs)) < 1e-14


def test_uniform_segment_matches_antiderivative():
    # K = (cos 2 pi theta, sin 2 pi theta): the segment average has a closed form
    K = PeriodicSamples.from_function(lambda t: np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)], -1), 32)
    omega, a, b = 0.25, -1.5, -0.5
    spec = PerturbationSpec("distributed", delay={"segments": [(1.0, a, b)]})
    got = eval_P(spec, K, omega).values
    th = K.nodes[:, None]
    k = 2 * np.pi
    exact = np.hstack(
        [
            (np.sin(k * (th + omega * b)) - np.sin(k * (th + omega * a))) / (k * omega),
            -(np.cos(k * (th + omega * b)) - np.cos(k * (th + omega * a))) / (k * omega),
        ]
    )
    assert np.max(np.abs(got - exact)) < 1e-12


def test_sdde_vs_dense_spline_oracle(hopf):
    _, seed, _ = hopf
    K, omega = seed.K0, seed.omega0
    phase = math.atan2(K.values[0, 1], K.values[0, 0])
    M = 16 * K.N
    dense_theta = np.arange(M + 1) / M
    circle = np.stack([np.cos(2 * np.pi * dense_theta + phase), np.sin(2 * np.pi * dense_theta + phase)], -1)
    spline = CubicSpline(dense_theta, circle, bc_type="periodic")
    spec = PerturbationSpec("state_dependent", delay={"r": lambda x: 0.5 + 0.1 * x[..., 0]})
    got = eval_P(spec, K, omega).values
    r = 0.5 + 0.1 * K.values[:, 0]
    oracle = spline(np.mod(K.nodes - omega * r, 1.0))
    assert np.max(np.abs(got - oracle)) < 1e-8


def test_forward_lag(hopf):
    _, seed, _ = hopf
    spec = PerturbationSpec("constant_delay", delay={"r": -0.5})
    assert not spec.backward_only
    expected = trig_eval(seed.K0, seed.K0.nodes + 0.5 * seed.omega0)
    np.testing.assert_allclose(eval_P(spec, seed.K0, seed.omega0).values, expected, atol=1e-13)


def test_h_max(hopf):
    _, seed, _ = hopf
    spec = PerturbationSpec("constant_delay", delay={"r": 10.0}, h_max=1.0)
    with pytest.raises(PerturbationError, match="h_max"):
        eval_P(spec, seed.K0, seed.omega0)


def test_coupling_shape_checked(hopf):
    _, seed, _ = hopf
    spec = PerturbationSpec("constant_delay", coupling=lambda x, y, g: y[..., :1], delay={"r": 1.0})
    with pytest.raises(PerturbationError):
        eval_P(spec, seed.K0, seed.omega0)


def test_invalid_spec():
    with pytest.raises(InvalidInputError):
        PerturbationSpec("mystery")
    with pytest.raises(InvalidInputError):
        PerturbationSpec("constant_delay", delay={"r": 1.0}, epsilon=-1e-3)
    with pytest.raises(InvalidInputError):
        PerturbationSpec("distributed", delay={"atoms": [(math.inf, -1.0)]})


def test_ball_warning(hopf):
    _, seed, _ = hopf
    spec = PerturbationSpec("constant_delay", delay={"r": 1.0}, ball=(1e-3, 1e-3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        eval_P(spec, seed.K0, seed.omega0, seed=seed)
    far = PeriodicSamples(seed.K0.values * 1.1)
    with pytest.warns(BallWarning):
        eval_P(spec, far, seed.omega0, seed=seed)


def test_lipschitz_surrogate(hopf):
    # |P(K, w) - P(K', w')| <= max(|w - w'|, |K - K'|) (1 + r max|DK|)
    _, seed, _ = hopf
    r = 1.0
    spec = PerturbationSpec("constant_delay", delay={"r": r})
    rng = np.random.default_rng(11)
    f = random_trig(rng, n=2, degree=4, scale=1e-3)
    bound = 1 + r * c0_norm(spectral_derivative(seed.K0)) * 1.01
    worst = 0.0
    for _ in range(20):
        shift = rng.uniform(0, 1)
        K1 = PeriodicSamples(seed.K0.values + f(seed.K0.nodes + shift))
        w1 = seed.omega0 + rng.normal() * 1e-3
        dist = max(abs(w1 - seed.omega0), c0_norm(K1.values - seed.K0.values))
        dP = c0_norm(eval_P(spec, K1, w1).values - eval_P(spec, seed.K0, seed.omega0).values)
        worst = max(worst, dP / dist)
    assert math.isfinite(worst) and worst <= bound


def test_delayed_eval_record(hopf):
    _, seed, _ = hopf
    spec = PerturbationSpec("constant_delay", delay={"r": 1.0})
    rec = evaluate_delayed(spec, seed.K0, seed.omega0)
    np.testing.assert_allclose(rec.lag_arg, seed.K0.nodes - seed.omega0)
    with pytest.raises(InvalidInputError):
        delayed_arguments(PerturbationSpec("distributed", delay={"atoms": [(1.0, -1.0)]}), seed.K0, 1.0)


class TestSmallDelay:
    A = np.array([[0.3, -1.0], [1.0, -0.2]])

    def linear(self):
        A = self.A
        return VectorField(2, lambda x: x @ A.T, lambda x: np.broadcast_to(A, np.shape(x)[:-1] + (2, 2)))

    def samples(self):
        rng = np.random.default_rng(12)
        f = random_trig(rng, n=2, degree=6)
        return PeriodicSamples(f(np.arange(64) / 64))

    @pytest.mark.parametrize("eps", [1e-3, 5e-4, 0.05])
    def test_direct_difference_identity(self, eps):
        g = self.linear()
        K, omega, r = self.samples(), 0.7, 1.0
        spec = PerturbationSpec("small_delay", delay={"r": r}, epsilon=eps, g=g)
        lhs = eps * small_delay_P(spec, K, omega).values
        rhs = g(trig_eval(K, K.nodes - eps * omega * r)) - g(K.values)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_zero_epsilon_limit(self):
        g = self.linear()
        K, omega, r = self.samples(), 0.7, 1.3
        spec = PerturbationSpec("small_delay", delay={"r": r}, epsilon=0.0, g=g)
        expected = -(spectral_derivative(K).values @ self.A.T) * omega * r
        np.testing.assert_allclose(small_delay_P(spec, K, omega).values, expected, atol=1e-10)

    def test_zero_delay(self):
        spec = PerturbationSpec("small_delay", delay={"r": 0.0}, epsilon=1e-3, g=self.linear())
        assert np.max(np.abs(small_delay_P(spec, self.samples(), 0.7).values)) == 0.0


class TestImplicitDelay:
    def test_circle(self):
        R, c = 2.0, 10.0
        tau = implicit_delay_tau(lambda t: np.zeros(3), lambda t: np.array([R * np.cos(t), R * np.sin(t), 0.0]), 0.3, c)
        assert abs(tau - R / c) < 1e-13

    def test_constant_trajectories(self):
        d, c = 3.0, 7.0
        tau, info = implicit_delay_tau(
            lambda t: np.zeros(3), lambda t: np.array([0.0, d, 0.0]), 0.0, c, full_output=True
        )
        assert tau == d / c and info["iterations"] == 1

    def test_bisection_oracle(self):
        c = 10.0
        qj = lambda t: np.array([1 + 0.3 * np.sin(t), 0.0, 0.0])
        tau = implicit_delay_tau(lambda t: np.zeros(3), qj, 0.0, c)
        F = lambda s: s - np.linalg.norm(qj(-s)) / c
        oracle = bisect(F, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
        assert abs(tau - oracle) < 1e-12

    def test_speed_condition(self):
        with pytest.raises(SpeedConditionError):
            implicit_delay_tau(lambda t: np.zeros(2), lambda t: np.array([5 * np.cos(3 * t), 5 * np.sin(3 * t)]), 0.0, 2.0)
        with pytest.raises(SpeedConditionError):
            implicit_delay_tau(lambda t: np.zeros(2), lambda t: np.array([np.cos(t), 0.0]), 0.0, 1.0, xi1=1.0)

    def test_no_convergence(self):
        qj = lambda t: np.array([1 + 0.3 * np.sin(t), 0.0, 0.0])
        with pytest.raises(ConvergenceError):
            implicit_delay_tau(lambda t: np.zeros(3), qj, 0.0, 10.0, maxiter=2, tol=1e-16)

    def test_bad_speed_of_light(self):
        with pytest.raises(InvalidInputError):
            implicit_delay_tau(lambda t: np.zeros(1), lambda t: np.ones(1), 0.0, 0.0)

    def test_stability_constant(self):
        c = 10.0
        qi = lambda t: np.zeros(3)
        qj = lambda t: np.array([1 + 0.3 * np.sin(t), 0.2 * np.cos(2 * t), 0.0])
        tau0, info = implicit_delay_tau(qi, qj, 0.4, c, full_output=True)
        bound = (1 / c) / (1 - info["xi1"])
        for delta in (1e-3, 1e-5):
            for direction in (np.array([1.0, 0, 0]), np.array([0, -1.0, 0]), np.array([0.6, 0.8, 0])):
                pert = lambda t, d=delta * direction: qj(t) + d
                tau1 = implicit_delay_tau(qi, pert, 0.4, c, xi1=info["xi1"])
                assert abs(tau1 - tau0) <= bound * delta * 1.1

    def test_pairwise_eval_on_circle(self):
        R, c, omega = 1.5, 20.0, 0.2
        def orbit(t):
            t = np.asarray(t)[..., None]
            zero = np.zeros_like(t)
            ang = 2 * np.pi * t
            return np.concatenate([zero, zero, zero, R * np.cos(ang), R * np.sin(ang), zero], axis=-1)
        K = PeriodicSamples(orbit(np.arange(64) / 64))
        spec = PerturbationSpec("implicit_pairwise", delay={"c": c, "dim": 3, "pairs": [(0, 1)]})
        expected = trig_eval(K, K.nodes - omega * R / c)
        np.testing.assert_allclose(eval_P(spec, K, omega).values, expected, atol=1e-12)

    def test_pairwise_speed_condition(self):
        K = PeriodicSamples.from_function(lambda t: np.stack([0 * t, np.cos(2 * np.pi * t)], -1), 16)
        spec = PerturbationSpec("implicit_pairwise", delay={"c": 0.5, "dim": 1, "pairs": [(0, 1)]})
        with pytest.raises(SpeedConditionError):
            eval_P(spec, K, 1.0)

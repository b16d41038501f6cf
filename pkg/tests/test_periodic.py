import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbit_persist.exceptions import InvalidInputError
from orbit_persist.periodic import (
    PeriodicSamples,
    c0_distance,
    norm_report,
    periodic_trapezoid,
    quadrature_period,
    spectral_derivative,
    trig_eval,
)

from .conftest import random_trig


def cos_samples(N):
    return PeriodicSamples.from_function(lambda t: np.cos(2 * np.pi * t), N)


class TestConstruction:
    @pytest.mark.parametrize("N", [0, 2, 3, 7])
    def test_rejects_bad_grid(self, N):
        with pytest.raises(InvalidInputError):
            PeriodicSamples(np.zeros((N, 2)))

    def test_rejects_nonfinite(self):
        v = np.zeros((8, 1))
        v[3] = np.nan
        with pytest.raises(InvalidInputError):
            PeriodicSamples(v)

    def test_values_are_read_only(self):
        g = cos_samples(8)
        with pytest.raises(ValueError):
            g.values[0, 0] = 2.0


class TestTrigEval:
    def test_constant(self):
        g = PeriodicSamples(np.full((16, 3), 2.5))
        th = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(trig_eval(g, th), 2.5, atol=1e-15)

    def test_first_harmonic_value(self):
        assert trig_eval(cos_samples(8), 0.125)[0] == pytest.approx(0.7071067811865476, abs=1e-15)

    def test_random_polynomial_vs_direct_sum(self):
        rng = np.random.default_rng(1)
        f = random_trig(rng, n=2, degree=10)
        g = PeriodicSamples(f(np.arange(64) / 64))
        th = rng.uniform(-2, 2, 1000)
        assert np.max(np.abs(trig_eval(g, th) - f(th))) < 1e-12

    def test_nodes_reproduced(self):
        rng = np.random.default_rng(2)
        g = PeriodicSamples(rng.normal(size=(32, 3)))
        np.testing.assert_allclose(trig_eval(g, g.nodes), g.values, atol=1e-13)

    def test_periodic_in_theta(self):
        rng = np.random.default_rng(3)
        g = PeriodicSamples(rng.normal(size=(16, 2)))
        th = rng.uniform(0, 1, 50)
        np.testing.assert_allclose(trig_eval(g, th), trig_eval(g, th + 1.0), atol=1e-13)

    def test_shape_follows_theta(self):
        g = cos_samples(8)
        assert trig_eval(g, np.zeros((3, 4))).shape == (3, 4, 1)
        assert trig_eval(g, 0.3).shape == (1,)


class TestSpectralDerivative:
    def test_constant_is_zero(self):
        g = PeriodicSamples(np.full((8, 2), 4.0))
        assert np.max(np.abs(spectral_derivative(g).values)) < 1e-14

    @pytest.mark.parametrize("N", [8, 16, 64])
    def test_cosine(self, N):
        g = cos_samples(N)
        exact = -2 * np.pi * np.sin(2 * np.pi * g.nodes)
        assert np.max(np.abs(spectral_derivative(g).values[:, 0] - exact)) < 1e-12

    def test_second_order_vs_finite_differences(self):
        rng = np.random.default_rng(4)
        f = random_trig(rng, n=1, degree=10, scale=0.1)
        g = PeriodicSamples(f(np.arange(64) / 64))
        d2 = spectral_derivative(g, 2).values
        h = 1e-5
        th = g.nodes
        fd = (f(th + h) - 2 * f(th) + f(th - h)) / h**2
        assert np.max(np.abs(d2 - fd)) < 1e-6 * max(1.0, np.max(np.abs(d2)))

    def test_composition(self):
        rng = np.random.default_rng(5)
        f = random_trig(rng, n=2, degree=8)
        g = PeriodicSamples(f(np.arange(32) / 32))
        twice = spectral_derivative(spectral_derivative(g))
        np.testing.assert_allclose(twice.values, spectral_derivative(g, 2).values, atol=1e-9)


class TestDistance:
    def test_identical(self):
        g = cos_samples(8)
        assert c0_distance((0.3, g), (0.3, g)) == 0.0

    def test_frequency_dominates(self):
        z = PeriodicSamples.zeros(8, 2)
        assert c0_distance((0.5, z), (0.2, z)) == pytest.approx(0.3, abs=1e-15)

    def test_single_node(self):
        g = cos_samples(16)
        v = g.values.copy()
        v[5, 0] += 1e-3
        assert c0_distance((0.0, g), (0.0, PeriodicSamples(v))) == pytest.approx(1e-3, rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            c0_distance((0, cos_samples(8)), (0, cos_samples(16)))


_pair = st.tuples(
    st.floats(-10, 10, allow_nan=False),
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=16, max_size=16),
)


def _as_pair(p):
    return p[0], PeriodicSamples(np.array(p[1]).reshape(8, 2))


@settings(max_examples=200, deadline=None)
@given(_pair, _pair, _pair)
def test_c0_distance_metric_axioms(a, b, c):
    a, b, c = _as_pair(a), _as_pair(b), _as_pair(c)
    dab = c0_distance(a, b)
    assert dab >= 0
    assert dab == c0_distance(b, a)
    assert c0_distance(a, a) == 0
    assert c0_distance(a, c) <= dab + c0_distance(b, c) + 1e-12


class TestQuadrature:
    def test_constant(self):
        assert quadrature_period(np.ones(65), 0.0, 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_half_sine(self):
        # nodes of an N = 64 grid on [0, 1/2]
        s = np.arange(33) / 64
        assert quadrature_period(np.sin(2 * np.pi * s), 0.0, 0.5) == pytest.approx(1 / np.pi, abs=1e-8)

    @pytest.mark.parametrize("m,tol", [(4, 1e-2), (7, 1e-4), (12, 1e-9), (64, 1e-9), (65, 1e-9)])
    def test_polynomial_vs_refined_trapezoid(self, m, tol):
        poly = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5, -0.7])
        a, b = 0.1, 0.85
        s = np.linspace(a, b, m + 1)
        got = quadrature_period(poly(s), a, b)
        # Richardson-refined trapezoid (Romberg) oracle
        R = []
        for level in range(12):
            x = np.linspace(a, b, 2**level + 1)
            y = poly(x)
            R.append((b - a) / 2**level * (y.sum() - 0.5 * (y[0] + y[-1])))
        for j in range(1, 6):
            R = [(4**j * R[i + 1] - R[i]) / (4**j - 1) for i in range(len(R) - 1)]
        exact = R[-1]
        assert abs(got - exact) / abs(exact) < tol

    def test_full_period_matches_trapezoid(self):
        f = lambda t: np.exp(np.sin(2 * np.pi * t))
        for N in (32, 64):
            g = PeriodicSamples.from_function(f, N)
            simpson = quadrature_period(f(np.arange(N + 1) / N), 0.0, 1.0)
            assert abs(simpson - periodic_trapezoid(g)[0]) < 10 * N**-4

    def test_rejects_long_interval(self):
        with pytest.raises(InvalidInputError):
            quadrature_period(np.ones(5), 0.0, 1.5)


class TestNormReport:
    def test_zero(self):
        r = norm_report(PeriodicSamples.zeros(16, 2), 3)
        assert r.c0 == 0 and all(x == 0 for x in r.deriv_sup) and r.lip_est == 0

    def test_cosine(self):
        r = norm_report(cos_samples(64), 1)
        assert r.c0 == pytest.approx(1.0, abs=1e-10)
        assert r.deriv_sup[1] == pytest.approx(2 * np.pi, abs=1e-10)

    def test_random_vs_dense_oracle(self):
        rng = np.random.default_rng(6)
        f = random_trig(rng, n=2, degree=10)
        N = 64
        g = PeriodicSamples(f(np.arange(N) / N))
        r = norm_report(g, 3)
        dense = np.arange(16 * N) / (16 * N)
        for order in range(4):
            oracle = np.max(np.linalg.norm(f(dense, order), axis=1))
            assert r.deriv_sup[order] == pytest.approx(oracle, rel=0.01)
        oracle_lip = np.max(np.linalg.norm(f(dense, 4), axis=1))
        assert r.lip_est == pytest.approx(oracle_lip, rel=0.01)


class TestSerialization:
    def test_csv_round_trip(self):
        rng = np.random.default_rng(7)
        g = PeriodicSamples(rng.normal(size=(16, 3)) * 1e3)
        back = PeriodicSamples.from_csv(g.to_csv())
        np.testing.assert_array_equal(back.values, g.values)
        assert g.to_csv().splitlines()[0] == "theta,x1,x2,x3"

    def test_json_round_trip(self):
        rng = np.random.default_rng(8)
        g = PeriodicSamples(rng.normal(size=(8, 2)))
        np.testing.assert_array_equal(PeriodicSamples.from_json(g.to_json()).values, g.values)

    def test_bad_csv(self):
        with pytest.raises(InvalidInputError):
            PeriodicSamples.from_csv("x,y\n1,2\n")


def test_resample_and_shift_agree_with_eval():
    rng = np.random.default_rng(9)
    f = random_trig(rng, n=2, degree=6)
    g = PeriodicSamples(f(np.arange(32) / 32))
    np.testing.assert_allclose(g.resample(128, shift=0.37), f(0.37 + np.arange(128) / 128), atol=1e-12)
    np.testing.assert_allclose(g.shift(3).values, f((np.arange(32) + 3) / 32), atol=1e-12)
    assert math.isclose(float(trig_eval(g.shift(3), 0.0)[0]), float(f(3 / 32)[0]), abs_tol=1e-12)

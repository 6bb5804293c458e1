import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwr_diffusion.problem import (
    Coefficients,
    ConeSolution,
    ControlVolume,
    ProblemData,
    in_control_volume,
)

SOL = ConeSolution(a=50.0, s=-0.3333)
DATA = ProblemData()


def central_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def fd_gradient(u, x, t, h=1e-6):
    out = np.zeros(2)
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        out[d] = (u(x + e, t) - u(x - e, t)) / (2 * h)
    return out


def fd_laplacian(u, x, t, h=2e-4):
    val = u(x, t)
    total = 0.0
    for d in range(2):
        e = np.zeros(2)
        e[d] = h
        total += (u(x + e, t) - 2 * val + u(x - e, t)) / h**2
    return total


def smooth_random_samples(rng, n):
    """Random (x, t) away from the temporal kinks of the height profile."""
    pts = []
    while len(pts) < n:
        x = rng.uniform(0.05, 0.95, size=2)
        t = rng.uniform(0.0, 2.0)
        frac = t - math.floor(t)
        if min(abs(frac), abs(frac - 0.5), abs(frac - 1.0)) > 1e-2:
            pts.append((x, t))
    return pts


class TestExactSolution:
    def test_cone_center_value_at_t0(self):
        # at the cone center only the height factor remains
        val = SOL.u(np.array([0.75, 0.5]), 0.0)
        expected = (-1.0) * (-0.3333) * math.atan(-5 * math.pi)
        assert val == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(-0.5024, abs=5e-4)

    def test_height_continuous_at_half_period(self):
        left = (-1.0) * SOL.s * math.atan(5 * math.pi * (4 * 0.4999999 - 1))
        right = SOL.u2(0.5)
        assert right == pytest.approx((1.0) * SOL.s * math.atan(-5 * math.pi), abs=1e-15)
        assert right == pytest.approx(left, abs=1e-5)

    def test_far_field_bump_value(self):
        u1 = SOL.u1(np.array([0.0, 0.0]), 0.0)
        assert u1 == pytest.approx(1.0 / (1.0 + 50.0 * (0.5625 + 0.25)), abs=1e-15)
        assert u1 == pytest.approx(0.02402, abs=5e-6)

    def test_periodicity(self, rng):
        for _ in range(25):
            x = rng.uniform(0, 1, size=2)
            t = rng.uniform(0, 1)
            assert SOL.u(x, t + 1.0) == pytest.approx(SOL.u(x, t), abs=1e-14)

    def test_boundedness(self, rng):
        xs = rng.uniform(-2, 2, size=(500, 2))
        ts = rng.uniform(0, 3, size=500)
        u1 = np.array([SOL.u1(x, t) for x, t in zip(xs, ts)])
        u2 = SOL.u2(ts)
        assert np.all(np.abs(u1) <= 1.0 + 1e-15)
        assert np.all(np.abs(u2) <= abs(SOL.s) * math.pi / 2 + 1e-15)

    def test_temporal_continuity_at_kinks(self, rng):
        eps = 1e-13
        for tk in (0.5, 1.0):
            for _ in range(10):
                x = rng.uniform(0, 1, size=2)
                assert SOL.u(x, tk - eps) == pytest.approx(SOL.u(x, tk), abs=1e-11)

    def test_vectorized_evaluation_matches_scalar(self, rng):
        xs = rng.uniform(0, 1, size=(20, 2))
        t = 0.37
        vals = SOL.u(xs, t)
        for k in range(20):
            assert vals[k] == pytest.approx(SOL.u(xs[k], t), abs=1e-15)


class TestDerivatives:
    def test_gradient_vanishes_at_cone_center(self):
        m = np.array(SOL.center(0.2))
        assert np.allclose(SOL.grad(m, 0.2), 0.0, atol=1e-14)

    def test_gradient_against_finite_differences(self, rng):
        for x, t in smooth_random_samples(rng, 100):
            exact = SOL.grad(x, t)
            approx = fd_gradient(SOL.u, x, t)
            assert np.allclose(exact, approx, rtol=1e-5, atol=1e-7)

    def test_time_derivative_against_finite_differences(self, rng):
        for x, t in smooth_random_samples(rng, 100):
            exact = SOL.dt(x, t)
            approx = central_diff(lambda s: SOL.u(x, s), t)
            assert exact == pytest.approx(approx, rel=1e-5, abs=1e-6)

    def test_laplacian_against_finite_differences(self, rng):
        for x, t in smooth_random_samples(rng, 50):
            exact = SOL.laplacian(x, t)
            approx = fd_laplacian(SOL.u, x, t)
            assert exact == pytest.approx(approx, rel=2e-4, abs=2e-4)


class TestDerivedData:
    def test_rhs_consistency_with_fd_oracle(self, rng):
        c = DATA.coefficients
        for x, t in smooth_random_samples(rng, 100):
            lhs = c.rho * central_diff(lambda s: SOL.u(x, s), t) - c.epsilon * fd_laplacian(
                SOL.u, x, t
            )
            assert lhs == pytest.approx(float(DATA.rhs_f(x, t)), rel=1e-3, abs=1e-4)

    def test_dirichlet_matches_solution(self, rng):
        for _ in range(20):
            x = np.array([rng.uniform(0, 1), 0.0])
            t = rng.uniform(0, 1.25)
            assert DATA.dirichlet_g(x, t) == SOL.u(x, t)

    def test_neumann_sign_convention(self):
        # flux through x = 0 with outward normal (-1, 0): compare against a
        # one-sided finite difference of u along -x
        x = np.array([0.0, 0.5])
        t = 0.1
        h = 1e-6
        du_dx = (SOL.u(np.array([h, 0.5]), t) - SOL.u(np.array([-h, 0.5]), t)) / (2 * h)
        expected = DATA.coefficients.epsilon * (-du_dx)
        assert float(DATA.neumann_h(x, t)) == pytest.approx(expected, rel=1e-6, abs=1e-9)

    def test_initial_value(self, rng):
        xs = rng.uniform(0, 1, size=(10, 2))
        assert np.allclose(DATA.initial(xs), SOL.u(xs, 0.0), atol=1e-15)


class TestCoefficients:
    def test_positivity_enforced(self):
        with pytest.raises(ValueError):
            Coefficients(rho=0.0)
        with pytest.raises(ValueError):
            Coefficients(epsilon=-1.0)


class TestControlVolume:
    def test_before_window(self):
        cv = ControlVolume()
        assert not cv.contains(np.array([0.5, 0.75]), 0.2)

    def test_on_trajectory_inside(self):
        cv = ControlVolume()
        t = 0.5
        mx, my = cv.trajectory(t)
        x = np.array([0.5 + mx, 0.5 + my])
        assert cv.contains(x, t)

    def test_after_window(self):
        cv = ControlVolume()
        assert not cv.contains(np.array([0.5, 0.5]), 1.1)

    def test_half_open_box(self):
        # power-of-two geometry so corner coordinates are exact floats
        cv = ControlVolume(box=(-0.125, 0.125, -0.125, 0.125), r1=0.25, omega=0.0)
        t = 0.5
        lower = np.array([0.5 + 0.25 - 0.125, 0.5 - 0.125])
        upper = np.array([0.5 + 0.25 + 0.125, 0.5 + 0.125])
        assert cv.contains(lower, t)        # closed lower bound
        assert not cv.contains(upper, t)    # open upper bound

    def test_function_alias(self):
        cv = ControlVolume()
        assert bool(in_control_volume(np.array([0.5, 0.25]), 0.75, cv)) == bool(
            cv.contains(np.array([0.5, 0.25]), 0.75)
        )

    def test_leaving_domain_bounds_rejected(self):
        with pytest.raises(ValueError):
            ControlVolume(r1=0.5)  # swings outside the unit square

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            ControlVolume(box=(0.1, -0.1, -0.1, 0.1))

    def test_vectorized_membership(self, rng):
        cv = ControlVolume()
        xs = rng.uniform(0, 1, size=(50, 2))
        mask = cv.contains(xs, 0.6)
        for k in range(50):
            assert mask[k] == cv.contains(xs[k], 0.6)

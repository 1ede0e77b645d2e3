"""Reference minimisers: the 1D ramp and the radial annulus profile."""

import math

import numpy as np
import pytest

from orliczfb import mesh, oracle, orlicz
from orliczfb.errors import InvalidParameter


# ============================================================================
# 1D
# ============================================================================

class TestOneD:

    def test_quadratic(self, quadratic):
        sol = oracle.solve_1d_exact(1.0, 0.5, quadratic)
        assert sol.lam == 2.0 and sol.J == pytest.approx(1.0)
        np.testing.assert_allclose(sol(np.array([0.0, 0.25, 0.5, 0.9])), [1.0, 0.5, 0.0, 0.0])

    def test_sum_of_powers(self, cubic):
        # 0.5 G(2) with G(t) = t^2/2 + t^4/4
        assert oracle.solve_1d_exact(1.0, 0.5, cubic).J == pytest.approx(3.0)

    def test_full_volume(self, quadratic):
        assert oracle.solve_1d_exact(1.0, 1.0, quadratic).J == pytest.approx(0.5)

    @pytest.mark.parametrize("args", [(0.0, 0.5), (1.0, 0.0), (1.0, 1.5)])
    def test_invalid(self, quadratic, args):
        with pytest.raises(InvalidParameter):
            oracle.solve_1d_exact(*args, quadratic)

    def test_on_grid(self, quadratic):
        g = mesh.interval(8)
        f = oracle.solve_1d_exact(1.0, 0.5, quadratic).on_grid(g)
        assert f.dirichlet_error() == 0.0

    def test_random_competitors(self, builtin_nf):
        """No admissible piecewise-linear profile beats the ramp."""
        rng = np.random.default_rng(2024)
        alpha, phi_left = 0.5, 1.0
        best = oracle.solve_1d_exact(phi_left, alpha, builtin_nf).J
        m, k = 10_000, 8
        support = alpha * rng.uniform(0.2, 1.0, m)                 # |{u > 0}| <= alpha
        knots = np.sort(rng.random((m, k)), axis=1) * support[:, None]
        x = np.column_stack([np.zeros(m), knots, support])
        u = np.column_stack([np.full(m, phi_left), rng.uniform(0, 2, (m, k)), np.zeros(m)])
        dx = np.diff(x, axis=1)
        du = np.diff(u, axis=1)
        keep = dx > 1e-12
        slopes = np.where(keep, np.abs(du) / np.where(keep, dx, 1.0), 0.0)
        J = np.sum(np.where(keep, dx * builtin_nf.G(slopes), 0.0), axis=1)
        assert J.min() >= best * (1 - 1e-12)

    def test_monotone_in_alpha(self, builtin_nf):
        Js = [oracle.solve_1d_exact(1.0, a, builtin_nf).J for a in (0.2, 0.4, 0.6, 0.8, 1.0)]
        assert np.all(np.diff(Js) < 0)


# ============================================================================
# Radial
# ============================================================================

@pytest.fixture(scope="module")
def radial_p2():
    return oracle.solve_radial(1.0, 1.0, 0.75 * math.pi, orlicz.make_power(2))


class TestRadialQuadratic:

    def test_constants(self, radial_p2):
        s = radial_p2
        assert s.r_star == pytest.approx(0.5, rel=1e-14)
        assert s.flux_constant == pytest.approx(1 / math.log(2), rel=1e-10)
        assert s.lam == pytest.approx(2 / math.log(2), rel=1e-10)
        assert s.J == pytest.approx(math.pi / math.log(2), rel=1e-9)

    def test_profile_is_logarithmic(self, radial_p2):
        s = radial_p2
        np.testing.assert_allclose(s.u, np.log(s.r / 0.5) / math.log(2), atol=1e-10)

    def test_call_outside_annulus(self, radial_p2):
        assert radial_p2(0.2) == 0.0 and radial_p2(1.0) == pytest.approx(1.0)

    def test_on_grid(self, radial_p2):
        g = mesh.disc(32)
        f = radial_p2.on_grid(g)
        assert f.dirichlet_error() == 0.0
        assert f.values.min() >= 0.0

    def test_three_dimensions(self):
        # u' = C / r^2, u(R) = C (1/r* - 1/R)
        alpha = 4 / 3 * math.pi * (1 - 0.5 ** 3)
        s = oracle.solve_radial(1.0, 1.0, alpha, orlicz.make_power(2), N=3)
        assert s.r_star == pytest.approx(0.5)
        assert s.flux_constant == pytest.approx(1.0, rel=1e-10)
        assert s.lam == pytest.approx(4.0, rel=1e-10)


class TestRadialGeneral:

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_power_closed_form(self, p):
        nf = orlicz.make_power(p)
        R, phi, alpha = 1.0, 0.8, 0.6 * math.pi
        s = oracle.solve_radial(R, phi, alpha, nf)
        q = 1 / (p - 1)
        rs = math.sqrt(1 - 0.6)
        C = (phi * (1 - q) / (R ** (1 - q) - rs ** (1 - q))) ** (p - 1)
        assert s.r_star == pytest.approx(rs, rel=1e-13)
        assert s.flux_constant == pytest.approx(C, rel=1e-9)
        assert s.lam == pytest.approx((C / rs) ** q, rel=1e-9)

    def test_flux_identity(self, cubic):
        s = oracle.solve_radial(1.0, 0.3, 0.25 * math.pi, cubic)
        flux = cubic.g(s.slope(s.r)) * s.r
        np.testing.assert_allclose(flux, s.flux_constant, rtol=1e-10)
        assert s.u[-1] == pytest.approx(0.3, rel=1e-9)
        assert s.u[0] == 0.0

    def test_table_derivative(self, cubic):
        s = oracle.solve_radial(1.0, 1.0, 0.75 * math.pi, cubic, n_table=2001)
        mid = 0.5 * (s.r[1:] + s.r[:-1])
        fd = np.diff(s.u) / np.diff(s.r)
        np.testing.assert_allclose(fd, s.slope(mid), rtol=1e-5)

    def test_energy_decreases_with_alpha(self, cubic):
        Js = [oracle.solve_radial(1.0, 1.0, a * math.pi, cubic).J for a in (0.3, 0.5, 0.75)]
        assert np.all(np.diff(Js) < 0)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0),
                                      (1.0, 1.0, 4.0)])
    def test_invalid(self, quadratic, args):
        with pytest.raises(InvalidParameter):
            oracle.solve_radial(*args, quadratic)

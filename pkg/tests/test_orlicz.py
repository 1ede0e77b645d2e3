"""N-functions: constructors, inverses, structural inequalities, norms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orliczfb import mesh, orlicz
from orliczfb.errors import InvalidParameter, NumericError, PropertyViolation, RangeError


# ============================================================================
# Constructors
# ============================================================================

class TestMakePower:

    def test_quadratic_constants(self):
        nf = orlicz.make_power(2)
        assert nf.delta == nf.g0 == 1.0
        assert nf.g(3.7) == pytest.approx(3.7)

    def test_quadratic_G(self):
        assert orlicz.make_power(2).G(3.0) == pytest.approx(4.5, rel=1e-15)

    def test_cubic_log_derivative(self):
        nf = orlicz.make_power(3)
        assert nf.g(2.0) == pytest.approx(4.0)
        assert nf.g_prime(2.0) == pytest.approx(4.0)
        assert 2.0 * nf.g_prime(2.0) / nf.g(2.0) == pytest.approx(2.0)

    @pytest.mark.parametrize("p", [1.0, 0.5, -2.0, float("nan")])
    def test_rejects_small_exponent(self, p):
        with pytest.raises(InvalidParameter):
            orlicz.make_power(p)

    def test_G_at_zero(self, builtin_nf):
        assert builtin_nf.G(0.0) == 0.0


class TestMakeSumPowers:

    def test_t_plus_t_cubed(self):
        nf = orlicz.make_sum_powers([(1, 2), (1, 4)])
        assert (nf.delta, nf.g0) == (1.0, 3.0)
        assert nf.g(2.0) == pytest.approx(10.0)

    def test_single_term_reduces_to_power(self):
        assert orlicz.make_sum_powers([(1, 2)]).g(5.0) == pytest.approx(5.0)

    def test_scaled_term(self):
        nf = orlicz.make_sum_powers([(2, 3)])
        assert nf.g(1.0) == pytest.approx(2.0)
        assert nf.G(1.0) == pytest.approx(2.0 / 3.0)

    @pytest.mark.parametrize("coeffs", [[], [(1, 1.0)], [(0, 2)], [(-1, 3)], [(1, 2), (1, 0.9)]])
    def test_rejects_bad_terms(self, coeffs):
        with pytest.raises(InvalidParameter):
            orlicz.make_sum_powers(coeffs)

    def test_spec_round_trip(self):
        spec = {"kind": "sum_powers", "terms": [[1.0, 2.0], [1.0, 4.0]]}
        nf = orlicz.from_spec(spec)
        assert orlicz.from_spec(nf.to_spec()).g(1.7) == nf.g(1.7)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameter):
            orlicz.from_spec({"kind": "exp"})


# ============================================================================
# Inverse, conjugate-type integral and Phi
# ============================================================================

class TestGInverse:

    def test_cube_root(self):
        assert orlicz.g_inverse(orlicz.make_power(4), 8.0) == pytest.approx(2.0, rel=1e-12)

    def test_zero(self):
        assert orlicz.g_inverse(orlicz.make_power(2), 0.0) == 0.0

    def test_sum(self, cubic):
        assert orlicz.g_inverse(cubic, 10.0) == pytest.approx(2.0, rel=1e-12)

    def test_negative_rejected(self, quadratic):
        with pytest.raises(InvalidParameter):
            orlicz.g_inverse(quadratic, -1.0)

    def test_out_of_range(self):
        nf = orlicz.make_power(1.5)      # g(t) = sqrt(t); needs t = y^2
        with pytest.raises(RangeError):
            orlicz.g_inverse(nf, 1e200)

    def test_round_trip_on_grid(self, builtin_nf):
        t = np.geomspace(1e-3, 1e3, 61)
        back = np.array([orlicz.g_inverse(builtin_nf, float(builtin_nf.g(x))) for x in t])
        np.testing.assert_allclose(back, t, rtol=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(t=st.floats(1e-3, 1e3), k=st.integers(0, 4))
    def test_round_trip_property(self, t, k):
        nf = orlicz.builtin_nfunctions()[k]
        assert orlicz.g_inverse(nf, float(nf.g(t))) == pytest.approx(t, rel=1e-8)


class TestGTilde:

    def test_linear(self, quadratic):
        assert orlicz.G_tilde(quadratic, 2.0) == pytest.approx(2.0, rel=1e-8)

    def test_square_root_integral(self):
        # g(t) = t^2, g^-1(s) = sqrt(s), integral over [0, 1] is 2/3
        assert orlicz.G_tilde(orlicz.make_power(3), 1.0) == pytest.approx(2.0 / 3.0, rel=1e-8)

    def test_zero(self, builtin_nf):
        assert orlicz.G_tilde(builtin_nf, 0.0) == 0.0

    def test_derivative_is_inverse(self, cubic):
        t, d = 3.0, 1e-4
        fd = (orlicz.G_tilde(cubic, t + d) - orlicz.G_tilde(cubic, t - d)) / (2 * d)
        assert fd == pytest.approx(orlicz.g_inverse(cubic, t), rel=1e-6)


class TestPhi:

    def test_quadratic(self, quadratic):
        assert orlicz.phi(quadratic, 2.0) == pytest.approx(2.0)

    def test_cubic_power(self):
        assert orlicz.phi(orlicz.make_power(3), 3.0) == pytest.approx(18.0)

    def test_zero(self, builtin_nf):
        assert orlicz.phi(builtin_nf, 0.0) == 0.0

    def test_nonnegative_and_nondecreasing(self, builtin_nf):
        t = np.linspace(0.0, 50.0, 2001)
        v = orlicz.phi(builtin_nf, t)
        assert np.all(v >= 0)
        assert np.all(np.diff(v) >= -1e-12 * np.abs(v[1:]))


# ============================================================================
# Structural conditions
# ============================================================================

class TestVerifyCondition:

    def test_power(self):
        r = orlicz.verify_condition(orlicz.make_power(3), 1e-3, 1e3, 1000)
        assert r["ok"]
        assert r["delta_hat"] == pytest.approx(2.0) and r["g0_hat"] == pytest.approx(2.0)

    def test_sum_extremes(self, cubic):
        r = orlicz.verify_condition(cubic, 1e-6, 1e6, 400)
        assert r["ok"]
        assert r["delta_hat"] == pytest.approx(1.0, abs=1e-9)
        assert r["g0_hat"] == pytest.approx(3.0, abs=1e-9)

    def test_wrong_declared_delta(self):
        nf = orlicz.make_custom(lambda t: t, lambda t: np.ones_like(t), delta=2.0, g0=2.0)
        assert not orlicz.verify_condition(nf, 1e-3, 1e3, 100)["ok"]

    def test_nonfinite(self):
        nf = orlicz.make_custom(lambda t: np.where(t > 1, np.nan, t), lambda t: np.ones_like(t),
                                delta=1.0, g0=1.0)
        with pytest.raises(NumericError):
            orlicz.verify_condition(nf, 1e-2, 1e2, 50)

    @pytest.mark.parametrize("args", [(0.0, 1.0, 10), (2.0, 1.0, 10), (1e-3, 1.0, 1)])
    def test_bad_range(self, quadratic, args):
        with pytest.raises(InvalidParameter):
            orlicz.verify_condition(quadratic, *args)


class TestGProperties:

    def test_builtins_pass(self, builtin_nf):
        margins = orlicz.check_g_properties(builtin_nf)
        assert min(margins.values()) >= -1e-9

    def test_quadratic_is_tight(self, quadratic):
        m = orlicz.check_g_properties(quadratic)
        assert abs(m["g1_lower"]) < 1e-12 and abs(m["g1_upper"]) < 1e-12

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
    def test_power_g3_lower_equality(self, p):
        nf = orlicz.make_power(p)
        t = np.geomspace(1e-3, 1e3, 25)
        np.testing.assert_allclose(nf.G(t), t * nf.g(t) / (1 + nf.g0), rtol=1e-13)

    def test_sum_worked_point(self, cubic):
        gt, gst = cubic.g(1.0), cubic.g(2.0)
        assert gt == 2.0 and gst == 10.0
        assert 2.0 * gt <= gst <= 8.0 * gt

    def test_violation_has_witness(self):
        # g(t) = t^3 declared with g0 = 1: (g1) upper bound fails for s > 1
        nf = orlicz.make_custom(lambda t: t ** 3, lambda t: 3 * t ** 2, delta=1.0, g0=1.0,
                                G=lambda t: t ** 4 / 4)
        with pytest.raises(PropertyViolation) as info:
            orlicz.check_g_properties(nf)
        assert set(info.value.witness) == {"s", "t"}


class TestGTildeBounds:

    def test_builtins_pass(self, builtin_nf):
        m = orlicz.check_g_tilde_bounds(builtin_nf)
        assert m["lower"] >= -1e-7 and m["upper"] >= -1e-7

    @pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
    def test_printed_constants_fail_for_powers(self, p):
        # G~(st) = s^(1+1/d) G~(t) exactly, below any lower bound with factor > 1
        with pytest.raises(PropertyViolation):
            orlicz.check_g_tilde_bounds(orlicz.make_power(p), printed_constants=True)

    def test_power_scaling_exact(self):
        nf = orlicz.make_power(3.0)     # delta = 2
        for s in (0.1, 3.0):
            assert orlicz.G_tilde(nf, 2.0 * s) == pytest.approx(
                s ** 1.5 * orlicz.G_tilde(nf, 2.0), rel=1e-7)


class TestCondi:

    @pytest.mark.parametrize("p,k", [(2.0, 1.0), (3.0, 1.0), (4.0, 1.0)])
    def test_bounded(self, p, k):
        r = orlicz.check_condi(orlicz.make_power(p), 1.0)
        assert r["ok"] and r["k_hat"] == pytest.approx(k)

    def test_sqrt_unbounded(self):
        assert not orlicz.check_condi(orlicz.make_power(1.5), 1.0)["ok"]

    def test_sum(self, cubic):
        r = orlicz.check_condi(cubic, 1.0)
        assert r["ok"] and r["k_hat"] == pytest.approx(2.0)

    def test_bad_t0(self, quadratic):
        with pytest.raises(InvalidParameter):
            orlicz.check_condi(quadratic, 0.0)


# ============================================================================
# Luxemburg norm, Poincare and embedding
# ============================================================================

class TestLuxemburg:

    def test_constant_quadratic(self, quadratic):
        w = np.full(10, 0.1)
        assert orlicz.luxemburg_norm(np.full(10, 3.0), w, quadratic) == pytest.approx(
            3.0 / math.sqrt(2.0), rel=1e-12)

    def test_zero_field(self, quadratic):
        assert orlicz.luxemburg_norm(np.zeros(4), np.ones(4) / 4, quadratic) == 0.0

    def test_doubling(self, quadratic):
        w = np.full(10, 0.1)
        assert orlicz.luxemburg_norm(np.full(10, 6.0), w, quadratic) == pytest.approx(
            6.0 / math.sqrt(2.0), rel=1e-12)

    def test_defining_equation(self, builtin_nf, rng):
        u, w = rng.normal(size=50), rng.random(50)
        k = orlicz.luxemburg_norm(u, w, builtin_nf)
        assert float(w @ builtin_nf.G(np.abs(u) / k)) == pytest.approx(1.0, abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(c=st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3), k=st.integers(0, 4),
           seed=st.integers(0, 2 ** 16))
    def test_homogeneity(self, c, k, seed):
        nf = orlicz.builtin_nfunctions()[k]
        r = np.random.default_rng(seed)
        u, w = r.normal(size=20), r.random(20) + 0.01
        base = orlicz.luxemburg_norm(u, w, nf)
        assert orlicz.luxemburg_norm(c * u, w, nf) == pytest.approx(abs(c) * base, rel=1e-9)

    def test_unit_ball(self, builtin_nf, rng):
        for _ in range(50):
            u, w = rng.normal(size=30), rng.random(30) / 30
            if float(w @ builtin_nf.G(np.abs(u))) <= 1.0:
                assert orlicz.luxemburg_norm(u, w, builtin_nf) <= 1.0 + 1e-12

    def test_bad_weights(self, quadratic):
        with pytest.raises(InvalidParameter):
            orlicz.luxemburg_norm([1.0, 2.0], [1.0, -1.0], quadratic)


def _random_dirichlet_zero(grid, rng):
    v = np.where(grid.interior, rng.normal(size=grid.n_nodes), 0.0)
    return mesh.ScalarField(grid, v * rng.uniform(0.01, 20.0))


class TestPoincare:

    @pytest.mark.parametrize("make", [lambda: mesh.interval(40, left=0.0, right=0.0),
                                      lambda: mesh.square(12, phi0=0.0)], ids=["1d", "2d"])
    def test_discrete_inequality(self, builtin_nf, rng, make):
        grid = make()
        R = grid.diameter
        for _ in range(20):
            f = _random_dirichlet_zero(grid, rng)
            ubar = grid.center_op @ np.abs(f.values)
            lhs = float(grid.cell_weights @ builtin_nf.G(ubar / R))
            grads, w = mesh.gradient_cells(f)
            rhs = float(w @ builtin_nf.G(np.linalg.norm(grads, axis=1)))
            assert lhs <= rhs * (1 + 1e-12)


class TestEmbedding:

    def test_bound_never_exceeded(self, builtin_nf, rng):
        n = 64
        w = np.full(n, 1.0 / n)
        bound = orlicz.embedding_bound(builtin_nf, 1.0)
        q = 1.0 + builtin_nf.delta
        worst = 0.0
        for _ in range(1000):
            u = rng.standard_cauchy(n)
            u /= orlicz.luxemburg_norm(u, w, builtin_nf) * rng.uniform(1.0, 3.0)
            worst = max(worst, float(w @ np.abs(u) ** q) ** (1 / q))
        assert worst <= bound

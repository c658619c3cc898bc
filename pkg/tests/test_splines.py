import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mvlme.splines import KnotSet, make_knots, ns_deriv, ns_eval, ns_integral


def truncated_power(t, knots: KnotSet):
    """Direct restricted-cubic construction, evaluated term by term."""
    lo, hi = knots.boundary_lo, knots.boundary_hi
    u = (np.atleast_1d(np.asarray(t, float)) - lo) / (hi - lo)
    inner = [(k - lo) / (hi - lo) for k in knots.interior]
    ks = [0.0] + inner  # k_0 .. k_m
    km = ks[-1]
    cube = lambda x: np.where(x > 0, x, 0.0) ** 3
    cols = [u]
    for kj in ks[:-1] if inner else []:
        cols.append(cube(u - kj) - cube(u - km) * (1 - kj) / (1 - km)
                    + cube(u - 1) * (km - kj) / (1 - km))
    return np.column_stack(cols)


def trapezoid(f, a, b, n=1_000_000):
    s = np.linspace(a, b, n + 1)
    return np.trapezoid(f(s), s, axis=0)


class TestMakeKnots:
    def test_symmetric_grid_median(self):
        k = make_knots([0, 1, 2, 3, 4], 2)
        assert (k.boundary_lo, k.boundary_hi) == (0, 4)
        assert k.interior == (2.0,)

    def test_single_time_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            make_knots([5], 2)

    def test_interior_at_empirical_quantiles(self):
        t = np.random.default_rng(0).uniform(6, 20, 200)
        k = make_knots(t, 3)
        np.testing.assert_array_equal(k.interior, np.quantile(t, [1 / 3, 2 / 3]))
        assert k.boundary_lo == t.min() and k.boundary_hi == t.max()

    @pytest.mark.parametrize("bad", [[1.0, np.nan, 3.0], [1.0, np.inf, 2.0]])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError, match="finite"):
            make_knots(bad, 1)

    def test_df_below_one_rejected(self):
        with pytest.raises(ValueError):
            make_knots([0, 1, 2], 0)

    def test_boundary_override(self):
        k = make_knots([1, 2, 3, 4, 5], 2, boundary=(0, 10))
        assert (k.boundary_lo, k.boundary_hi) == (0, 10)

    def test_bad_boundary_rejected(self):
        with pytest.raises(ValueError):
            make_knots([1, 2, 3], 2, boundary=(5, 1))

    def test_interior_count_is_df_minus_one(self):
        k = make_knots(np.linspace(0, 1, 50), 4)
        assert len(k.interior) == 3 and k.df == 4


class TestEval:
    @pytest.mark.parametrize("df", [1, 2, 3, 5])
    def test_matches_truncated_power_oracle(self, df):
        k = make_knots(np.random.default_rng(df).uniform(6, 20, 100), df)
        t = np.linspace(0, 30, 301)
        np.testing.assert_allclose(ns_eval(t, k), truncated_power(t, k), atol=1e-12, rtol=1e-12)

    def test_boundary_value_reproduced_by_oracle(self):
        k = make_knots([0, 1, 2, 3, 4], 2)
        np.testing.assert_array_equal(ns_eval(0.0, k), truncated_power(0.0, k)[0])
        np.testing.assert_allclose(ns_eval(4.0, k), truncated_power(4.0, k)[0], rtol=1e-14)

    def test_linear_beyond_boundaries(self):
        k = make_knots(np.linspace(6, 20, 40), 3)
        h = 0.5
        for t in (20.5, 25.0, 40.0, 5.0, 0.0, -3.0):
            second = ns_eval(t + h, k) - 2 * ns_eval(t, k) + ns_eval(t - h, k)
            if t - h >= 20 or t + h <= 6:
                np.testing.assert_allclose(second, 0.0, atol=1e-10)

    def test_scalar_and_vector_shapes(self):
        k = make_knots(np.linspace(0, 1, 10), 3)
        assert ns_eval(0.3, k).shape == (3,)
        assert ns_eval([0.3, 0.4], k).shape == (2, 3)

    def test_non_finite_t_rejected(self):
        k = make_knots(np.linspace(0, 1, 10), 2)
        with pytest.raises(ValueError):
            ns_eval(np.nan, k)

    def test_deterministic(self):
        k = make_knots(np.linspace(0, 1, 10), 3)
        t = np.linspace(-1, 2, 77)
        assert ns_eval(t, k).tobytes() == ns_eval(t, k).tobytes()

    def test_second_derivative_continuous_at_knots(self):
        k = make_knots(np.random.default_rng(2).uniform(0, 10, 60), 4)
        h = 1e-4
        for kn in (k.boundary_lo, *k.interior, k.boundary_hi):
            left = (ns_deriv(kn, k) - ns_deriv(kn - h, k)) / h
            right = (ns_deriv(kn + h, k) - ns_deriv(kn, k)) / h
            np.testing.assert_allclose(left, right, atol=1e-3)


class TestDeriv:
    @pytest.mark.parametrize("df", [1, 2, 4])
    def test_finite_difference(self, df):
        k = make_knots(np.random.default_rng(10 + df).uniform(6, 20, 80), df)
        t = np.linspace(0, 30, 157)
        h = 1e-6
        fd = (ns_eval(t + h, k) - ns_eval(t - h, k)) / (2 * h)
        np.testing.assert_allclose(ns_deriv(t, k), fd, atol=1e-6)

    def test_constant_beyond_boundary(self):
        k = make_knots(np.linspace(6, 20, 30), 3)
        np.testing.assert_array_equal(ns_deriv(25.0, k), ns_deriv(60.0, k))
        np.testing.assert_array_equal(ns_deriv(1.0, k), ns_deriv(3.0, k))

    def test_df1_is_linear(self):
        k = make_knots([2.0, 4.0, 8.0], 1)
        d = ns_deriv(np.linspace(-5, 20, 11), k)
        np.testing.assert_allclose(d, 1.0 / 6.0, rtol=1e-14)


class TestIntegral:
    def test_empty_interval_is_zero(self):
        k = make_knots(np.linspace(6, 20, 30), 2)
        np.testing.assert_array_equal(ns_integral(7.3, 7.3, k), 0.0)

    def test_reversed_bounds_rejected(self):
        k = make_knots(np.linspace(6, 20, 30), 2)
        with pytest.raises(ValueError):
            ns_integral(5.0, 4.0, k)

    def test_additive(self):
        k = make_knots(np.random.default_rng(4).uniform(6, 20, 50), 3)
        a, b, c = 0.0, 9.1, 27.0
        np.testing.assert_allclose(ns_integral(a, b, k) + ns_integral(b, c, k),
                                   ns_integral(a, c, k), atol=1e-12)

    def test_trapezoid_at_fig_time(self):
        k = make_knots(np.random.default_rng(5).uniform(0, 12, 60), 2)
        exact = ns_integral(0.0, 5.9, k)
        approx = trapezoid(lambda s: ns_eval(s, k), 0.0, 5.9)
        np.testing.assert_allclose(exact, approx, rtol=1e-6)

    def test_vectorized_bounds(self):
        k = make_knots(np.linspace(6, 20, 30), 2)
        a = np.array([0.0, 1.0, 10.0])
        b = np.array([5.0, 12.0, 30.0])
        rows = ns_integral(a, b, k)
        for i in range(3):
            np.testing.assert_array_equal(rows[i], ns_integral(a[i], b[i], k))


def knots_or_skip(times, df):
    try:
        return make_knots(times, df)
    except ValueError:
        assume(False)


times_st = st.lists(st.floats(0, 50, allow_nan=False), min_size=6, max_size=40)


@settings(max_examples=60, deadline=None)
@given(times_st, st.integers(1, 4), st.floats(0, 60), st.floats(0, 60), st.floats(0, 60))
def test_property_additivity(times, df, x, y, z):
    k = knots_or_skip(times, df)
    a, b, c = sorted((x, y, z))
    scale = 1 + np.abs(ns_integral(0, max(c, 1), k)).max()
    np.testing.assert_allclose(ns_integral(a, b, k) + ns_integral(b, c, k), ns_integral(a, c, k),
                               atol=1e-12 * scale * 100)


@settings(max_examples=60, deadline=None)
@given(times_st, st.integers(1, 4), st.floats(0.001, 40))
def test_property_linear_outside(times, df, offset):
    k = knots_or_skip(times, df)
    assume(k.boundary_hi - k.boundary_lo > 1e-3)
    h = 0.25
    t = k.boundary_hi + h + offset
    second = ns_eval(t + h, k) - 2 * ns_eval(t, k) + ns_eval(t - h, k)
    scale = 1 + np.abs(ns_eval(t + h, k)).max()
    np.testing.assert_allclose(second, 0.0, atol=1e-8 * scale)


def test_tied_quantiles_rejected():
    with pytest.raises(ValueError, match="distinct"):
        make_knots([0, 0, 0, 0, 1, 3], 3)

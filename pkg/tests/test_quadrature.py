import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gma.density import make_scaling, make_shift, make_standard
from gma.errors import EvaluationError, InvalidArgument, ResourceLimitError
from gma.quadrature import (
    FDStencil,
    box_rule,
    default_rule,
    expectation,
    hermite_rule,
    mehler,
    ou_apply,
    panel_rule,
    tensor_rule,
)


def gaussian_moment(k):
    # E[X^k] for X ~ N(0, 1)
    return 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2)))


class TestHermiteRule:
    @pytest.mark.parametrize("order", [1, 2, 5, 16, 64, 200])
    def test_weights_normalized_and_positive(self, order):
        rule = hermite_rule(order)
        assert len(rule) == order
        assert np.all(rule.weights > 0)
        assert abs(rule.weights.sum() - 1.0) < 1e-12

    def test_top_order_weights_underflow_only_in_the_far_tail(self):
        rule = hermite_rule(512)
        w, x = rule.weights, np.abs(rule.nodes[:, 0])
        assert np.all(w >= 0) and abs(w.sum() - 1.0) < 1e-12
        # zero weights are the ones whose true value is below the double range
        assert x[w == 0].min() > x[w > 0].max()

    @pytest.mark.parametrize("order", [3, 10, 64, 150])
    def test_matches_numpy_hermegauss(self, order):
        x_ref, w_ref = np.polynomial.hermite_e.hermegauss(order)
        rule = hermite_rule(order)
        np.testing.assert_allclose(rule.nodes[:, 0], x_ref, atol=1e-12)
        np.testing.assert_allclose(rule.weights, w_ref / w_ref.sum(), rtol=1e-12)

    @pytest.mark.parametrize("order", [3, 8, 20])
    def test_nodes_symmetric(self, order):
        x = np.sort(hermite_rule(order).nodes[:, 0])
        np.testing.assert_allclose(x, -x[::-1], atol=1e-13)

    @pytest.mark.parametrize("order", [1, 2, 4, 7, 10])
    def test_monomials_exact_up_to_degree_2n_minus_1(self, order):
        rule = hermite_rule(order)
        x = rule.nodes[:, 0]
        for k in range(2 * order):
            got = math.fsum(rule.weights * x**k)
            want = gaussian_moment(k)
            assert abs(got - want) <= 1e-10 * max(1.0, want), (order, k, got, want)

    def test_degree_2n_is_not_exact(self):
        rule = hermite_rule(3)
        x = rule.nodes[:, 0]
        assert abs(np.sum(rule.weights * x**6) - 15.0) > 1.0

    def test_order_one_is_the_origin(self):
        rule = hermite_rule(1)
        assert rule.nodes[0, 0] == 0.0 and rule.weights[0] == 1.0

    @pytest.mark.parametrize("bad", [0, -3, 513, 2.5, "8"])
    def test_rejects_bad_order(self, bad):
        with pytest.raises(InvalidArgument):
            hermite_rule(bad)

    def test_arrays_are_read_only(self):
        rule = hermite_rule(8)
        with pytest.raises(ValueError):
            rule.weights[0] = 0.0


class TestTensorAndBoxRules:
    def test_tensor_node_count(self):
        assert len(tensor_rule(hermite_rule(5), 3)) == 125

    def test_tensor_integrates_mixed_monomials(self):
        rule = tensor_rule(hermite_rule(6), 2)
        x = rule.nodes
        assert abs(expectation(lambda p: p[:, 0] ** 2 * p[:, 1] ** 4, rule) - 3.0) < 1e-12
        assert abs(expectation(lambda p: p[:, 0] * p[:, 1], rule)) < 1e-14
        assert abs(rule.weights.sum() - 1.0) < 1e-12
        assert x.shape == (36, 2)

    def test_tensor_limit(self):
        with pytest.raises(ResourceLimitError):
            tensor_rule(hermite_rule(512), 3)

    def test_default_rule_orders(self):
        assert len(default_rule(1)) == 64
        assert len(default_rule(2)) == 32**2

    def test_box_rule_integrates_gaussian_mass_of_the_cube(self):
        rule = box_rule(1, 3.0, 64)
        from scipy.special import ndtr

        assert abs(rule.weights.sum() - (ndtr(3.0) - ndtr(-3.0))) < 1e-13

    def test_panel_rule_second_moment(self):
        rule = panel_rule(-12.0, 12.0, 24)
        assert abs(expectation(lambda p: p[:, 0] ** 2, rule) - 1.0) < 1e-13

    def test_panel_rule_validates(self):
        with pytest.raises(InvalidArgument):
            panel_rule(1.0, 0.0, 3)

    def test_expectation_names_the_bad_node(self):
        rule = hermite_rule(4)
        with pytest.raises(EvaluationError) as info:
            expectation(lambda p: np.where(p[:, 0] > 0, np.nan, 1.0), rule)
        assert info.value.point[0] > 0


class TestOrnsteinUhlenbeck:
    def test_time_zero_is_identity(self):
        g = make_scaling([2.0])
        x = np.linspace(-3, 3, 7).reshape(-1, 1)
        np.testing.assert_array_equal(ou_apply(g, 0.0, x), g.value(x))

    def test_negative_time_rejected(self):
        with pytest.raises(InvalidArgument):
            ou_apply(make_standard(1), -0.1, [[0.0]])

    def test_constant_is_fixed(self):
        x = np.linspace(-2, 2, 5).reshape(-1, 1)
        np.testing.assert_allclose(ou_apply(make_standard(1), 0.7, x), 1.0, atol=1e-14)

    @given(a=st.floats(-2, 2), t=st.floats(0.05, 2.0))
    def test_exponentials_map_to_exponentials(self, a, t):
        # T_t exp(a x - a^2/2) = exp(a e^-t x - a^2 e^-2t / 2)
        x = np.linspace(-3, 3, 9).reshape(-1, 1)
        got = ou_apply(make_shift([a]), t, x)
        want = make_shift([a * math.exp(-t)]).value(x)
        np.testing.assert_allclose(got, want, rtol=1e-11)

    @given(s=st.floats(0.05, 1.0), t=st.floats(0.05, 1.0))
    def test_semigroup_property(self, s, t):
        g = make_scaling([1.5])
        rule = hermite_rule(48)
        x = np.linspace(-2, 2, 5).reshape(-1, 1)
        inner = lambda y: ou_apply(g, t, y, rule)
        twice = mehler(inner, s, x, rule)
        once = ou_apply(g, s + t, x, rule)
        np.testing.assert_allclose(twice, once, rtol=1e-9)

    @given(t=st.floats(0.05, 2.0))
    def test_mass_conservation(self, t):
        g = make_scaling([2.0])
        rule = hermite_rule(64)
        mass = expectation(lambda y: ou_apply(g, t, y), rule)
        assert abs(mass - 1.0) < 1e-9

    def test_mehler_handles_tensor_valued_fields(self):
        x = np.array([[0.3, -0.2]])
        out = mehler(lambda y: np.einsum("ni,nj->nij", y, y), 0.5, x, hermite_rule(8))
        a2 = math.exp(-1.0)
        want = a2 * np.outer(x[0], x[0]) + (1 - a2) * np.eye(2)
        np.testing.assert_allclose(out[0], want, atol=1e-13)


class TestFDStencil:
    @pytest.mark.parametrize("scheme,tol", [("central2", 1e-5), ("central4", 1e-10)])
    def test_derivative_of_sine(self, scheme, tol):
        st_ = FDStencil(step=1e-3, scheme=scheme)
        x = np.linspace(-1, 1, 5).reshape(-1, 1)
        d = st_.derivative(lambda p: np.sin(p[:, 0]), x)
        np.testing.assert_allclose(d[:, 0], np.cos(x[:, 0]), atol=tol)

    def test_hessian_of_a_quadratic_form(self):
        c = np.array([[2.0, 0.5], [0.5, -1.0]])
        f = lambda p: 0.5 * np.einsum("ni,ij,nj->n", p, c, p)
        h = FDStencil(step=1e-2).hessian(f, np.array([[0.3, 0.7], [-1.0, 2.0]]))
        np.testing.assert_allclose(h, np.broadcast_to(c, h.shape), atol=1e-8)

    def test_validation(self):
        with pytest.raises(InvalidArgument):
            FDStencil(step=0.0)
        with pytest.raises(InvalidArgument):
            FDStencil(scheme="forward")

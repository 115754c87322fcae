import math

import numpy as np
import pytest
from scipy.stats import norm

from gma import (
    DerivativeUnavailable,
    InvalidArgument,
    SolverError,
    invert,
    make_gaussian_cov,
    make_mixture_1d,
    make_product,
    make_scaling,
    make_shift,
    make_standard,
    solve,
)
from gma.density import FunctionDensity
from gma.operators import eigvals_desc, inv_sqrtm_pd
from gma.quadrature import FDStencil
from gma.transport import (
    GridSpec,
    LinearMap,
    Map1D,
    ProductMap,
    map_to_csv,
    read_map_csv,
    solve_1d,
    solve_entropic_2d,
    solve_gaussian_linear,
    solve_product,
)
from gma.transport._sinkhorn import sinkhorn_2d

from conftest import two_bump_mixture

COV = [[2.0, 0.5], [0.5, 1.0]]
LINE = np.linspace(-4.0, 4.0, 33)[:, None]


def mixture_cdf(g, x):
    return np.sum(g.weights * norm.cdf((x[:, None] - g.means) / g.sds), axis=1)


class TestClosedForms:
    @pytest.mark.parametrize("a", [-1.5, 0.0, 0.5, 2.0])
    def test_shift_translates(self, a):
        T = solve_1d(make_shift([a]))
        np.testing.assert_allclose(T(LINE), LINE - a, atol=1e-10)
        np.testing.assert_allclose(T.hess_phi(LINE), 0.0, atol=1e-9)

    @pytest.mark.parametrize("sigma", [0.2, 0.5, 2.0, 5.0])
    def test_scaling_divides(self, sigma):
        T = solve_1d(make_scaling([sigma]))
        x = sigma * LINE
        np.testing.assert_allclose(T(x), LINE, atol=1e-10)
        np.testing.assert_allclose(T.hess_phi(x)[:, 0, 0], 1 / sigma - 1, atol=1e-9)

    def test_gaussian_is_inverse_root(self):
        T = solve(make_gaussian_cov(COV))
        assert isinstance(T, LinearMap)
        np.testing.assert_allclose(T.A, inv_sqrtm_pd(np.array(COV)), atol=1e-14)
        # pushes N(0, COV) to N(0, I)
        np.testing.assert_allclose(T.A @ np.array(COV) @ T.A, np.eye(2), atol=1e-13)

    def test_linear_phi_derivatives(self, rng):
        T = solve_gaussian_linear(COV)
        x = rng.normal(size=(10, 2))
        fd = FDStencil()
        np.testing.assert_allclose(fd.derivative(T.phi, x), T.grad_phi(x), atol=1e-10)
        np.testing.assert_allclose(T.third(x), 0.0)
        np.testing.assert_allclose(T.third(x, 1), 0.0)

    def test_linear_rejects_shift(self):
        with pytest.raises(InvalidArgument):
            solve_gaussian_linear(make_shift([1.0, 0.0]))


class TestMonotoneRearrangement:
    def test_pushforward_cdf(self, mixture):
        # Phi(T(x)) must equal the source CDF at 21 levels
        T = solve_1d(mixture)
        x = np.linspace(-5.0, 5.0, 21)
        np.testing.assert_allclose(norm.cdf(T(x[:, None])[:, 0]), mixture_cdf(mixture, x), atol=1e-12)

    def test_asymmetric_pushforward(self):
        g = make_mixture_1d([0.3, 0.7], [-2.0, 1.0], [0.5, 1.5])
        T = solve_1d(g)
        x = np.linspace(-5.0, 5.0, 21)
        np.testing.assert_allclose(norm.cdf(T(x[:, None])[:, 0]), mixture_cdf(g, x), atol=1e-12)

    def test_deep_tails(self):
        T = solve_1d(make_shift([1.0]))
        x = np.array([[-30.0], [30.0]])
        np.testing.assert_allclose(T(x), x - 1.0, rtol=1e-10)

    def test_strictly_increasing(self, mixture):
        T = solve_1d(mixture)
        x = np.linspace(-8, 8, 401)[:, None]
        assert np.all(np.diff(T(x)[:, 0]) > 0)
        assert np.all(T.hess_Phi(x)[:, 0, 0] > 0)

    def test_derivatives_match_finite_differences(self, mixture):
        T = solve_1d(mixture)
        x = np.linspace(-3, 3, 13)[:, None]
        fd = FDStencil(step=1e-3)
        np.testing.assert_allclose(fd.derivative(T.phi, x), T.grad_phi(x), atol=1e-9)
        np.testing.assert_allclose(fd.derivative(T.grad_phi, x)[:, 0], T.hess_phi(x)[:, 0], atol=1e-8)
        np.testing.assert_allclose(fd.derivative(T.hess_phi, x)[:, 0, 0], T.third(x)[:, 0, 0], atol=1e-7)

    def test_round_trip(self, mixture):
        T = solve_1d(mixture)
        S = invert(T)
        y = np.linspace(-6, 6, 49)[:, None]
        np.testing.assert_allclose(T(S(y)), y, atol=1e-12)
        np.testing.assert_allclose(S(T(LINE)), LINE, atol=1e-11)
        assert isinstance(invert(S), Map1D)

    def test_inverse_derivatives(self, mixture):
        S = invert(solve_1d(mixture))
        y = np.linspace(-3, 3, 13)[:, None]
        fd = FDStencil(step=1e-3)
        np.testing.assert_allclose(fd.derivative(S.grad_phi, y)[:, 0], S.hess_phi(y)[:, 0], atol=1e-8)
        np.testing.assert_allclose(fd.derivative(S.hess_phi, y)[:, 0, 0], S.third(y)[:, 0, 0], atol=1e-7)

    def test_rejects_nowhere_finite(self):
        g = FunctionDensity(lambda x: np.full(x.shape[0], -np.inf), 1)
        with pytest.raises(SolverError):
            solve_1d(g)

    def test_rejects_heavy_tails(self):
        # rho ~ 1/x^2 cannot be bracketed
        g = FunctionDensity(lambda x: 0.5 * x[:, 0] ** 2 - np.log1p(x[:, 0] ** 2), 1)
        with pytest.raises(SolverError):
            solve_1d(g)


class TestProductMaps:
    def test_agrees_with_factors(self, rng):
        a, b = two_bump_mixture(), make_scaling([1.5])
        T = solve(make_product([a, b]))
        assert isinstance(T, ProductMap)
        x = rng.normal(size=(30, 2))
        Ta, Tb = solve_1d(a), solve_1d(b)
        np.testing.assert_allclose(T(x)[:, 0], Ta(x[:, :1])[:, 0], atol=1e-10)
        np.testing.assert_allclose(T(x)[:, 1], Tb(x[:, 1:])[:, 0], atol=1e-10)
        np.testing.assert_allclose(T.phi(x), Ta.phi(x[:, :1]) + Tb.phi(x[:, 1:]), atol=1e-10)
        h = T.hess_phi(x)
        assert np.all(h[:, 0, 1] == 0)
        np.testing.assert_allclose(h[:, 0, 0], Ta.hess_phi(x[:, :1])[:, 0, 0], atol=1e-10)
        third = T.third(x)
        np.testing.assert_allclose(third[:, 1, 1, 1], Tb.third(x[:, 1:])[:, 0, 0, 0], atol=1e-10)
        assert np.count_nonzero(third[:, 0, 1]) == 0

    def test_repeated_coordinates(self):
        # tensor nodes repeat coordinate values; results must not depend on the order
        T = solve(make_product([two_bump_mixture(), two_bump_mixture()]))
        x = np.array([[0.5, -1.0], [-1.0, 0.5], [0.5, 0.5]])
        out = T(x)
        assert out[0, 0] == out[1, 1] == out[2, 0] == out[2, 1]

    def test_round_trip(self, rng):
        T = solve(make_product([two_bump_mixture(), make_shift([0.5])]))
        y = rng.normal(size=(20, 2))
        np.testing.assert_allclose(T(invert(T)(y)), y, atol=1e-11)

    def test_diagonal_scaling_uses_product(self):
        assert isinstance(solve(make_scaling([2.0, 0.5])), ProductMap)

    def test_needs_product_structure(self):
        with pytest.raises(InvalidArgument):
            solve_product(make_gaussian_cov(COV))
        with pytest.raises(InvalidArgument):
            ProductMap([])


class TestDispatchAndErrors:
    def test_auto_kinds(self):
        assert isinstance(solve(make_standard(1)), Map1D)
        assert isinstance(solve(make_gaussian_cov([[2.0, 0.5, 0.2], [0.5, 1.0, 0.1], [0.2, 0.1, 0.8]])), LinearMap)

    def test_no_solver_for_coupled_3d(self):
        g = FunctionDensity(lambda x: np.zeros(x.shape[0]), 3)
        with pytest.raises(InvalidArgument):
            solve(g)

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            solve(make_standard(1), kind="magic")

    def test_solve_1d_dimension(self):
        with pytest.raises(InvalidArgument):
            solve_1d(make_standard(2))

    @pytest.mark.parametrize("points, half_width", [(4, None), (128, 0.0), (128, -1.0)])
    def test_grid_spec(self, points, half_width):
        with pytest.raises(InvalidArgument):
            GridSpec(points=points, half_width=half_width)

    @pytest.mark.parametrize("eps", [1e-4, 2.0])
    def test_eps_window(self, eps):
        with pytest.raises(InvalidArgument):
            solve_entropic_2d(make_gaussian_cov(COV), eps=eps)

    def test_box_too_small(self):
        with pytest.raises(InvalidArgument, match="outside"):
            solve_entropic_2d(make_gaussian_cov(COV), grid=GridSpec(points=16, half_width=1.0))

    def test_entropic_needs_2d(self):
        with pytest.raises(InvalidArgument):
            solve_entropic_2d(make_gaussian_cov([[2.0, 0.5, 0.2], [0.5, 1.0, 0.1], [0.2, 0.1, 0.8]]))

    def test_sinkhorn_iteration_budget(self):
        axis = np.linspace(-5, 5, 16)
        la = np.full((16, 16), -math.log(256.0))
        lb = -0.5 * (axis[:, None] ** 2 + axis[None, :] ** 2)
        lb -= np.log(np.sum(np.exp(lb)))
        with pytest.raises(SolverError) as info:
            sinkhorn_2d(la, lb, axis, 0.01, max_iters=5)
        assert info.value.solver == "entropic-2d"
        assert info.value.residual > 0


class TestSerialization:
    def test_csv_round_trip(self, mixture):
        T = solve_1d(mixture)
        x = np.linspace(-2, 2, 5)[:, None]
        parsed = read_map_csv(map_to_csv(T, x))
        assert parsed["meta"]["solver_tag"] == "closed-form-1d"
        assert parsed["columns"] == ["x1", "phi", "dphi1", "d2phi11"]
        np.testing.assert_array_equal(parsed["data"][:, 0], x[:, 0])
        np.testing.assert_array_equal(parsed["data"][:, 2], T.grad_phi(x)[:, 0])
        np.testing.assert_array_equal(parsed["data"][:, 3], T.hess_phi(x)[:, 0, 0])

    def test_csv_2d_columns(self):
        T = solve_gaussian_linear(COV)
        parsed = read_map_csv(map_to_csv(T, np.zeros((2, 2))))
        assert parsed["columns"][-4:] == ["d2phi11", "d2phi12", "d2phi21", "d2phi22"]
        assert float(parsed["meta"]["accuracy_class"]) == 0.0

    def test_rejects_foreign_text(self):
        with pytest.raises(InvalidArgument):
            read_map_csv("x,y\n1,2\n")
        with pytest.raises(InvalidArgument):
            read_map_csv("# gma-transport-map version=9 solver_tag=x dim=1 accuracy_class=0\nx1\n")


@pytest.fixture(scope="module")
def coarse():
    return solve_entropic_2d(make_gaussian_cov(COV), eps=0.05, grid=GridSpec(points=48))


class TestEntropic:
    def test_convex_potential(self, coarse):
        x = np.random.default_rng(1).uniform(-3, 3, size=(50, 2))
        assert eigvals_desc(coarse.hess_Phi(x))[:, -1].min() > 0

    def test_gradient_matches_potential(self, coarse):
        x = np.random.default_rng(2).uniform(-2, 2, size=(10, 2))
        fd = FDStencil(step=1e-4)
        np.testing.assert_allclose(fd.derivative(coarse.phi, x), coarse.grad_phi(x), atol=1e-7)
        np.testing.assert_allclose(fd.derivative(coarse.grad_phi, x).swapaxes(1, 2), coarse.hess_phi(x), atol=1e-6)

    def test_trusted_domain(self, coarse):
        assert coarse.trusted_half_width == coarse.half_width - 1.0
        x = np.array([[0.0, 0.0], [coarse.half_width - 0.5, 0.0]])
        assert list(coarse.valid_mask(x)) == [True, False]

    def test_coarse_agreement_with_linear(self, coarse):
        lin = solve_gaussian_linear(COV)
        g = np.linspace(-2, 2, 9)
        x = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
        assert np.max(np.abs(coarse(x) - lin(x))) < 0.2

    def test_no_third_derivative_or_inverse(self, coarse):
        assert coarse.has_third is False
        with pytest.raises(DerivativeUnavailable):
            coarse.third(np.zeros((1, 2)))
        with pytest.raises(InvalidArgument):
            invert(coarse)

    def test_accuracy_class(self, coarse):
        step = coarse.result.grid[1] - coarse.result.grid[0]
        assert coarse.accuracy_class == max(5 * 0.05, 4 * step * step)

    @pytest.mark.slow
    def test_default_resolution_against_linear(self):
        T = solve(make_gaussian_cov(COV), kind="entropic")
        lin = solve_gaussian_linear(COV)
        g = np.linspace(-2, 2, 41)
        x = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
        assert T.result.residual < 1e-9
        assert np.max(np.abs(T(x) - lin(x))) < 5e-2

"""Transport maps ``T = grad Phi = I + grad phi`` and their derivatives.

Shapes for ``N`` query points in dimension ``d``: ``phi`` ``(N,)``,
``grad_phi`` ``(N, d)``, ``hess_phi`` ``(N, d, d)`` and ``third``
``(N, d, d, d)`` with ``third[n, i] = d/dx_i D^2 phi(x_n)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from ..errors import DerivativeUnavailable, InvalidArgument
from ..operators import inv_sqrtm_pd, sym
from ..quadrature import as_points
from ._cdf import Rearrangement1D

_GL_T, _GL_W = np.polynomial.legendre.leggauss(16)


def _integrate_from_zero(fn, x):
    """``int_0^x fn(s) ds`` for each scalar in ``x`` (composite Gauss-Legendre)."""
    out = np.empty(x.shape[0])
    for n, b in enumerate(x):
        pieces = max(1, int(math.ceil(abs(b) / 0.25)))
        edges = np.linspace(0.0, b, pieces + 1)
        half = 0.5 * np.diff(edges)
        s = (0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * _GL_T
        out[n] = float(np.sum(half[:, None] * _GL_W * fn(s.reshape(-1)).reshape(s.shape)))
    return out


class TransportMap:
    """Common interface.  Subclasses implement ``grad_phi`` and ``hess_phi``."""

    dim: int
    solver_tag: str = "abstract"
    accuracy_class: float = 0.0
    has_third: bool = True
    # repeated query points cost nothing extra (cheap per point, or deduplicated internally)
    handles_repeats: bool = False

    def __call__(self, x):
        x = as_points(x, self.dim)
        return x + self.grad_phi(x)

    def phi(self, x):
        raise NotImplementedError

    def grad_phi(self, x):
        raise NotImplementedError

    def hess_phi(self, x):
        raise NotImplementedError

    def hess_Phi(self, x):
        return self.hess_phi(x) + np.eye(self.dim)

    def valid_mask(self, x) -> np.ndarray:
        """Points where the map is trustworthy (everywhere, unless the solver is grid-based)."""
        return np.ones(as_points(x, self.dim).shape[0], dtype=bool)

    def third(self, x, i: int | None = None):
        raise DerivativeUnavailable(f"{self.solver_tag} maps do not expose third derivatives")

    def describe(self) -> dict:
        return {"solver_tag": self.solver_tag, "dim": self.dim, "accuracy_class": self.accuracy_class, "has_third": self.has_third}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, solver_tag={self.solver_tag!r})"


def _on_unique(fn, column):
    """Evaluate a 1D map method once per distinct coordinate value (tensor nodes repeat)."""
    vals, inv = np.unique(column, return_inverse=True)
    return fn(vals[:, None])[inv.reshape(-1)]


def _select(third, i):
    if i is None:
        return third
    if not 0 <= i < third.shape[1]:
        raise InvalidArgument(f"direction index {i} out of range")
    return third[:, i]


class LinearMap(TransportMap):
    """``Phi(x) = x^T A x / 2`` for a symmetric positive definite ``A``."""

    solver_tag = "linear-gaussian"
    handles_repeats = True

    def __init__(self, a):
        a = sym(np.atleast_2d(np.asarray(a, dtype=float)))
        self.A = a
        self.dim = a.shape[0]
        self._k = a - np.eye(self.dim)

    def phi(self, x):
        x = as_points(x, self.dim)
        return 0.5 * np.einsum("ni,ij,nj->n", x, self._k, x)

    def grad_phi(self, x):
        return as_points(x, self.dim) @ self._k

    def hess_phi(self, x):
        x = as_points(x, self.dim)
        return np.broadcast_to(self._k, (x.shape[0], self.dim, self.dim)).copy()

    def third(self, x, i=None):
        x = as_points(x, self.dim)
        return _select(np.zeros((x.shape[0],) + (self.dim,) * 3), i)

    def inverse(self) -> "LinearMap":
        return LinearMap(np.linalg.inv(self.A))


class Map1D(TransportMap):
    """Monotone rearrangement ``T = Phi_gamma^{-1} o F_mu`` on the line."""

    dim = 1
    solver_tag = "closed-form-1d"
    accuracy_class = 1e-9
    handles_repeats = True

    def __init__(self, rearrangement: Rearrangement1D):
        self.R = rearrangement

    def transport_derivatives(self, x):
        x = as_points(x, 1)[:, 0]
        vals, inv = np.unique(x, return_inverse=True)
        inv = inv.reshape(-1)
        return tuple(a[inv] for a in self.R.derivatives(vals))

    def phi(self, x):
        x = as_points(x, 1)[:, 0]
        return _integrate_from_zero(lambda s: self.R.transport(s) - s, x)

    def grad_phi(self, x):
        x = as_points(x, 1)[:, 0]
        vals, inv = np.unique(x, return_inverse=True)
        return (self.R.transport(vals)[inv.reshape(-1)] - x)[:, None]

    def hess_phi(self, x):
        _, dt, _ = self.transport_derivatives(x)
        return (dt - 1.0)[:, None, None]

    def third(self, x, i=None):
        _, _, ddt = self.transport_derivatives(x)
        return _select(ddt[:, None, None, None], i)

    def inverse(self) -> "InverseMap1D":
        return InverseMap1D(self.R)


class InverseMap1D(TransportMap):
    """``S = T^{-1}``, transporting ``gamma`` to ``g gamma``; ``S(y) = y + psi'(y)``."""

    dim = 1
    solver_tag = "closed-form-1d"
    accuracy_class = 1e-9
    handles_repeats = True

    def __init__(self, rearrangement: Rearrangement1D):
        self.R = rearrangement

    def _parts(self, y):
        y = as_points(y, 1)[:, 0]
        vals, inv = np.unique(y, return_inverse=True)
        inv = inv.reshape(-1)
        s = self.R.inverse(vals)
        _, dt, ddt = self.R.derivatives(s)
        return y, s[inv], dt[inv], ddt[inv]

    def phi(self, y):
        y = as_points(y, 1)[:, 0]
        return _integrate_from_zero(lambda u: self.R.inverse(u) - u, y)

    def grad_phi(self, y):
        y, s, _, _ = self._parts(y)
        return (s - y)[:, None]

    def hess_phi(self, y):
        _, _, dt, _ = self._parts(y)
        return (1.0 / dt - 1.0)[:, None, None]

    def third(self, y, i=None):
        _, _, dt, ddt = self._parts(y)
        return _select((-ddt / dt**3)[:, None, None, None], i)

    def inverse(self) -> Map1D:
        return Map1D(self.R)


class ProductMap(TransportMap):
    """Coordinatewise map ``T_i(x) = T^(i)(x_i)`` built from one-dimensional maps."""

    solver_tag = "product"

    def __init__(self, maps):
        maps = tuple(maps)
        if not maps or any(m.dim != 1 for m in maps):
            raise InvalidArgument("a product map needs one-dimensional factor maps")
        self.maps = maps
        self.dim = len(maps)
        self.has_third = all(m.has_third for m in maps)
        self.handles_repeats = True
        self.accuracy_class = max(m.accuracy_class for m in maps)

    def phi(self, x):
        x = as_points(x, self.dim)
        return sum(_on_unique(m.phi, x[:, i]) for i, m in enumerate(self.maps))

    def grad_phi(self, x):
        x = as_points(x, self.dim)
        return np.concatenate([_on_unique(m.grad_phi, x[:, i]) for i, m in enumerate(self.maps)], axis=1)

    def hess_phi(self, x):
        x = as_points(x, self.dim)
        out = np.zeros((x.shape[0], self.dim, self.dim))
        for i, m in enumerate(self.maps):
            out[:, i, i] = _on_unique(m.hess_phi, x[:, i])[:, 0, 0]
        return out

    def third(self, x, i=None):
        x = as_points(x, self.dim)
        out = np.zeros((x.shape[0],) + (self.dim,) * 3)
        for k, m in enumerate(self.maps):
            out[:, k, k, k] = _on_unique(m.third, x[:, k])[:, 0, 0, 0]
        return _select(out, i)

    def inverse(self) -> "ProductMap":
        return ProductMap([m.inverse() for m in self.maps])


class EntropicMap(TransportMap):
    """Barycentric projection of an entropic plan on a grid.

    With ``pi(y | x)`` proportional to ``b_y exp((h_y - |x - y|^2 / 2) / eps)``,
    ``phi(x) = eps log sum_y b_y exp((h_y - |x - y|^2 / 2) / eps)`` (up to a
    constant) has gradient ``E[y | x] - x`` and Hessian ``Cov[y | x] / eps - I``.
    The potential ``|x|^2 / 2 + phi`` is therefore convex by construction.
    """

    solver_tag = "entropic-2d"
    has_third = False
    chunk = 256

    def __init__(self, result, accuracy_class: float):
        self.result = result
        self.eps = result.eps
        g = result.grid
        self.dim = 2
        self.accuracy_class = float(accuracy_class)
        yy = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        self.half_width = float(g[-1])
        # the barycentric map bends towards the box near its boundary
        self.trusted_half_width = self.half_width - 1.0
        self._y = yy
        # columns: y1, y2, y1^2, y1 y2, y2^2
        self._feat = np.column_stack([yy, yy[:, 0] ** 2, yy[:, 0] * yy[:, 1], yy[:, 1] ** 2])
        self._logit = (result.log_b + result.h / result.eps).reshape(-1)
        # (key, moments) in one attribute so that threads never see a torn pair
        self._cache = (None, None)
        self._phi0 = 0.0
        self._phi0 = float(self.phi(np.zeros((1, 2)))[0])

    def valid_mask(self, x):
        return np.all(np.abs(as_points(x, 2)) <= self.trusted_half_width, axis=1)

    def _moments(self, x, need_cov=True):
        x = as_points(x, 2)
        key = (x.shape, hash(x.tobytes()))
        cached_key, cached = self._cache
        if key == cached_key:
            return (x,) + cached
        n = x.shape[0]
        lse = np.empty(n)
        mom = np.empty((n, 5))
        y = self._y
        for s in range(0, n, self.chunk):
            xs = x[s : s + self.chunk]
            lg = self._logit[None, :] - (0.5 / self.eps) * (
                np.sum(xs * xs, axis=1)[:, None] - 2.0 * xs @ y.T + np.sum(y * y, axis=1)[None, :]
            )
            l = logsumexp(lg, axis=1)
            lse[s : s + self.chunk] = l
            mom[s : s + self.chunk] = np.exp(lg - l[:, None]) @ self._feat
        mean = mom[:, :2]
        cov = np.empty((n, 2, 2))
        cov[:, 0, 0] = mom[:, 2] - mean[:, 0] ** 2
        cov[:, 0, 1] = cov[:, 1, 0] = mom[:, 3] - mean[:, 0] * mean[:, 1]
        cov[:, 1, 1] = mom[:, 4] - mean[:, 1] ** 2
        self._cache = (key, (lse, mean, cov))
        return x, lse, mean, cov

    def phi(self, x):
        _, lse, _, _ = self._moments(x, False)
        return self.eps * lse - self._phi0

    def grad_phi(self, x):
        x, _, mean, _ = self._moments(x, False)
        return mean - x

    def hess_phi(self, x):
        _, _, _, cov = self._moments(x, True)
        return sym(cov / self.eps) - np.eye(2)

    def barycenter(self, x):
        return self._moments(x, False)[2]


def gaussian_linear_matrix(cov) -> np.ndarray:
    """``Sigma^{-1/2}``: the optimal linear map from ``N(0, Sigma)`` to ``N(0, I)``."""
    return inv_sqrtm_pd(cov)

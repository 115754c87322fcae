"""Gaussian quadrature, finite-difference stencils and the Ornstein-Uhlenbeck semigroup.

Every integral in the package is an expectation against the standard Gaussian
measure ``gamma`` on R^d (probabilists' normalisation, weight
``exp(-|x|^2/2) / (2 pi)^(d/2)``).  Rules are Gauss-Hermite tensor products
built with the Golub-Welsch construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import EvaluationError, InvalidArgument, ResourceLimitError

MAX_ORDER = 512
MAX_TENSOR_NODES = 10**7

# per-axis order used when a caller does not pass a rule
DEFAULT_ORDERS = {1: 64, 2: 32, 3: 24, 4: 16, 5: 10, 6: 8}


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float array of shape ``(N, dim)``.

    Scalars and flat arrays are accepted for ``dim == 1``; a flat array of
    length ``dim`` is read as a single point otherwise.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidArgument(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights integrating against ``gamma`` on R^dim."""

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    order: int = 0
    # False for rules whose weights carry an explicit density (see box_rule)
    normalized: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, self.dim)
        weights = np.ascontiguousarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise InvalidArgument("nodes and weights differ in length")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.weights.shape[0]


def _orthonormal_tail(x: np.ndarray, n: int):
    """``p_n(x)``, ``p_{n-1}(x)`` and ``log sum_{k<n} p_k(x)^2`` for orthonormal Hermite ``p_k``.

    ``p_{k+1} = (x p_k - sqrt(k) p_{k-1}) / sqrt(k + 1)``.  The values are
    returned with a common per-node scale factor ``exp(-log_scale)`` that
    cancels in ratios; the log-sum is exact.
    """
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    total = np.zeros_like(x)
    log_scale = np.zeros_like(x)
    for k in range(n):
        total += cur * cur
        prev, cur = cur, (x * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
        big = np.abs(cur) > 1e100
        if big.any():
            prev[big] *= 1e-100
            cur[big] *= 1e-100
            total[big] *= 1e-200
            log_scale[big] += 200.0 * math.log(10.0)
    return cur, prev, np.log(total) + log_scale


@lru_cache(maxsize=64)
def hermite_rule(order: int) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule with ``order`` nodes.

    Nodes are eigenvalues of the Jacobi matrix (Golub-Welsch), polished by
    Newton steps on the three-term recurrence.  Weights are
    ``1 / sum_k p_k(x_i)^2``, formed in log space so the tail weights keep
    full relative accuracy; weights below the double range (orders above
    roughly 150) underflow to zero.
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise InvalidArgument(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    order = int(order)
    if order == 1:
        return QuadratureRule(1, np.zeros((1, 1)), np.ones(1), order=1)
    # Jacobi matrix of the monic He_k recurrence: x He_k = He_{k+1} + k He_{k-1}
    off = np.sqrt(np.arange(1, order, dtype=float))
    nodes = eigh_tridiagonal(np.zeros(order), off, eigvals_only=True)
    for _ in range(2):
        pn, pm, _ = _orthonormal_tail(nodes, order)
        nodes = nodes - pn / (math.sqrt(order) * pm)
    # exact symmetry about the origin
    nodes = 0.5 * (nodes - nodes[::-1])
    if order % 2:
        nodes[order // 2] = 0.0
    _, _, log_sum = _orthonormal_tail(nodes, order)
    log_w = -log_sum
    log_w = 0.5 * (log_w + log_w[::-1])
    weights = np.exp(log_w - log_w.max())
    weights = weights / math.fsum(weights)
    return QuadratureRule(1, nodes.reshape(-1, 1), weights, order=order)


def tensor_rule(rule1d: QuadratureRule, dim: int) -> QuadratureRule:
    """Full tensor product of a one-dimensional rule."""
    if rule1d.dim != 1:
        raise InvalidArgument("tensor_rule expects a one-dimensional rule")
    if dim < 1:
        raise InvalidArgument(f"dimension must be positive, got {dim}")
    if dim == 1:
        return rule1d
    n = len(rule1d)
    if n**dim > MAX_TENSOR_NODES:
        raise ResourceLimitError(f"{n}^{dim} nodes exceeds the limit of {MAX_TENSOR_NODES}")
    x = rule1d.nodes[:, 0]
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([grid.reshape(-1) for grid in grids], axis=1)
    wgrids = np.meshgrid(*([rule1d.weights] * dim), indexing="ij")
    weights = np.prod(np.stack([w.reshape(-1) for w in wgrids], axis=1), axis=1)
    return QuadratureRule(dim, nodes, weights, order=rule1d.order, normalized=rule1d.normalized)


def default_rule(dim: int, order: int | None = None) -> QuadratureRule:
    """Tensor Gauss-Hermite rule with the package default order for ``dim``."""
    if order is None:
        order = DEFAULT_ORDERS.get(dim)
        if order is None:
            raise ResourceLimitError(f"no default tensor rule in dimension {dim}")
    return tensor_rule(hermite_rule(order), dim)


@lru_cache(maxsize=16)
def box_rule(dim: int, half_width: float = 6.0, order: int = 64) -> QuadratureRule:
    """Gauss-Legendre rule on the cube ``[-half_width, half_width]^dim``.

    The Gaussian density is folded into the weights, so ``expectation`` with
    this rule integrates against ``gamma`` restricted to the cube.  Meant for
    integrands supported in the cube, where Gauss-Hermite loses accuracy at
    the support boundary.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    x = half_width * t
    w1 = half_width * w * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    base = QuadratureRule(1, x.reshape(-1, 1), w1, order=order, normalized=False)
    return tensor_rule(base, dim)


def panel_rule(lo: float, hi: float, panels: int, order: int = 16) -> QuadratureRule:
    """Composite Gauss-Legendre rule for ``int F d gamma_1`` over ``[lo, hi]``.

    The Gaussian weight is folded into the rule weights (formed in log space).
    """
    if not hi > lo or panels < 1:
        raise InvalidArgument("panel_rule needs hi > lo and at least one panel")
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * t).reshape(-1)
    logw = np.log((half[:, None] * w).reshape(-1)) - 0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
    return QuadratureRule(1, x.reshape(-1, 1), np.exp(logw), order=order, normalized=False)


def integrate(values, rule: QuadratureRule) -> float:
    """Weighted sum of precomputed node values (pairwise summation)."""
    values = np.asarray(values, dtype=float)
    return float(np.sum(rule.weights * values))


def expectation(f: Callable[[np.ndarray], np.ndarray], rule: QuadratureRule) -> float:
    """``sum_i w_i f(x_i)``; ``f`` maps an ``(N, dim)`` array to ``(N,)`` values."""
    values = np.asarray(f(rule.nodes), dtype=float).reshape(-1)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.argmax(bad))
        node = rule.nodes[idx]
        raise EvaluationError(f"non-finite integrand {values[idx]!r} at node {node.tolist()}", point=node)
    return integrate(values, rule)


def mehler(fn: Callable[[np.ndarray], np.ndarray], t: float, x, rule1d: QuadratureRule) -> np.ndarray:
    """Apply the OU semigroup to an arbitrary (possibly tensor-valued) field.

    ``fn`` maps ``(M, d)`` points to ``(M, ...)`` values; the result has shape
    ``(N, ...)`` for ``N`` query points.
    """
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    rule = tensor_rule(rule1d, d)
    a = math.exp(-t)
    b = math.sqrt(-math.expm1(-2.0 * t))
    pts = a * x[:, None, :] + b * rule.nodes[None, :, :]
    vals = np.asarray(fn(pts.reshape(-1, d)))
    vals = vals.reshape((n, len(rule)) + vals.shape[1:])
    w = rule.weights.reshape((1, -1) + (1,) * (vals.ndim - 2))
    return np.sum(w * vals, axis=1)


def ou_apply(g, t: float, x, rule1d: QuadratureRule | None = None) -> np.ndarray:
    """Mehler form of the Ornstein-Uhlenbeck semigroup, ``T_t g(x)``.

    ``T_t g(x) = int g(e^-t x + sqrt(1 - e^-2t) y) gamma(dy)``, evaluated by a
    tensor Gauss-Hermite rule in ``y``.  ``t = 0`` returns ``g(x)`` exactly.
    """
    if not t >= 0:
        raise InvalidArgument(f"OU time must be nonnegative, got {t}")
    x = as_points(x, g.dim)
    if t == 0:
        return g.value(x)
    if rule1d is None:
        rule1d = hermite_rule(DEFAULT_ORDERS.get(g.dim, 16))
    return mehler(g.value, t, x, rule1d)


# ---------------------------------------------------------------------------
# finite differences

_FIRST = {
    "central2": ((-1, 1), (-0.5, 0.5)),
    "central4": ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
}
_SECOND = {
    "central2": ((-1, 0, 1), (1.0, -2.0, 1.0)),
    "central4": ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
}


@dataclass(frozen=True)
class FDStencil:
    """Central finite-difference stencil with a fixed step and order."""

    step: float = 1e-3
    scheme: str = "central4"

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidArgument(f"stencil step must be positive, got {self.step}")
        if self.scheme not in _FIRST:
            raise InvalidArgument(f"unknown stencil scheme {self.scheme!r}")

    def derivative(self, fn, x) -> np.ndarray:
        """Jacobian of ``fn`` with the derivative index right after the point index.

        For ``fn`` returning ``(N, ...)`` the result is ``(N, d, ...)`` with
        entry ``[n, i, ...] = d/dx_i fn(x_n)[...]``.
        """
        x = np.asarray(x, dtype=float)
        d = x.shape[1]
        offsets, coefs = _FIRST[self.scheme]
        cols = []
        for i in range(d):
            acc = 0.0
            for off, c in zip(offsets, coefs):
                xs = x.copy()
                xs[:, i] += off * self.step
                acc = acc + c * np.asarray(fn(xs))
            cols.append(acc / self.step)
        return np.stack(cols, axis=1)

    def hessian(self, fn, x) -> np.ndarray:
        """Second derivatives of a scalar field, ``(N, d, d)``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[1]
        h = self.step
        out = np.empty((x.shape[0], d, d))
        offs2, c2 = _SECOND[self.scheme]
        offs1, c1 = _FIRST[self.scheme]
        for i in range(d):
            acc = 0.0
            for off, c in zip(offs2, c2):
                xs = x.copy()
                xs[:, i] += off * h
                acc = acc + c * np.asarray(fn(xs))
            out[:, i, i] = acc / h**2
            for j in range(i):
                acc = 0.0
                for oi, ci in zip(offs1, c1):
                    for oj, cj in zip(offs1, c1):
                        xs = x.copy()
                        xs[:, i] += oi * h
                        xs[:, j] += oj * h
                        acc = acc + ci * cj * np.asarray(fn(xs))
                out[:, i, j] = out[:, j, i] = acc / h**2
        return out

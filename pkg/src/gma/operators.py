"""Symmetric-matrix calculus and the Ornstein-Uhlenbeck operator.

All matrix functions accept a single ``(d, d)`` array or a batch
``(..., d, d)`` and return a scalar or an array of the batch shape.
Inputs are symmetrized before any spectral computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, InvalidArgument
from .quadrature import FDStencil, QuadratureRule, as_points


def sym(a) -> np.ndarray:
    """``(A + A^T) / 2`` over the last two axes; exactly symmetric."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidArgument(f"expected square matrices, got shape {a.shape}")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def eigh_desc(a):
    """Eigenvalues in descending order and matching eigenvectors (columns)."""
    vals, vecs = np.linalg.eigh(sym(a))
    return vals[..., ::-1], vecs[..., ::-1]


def eigvals_desc(a) -> np.ndarray:
    return np.linalg.eigvalsh(sym(a))[..., ::-1]


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def log_det2(k):
    """``sum_i [log(1 + k_i) - k_i]`` over the eigenvalues of ``K``; ``-inf`` if some ``k_i <= -1``."""
    ev = eigvals_desc(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(ev > -1.0, np.log1p(np.maximum(ev, -1.0)) - ev, -np.inf)
    return _scalar(np.sum(terms, axis=-1))


def det2(k):
    """Carleman-Fredholm determinant ``det_2(I + K) = prod (1 + k_i) e^{-k_i}``."""
    return _scalar(np.exp(log_det2(k)))


def hs_norm(a):
    a = np.asarray(a, dtype=float)
    return _scalar(np.sqrt(np.sum(a * a, axis=(-1, -2))))


def op_norm(a):
    return _scalar(np.max(np.abs(eigvals_desc(a)), axis=-1))


def m_functional(a):
    """``M(A) = sup_{|h| <= 1} (Ah, h)``: the largest (signed) eigenvalue."""
    return _scalar(eigvals_desc(a)[..., 0])


def nonneg_part(a) -> np.ndarray:
    """Spectral projection of ``A`` onto its nonnegative eigenvalues."""
    vals, vecs = eigh_desc(a)
    pos = np.maximum(vals, 0.0)
    return sym(np.einsum("...ik,...k,...jk->...ij", vecs, pos, vecs))


def sqrtm_psd(a) -> np.ndarray:
    vals, vecs = eigh_desc(a)
    if np.any(vals < 0):
        raise InvalidArgument("matrix square root needs a positive semidefinite matrix")
    return sym(np.einsum("...ik,...k,...jk->...ij", vecs, np.sqrt(vals), vecs))


def inv_sqrtm_pd(a) -> np.ndarray:
    vals, vecs = eigh_desc(a)
    if np.any(vals <= 0):
        raise InvalidArgument("inverse square root needs a positive definite matrix")
    return sym(np.einsum("...ik,...k,...jk->...ij", vecs, 1.0 / np.sqrt(vals), vecs))


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True)
class Field:
    """Scalar field on R^dim; missing derivatives fall back to finite differences."""

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    stencil: FDStencil = FDStencil()

    def __call__(self, x):
        return np.asarray(self.value(as_points(x, self.dim)), dtype=float)

    def gradient(self, x):
        x = as_points(x, self.dim)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        return self.stencil.derivative(self.value, x)

    def hessian(self, x):
        x = as_points(x, self.dim)
        if self.hess is not None:
            return np.asarray(self.hess(x), dtype=float)
        if self.grad is not None:
            return sym(self.stencil.derivative(self.grad, x).swapaxes(1, 2))
        return self.stencil.hessian(self.value, x)


def as_field(obj) -> Field:
    """Wrap a ``Field``, a transport map (its potential ``phi``) or a density."""
    if isinstance(obj, Field):
        return obj
    if hasattr(obj, "grad_phi"):
        return Field(obj.dim, obj.phi, obj.grad_phi, obj.hess_phi)
    if hasattr(obj, "value") and hasattr(obj, "grad"):
        return Field(obj.dim, obj.value, obj.grad, getattr(obj, "hess", None))
    raise InvalidArgument(f"cannot interpret {type(obj).__name__} as a scalar field")


def linear_field(a) -> Field:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return Field(
        a.size,
        lambda x: x @ a,
        lambda x: np.broadcast_to(a, x.shape).copy(),
        lambda x: np.zeros((x.shape[0], a.size, a.size)),
    )


def quadratic_field(c) -> Field:
    """``x^T C x / 2`` for a symmetric matrix (or scalar) ``C``."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    c = sym(c)
    return Field(
        c.shape[0],
        lambda x: 0.5 * np.einsum("ni,ij,nj->n", x, c, x),
        lambda x: x @ c,
        lambda x: np.broadcast_to(c, (x.shape[0],) + c.shape).copy(),
    )


def ou_operator(phi, x) -> np.ndarray:
    """``L phi(x) = Laplacian phi(x) - <x, grad phi(x)>``."""
    f = as_field(phi)
    x = as_points(x, f.dim)
    lap = np.trace(f.hessian(x), axis1=1, axis2=2)
    out = lap - np.sum(x * f.gradient(x), axis=1)
    bad = ~np.isfinite(out)
    if bad.any():
        idx = int(np.argmax(bad))
        raise EvaluationError(f"OU operator not finite at {x[idx].tolist()}", point=x[idx])
    return out


def ibp_terms(f, i: int, g, xi, rule: QuadratureRule) -> tuple[float, float]:
    """Both sides of the Gaussian integration-by-parts identity in direction ``i``.

    ``int xi_i f g = -int xi f_i g + int xi f (x_i - g_i / g) g``, all against ``gamma``.
    """
    f, xi = as_field(f), as_field(xi)
    if not 0 <= i < g.dim:
        raise InvalidArgument(f"coordinate index {i} out of range for dimension {g.dim}")
    x = rule.nodes
    gv = g.value(x)
    dg = g.grad(x)[:, i]
    fv, dfi = f(x), f.gradient(x)[:, i]
    xv, dxi = xi(x), xi.gradient(x)[:, i]
    lhs = np.sum(rule.weights * dxi * fv * gv)
    rhs = -np.sum(rule.weights * xv * dfi * gv) + np.sum(rule.weights * xv * fv * (x[:, i] * gv - dg))
    return float(lhs), float(rhs)


def ibp_residual(f, i: int, g, xi, rule: QuadratureRule) -> float:
    lhs, rhs = ibp_terms(f, i, g, xi, rule)
    return lhs - rhs

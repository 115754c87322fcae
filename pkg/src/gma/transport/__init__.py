"""Optimal transport of ``g gamma`` onto ``gamma`` for the implemented density families."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..density import Density, GaussianDensity, ShiftDensity, adapted_rule
from ..errors import InvalidArgument
from ..operators import sym
from ._cdf import Rearrangement1D
from ._sinkhorn import SinkhornResult, sinkhorn_2d
from .maps import (
    EntropicMap,
    InverseMap1D,
    LinearMap,
    Map1D,
    ProductMap,
    TransportMap,
    gaussian_linear_matrix,
)

__all__ = [
    "GridSpec",
    "TransportMap",
    "LinearMap",
    "Map1D",
    "InverseMap1D",
    "ProductMap",
    "EntropicMap",
    "Rearrangement1D",
    "SinkhornResult",
    "solve",
    "solve_1d",
    "solve_product",
    "solve_gaussian_linear",
    "solve_entropic_2d",
    "invert",
    "map_to_csv",
    "read_map_csv",
]

TAIL_MASS_LIMIT = 1e-6
EPS_WINDOW = (1e-3, 1.0)


def solve_1d(g: Density) -> Map1D:
    if g.dim != 1:
        raise InvalidArgument(f"solve_1d needs a one-dimensional density, got dim={g.dim}")
    return Map1D(Rearrangement1D(g))


def solve_product(g: Density) -> ProductMap:
    if g.factors is None:
        raise InvalidArgument(f"{g.name} density has no product structure")
    return ProductMap([solve_1d(f) for f in g.factors])


def solve_gaussian_linear(cov) -> LinearMap:
    """Linear map ``Sigma^{-1/2}``; accepts a covariance matrix or a Gaussian density."""
    if isinstance(cov, GaussianDensity):
        cov = cov.cov
    elif isinstance(cov, ShiftDensity):
        raise InvalidArgument("a shift is affine, not linear; use solve_1d or solve_product")
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise InvalidArgument("covariance must be a symmetric matrix")
    if np.linalg.eigvalsh(sym(cov))[0] <= 0:
        raise InvalidArgument("covariance must be positive definite")
    return LinearMap(gaussian_linear_matrix(cov))


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid ``[-L, L]^2`` with ``points`` nodes per axis.

    ``half_width=None`` grows ``L`` from 5 in steps of 0.5 until the mass of
    ``g gamma`` outside the box is below 1e-6.
    """

    points: int = 128
    half_width: float | None = None

    def __post_init__(self):
        if self.points < 8:
            raise InvalidArgument("grid needs at least 8 points per axis")
        if self.half_width is not None and not self.half_width > 0:
            raise InvalidArgument("grid half width must be positive")


def _outside_mass(g: Density, half_width: float) -> float:
    rule = adapted_rule(g)
    out = np.any(np.abs(rule.nodes) > half_width, axis=1)
    return float(np.sum(np.exp(g.log_value(rule.nodes[out]) + np.log(rule.weights[out])))) if out.any() else 0.0


def _box_half_width(g: Density, grid: GridSpec) -> float:
    if grid.half_width is not None:
        mass = _outside_mass(g, grid.half_width)
        if mass >= TAIL_MASS_LIMIT:
            raise InvalidArgument(f"mass {mass:.3g} of the source lies outside [-{grid.half_width}, {grid.half_width}]^2")
        return float(grid.half_width)
    half = 5.0
    while _outside_mass(g, half) >= TAIL_MASS_LIMIT:
        half += 0.5
        if half > 40:
            raise InvalidArgument("source is too spread out for the entropic grid")
    return half


def solve_entropic_2d(g: Density, eps: float = 0.01, grid: GridSpec | None = None, **kwargs) -> EntropicMap:
    """Entropic transport on a tensor grid, read off by barycentric projection."""
    if g.dim != 2:
        raise InvalidArgument("the entropic solver is two-dimensional")
    if not EPS_WINDOW[0] <= eps <= EPS_WINDOW[1]:
        raise InvalidArgument(f"eps must lie in {list(EPS_WINDOW)}, got {eps}")
    grid = grid or GridSpec()
    half = _box_half_width(g, grid)
    axis = np.linspace(-half, half, grid.points)
    pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    sq = 0.5 * np.sum(pts * pts, axis=1)
    log_a = (g.log_value(pts) - sq).reshape(grid.points, grid.points)
    if not np.all(np.isfinite(log_a)):
        raise InvalidArgument("source density must be strictly positive on the grid")
    log_a -= logsumexp(log_a)
    log_b = (-sq).reshape(grid.points, grid.points)
    log_b -= logsumexp(log_b)
    result = sinkhorn_2d(log_a, log_b, axis, eps, **kwargs)
    step = axis[1] - axis[0]
    return EntropicMap(result, accuracy_class=max(5.0 * eps, 4.0 * step * step))


def solve(g: Density, *, kind: str = "auto", eps: float = 0.01, grid: GridSpec | None = None) -> TransportMap:
    """Dispatch on the density: 1D -> CDF, product -> coordinatewise, Gaussian -> linear, 2D -> entropic."""
    if kind == "auto":
        if g.dim == 1:
            kind = "cdf"
        elif g.factors is not None:
            kind = "product"
        elif isinstance(g, GaussianDensity):
            kind = "linear"
        elif g.dim == 2:
            kind = "entropic"
        else:
            raise InvalidArgument(f"no solver for a coupled density in dimension {g.dim}")
    if kind == "cdf":
        return solve_1d(g)
    if kind == "product":
        return solve_product(g)
    if kind == "linear":
        return solve_gaussian_linear(g)
    if kind == "entropic":
        return solve_entropic_2d(g, eps=eps, grid=grid)
    raise InvalidArgument(f"unknown solver kind {kind!r}")


def invert(T: TransportMap, g: Density | None = None) -> TransportMap:
    """Inverse map ``S`` with ``T(S(y)) = y``, transporting ``gamma`` to ``g gamma``."""
    if isinstance(T, (Map1D, InverseMap1D, LinearMap, ProductMap)):
        return T.inverse()
    raise InvalidArgument(f"{T.solver_tag} maps cannot be inverted")


# ---------------------------------------------------------------------------
# text serialization

CSV_VERSION = 1


def map_to_csv(T: TransportMap, points, stream=None) -> str:
    """Write ``phi``, ``grad phi`` and ``D^2 phi`` at ``points`` as CSV with a version header."""
    x = np.asarray(points, dtype=float).reshape(-1, T.dim)
    d = T.dim
    phi, grad, hess = T.phi(x), T.grad_phi(x), T.hess_phi(x)
    buf = stream if stream is not None else io.StringIO()
    buf.write(f"# gma-transport-map version={CSV_VERSION} solver_tag={T.solver_tag} dim={d} accuracy_class={T.accuracy_class!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = [f"x{i + 1}" for i in range(d)] + ["phi"] + [f"dphi{i + 1}" for i in range(d)]
    header += [f"d2phi{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    w.writerow(header)
    for n in range(x.shape[0]):
        w.writerow([repr(float(v)) for v in np.concatenate([x[n], [phi[n]], grad[n], hess[n].reshape(-1)])])
    return buf.getvalue() if stream is None else ""


def read_map_csv(text: str) -> dict:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# gma-transport-map"):
        raise InvalidArgument("not a transport-map CSV")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split()[1:])
    if int(meta["version"]) != CSV_VERSION:
        raise InvalidArgument(f"unsupported map CSV version {meta['version']}")
    rows = list(csv.reader(lines[1:]))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    return {"meta": meta, "columns": header, "data": data}

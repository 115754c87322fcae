"""Monotone rearrangement of a one-dimensional measure onto the standard Gaussian.

Everything is carried in log space: the cumulative distribution ``F`` of
``mu = rho dx`` and its survival function ``S`` are accumulated from panel
integrals with ``logaddexp``, and the map is ``T = Phi^{-1}(F)`` evaluated
through ``ndtri_exp`` on whichever of ``log F`` / ``log S`` is smaller.  This
keeps ``T`` accurate deep into both tails.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp, ndtri_exp

from ..errors import SolverError

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_HALF = math.log(0.5)


def _log1mexp(a):
    """``log(1 - exp(a))`` for ``a <= 0``."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(a > -0.6931471805599453, np.log(-np.expm1(a)), np.log1p(-np.exp(a)))


class Rearrangement1D:
    """Log-domain CDF machinery for ``rho(x) = g(x) exp(-x^2/2) / sqrt(2 pi)``.

    ``g`` must expose vectorized ``log_value`` and ``grad_log`` on ``(N, 1)``
    points.  The integration box is where ``log rho`` is within ``drop`` of
    its maximum; the mass outside it is estimated by the first-order Mills
    ratio ``rho / |(log rho)'|``, which is below ``exp(-drop)`` relative.
    """

    def __init__(self, g, panels: int = 2048, nodes: int = 20, drop: float = 1000.0, max_jump: float = 2.0):
        self.g = g
        self.drop = drop
        self._t, self._w = np.polynomial.legendre.leggauss(nodes)

        self._find_box()
        edges = np.linspace(self.lo, self.hi, panels + 1)
        # split panels across which log rho changes by more than max_jump
        for _ in range(3):
            lr = self.log_rho(edges)
            jump = np.abs(np.diff(lr))
            pieces = np.maximum(1, np.ceil(jump / max_jump)).astype(int)
            if np.all(pieces == 1):
                break
            parts = [np.linspace(a, b, k + 1)[:-1] for a, b, k in zip(edges[:-1], edges[1:], pieces)]
            edges = np.append(np.concatenate(parts), edges[-1])
        self.edges = edges

        log_pan = self._log_panel(edges[:-1], edges[1:])
        left_tail = self._mills_left(np.array([self.lo]))[0]
        right_tail = self._mills_right(np.array([self.hi]))[0]
        self.cum_left = np.logaddexp.accumulate(np.concatenate([[left_tail], log_pan]))
        self.cum_right = np.logaddexp.accumulate(np.concatenate([[right_tail], log_pan[::-1]]))[::-1]
        self.log_z = float(np.logaddexp(self.cum_left[-1], right_tail))
        # map values at the edges, used to bracket inversions
        self.t_edges = self.transport(edges)

    # -- the measure ---------------------------------------------------------

    def log_rho(self, x):
        x = np.asarray(x, dtype=float)
        return self.g.log_value(x.reshape(-1, 1)).reshape(x.shape) - 0.5 * x * x - _HALF_LOG_2PI

    def dlog_rho(self, x):
        x = np.asarray(x, dtype=float)
        return self.g.grad_log(x.reshape(-1, 1)).reshape(x.shape) - x

    def _find_box(self):
        grid = np.linspace(-60.0, 60.0, 4801)
        lr = self.log_rho(grid)
        if not np.any(np.isfinite(lr)):
            raise SolverError("log density is not finite anywhere on [-60, 60]", solver="cdf-1d")
        k = int(np.nanargmax(lr))
        self.mode, self.log_max = float(grid[k]), float(lr[k])
        level = self.log_max - self.drop
        self.lo = self._crossing(-1.0, level)
        self.hi = self._crossing(1.0, level)

    def _crossing(self, direction, level):
        inside = self.mode
        step = 1.0
        while True:
            x = self.mode + direction * step
            if self.log_rho(np.array([x]))[0] < level:
                break
            inside = x
            step *= 2.0
            if step > 1e5:
                raise SolverError("density tails decay too slowly to bracket the mass", solver="cdf-1d")
        outside = x
        for _ in range(80):
            mid = 0.5 * (inside + outside)
            if self.log_rho(np.array([mid]))[0] < level:
                outside = mid
            else:
                inside = mid
        return outside

    def _log_panel(self, a, b):
        """``log int_a^b rho`` with a Gauss-Legendre rule per interval (vectorized)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        x = mid[:, None] + half[:, None] * self._t
        lr = self.log_rho(x)
        with np.errstate(divide="ignore"):
            lw = np.log(np.abs(half))[:, None] + np.log(self._w)
        out = logsumexp(lr + lw, axis=1)
        return np.where(half > 0, out, -np.inf)

    def _mills_left(self, x):
        slope = self.dlog_rho(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(slope > 0, self.log_rho(x) - np.log(slope), -np.inf)

    def _mills_right(self, x):
        slope = self.dlog_rho(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(slope < 0, self.log_rho(x) - np.log(-slope), -np.inf)

    # -- distribution functions ----------------------------------------------

    def log_cdf_sf(self, x):
        """Normalized ``(log F(x), log S(x))``."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        log_f = np.empty_like(flat)
        log_s = np.empty_like(flat)

        left = flat < self.lo
        right = flat > self.hi
        mid = ~(left | right)

        if left.any():
            lf = self._mills_left(flat[left])
            log_f[left] = lf
            log_s[left] = _log1mexp(np.minimum(lf - self.log_z, 0.0)) + self.log_z
        if right.any():
            ls = self._mills_right(flat[right])
            log_s[right] = ls
            log_f[right] = _log1mexp(np.minimum(ls - self.log_z, 0.0)) + self.log_z
        if mid.any():
            xm = flat[mid]
            j = np.clip(np.searchsorted(self.edges, xm, side="right") - 1, 0, len(self.edges) - 2)
            log_f[mid] = np.logaddexp(self.cum_left[j], self._log_panel(self.edges[j], xm))
            log_s[mid] = np.logaddexp(self.cum_right[j + 1], self._log_panel(xm, self.edges[j + 1]))

        log_f = np.minimum(log_f - self.log_z, 0.0)
        log_s = np.minimum(log_s - self.log_z, 0.0)
        return log_f.reshape(x.shape), log_s.reshape(x.shape)

    # -- the map and its derivatives -----------------------------------------

    def transport(self, x):
        log_f, log_s = self.log_cdf_sf(x)
        with np.errstate(invalid="ignore"):
            return np.where(log_f < _LOG_HALF, ndtri_exp(np.minimum(log_f, _LOG_HALF)), -ndtri_exp(np.minimum(log_s, _LOG_HALF)))

    def log_dtransport(self, x, t=None):
        """``log T'(x) = log rho(x) - log N(T(x))``."""
        x = np.asarray(x, dtype=float)
        if t is None:
            t = self.transport(x)
        return self.log_rho(x) - self.log_z + 0.5 * t * t + _HALF_LOG_2PI

    def derivatives(self, x):
        """``T``, ``T'`` and ``T''`` at ``x``.

        ``T'' = T' ((log rho)' + T T')`` follows from differentiating
        ``N(T) T' = rho``.
        """
        x = np.asarray(x, dtype=float)
        t = self.transport(x)
        dt = np.exp(self.log_dtransport(x, t))
        ddt = dt * (self.dlog_rho(x) + t * dt)
        return t, dt, ddt

    def inverse(self, y, tol: float = 1e-14, max_iter: int = 100):
        """Solve ``T(x) = y`` by safeguarded Newton inside the bracketing panel."""
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        te = self.t_edges
        j = np.clip(np.searchsorted(te, flat, side="right") - 1, 0, len(te) - 2)
        a = self.edges[j].copy()
        b = self.edges[j + 1].copy()
        below, above = flat < te[0], flat > te[-1]
        # outside the box: widen the bracket geometrically
        a[below] = self.lo - 4.0 * (te[0] - flat[below] + 1.0) * max(1.0, self.hi - self.lo)
        b[below] = self.lo
        a[above] = self.hi
        b[above] = self.hi + 4.0 * (flat[above] - te[-1] + 1.0) * max(1.0, self.hi - self.lo)

        x = 0.5 * (a + b)
        done = np.zeros(flat.shape, dtype=bool)
        for _ in range(max_iter):
            t = self.transport(x)
            r = t - flat
            a = np.where(r < 0, x, a)
            b = np.where(r > 0, x, b)
            dt = np.exp(self.log_dtransport(x, t))
            with np.errstate(divide="ignore", invalid="ignore"):
                step = r / dt
            cand = x - step
            bad = ~np.isfinite(cand) | (cand <= a) | (cand >= b)
            cand = np.where(bad, 0.5 * (a + b), cand)
            done = np.abs(cand - x) <= tol * np.maximum(1.0, np.abs(x))
            x = cand
            if done.all():
                break
        if not done.all():
            k = int(np.argmin(done))
            raise SolverError(
                f"inverse transport did not converge at y = {flat[k]!r}", solver="cdf-1d", residual=float(np.abs(self.transport(x[k : k + 1]) - flat[k])[0])
            )
        return x.reshape(y.shape)

"""Finite cascades of conditional expectations ``g_n = E^n g`` and their transports.

A density ``g`` on ``R^d`` stands in for an infinite-dimensional one.  Each
level ``n`` keeps the first ``n`` coordinates, solves the transport
``T_n = I + grad phi_n`` of ``g_n gamma_n`` onto ``gamma_n`` and measures it
against the top-level density: every cross-level integral is taken with
weight ``g`` on ``R^d``, which is legitimate because the integrands only
depend on the first ``n`` coordinates.

Level 0 is the trivial one (``g_0 = 1``, ``phi_0 = 0``); contraction slacks
of the first listed level are measured against it.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .density import Density, adapted_rule, conditional_expectation, entropy, fisher_info, total_mass
from .errors import GMAError, InvalidArgument, SolverError
from .identities import CheckResult, accuracy_regime, bundle, identity_result, inequality_result
from .operators import hs_norm
from .quadrature import DEFAULT_ORDERS, QuadratureRule

# node counts per dimension for the top-level rule
CROSS_LEVEL_ORDERS = {1: 64, 2: 32, 3: 32, 4: 16, 5: 10, 6: 8}
MASS_TOLERANCE = 1e-8
MONOTONE_TOLERANCE = 1e-8
D2_NOISE = 1e-7
# column names are fixed by the report format
CSV_COLUMNS = ("n", "entropy", "fisher", "talagrand_slack", "p210_slack", "L_weighted", "contraction_slacks")


@dataclass
class Level:
    n: int
    density: Density
    map: object
    entropy: float
    fisher: float
    mass: float
    # integrals against the top-level density g
    transport_cost: float = 0.0
    hessian_energy: float = 0.0
    l_weighted: float = 0.0

    @property
    def talagrand_slack(self) -> float:
        return self.entropy - 0.5 * self.transport_cost

    @property
    def fisher_hessian_slack(self) -> float:
        return self.fisher - self.hessian_energy


@dataclass
class TruncationStudy:
    base: Density
    levels: tuple[int, ...]
    per_level: dict[int, Level]
    rule: QuadratureRule
    top_entropy: float
    top_fisher: float
    # previous-level contraction slack for each level
    contraction: dict[int, float] = field(default_factory=dict)
    _node_cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.base.dim

    def padded(self, n: int, x: np.ndarray):
        """``grad phi_n`` and ``D^2 phi_n`` at ``x in R^d``, zero-padded to ``d`` coordinates."""
        on_nodes = x is self.rule.nodes
        if on_nodes and n in self._node_cache:
            return self._node_cache[n]
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        grad = np.zeros_like(x)
        hess = np.zeros((x.shape[0], self.dim, self.dim))
        if n > 0:
            T = self.per_level[n].map
            if T.handles_repeats:
                grad[:, :n] = T.grad_phi(x[:, :n])
                hess[:, :n, :n] = T.hess_phi(x[:, :n])
            else:
                # tensor nodes repeat their leading coordinates many times
                head, inv = np.unique(x[:, :n], axis=0, return_inverse=True)
                inv = inv.reshape(-1)
                grad[:, :n] = T.grad_phi(head)[inv]
                hess[:, :n, :n] = T.hess_phi(head)[inv]
        if on_nodes:
            self._node_cache[n] = (grad, hess)
        return grad, hess

    def entropies(self) -> list[float]:
        return [self.per_level[n].entropy for n in self.levels]

    def fishers(self) -> list[float]:
        return [self.per_level[n].fisher for n in self.levels]

    def tolerance(self) -> float:
        if accuracy_regime(self.base) == "analytic":
            return 1e-8
        return 1e-5


def _cross_rule(g: Density, order: int | None) -> QuadratureRule:
    if order is None:
        order = CROSS_LEVEL_ORDERS.get(g.dim, DEFAULT_ORDERS.get(g.dim, 8))
    return adapted_rule(g, order)


def _solve_level(g: Density, n: int, solve_fn: Callable) -> Level:
    gn = conditional_expectation(g, n)
    try:
        T = solve_fn(gn)
    except SolverError as exc:
        raise SolverError(f"level {n}: {exc}", solver=exc.solver, residual=exc.residual) from exc
    except GMAError as exc:
        raise type(exc)(f"level {n}: {exc}") from exc
    return Level(n, gn, T, entropy(gn), fisher_info(gn), total_mass(gn))


def run_study(g: Density, levels: Sequence[int] | None = None, *, order: int | None = None, solve_fn=None, jobs: int = 1) -> TruncationStudy:
    """Solve every level of the cascade and fill in the cross-level quantities."""
    from .transport import solve

    solve_fn = solve_fn or solve
    levels = tuple(range(1, g.dim + 1)) if levels is None else tuple(int(n) for n in levels)
    if len(levels) < 2:
        raise InvalidArgument("a truncation study needs at least two levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidArgument(f"levels must be strictly increasing, got {list(levels)}")
    if levels[0] < 1 or levels[-1] > g.dim:
        raise InvalidArgument(f"levels must lie in [1, {g.dim}]")

    if jobs > 1 and os.environ.get("GMA_DETERMINISTIC") != "1":
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            solved = list(pool.map(lambda n: _solve_level(g, n, solve_fn), levels))
    else:
        solved = [_solve_level(g, n, solve_fn) for n in levels]
    per_level = {lv.n: lv for lv in solved}

    rule = _cross_rule(g, order)
    lg = g.log_value(rule.nodes)
    with np.errstate(divide="ignore"):
        wg = np.exp(lg + np.log(rule.weights))
    study = TruncationStudy(g, levels, per_level, rule, entropy(g), fisher_info(g))

    x = rule.nodes
    prev_grad = np.zeros_like(x)
    prev_ent = 0.0
    for n in levels:
        lv = per_level[n]
        grad, hess = study.padded(n, x)
        sq = np.sum(grad * grad, axis=1)
        lphi = np.trace(hess, axis1=1, axis2=2) - np.sum(x * grad, axis=1)
        lv.transport_cost = float(np.sum(wg * sq))
        lv.hessian_energy = float(np.sum(wg * hs_norm(hess) ** 2))
        lv.l_weighted = float(np.sum(wg * lphi**2 / (1.0 + sq)))
        diff = grad - prev_grad
        study.contraction[n] = (lv.entropy - prev_ent) - 0.5 * float(np.sum(wg * np.sum(diff * diff, axis=1)))
        prev_grad, prev_ent = grad, lv.entropy
    return study


# ---------------------------------------------------------------------------
# checks


def check_monotonicity(study: TruncationStudy) -> CheckResult:
    """Entropy and Fisher information are nondecreasing in ``n``, bounded by the top level, and each ``g_n`` has mass 1."""
    parts = []
    ent, fis = study.entropies(), study.fishers()
    for k in range(1, len(study.levels)):
        a, b = study.levels[k - 1], study.levels[k]
        parts.append(inequality_result(f"entropy_{a}_{b}", ent[k], ent[k - 1], MONOTONE_TOLERANCE))
        parts.append(inequality_result(f"fisher_{a}_{b}", fis[k], fis[k - 1], MONOTONE_TOLERANCE))
    parts.append(inequality_result("entropy_top", study.top_entropy, max(ent), MONOTONE_TOLERANCE))
    parts.append(inequality_result("fisher_top", study.top_fisher, max(fis), MONOTONE_TOLERANCE))
    for n in study.levels:
        parts.append(identity_result(f"mass_{n}", study.per_level[n].mass, 1.0, MASS_TOLERANCE))
    return bundle("truncation_monotonicity", parts, entropy=ent, fisher=fis, levels=list(study.levels))


def check_contraction(study: TruncationStudy, m: int, n: int, tolerance: float | None = None) -> CheckResult:
    """``Ent g_n - Ent g_m >= 1/2 int |grad phi_n - grad phi_m|^2 g`` for ``m <= n``.

    ``m = 0`` stands for the trivial level.  The weight is the top-level ``g``.
    """
    name = f"truncation_contraction_{m}_{n}"
    if n not in study.per_level or (m != 0 and m not in study.per_level):
        raise InvalidArgument(f"levels ({m}, {n}) are not part of the study")
    if m > n:
        raise InvalidArgument(f"need m <= n, got ({m}, {n})")
    tol = study.tolerance() if tolerance is None else tolerance
    x = study.rule.nodes
    with np.errstate(divide="ignore"):
        wg = np.exp(study.base.log_value(x) + np.log(study.rule.weights))
    gn, _ = study.padded(n, x)
    gm, _ = study.padded(m, x)
    diff = gn - gm
    cost = 0.5 * float(np.sum(wg * np.sum(diff * diff, axis=1)))
    ent_m = 0.0 if m == 0 else study.per_level[m].entropy
    gap = study.per_level[n].entropy - ent_m
    return inequality_result(name, gap, cost, tol, m=m, n=n)


def check_uniform_L_bound(study: TruncationStudy, tolerance: float | None = None) -> CheckResult:
    """``max_n int (L phi_n)^2 / (1 + |grad phi_n|^2) g <= 16 I(g)`` with the top-level Fisher information."""
    tol = study.tolerance() if tolerance is None else tolerance
    values = {n: study.per_level[n].l_weighted for n in study.levels}
    worst = max(values, key=values.get)
    return inequality_result("truncation_uniform_L_bound", 16.0 * study.top_fisher, values[worst], tol, per_level=values, worst_level=worst)


def check_energy_bounds(study: TruncationStudy, tolerance: float | None = None) -> CheckResult:
    """Per-level Talagrand and Hessian bounds, and ``sup_n int (|grad phi_n|^2 + ||D^2 phi_n||^2) g <= 2 Ent g + I g``."""
    tol = study.tolerance() if tolerance is None else tolerance
    parts = []
    for n in study.levels:
        lv = study.per_level[n]
        parts.append(inequality_result(f"talagrand_{n}", lv.entropy, 0.5 * lv.transport_cost, tol))
        parts.append(inequality_result(f"fisher_hessian_{n}", lv.fisher, lv.hessian_energy, tol))
    energy = max(study.per_level[n].transport_cost + study.per_level[n].hessian_energy for n in study.levels)
    parts.append(inequality_result("energy_sup", 2.0 * study.top_entropy + study.top_fisher, energy, tol))
    return bundle("truncation_energy_bounds", parts)


def default_d2_points(dim: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """``count`` standard normal points in ``R^dim`` from a seeded generator."""
    return np.random.default_rng(seed).standard_normal((count, dim))


def check_d2_convergence(study: TruncationStudy, points=None, *, target=None, tolerance: float | None = None, seed: int = 0) -> CheckResult:
    """``||D^2 phi_n - D^2 phi||_HS`` is nonincreasing in ``n`` at every point and vanishes at the top.

    The target ``phi`` is the full-dimensional map (the study's level ``d`` if
    present, else ``target`` or a fresh solve).  The vanishing condition is
    only asserted when the last level is ``d``.
    """
    name = "truncation_d2_convergence"
    if len(study.levels) < 3:
        raise InvalidArgument("D^2 convergence needs at least three levels")
    d = study.dim
    x = default_d2_points(d, seed=seed) if points is None else np.asarray(points, dtype=float).reshape(-1, d)
    if target is None:
        if d in study.per_level:
            target = study.per_level[d].map
        else:
            from .transport import solve

            target = solve(study.base)
    full = target.hess_phi(x)
    dist = np.stack([hs_norm(study.padded(n, x)[1] - full) for n in study.levels])
    tol = study.tolerance() if tolerance is None else tolerance
    increase = float(np.max(np.diff(dist, axis=0))) if len(study.levels) > 1 else 0.0
    parts = [inequality_result("nonincreasing", 0.0, increase, D2_NOISE)]
    if study.levels[-1] == d:
        parts.append(identity_result("vanishes_at_top", float(np.max(dist[-1])), 0.0, tol))
    return bundle(name, parts, max_distance_per_level=dict(zip(study.levels, np.max(dist, axis=1).tolist())), n_points=int(x.shape[0]))


def run_checks(study: TruncationStudy, points=None, seed: int = 0) -> list[CheckResult]:
    """All truncation checks, sorted by name.  Contraction is checked for consecutive levels and ``(first, last)``."""
    out = [check_monotonicity(study), check_uniform_L_bound(study), check_energy_bounds(study)]
    pairs = list(zip(study.levels, study.levels[1:]))
    if (study.levels[0], study.levels[-1]) not in pairs:
        pairs.append((study.levels[0], study.levels[-1]))
    out += [check_contraction(study, m, n) for m, n in pairs]
    if len(study.levels) >= 3:
        out.append(check_d2_convergence(study, points, seed=seed))
    return sorted(out, key=lambda r: r.name)


def study_rows(study: TruncationStudy) -> list[dict]:
    rows = []
    for n in study.levels:
        lv = study.per_level[n]
        rows.append(
            {
                "n": n,
                "entropy": lv.entropy,
                "fisher": lv.fisher,
                "talagrand_slack": lv.talagrand_slack,
                "p210_slack": lv.fisher_hessian_slack,
                "L_weighted": lv.l_weighted,
                "contraction_slacks": study.contraction[n],
            }
        )
    return rows


def study_to_csv(study: TruncationStudy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in study_rows(study):
        w.writerow([row["n"]] + [repr(float(row[c])) for c in CSV_COLUMNS[1:]])
    return buf.getvalue()


__all__ = [
    "CSV_COLUMNS",
    "Level",
    "TruncationStudy",
    "check_contraction",
    "check_d2_convergence",
    "check_energy_bounds",
    "check_monotonicity",
    "check_uniform_L_bound",
    "run_checks",
    "run_study",
    "study_rows",
    "study_to_csv",
]

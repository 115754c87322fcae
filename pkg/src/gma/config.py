"""Run configuration files (JSON, ``schema_version`` 1).

A minimal verify config::

    {"schema_version": 1,
     "density": {"family": "scaling", "params": {"sigmas": [2.0]}},
     "checks": "all"}

Unknown keys, families and check names are rejected when the file is parsed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .density import Density, make_gaussian_cov, make_mixture_1d, make_product, make_scaling, make_shift, make_standard
from .errors import GMAError, InvalidArgument
from .identities import CHECK_NAMES, SuiteOptions
from .transport import EPS_WINDOW, GridSpec

SCHEMA_VERSION = 1
SOLVER_KINDS = ("auto", "cdf", "product", "linear", "entropic")

_TOP_KEYS = {
    "schema_version",
    "description",
    "density",
    "solver",
    "quadrature_order",
    "checks",
    "tolerances",
    "tolerance_scale",
    "options",
    "truncation",
    "cross_check",
    "output",
    "seed",
}
_FAMILY_PARAMS = {
    "standard": {"dim"},
    "shift": {"a"},
    "scaling": {"sigmas"},
    "gaussian_cov": {"cov"},
    "mixture_1d": {"weights", "means", "sds"},
    "product": {"factors"},
}
_OPTION_KEYS = {"moment_p", "third_p", "shift_vector", "reference", "cov_derivatives", "third_derivatives", "points"}


class ConfigError(InvalidArgument):
    """The configuration file is malformed or names something unknown."""


def _require_keys(obj: Any, allowed: set, where: str, required: set = frozenset()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def build_density(spec: Any, where: str = "density") -> Density:
    """Construct a density from ``{"family": name, "params": {...}}``."""
    _require_keys(spec, {"family", "params"}, where, {"family"})
    family = spec["family"]
    if family not in _FAMILY_PARAMS:
        raise ConfigError(f"{where}: unknown family {family!r}; known families: {sorted(_FAMILY_PARAMS)}")
    params = spec.get("params", {})
    allowed = _FAMILY_PARAMS[family]
    _require_keys(params, allowed, f"{where}.params", set() if family == "standard" else allowed)
    try:
        if family == "standard":
            dim = params.get("dim", 1)
            if not isinstance(dim, int) or not 1 <= dim <= 6:
                raise ConfigError(f"{where}.params.dim must be an integer in [1, 6]")
            return make_standard(dim)
        if family == "shift":
            return make_shift(params["a"])
        if family == "scaling":
            return make_scaling(params["sigmas"])
        if family == "gaussian_cov":
            return make_gaussian_cov(params["cov"])
        if family == "mixture_1d":
            return make_mixture_1d(params["weights"], params["means"], params["sds"])
        factors = params["factors"]
        if not isinstance(factors, list) or not factors:
            raise ConfigError(f"{where}.params.factors must be a non-empty list")
        return make_product([build_density(f, f"{where}.params.factors[{i}]") for i, f in enumerate(factors)])
    except ConfigError:
        raise
    except (GMAError, ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class SolverSpec:
    kind: str = "auto"
    eps: float = 0.01
    grid: GridSpec = field(default_factory=GridSpec)


@dataclass
class CrossCheck:
    """Compare the configured solver's ``grad Phi`` with another solver on a box."""

    against: str
    budget: float
    half_width: float = 2.0
    per_axis: int = 41


@dataclass
class RunConfig:
    density: Density
    density_spec: dict
    solver: SolverSpec = field(default_factory=SolverSpec)
    quadrature_order: int | None = None
    checks: tuple[str, ...] = CHECK_NAMES
    tolerances: dict = field(default_factory=dict)
    tolerance_scale: float = 1.0
    options: dict = field(default_factory=dict)
    levels: tuple[int, ...] | None = None
    cross_check: CrossCheck | None = None
    output_dir: str | None = None
    seed: int = 0
    source: str = ""

    def suite_options(self) -> SuiteOptions:
        o = self.options
        ref = build_density(o["reference"], "options.reference") if "reference" in o else None
        pts = None if "points" not in o else np.asarray(o["points"], dtype=float).reshape(-1, self.density.dim)
        return SuiteOptions(
            order=self.quadrature_order,
            reference=ref,
            shift_vector=o.get("shift_vector"),
            moment_p=float(o.get("moment_p", 1.0)),
            third_p=float(o.get("third_p", 1.5)),
            cov_derivatives=o.get("cov_derivatives", "analytic"),
            third_derivatives=o.get("third_derivatives", "analytic"),
            tolerance_scale=self.tolerance_scale,
            tolerances=dict(self.tolerances),
            points=pts,
        )


def _positive_number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"{where} must be a positive number, got {value!r}")
    return float(value)


def _parse_solver(obj) -> SolverSpec:
    _require_keys(obj, {"kind", "eps", "grid"}, "solver")
    kind = obj.get("kind", "auto")
    if kind not in SOLVER_KINDS:
        raise ConfigError(f"solver.kind must be one of {list(SOLVER_KINDS)}, got {kind!r}")
    eps = _positive_number(obj.get("eps", 0.01), "solver.eps")
    if not EPS_WINDOW[0] <= eps <= EPS_WINDOW[1]:
        raise ConfigError(f"solver.eps must lie in {list(EPS_WINDOW)}")
    grid = obj.get("grid", {})
    _require_keys(grid, {"points", "half_width"}, "solver.grid")
    try:
        spec = GridSpec(points=int(grid.get("points", 128)), half_width=grid.get("half_width"))
    except InvalidArgument as exc:
        raise ConfigError(f"solver.grid: {exc}") from exc
    return SolverSpec(kind, eps, spec)


def parse_config(data: dict, source: str = "") -> RunConfig:
    """Validate a decoded JSON object and build a :class:`RunConfig`."""
    _require_keys(data, _TOP_KEYS, "config", {"schema_version", "density"})
    if data["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {data['schema_version']!r} (expected {SCHEMA_VERSION})")
    density = build_density(data["density"])
    cfg = RunConfig(density=density, density_spec=data["density"], source=source)
    if "solver" in data:
        cfg.solver = _parse_solver(data["solver"])
    order = data.get("quadrature_order")
    if order is not None:
        if not isinstance(order, int) or isinstance(order, bool) or not 1 <= order <= 512:
            raise ConfigError(f"quadrature_order must be an integer in [1, 512], got {order!r}")
        cfg.quadrature_order = order
    checks = data.get("checks", "all")
    if checks == "all":
        cfg.checks = CHECK_NAMES
    else:
        if not isinstance(checks, list) or not checks:
            raise ConfigError('checks must be "all" or a non-empty list of names')
        unknown = sorted(set(checks) - set(CHECK_NAMES))
        if unknown:
            raise ConfigError(f"unknown checks {unknown}; known checks: {list(CHECK_NAMES)}")
        cfg.checks = tuple(checks)
    tols = data.get("tolerances", {})
    _require_keys(tols, set(CHECK_NAMES), "tolerances")
    cfg.tolerances = {k: _positive_number(v, f"tolerances.{k}") for k, v in tols.items()}
    cfg.tolerance_scale = _positive_number(data.get("tolerance_scale", 1.0), "tolerance_scale")
    opts = data.get("options", {})
    _require_keys(opts, _OPTION_KEYS, "options")
    if "reference" in opts:
        ref = build_density(opts["reference"], "options.reference")
        if ref.dim != density.dim:
            raise ConfigError("options.reference must have the same dimension as the density")
    if "moment_p" in opts and not opts["moment_p"] >= 1:
        raise ConfigError("options.moment_p must be at least 1")
    if "third_p" in opts and not 1 < opts["third_p"] <= 2:
        raise ConfigError("options.third_p must lie in (1, 2]")
    for key in ("cov_derivatives", "third_derivatives"):
        if key in opts and opts[key] not in ("analytic", "fd"):
            raise ConfigError(f"options.{key} must be 'analytic' or 'fd'")
    if "shift_vector" in opts:
        e = np.asarray(opts["shift_vector"], dtype=float).reshape(-1)
        if e.size != density.dim or np.linalg.norm(e) > 2:
            raise ConfigError(f"options.shift_vector must have {density.dim} entries and norm at most 2")
    cfg.options = dict(opts)
    if "truncation" in data:
        tr = data["truncation"]
        _require_keys(tr, {"levels"}, "truncation")
        levels = tr.get("levels")
        if levels is not None:
            if not isinstance(levels, list) or not all(isinstance(n, int) and not isinstance(n, bool) for n in levels):
                raise ConfigError("truncation.levels must be a list of integers")
            cfg.levels = tuple(levels)
    if "cross_check" in data:
        cc = data["cross_check"]
        _require_keys(cc, {"against", "budget", "half_width", "per_axis"}, "cross_check", {"against", "budget"})
        if cc["against"] not in SOLVER_KINDS[1:]:
            raise ConfigError(f"cross_check.against must be one of {list(SOLVER_KINDS[1:])}")
        cfg.cross_check = CrossCheck(
            cc["against"],
            _positive_number(cc["budget"], "cross_check.budget"),
            _positive_number(cc.get("half_width", 2.0), "cross_check.half_width"),
            int(cc.get("per_axis", 41)),
        )
    if "output" in data:
        out = data["output"]
        _require_keys(out, {"dir"}, "output")
        cfg.output_dir = out.get("dir")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    cfg.seed = seed
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(data, source=str(path))


__all__ = ["ConfigError", "CrossCheck", "RunConfig", "SCHEMA_VERSION", "SolverSpec", "build_density", "load_config", "parse_config"]

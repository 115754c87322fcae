"""Command line front end: ``gma verify``, ``gma truncation`` and ``gma report``.

Exit codes: 0 all checks passed, 1 some check failed, 2 bad configuration or
usage, 3 a transport solver failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .errors import GMAError, InvalidArgument, SolverError
from .identities import CheckResult, identity_result, report_points, run_suite
from .truncation import run_checks, run_study, study_to_csv

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
CSV_FIELDS = ("name", "kind", "lhs", "rhs", "residual_or_slack", "tolerance", "pass")
DEFAULT_OUT = "gma-out"


def _number(v):
    """Floats as their shortest round-trip repr; non-finite values as strings."""
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return _number(obj)


def result_line(r: CheckResult) -> str:
    return json.dumps(_clean(r.to_dict()), sort_keys=True)


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in sorted(results, key=lambda r: r.name):
        w.writerow([r.name, r.kind, repr(r.lhs), repr(r.rhs), repr(r.residual_or_slack), repr(r.tolerance), "true" if r.passed else "false"])
    return buf.getvalue()


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _status_line(r: CheckResult) -> str:
    tag = "SKIP" if r.status == "skipped" else ("PASS" if r.passed else "FAIL")
    extra = f"  ({r.reason})" if r.reason else ""
    return f"{tag:4s}  {r.name:32s} residual_or_slack={r.residual_or_slack:.6g} tolerance={r.tolerance:.3g}{extra}"


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if args.quadrature_order is not None:
        if not 1 <= args.quadrature_order <= 512:
            raise ConfigError("--quadrature-order must lie in [1, 512]")
        cfg.quadrature_order = args.quadrature_order
    if args.tolerance_scale is not None:
        if not args.tolerance_scale > 0:
            raise ConfigError("--tolerance-scale must be positive")
        cfg.tolerance_scale = args.tolerance_scale
    if args.jobs is not None and args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return cfg


def _out_dir(cfg: RunConfig | None, args) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(DEFAULT_OUT)


def _solve(cfg: RunConfig, kind=None):
    from .transport import solve

    return solve(cfg.density, kind=kind or cfg.solver.kind, eps=cfg.solver.eps, grid=cfg.solver.grid)


def cross_check_result(cfg: RunConfig, T) -> CheckResult:
    """Sup-distance between ``grad Phi`` of two solvers on a box, against the configured budget."""
    cc = cfg.cross_check
    other = _solve(cfg, cc.against)
    x = report_points(cfg.density.dim, cc.half_width, cc.per_axis)
    err = np.max(np.abs(T(x) - other(x)), axis=1)
    k = int(np.argmax(err))
    r = identity_result("cross_solver", float(err[k]), 0.0, cc.budget, against=cc.against, solver=T.solver_tag, half_width=cc.half_width)
    r.samples = {"worst_point": x[k].tolist()}
    return r


def cmd_verify(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    out = _out_dir(cfg, args)
    try:
        T = _solve(cfg)
    except SolverError as exc:
        print(f"error: solver {exc.solver} failed for density {cfg.density.name}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        results = run_suite(cfg.density, T, cfg.checks, cfg.suite_options(), jobs=args.jobs or 1)
        if cfg.cross_check is not None:
            results = sorted(results + [cross_check_result(cfg, T)], key=lambda r: r.name)
    except SolverError as exc:
        print(f"error: solver {exc.solver} failed for density {cfg.density.name}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write(out, "verify.jsonl", "".join(result_line(r) + "\n" for r in results))
    _write(out, "verify.csv", results_csv(results))
    for r in results:
        print(_status_line(r))
    failed = [r.name for r in results if not r.passed]
    skipped = sum(1 for r in results if r.status == "skipped")
    print(f"{len(results) - len(failed) - skipped} passed, {len(failed)} failed, {skipped} skipped; reports in {out}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_truncation(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    out = _out_dir(cfg, args)
    try:
        study = run_study(cfg.density, cfg.levels, order=cfg.quadrature_order, jobs=args.jobs or 1)
    except SolverError as exc:
        print(f"error: solver {exc.solver} failed for density {cfg.density.name}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    results = run_checks(study, seed=cfg.seed)
    _write(out, "truncation.csv", study_to_csv(study))
    _write(out, "truncation.jsonl", "".join(result_line(r) + "\n" for r in results))
    for r in results:
        print(_status_line(r))
    gating = [r for r in results if r.name == "truncation_monotonicity" or r.name.startswith("truncation_contraction")]
    failed = [r.name for r in gating if not r.passed]
    print(f"levels {list(study.levels)}; {'all gating checks passed' if not failed else 'failed: ' + ', '.join(failed)}; reports in {out}")
    return EXIT_FAILED if failed else EXIT_OK


REPORT_FIELDS = ("section", "name", "kind", "lhs", "rhs", "residual_or_slack", "tolerance", "pass", "status")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{lineno}: not a JSON line ({exc.msg})") from exc
    return rows


def merge_reports(paths) -> list[tuple[str, list[dict]]]:
    """Sections in argument order; names appearing in several files get an ``@filename`` suffix.

    Files sharing a base name are labelled by the path as given instead.
    """
    names = [Path(p).name for p in paths]
    labels = [n if names.count(n) == 1 else str(p) for n, p in zip(names, paths)]
    sections = [(label, _read_jsonl(Path(p))) for label, p in zip(labels, paths)]
    seen: dict[str, set] = {}
    for label, rows in sections:
        for row in rows:
            seen.setdefault(row["name"], set()).add(label)
    merged = []
    for label, rows in sections:
        renamed = []
        for row in rows:
            row = dict(row)
            if len(seen[row["name"]]) > 1:
                row["name"] = f"{row['name']}@{label}"
            renamed.append(row)
        merged.append((label, sorted(renamed, key=lambda r: r["name"])))
    return merged


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_report(args) -> int:
    if not args.paths:
        print("error: report needs at least one JSON-lines file", file=sys.stderr)
        return EXIT_CONFIG
    missing = [p for p in args.paths if not Path(p).is_file()]
    if missing:
        print(f"error: missing report files: {missing}", file=sys.stderr)
        return EXIT_CONFIG
    merged = merge_reports(args.paths)
    text = io.StringIO()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for label, rows in merged:
        passed = sum(1 for r in rows if r.get("pass"))
        text.write(f"== {label} ({passed}/{len(rows)} passed)\n")
        text.write(f"{'name':40s} {'kind':10s} {'lhs':>14s} {'rhs':>14s} {'residual':>12s} {'tolerance':>10s} status\n")
        for r in rows:
            text.write(
                f"{r['name']:40s} {r['kind']:10s} {_fmt(r['lhs']):>14s} {_fmt(r['rhs']):>14s} "
                f"{_fmt(r['residual_or_slack']):>12s} {_fmt(r['tolerance']):>10s} {r.get('status', 'pass' if r['pass'] else 'fail')}\n"
            )
            numbers = [_cell(r[k]) for k in ("lhs", "rhs", "residual_or_slack", "tolerance")]
            w.writerow([label, r["name"], r["kind"], *numbers, "true" if r["pass"] else "false", r.get("status", "")])
        text.write("\n")
    out = Path(args.out) if args.out else Path(DEFAULT_OUT)
    _write(out, "report.txt", text.getvalue())
    _write(out, "report.csv", buf.getvalue())
    sys.stdout.write(text.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gma", description="Verify Gaussian transport identities numerically.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help=f"output directory (default: config output.dir or {DEFAULT_OUT})")
        p.add_argument("--quadrature-order", type=int, help="override the quadrature order")
        p.add_argument("--tolerance-scale", type=float, help="multiply every tolerance")
        p.add_argument("--jobs", type=int, help="worker threads (GMA_DETERMINISTIC=1 forces 1)")

    common(sub.add_parser("verify", help="run the identity and inequality checks"))
    common(sub.add_parser("truncation", help="run a conditional-expectation truncation study"))
    rep = sub.add_parser("report", help="merge JSON-lines reports into a summary")
    rep.add_argument("paths", nargs="*", help="JSON-lines report files")
    rep.add_argument("--out", help=f"output directory (default: {DEFAULT_OUT})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handlers = {"verify": cmd_verify, "truncation": cmd_truncation, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except (ConfigError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"error: solver {exc.solver} failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except GMAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

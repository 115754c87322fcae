import csv
import io
import json

import pytest

import gma.cli
import gma.transport
from gma import SolverError
from gma.cli import CSV_FIELDS, REPORT_FIELDS, main, merge_reports
from gma.config import ConfigError, load_config, parse_config
from gma.identities import CHECK_NAMES, identity_result, skipped_result
from gma.truncation import CSV_COLUMNS

from conftest import FIXTURES


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(argv):
    return main([str(a) for a in argv])


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


SCALING = {"schema_version": 1, "density": {"family": "scaling", "params": {"sigmas": [2.0]}}}


class TestConfig:
    def test_fixtures_parse(self):
        for path in sorted(FIXTURES.glob("*.json")):
            if path.stem == "unknown_family":
                continue
            assert load_config(path).density.dim >= 1

    def test_unknown_family(self):
        with pytest.raises(ConfigError, match="unknown family 'foo'"):
            load_config(FIXTURES / "unknown_family.json")

    @pytest.mark.parametrize(
        "patch, message",
        [
            ({"bogus": 1}, "unknown keys"),
            ({"schema_version": 2}, "schema_version"),
            ({"checks": ["talagrand", "nope"]}, "unknown checks"),
            ({"checks": []}, "non-empty"),
            ({"quadrature_order": 0}, "quadrature_order"),
            ({"solver": {"kind": "magic"}}, "solver.kind"),
            ({"options": {"third_p": 3.0}}, "third_p"),
            ({"options": {"shift_vector": [3.0]}}, "shift_vector"),
            ({"seed": "x"}, "seed"),
        ],
    )
    def test_rejected(self, patch, message):
        with pytest.raises(ConfigError, match=message):
            parse_config({**SCALING, **patch})

    def test_missing_density(self):
        with pytest.raises(ConfigError, match="missing keys"):
            parse_config({"schema_version": 1})

    def test_parameter_window(self):
        bad = {"schema_version": 1, "density": {"family": "scaling", "params": {"sigmas": [-1.0]}}}
        with pytest.raises(ConfigError):
            parse_config(bad)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\n  'schema_version': 1\n}")
        with pytest.raises(ConfigError, match="line 2"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")


class TestVerify:
    def test_scaling_all_checks(self, tmp_path, capsys):
        assert run(["verify", "--config", FIXTURES / "scaling2.json", "--out", tmp_path]) == 0
        rows = read_csv(tmp_path / "verify.csv")
        assert tuple(rows[0]) == CSV_FIELDS
        assert sorted(r["name"] for r in rows) == sorted(CHECK_NAMES)
        assert all(r["pass"] == "true" for r in rows)
        for r in rows:
            if r["kind"] == "identity":
                assert abs(float(r["residual_or_slack"])) < 1e-8
        lines = (tmp_path / "verify.jsonl").read_text().splitlines()
        assert [json.loads(s)["name"] for s in lines] == [r["name"] for r in rows]
        assert "11 passed, 0 failed" in capsys.readouterr().out

    def test_identity_density_is_exact(self, tmp_path):
        assert run(["verify", "--config", FIXTURES / "identity.json", "--out", tmp_path]) == 0
        for r in read_csv(tmp_path / "verify.csv"):
            assert abs(float(r["residual_or_slack"])) <= 1e-10 or r["kind"] == "inequality"
            assert r["pass"] == "true"

    def test_unknown_family_exit_2(self, tmp_path, capsys):
        assert run(["verify", "--config", FIXTURES / "unknown_family.json", "--out", tmp_path]) == 2
        assert "unknown family" in capsys.readouterr().err
        assert not (tmp_path / "verify.csv").exists()

    def test_failed_check_exit_1(self, tmp_path, monkeypatch, capsys):
        def one_failure(g, T, checks, options, jobs=1):
            return [identity_result("cov_formula", 1.0, 0.0, 1e-8), skipped_result("talagrand", "stubbed")]

        monkeypatch.setattr(gma.cli, "run_suite", one_failure)
        assert run(["verify", "--config", FIXTURES / "scaling2.json", "--out", tmp_path]) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out and "SKIP" in out and "0 passed, 1 failed, 1 skipped" in out
        rows = read_csv(tmp_path / "verify.csv")
        # skips are explicit rows but do not count as failures
        assert [r["pass"] for r in rows] == ["false", "true"]

    def test_skips_alone_do_not_fail(self, tmp_path, monkeypatch):
        monkeypatch.setattr(gma.cli, "run_suite", lambda *a, **k: [skipped_result("talagrand", "stubbed")])
        assert run(["verify", "--config", FIXTURES / "scaling2.json", "--out", tmp_path]) == 0
        row = json.loads((tmp_path / "verify.jsonl").read_text())
        assert row["status"] == "skipped" and row["reason"] == "stubbed"

    def test_solver_failure_exit_3(self, tmp_path, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise SolverError("did not converge", solver="entropic")

        monkeypatch.setattr(gma.transport, "solve", broken)
        assert run(["verify", "--config", FIXTURES / "scaling2.json", "--out", tmp_path]) == 3
        err = capsys.readouterr().err
        assert "entropic" in err and "scaling" in err

    @pytest.mark.parametrize(
        "flags",
        [["--quadrature-order", "0"], ["--tolerance-scale", "-1"], ["--jobs", "0"], ["--quadrature-order", "abc"]],
    )
    def test_bad_flags_exit_2(self, tmp_path, flags):
        assert run(["verify", "--config", FIXTURES / "scaling2.json", "--out", tmp_path, *flags]) == 2

    def test_usage_errors(self):
        assert run([]) == 2
        assert run(["verify"]) == 2
        assert run(["frobnicate"]) == 2

    def test_tolerance_scale(self, tmp_path):
        assert run(["verify", "--config", FIXTURES / "scaling2.json", "--out", tmp_path, "--tolerance-scale", "100"]) == 0
        assert {float(r["tolerance"]) for r in read_csv(tmp_path / "verify.csv")} == {1e-6}

    def test_selected_checks(self, tmp_path):
        cfg = write_config(tmp_path, {**SCALING, "checks": ["talagrand", "cov_formula"]})
        assert run(["verify", "--config", cfg, "--out", tmp_path / "out"]) == 0
        assert [r["name"] for r in read_csv(tmp_path / "out" / "verify.csv")] == ["cov_formula", "talagrand"]

    def test_output_dir_from_config(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = write_config(tmp_path, {**SCALING, "checks": ["talagrand"], "output": {"dir": "from_cfg"}})
        assert run(["verify", "--config", cfg]) == 0
        assert (tmp_path / "from_cfg" / "verify.csv").is_file()


class TestDeterminism:
    def test_byte_identical_across_runs_and_threads(self, tmp_path, monkeypatch):
        cfg = FIXTURES / "scaling2.json"
        outputs = []
        for i, jobs in enumerate([None, None, "4"]):
            argv = ["verify", "--config", cfg, "--out", tmp_path / str(i)]
            assert run(argv + (["--jobs", jobs] if jobs else [])) == 0
            outputs.append((tmp_path / str(i) / "verify.csv").read_bytes())
        monkeypatch.setenv("GMA_DETERMINISTIC", "1")
        assert run(["verify", "--config", cfg, "--out", tmp_path / "det", "--jobs", "4"]) == 0
        outputs.append((tmp_path / "det" / "verify.csv").read_bytes())
        assert len(set(outputs)) == 1

    def test_truncation_csv_across_threads(self, tmp_path):
        cfg = FIXTURES / "truncation_shift3.json"
        assert run(["truncation", "--config", cfg, "--out", tmp_path / "a"]) == 0
        assert run(["truncation", "--config", cfg, "--out", tmp_path / "b", "--jobs", "3"]) == 0
        assert (tmp_path / "a" / "truncation.csv").read_bytes() == (tmp_path / "b" / "truncation.csv").read_bytes()


class TestTruncation:
    def test_shift_levels(self, tmp_path):
        assert run(["truncation", "--config", FIXTURES / "truncation_shift3.json", "--out", tmp_path]) == 0
        rows = read_csv(tmp_path / "truncation.csv")
        assert tuple(rows[0]) == CSV_COLUMNS
        entropies = [float(r["entropy"]) for r in rows]
        assert entropies == pytest.approx([0.5, 0.625, 0.65625], abs=1e-9)

    def test_dim1_exit_2(self, tmp_path, capsys):
        assert run(["truncation", "--config", FIXTURES / "truncation_dim1.json", "--out", tmp_path]) == 2
        assert "two levels" in capsys.readouterr().err

    def test_mixture_product(self, tmp_path):
        assert run(["truncation", "--config", FIXTURES / "truncation_mixture2.json", "--out", tmp_path]) == 0
        for line in (tmp_path / "truncation.jsonl").read_text().splitlines():
            r = json.loads(line)
            if r["name"].startswith("truncation_contraction"):
                assert r["residual_or_slack"] >= -1e-5


@pytest.fixture(scope="module")
def reports(tmp_path_factory):
    base = tmp_path_factory.mktemp("reports")
    assert run(["verify", "--config", FIXTURES / "shift1.json", "--out", base / "v"]) == 0
    assert run(["truncation", "--config", FIXTURES / "truncation_shift3.json", "--out", base / "t"]) == 0
    return base


class TestReport:
    def test_two_sections(self, reports, tmp_path):
        paths = [reports / "v" / "verify.jsonl", reports / "t" / "truncation.jsonl"]
        assert run(["report", *paths, "--out", tmp_path]) == 0
        text = (tmp_path / "report.txt").read_text()
        assert text.count("== ") == 2
        assert "== verify.jsonl (11/11 passed)" in text
        rows = read_csv(tmp_path / "report.csv")
        assert tuple(rows[0]) == REPORT_FIELDS
        assert {r["section"] for r in rows} == {"verify.jsonl", "truncation.jsonl"}

    def test_idempotent(self, reports, tmp_path):
        paths = [reports / "v" / "verify.jsonl", reports / "t" / "truncation.jsonl"]
        assert run(["report", *paths, "--out", tmp_path / "a"]) == 0
        assert run(["report", *paths, "--out", tmp_path / "b"]) == 0
        for name in ("report.txt", "report.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_duplicate_names_suffixed(self, reports, tmp_path):
        src = (reports / "v" / "verify.jsonl").read_text()
        (tmp_path / "first.jsonl").write_text(src)
        (tmp_path / "second.jsonl").write_text(src)
        merged = merge_reports([tmp_path / "first.jsonl", tmp_path / "second.jsonl"])
        assert [label for label, _ in merged] == ["first.jsonl", "second.jsonl"]
        assert merged[0][1][0]["name"].endswith("@first.jsonl")
        assert merged[1][1][0]["name"].endswith("@second.jsonl")
        names = [r["name"] for r in merged[0][1]]
        assert names == sorted(names)

    def test_same_basename_uses_path(self, reports):
        paths = [reports / "v" / "verify.jsonl", reports / "v" / ".." / "v" / "verify.jsonl"]
        merged = merge_reports(paths)
        assert [label for label, _ in merged] == [str(p) for p in paths]

    def test_empty_list_exit_2(self, tmp_path):
        assert run(["report", "--out", tmp_path]) == 2

    def test_missing_file_exit_2(self, tmp_path, capsys):
        assert run(["report", tmp_path / "nope.jsonl", "--out", tmp_path]) == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_garbage_line_exit_2(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{not json}\n")
        assert run(["report", path, "--out", tmp_path]) == 2

    def test_non_finite_values_survive(self, tmp_path):
        row = {"name": "x", "kind": "inequality", "lhs": "inf", "rhs": 1.0, "residual_or_slack": "inf", "tolerance": 1e-8, "pass": True}
        path = tmp_path / "inf.jsonl"
        path.write_text(json.dumps(row) + "\n")
        assert run(["report", path, "--out", tmp_path / "out"]) == 0
        assert read_csv(tmp_path / "out" / "report.csv")[0]["lhs"] == "inf"

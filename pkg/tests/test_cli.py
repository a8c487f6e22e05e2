"""Config schema and CLI behavior tests, including golden reports."""

import json
from pathlib import Path

import pytest

from hemsim.cli import main
from hemsim.config import SchemaError, validate_config
from hemsim.scenarios import BUNDLED_SCENARIOS, execute_scenario

GOLDEN_DIR = Path(__file__).parent / "goldens"


class TestSchema:
    def test_minimal_config_resolves_defaults(self):
        resolved = validate_config({"name": "x", "seed": 1, "geoloc": {}})
        assert resolved["geoloc"]["trials"] == 60
        assert resolved["geoloc"]["region"]["resolution_deg"] == 0.25

    def test_negative_cap_names_the_field(self):
        with pytest.raises(SchemaError, match=r"config\.cluster\.cap: must be >= 0"):
            validate_config({"name": "x", "seed": 1, "cluster": {"cap": -1}})

    def test_unknown_key_rejected_in_strict_mode(self):
        raw = {"name": "x", "seed": 1, "licensing": {"quotas": 5}}
        with pytest.raises(SchemaError, match=r"config\.licensing\.quotas: unknown key"):
            validate_config(raw, strict=True)
        resolved = validate_config(raw, strict=False)
        assert resolved["licensing"]["quota"] == 1000  # unknown key ignored

    def test_missing_seed_rejected(self):
        with pytest.raises(SchemaError, match=r"config\.seed: is required"):
            validate_config({"name": "x"})

    def test_bad_resource_name_rejected(self):
        with pytest.raises(SchemaError, match=r"config\.licensing\.resource"):
            validate_config({"name": "x", "seed": 1,
                             "licensing": {"resource": "gpu_seconds"}})

    def test_region_bounds_checked(self):
        with pytest.raises(SchemaError, match=r"config\.geoloc\.region\.lat_max"):
            validate_config({"name": "x", "seed": 1,
                             "geoloc": {"region": {"lat_min": 10.0, "lat_max": 5.0}}})

    def test_bundled_scenarios_round_trip_strict(self):
        for name, raw in BUNDLED_SCENARIOS.items():
            resolved = validate_config(raw, strict=True)
            again = validate_config(resolved, strict=True)
            assert again == resolved, name


class TestCli:
    def test_list_names_all_bundled(self, capsys):
        assert main(["list"]) == 0
        out = capsys.readouterr().out
        for name in BUNDLED_SCENARIOS:
            assert name in out

    def test_describe_prints_valid_resolved_config(self, capsys):
        assert main(["describe", "geoloc_cbg", "--strict"]) == 0
        out = capsys.readouterr().out
        parsed = json.loads(out)
        assert validate_config(parsed, strict=True) == parsed

    def test_describe_unknown_errors_with_catalog(self, capsys):
        assert main(["describe", "no_such_scenario"]) == 2
        err = capsys.readouterr().err
        assert "licensing_basic" in err

    def test_run_writes_reports_and_exits_zero(self, tmp_path, capsys):
        code = main(["run", "licensing_basic", "--out", str(tmp_path), "--strict"])
        assert code == 0
        assert (tmp_path / "summary.txt").exists()
        assert (tmp_path / "licensing.jsonl").exists()
        for line in (tmp_path / "licensing.jsonl").read_text().splitlines():
            json.loads(line)

    def test_run_schema_error_exits_two(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"name": "bad", "seed": 1,
                                      "cluster": {"cap": -3}}))
        code = main(["run", str(config), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "config.cluster.cap" in capsys.readouterr().err

    def test_run_failed_expectation_exits_one(self, tmp_path, capsys):
        config = tmp_path / "expect.json"
        config.write_text(json.dumps({
            "name": "expect_flip", "seed": 7,
            "licensing": {"honest_licenses": 5, "fuzz_licenses": 10},
            "expect": {"licensing_soundness": False},
        }))
        code = main(["run", str(config), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "FAIL licensing_soundness" in capsys.readouterr().out

    def test_run_twice_same_seed_byte_identical(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["run", "licensing_basic", "--out", str(out_a)]) == 0
        assert main(["run", "licensing_basic", "--out", str(out_b)]) == 0
        files_a = sorted(p.name for p in out_a.iterdir())
        files_b = sorted(p.name for p in out_b.iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_seed_override_changes_outputs_deterministically(self, tmp_path):
        out = {}
        for label, seed in (("a", "1"), ("b", "1"), ("c", "2")):
            path = tmp_path / label
            assert main(["run", "geoloc_cbg", "--out", str(path), "--seed", seed,
                         "--strict"]) == 0
            out[label] = (path / "geoloc.jsonl").read_bytes()
        assert out["a"] == out["b"]
        assert out["a"] != out["c"]

    def test_verify_determinism_mode_passes(self, tmp_path):
        code = main(["run", "attest_accounting", "--out", str(tmp_path),
                     "--verify-determinism"])
        assert code == 0


class TestGoldenReports:
    """Report schema stability: frozen bytes for the licensing scenario."""

    @pytest.mark.parametrize("report", ["licensing.jsonl", "summary.txt", "summary.json"])
    def test_licensing_basic_matches_golden(self, report):
        config = validate_config(BUNDLED_SCENARIOS["licensing_basic"], strict=True)
        outcome = execute_scenario(config)
        golden = (GOLDEN_DIR / f"licensing_basic.{report}").read_text(encoding="utf-8")
        assert outcome.reports[report] == golden

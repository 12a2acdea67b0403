import json
import subprocess
import sys

import pytest

from hwqkd.cli import SEED_ENV, ConfigError, RunConfig, build_config, build_parser, main, parse_config_file


def run_json(capsys, *argv):
    code = main(list(argv) + ["--no-timestamp"])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.startswith("{") else out


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig("qkd")
        assert cfg.particle1 == "dephased"
        assert RunConfig("dist").particle1 == "pure"

    def test_validation(self):
        with pytest.raises(ConfigError):
            RunConfig("dist", a2=1.5)
        with pytest.raises(ConfigError):
            RunConfig("dist", seed=2**64)
        with pytest.raises(ConfigError):
            RunConfig("teleport")

    def test_file_parsing(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("# comment\na2 = 0.3\nkey-len=100\n\n")
        assert parse_config_file(str(f)) == {"a2": "0.3", "key_len": "100"}

    def test_bad_file_line(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("a2 0.3\n")
        with pytest.raises(ConfigError):
            parse_config_file(str(f))

    def test_precedence(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("seed=5\na2=0.3\n")
        parser = build_parser()
        args = parser.parse_args(["dist", "--config", str(f), "--a2", "0.2"])
        cfg = build_config(args, {SEED_ENV: "9"})
        assert cfg.seed == 5 and cfg.a2 == 0.2
        cfg = build_config(parser.parse_args(["dist"]), {SEED_ENV: "0x10"})
        assert cfg.seed == 16

    def test_unknown_key(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("colour=blue\n")
        with pytest.raises(ConfigError):
            build_config(build_parser().parse_args(["dist", "--config", str(f)]), {})

    def test_echo_omits_presentation(self):
        assert "workers" not in RunConfig("dist").echo()


class TestCommands:
    def test_dist(self, capsys):
        code, rep = run_json(capsys, "dist", "--trials", "40000")
        assert code == 0 and rep["passed"]
        assert rep["config"]["command"] == "dist"

    def test_protocol(self, capsys):
        code, _ = run_json(capsys, "protocol", "--source", "separable", "--trials", "40000")
        assert code == 0

    def test_qkd_with_eve(self, capsys):
        code, rep = run_json(capsys, "qkd", "--eve", "tuned-mixture", "--key-len", "4000")
        assert code == 0

    def test_security(self, capsys):
        code, _ = run_json(capsys, "security", "--eve", "illusion", "--key-len", "4000")
        assert code == 0

    def test_reproduce_tables(self, capsys):
        code, rep = run_json(capsys, "reproduce-tables", "--trials", "60000", "--workers", "2")
        assert code == 0 and set(rep["tables"]) >= {"t1", "t6"}

    def test_verify_identities(self, capsys):
        code, rep = run_json(capsys, "verify-identities")
        assert code == 0 and rep["identities"]

    def test_csv(self, capsys):
        assert main(["verify-identities", "--format", "csv"]) == 0
        assert capsys.readouterr().out.startswith("table,row,column,value")

    def test_output_file(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert main(["dist", "--trials", "5000", "--output", str(out)]) == 0
        assert capsys.readouterr().out == ""
        assert json.loads(out.read_text())["config"]["trials"] == 5000


class TestDeterminism:
    def test_same_seed_same_report(self, capsys):
        argv = ["qkd", "--key-len", "2000", "--seed", "17"]
        _, a = run_json(capsys, *argv)
        _, b = run_json(capsys, *argv, "--workers", "3")
        assert a == b

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "17")
        _, a = run_json(capsys, "dist", "--trials", "5000")
        monkeypatch.delenv(SEED_ENV)
        _, b = run_json(capsys, "dist", "--trials", "5000", "--seed", "17")
        assert a == b

    def test_compare(self, tmp_path, capsys):
        stored = tmp_path / "r.json"
        assert main(["dist", "--trials", "5000", "--output", str(stored)]) == 0
        assert main(["dist", "--trials", "5000", "--compare", str(stored), "--output", str(tmp_path / "s.json")]) == 0
        d = json.loads(stored.read_text())
        d["sampled"]["tampered"] = 1
        stored.write_text(json.dumps(d))
        assert main(["dist", "--trials", "5000", "--compare", str(stored), "--output", str(tmp_path / "s.json")]) == 1


class TestExitCodes:
    @pytest.mark.parametrize(
        "argv",
        [
            ["dist", "--a2", "2"],
            ["dist", "--source", "nonsense"],
            ["dist", "--setting", "d"],
            ["qkd", "--eve", "intercept", "--N", "2"],
            ["dist", "--source", "coins", "--setting", "c"],
            ["dist", "--config", "/nonexistent/file.cfg"],
        ],
    )
    def test_config_errors(self, argv, capsys):
        assert main(argv) == 2
        assert "error" in capsys.readouterr().err

    def test_argparse_errors(self):
        with pytest.raises(SystemExit) as exc:
            main(["dist", "--format", "xml"])
        assert exc.value.code == 2

    def test_module_entry_point(self):
        res = subprocess.run(
            [sys.executable, "-m", "hwqkd", "verify-identities", "--no-timestamp"], capture_output=True, text=True
        )
        assert res.returncode == 0
        assert json.loads(res.stdout)["passed"]

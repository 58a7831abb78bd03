"""The grlin command line: exit codes, output streams, determinism."""

import subprocess
import sys

import pytest

from grlin.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_check_accepts_motivating(capsys):
    code, out, err = run_cli(capsys, "check", "programs/motivating.grm")
    assert code == 0
    assert err == ""


def test_check_reports_diagnostics_on_stderr(capsys):
    code, out, err = run_cli(capsys, "check", "programs/negative/match_usage.grm")
    assert code == 1
    assert "MATCH_USAGE" in err
    assert out == ""
    # file:line:col: CODE: message
    head = err.splitlines()[0]
    parts = head.split(":")
    assert parts[0].endswith("match_usage.grm")
    assert parts[1].isdigit() and parts[2].isdigit()


def test_check_missing_file_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["check", "programs/nosuch.grm"])
    assert exc.value.code == 2


def test_run_prints_value(capsys):
    code, out, err = run_cli(capsys, "run", "programs/copyshape.grm")
    assert code == 0
    assert out.strip() == "((unit, unit), (1, 2))"


def test_run_fuel_limit(capsys, tmp_path):
    path = tmp_path / "spin.grm"
    path.write_text("main : Unit\nmain = letrec f = \\x -> f x in f unit\n")
    code, out, err = run_cli(capsys, "run", str(path), "--fuel", "50")
    assert code == 1
    assert "fuel" in err


def test_derive_push_pull(capsys):
    code, out, err = run_cli(capsys, "derive", "push", "(a * a) -o b",
                             "--semiring", "nat-exact", "--grade", "2")
    assert code == 0
    assert ": (a * a -o b) [2] -o a [2] * a [2] -o b [2]" in out

    code, out, err = run_cli(capsys, "derive", "pull", "a * b",
                             "--semiring", "interval",
                             "--grades", "a=0..2,b=2..4")
    assert code == 0
    assert out.strip().endswith("-o (a * b) [2..2]")


def test_derive_drop_polymorphic_fails(capsys):
    code, out, err = run_cli(capsys, "derive", "drop", "a")
    assert code == 1
    assert "POLYMORPHIC_DROP" in err


def test_derive_copyshape_and_fmap(capsys):
    code, out, err = run_cli(capsys, "derive", "copyshape", "Int * Int")
    assert code == 0
    assert ": Int * Int -o (Unit * Unit) * Int * Int" in out

    code, out, err = run_cli(capsys, "derive", "fmap", "a * a",
                             "--semiring", "nat-exact", "--grade", "2")
    assert code == 0
    assert "(a -o " in out


def test_derive_explain_prints_trace(capsys):
    code, out, err = run_cli(capsys, "derive", "push", "a * a",
                             "--semiring", "nat-le", "--grade", "1", "--explain")
    assert code == 0
    assert "-- key: push@a * a@nat-le@r=1" in out
    assert any(line.startswith("-- push @") for line in out.splitlines())


def test_derive_output_reparses(capsys):
    from grlin.parser import parse_term
    code, out, err = run_cli(capsys, "derive", "push",
                             "mu X . Unit + (a * X)",
                             "--semiring", "nat-le", "--grade", "2")
    assert code == 0
    parse_term(out.splitlines()[0], "nat-le")


def test_laws_subcommand(capsys):
    code, out, err = run_cli(capsys, "laws", "--suite", "inverses",
                             "--cases", "10", "--seed", "7")
    assert code == 0
    assert "inverses" in out and "0" in out


def test_laws_invalid_suite_usage_error(capsys):
    assert main(["laws", "--suite", "bogus"]) == 2


def test_cli_determinism(capsys):
    args = ["derive", "push", "(a * a) -o b", "--semiring", "nat-exact",
            "--grade", "2"]
    code1, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert (code1, out1) == (code2, out2)


def test_module_entrypoint():
    proc = subprocess.run(
        [sys.executable, "-m", "grlin", "run", "programs/copy.grm"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "(5, 5)"


def test_env_fuel_override():
    proc = subprocess.run(
        [sys.executable, "-m", "grlin", "run", "programs/copy.grm"],
        capture_output=True, text=True, env={"GRLIN_FUEL": "1", "PATH": ""})
    assert proc.returncode == 1
    assert "fuel" in proc.stderr

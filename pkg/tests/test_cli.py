from __future__ import annotations

import subprocess
import sys

from conftest import forward_only_trace

from conndiff import trace as tr
from conndiff.cli import main


def write_config(tmp_path, rounds=12, extra=""):
    path = tmp_path / "campaign.yaml"
    path.write_text(f"conndiff-config v1\nrounds: {rounds}\nseed: 3\noutput_dir: out\n{extra}")
    return path


def test_validate_config(tmp_path, capsys):
    assert main(["validate-config", "--config", str(write_config(tmp_path))]) == 0
    assert capsys.readouterr().out.startswith("ok: 6 prompts")


def test_validate_config_error(tmp_path, capsys):
    path = write_config(tmp_path, extra="reward_cap: 0\n")
    assert main(["validate-config", "--config", str(path)]) == 2
    assert "reward_cap" in capsys.readouterr().err


def test_run_resume_and_report(tmp_path, capsys):
    cfg = str(write_config(tmp_path))
    assert main(["run", "--config", cfg, "--rounds", "5"]) == 0
    assert "Number of Bugs and Unsafe Implementations" in capsys.readouterr().out
    assert main(["run", "--config", cfg]) == 2
    assert "--resume" in capsys.readouterr().err
    assert main(["run", "--config", cfg, "--resume"]) == 0
    assert "rounds completed: 12" in capsys.readouterr().out
    csv = tmp_path / "rounds.csv"
    assert main(["report", "--config", cfg, "--csv", str(csv)]) == 0
    out = capsys.readouterr().out
    assert "P1" in out and "batch-execution" in out
    assert len(csv.read_text().splitlines()) == 13


def test_seed_override_changes_hash(tmp_path, capsys):
    cfg = str(write_config(tmp_path))
    assert main(["run", "--config", cfg, "--rounds", "2"]) == 0
    assert main(["run", "--config", cfg, "--rounds", "4", "--seed", "8", "--resume"]) == 2
    assert "config hash" in capsys.readouterr().err


def test_reduce_writes_min_file(tmp_path, capsys):
    c, s, q, move = forward_only_trace().ops
    padded = forward_only_trace().with_ops((c, s, tr.ExecuteUpdate("CREATE TABLE t1(c0 INT PRIMARY KEY)"), q, tr.GetResultSetHoldability(), move))
    src = tmp_path / "case.trace"
    src.write_text(tr.serialize(padded))
    assert main(["reduce", str(src), "--config", str(write_config(tmp_path))]) == 0
    assert "6 -> 4 ops" in capsys.readouterr().out
    assert tr.parse((tmp_path / "case.trace.min").read_text()).ops == forward_only_trace().ops


def test_reduce_without_signal(tmp_path, capsys):
    src = tmp_path / "quiet.trace"
    src.write_text(tr.serialize(forward_only_trace().with_ops(forward_only_trace().ops[:3])))
    assert main(["reduce", str(src)]) == 1
    assert "nothing to reduce" in capsys.readouterr().err


def test_reduce_bad_trace(tmp_path, capsys):
    src = tmp_path / "bad.trace"
    src.write_text("conndiff-trace v1\nid: x\nop: Teleport\n")
    assert main(["reduce", str(src)]) == 2
    assert "unknown op 'Teleport'" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "conndiff", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "validate-config" in proc.stdout

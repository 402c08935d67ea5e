from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import pytest

from conndiff import campaign as cp
from conndiff import comparator as cmp
from conndiff.backends import DivergenceCatalog
from conndiff.generator import StubGenerator, TransportError
from conndiff.prompts import default_prompt_set, default_prompts_path


def config(tmp_path: Path, **kw) -> cp.CampaignConfig:
    kw.setdefault("rounds", 24)
    kw.setdefault("seed", 11)
    return cp.CampaignConfig(output_dir=tmp_path / kw.pop("out", "out"), **kw)


def round_files(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted((out / "rounds").iterdir())}


def test_reproducible_round_logs(tmp_path):
    a = cp.run_campaign(config(tmp_path, out="a"))
    b = cp.run_campaign(config(tmp_path, out="b"))
    assert a == b
    assert round_files(tmp_path / "a") == round_files(tmp_path / "b")


def test_first_unsafe_round_golden(tmp_path):
    # seeded end-to-end run with only R1 on; round number frozen from the first run
    cfg = config(tmp_path, seed=0, rounds=10, divergence=DivergenceCatalog.of(["R1"]))
    camp = cp.Campaign(cfg)
    ckpt = camp.fresh_checkpoint()
    first = None
    for _ in range(cfg.rounds):
        ckpt, report = camp.run_round(ckpt)
        if any(c.verdict == cmp.UNSAFE for c in report.classifications):
            first = report
            break
    assert first is not None
    assert (first.round, first.prompt_id) == (4, "P4")


def test_accounting_and_log(tmp_path):
    summary = cp.run_campaign(config(tmp_path))
    ckpt = cp.load_checkpoint(tmp_path / "out")
    assert ckpt.completed_rounds == ckpt.bandit.total_rounds == 24
    assert sum(a["pulls"] for a in summary["arms"]) == summary["rounds_attempted"] - summary["rounds_failed"]
    assert [e["round"] for e in ckpt.log] == list(range(1, 25))
    first = (tmp_path / "out" / "rounds" / "round-0001.jsonl").read_text().splitlines()
    meta = json.loads(first[0])
    assert meta["format"] == cp.REPORT_FORMAT
    assert meta["discrepancies"] == len(first) - 1
    assert meta["raw_reward"] <= meta["discrepancies"]


def test_single_round_pulls_one_arm(tmp_path):
    summary = cp.run_campaign(config(tmp_path, rounds=1))
    assert [a["pulls"] for a in summary["arms"]] == [1, 0, 0, 0, 0, 0]


def test_no_rules_no_discrepancies(tmp_path):
    summary = cp.run_campaign(config(tmp_path, rounds=40, divergence=DivergenceCatalog()))
    assert summary["total_discrepancies"] == 0
    assert all(info["first_detected_round"] is None for info in summary["rules"].values())


class Crash(RuntimeError):
    pass


@pytest.mark.parametrize("crash_at", [1, 7, 24])
def test_resume_after_crash_before_commit(tmp_path, monkeypatch, crash_at):
    reference = cp.run_campaign(config(tmp_path, out="clean"))

    real_commit = cp.commit_checkpoint

    def flaky(out, ckpt):
        if ckpt.next_round - 1 == crash_at:
            raise Crash("killed between artifact write and checkpoint commit")
        real_commit(out, ckpt)

    monkeypatch.setattr(cp, "commit_checkpoint", flaky)
    with pytest.raises(Crash):
        cp.run_campaign(config(tmp_path, out="crashy"))
    ckpt = cp.load_checkpoint(tmp_path / "crashy")
    assert ckpt.completed_rounds == crash_at - 1
    monkeypatch.setattr(cp, "commit_checkpoint", real_commit)

    resumed = cp.run_campaign(config(tmp_path, out="crashy"), resume=True)
    assert resumed == reference
    assert round_files(tmp_path / "crashy") == round_files(tmp_path / "clean")


def test_resume_extends_campaign(tmp_path):
    whole = cp.run_campaign(config(tmp_path, out="whole", rounds=20))
    cp.run_campaign(config(tmp_path, out="split", rounds=8))
    split = cp.run_campaign(config(tmp_path, out="split", rounds=20), resume=True)
    assert split == whole


def test_existing_checkpoint_needs_resume(tmp_path):
    cp.run_campaign(config(tmp_path, rounds=2))
    with pytest.raises(cp.CampaignError, match="--resume"):
        cp.run_campaign(config(tmp_path, rounds=2))


def test_resume_with_changed_config_fails(tmp_path):
    cp.run_campaign(config(tmp_path, rounds=2))
    with pytest.raises(cp.CampaignError, match="config hash"):
        cp.run_campaign(config(tmp_path, rounds=4, seed=99), resume=True)


def test_resume_with_edited_prompt_fails(tmp_path):
    cp.run_campaign(config(tmp_path, rounds=2))
    edited = tmp_path / "prompts.yaml"
    edited.write_text(default_prompts_path().read_text().replace("You are a senior engineer", "You are a careful engineer"))
    assert edited.read_text() != default_prompts_path().read_text()
    with pytest.raises(cp.CampaignError, match="prompt"):
        cp.run_campaign(config(tmp_path, rounds=4, prompt_set=edited), resume=True)


class FlakyGenerator:
    name = "flaky"

    def __init__(self, fail_rounds, garbage_rounds=()):
        self.inner = StubGenerator(default_prompt_set().generator)
        self.fail_rounds = set(fail_rounds)
        self.garbage_rounds = set(garbage_rounds)
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        if self.calls in self.fail_rounds:
            raise TransportError("endpoint unreachable")
        if self.calls in self.garbage_rounds:
            return "Sorry, I would rather write a poem."
        return self.inner.complete(request)


def test_transport_failure_marks_round_failed(tmp_path):
    gen = FlakyGenerator(fail_rounds={2, 5})
    camp = cp.Campaign(config(tmp_path, rounds=10), generator=gen)
    summary = camp.run()
    assert summary["rounds_failed"] == 2
    assert summary["rounds_completed"] == 8
    assert sum(a["pulls"] for a in summary["arms"]) == 8
    ckpt = cp.load_checkpoint(tmp_path / "out")
    failed = [e for e in ckpt.log if e["status"] == "failed"]
    assert [e["round"] for e in failed] == [2, 5]
    assert ckpt.completed_rounds == ckpt.bandit.total_rounds


def test_parse_failure_is_zero_reward(tmp_path):
    gen = FlakyGenerator(fail_rounds=(), garbage_rounds={1})
    camp = cp.Campaign(config(tmp_path, rounds=1), generator=gen)
    summary = camp.run()
    assert summary["arms"][0]["pulls"] == 1
    assert summary["arms"][0]["mean_reward"] == 0
    entry = cp.load_checkpoint(tmp_path / "out").log[0]
    assert entry["status"] == "parse-failure"
    assert (tmp_path / "out" / "rounds" / "round-0001.raw.txt").exists()


def test_config_file_round_trip(tmp_path):
    cfg = config(tmp_path, divergence=DivergenceCatalog.of(["R2", "R5"]), comparison_modes=(cmp.CROSS_PROPERTY,))
    path = tmp_path / "c.yaml"
    cp.dump_config(cfg, path)
    back = cp.load_config(path)
    assert back.fingerprint() == cfg.fingerprint()
    assert back.divergence == cfg.divergence
    assert back.comparison_modes == (cmp.CROSS_PROPERTY,)


def test_config_paths_relative_to_file(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "p.yaml").write_text(default_prompts_path().read_text())
    path = tmp_path / "sub" / "c.yaml"
    path.write_text("conndiff-config v1\nrounds: 3\nprompt_set: p.yaml\noutput_dir: runs\n")
    cfg = cp.load_config(path)
    assert cfg.prompt_set == tmp_path / "sub" / "p.yaml"
    assert cfg.output_dir == tmp_path / "sub" / "runs"


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("rounds: 0\n", "rounds must be >= 1"),
        ("prompt_set: nowhere.yaml\n", "file not found"),
        ("colour: blue\n", "unknown config key"),
        ("comparison_modes: [sideways]\n", "comparison_modes"),
        ("divergence_catalog: {R42: true}\n", "R42"),
        ("generator: {kind: oracle}\n", "generator must be"),
    ],
)
def test_config_errors(tmp_path, body, fragment):
    path = tmp_path / "c.yaml"
    path.write_text("conndiff-config v1\n" + body)
    with pytest.raises(cp.CampaignError, match=fragment):
        cp.load_config(path)


def test_summary_rendering(tmp_path):
    summary = cp.run_campaign(config(tmp_path, rounds=30))
    text = cp.render_summary(summary)
    assert text.startswith("Number of Bugs and Unsafe Implementations")
    for row in summary["table"]:
        assert row["type"] in text
    csv_lines = cp.rounds_csv(cp.load_checkpoint(tmp_path / "out")).splitlines()
    assert csv_lines[0].startswith("round,prompt_id")
    assert len(csv_lines) == 31
    assert int(csv_lines[-1].split(",")[-1]) == summary["total_discrepancies"]


def test_checkpoint_shape(tmp_path):
    cp.run_campaign(config(tmp_path, rounds=3))
    text = (tmp_path / "out" / "checkpoint.json").read_text()
    assert text.startswith("conndiff-checkpoint v1\n")
    ckpt = cp.load_checkpoint(tmp_path / "out")
    assert ckpt.rng_state == {"seed": 11, "next_round": 4}
    assert cp.CampaignCheckpoint.from_dict(ckpt.to_dict()) == ckpt
    assert dataclasses.replace(ckpt).next_round == 4

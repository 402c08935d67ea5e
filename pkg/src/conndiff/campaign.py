"""Campaign orchestration: the select / render / generate / execute / compare /
reward loop, with a crash-safe checkpoint.

Output directory layout::

    <output_dir>/checkpoint.json        conndiff-checkpoint v1 (source of truth)
    <output_dir>/rounds/round-0001.trace
    <output_dir>/rounds/round-0001.jsonl   meta record + one line per discrepancy
    <output_dir>/rounds/round-0001.raw.txt generator text, only when it did not parse

Round artifacts are written before the checkpoint is replaced, so a crash at
any point replays the unfinished round from the same seed path.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from conndiff import comparator as cmp
from conndiff import fileformat
from conndiff import props
from conndiff import scheduler
from conndiff import trace as tr
from conndiff.backends import RULES, DivergenceCatalog, ReferenceBackend, make_divergent
from conndiff.generator import (
    GeneratorError,
    GeneratorRequest,
    RemoteGenerator,
    RemoteSettings,
    StubGenerator,
    TransportError,
    generate,
)
from conndiff.prompts import PromptSet, default_prompts_path, load_prompt_set, render

log = logging.getLogger(__name__)

CONFIG_KIND = "conndiff-config"
CHECKPOINT_KIND = "conndiff-checkpoint"
REPORT_FORMAT = "conndiff-discrepancies v1"

EXPECTED_VERDICT = {tag: (cmp.UNSAFE if tag == "R1" else cmp.BUG) for tag in RULES}


class CampaignError(RuntimeError):
    pass


@dataclass
class CampaignConfig:
    rounds: int = 200
    seed: int = 0
    prompt_set: Path | None = None
    property_schema: Path | None = None
    subset_strategy: str = "pairwise-interactions"
    k: int = props.DEFAULT_K
    subset_seed: int = 0
    generator: str = "stub"
    remote: RemoteSettings | None = None
    divergence: DivergenceCatalog = field(default_factory=DivergenceCatalog.all)
    reward_cap: int = scheduler.DEFAULT_REWARD_CAP
    comparison_modes: tuple[str, ...] = cmp.MODES
    output_dir: Path = Path("conndiff-out")

    def __post_init__(self):
        if self.rounds < 1:
            raise CampaignError("rounds must be >= 1")
        if self.generator not in ("stub", "remote"):
            raise CampaignError(f"generator must be 'stub' or 'remote', got {self.generator!r}")
        if self.generator == "remote" and self.remote is None:
            raise CampaignError("remote generator needs endpoint settings")
        bad = [m for m in self.comparison_modes if m not in cmp.MODES]
        if bad or not self.comparison_modes:
            raise CampaignError(f"comparison_modes must be a non-empty subset of {cmp.MODES}")
        if self.reward_cap < 1:
            raise CampaignError("reward_cap must be a positive integer")
        for path in (self.prompt_set, self.property_schema):
            if path is not None and not Path(path).is_file():
                raise CampaignError(f"file not found: {path}")

    @property
    def prompt_set_path(self) -> Path:
        return Path(self.prompt_set) if self.prompt_set else default_prompts_path()

    @property
    def schema_path(self) -> Path:
        return Path(self.property_schema) if self.property_schema else props.default_schema_path()

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "seed": self.seed,
            "prompt_set": str(self.prompt_set) if self.prompt_set else None,
            "property_schema": str(self.property_schema) if self.property_schema else None,
            "subsets": {"strategy": self.subset_strategy, "k": self.k, "seed": self.subset_seed},
            "generator": {"kind": self.generator, **(dataclasses.asdict(self.remote) if self.remote else {})},
            "divergence_catalog": self.divergence.to_toggles(),
            "reward_cap": self.reward_cap,
            "comparison_modes": list(self.comparison_modes),
            "output_dir": str(self.output_dir),
        }

    def fingerprint(self) -> str:
        """Hash of everything that shapes round results (not rounds or output_dir)."""
        data = self.to_dict()
        data.pop("rounds")
        data.pop("output_dir")
        data.pop("prompt_set")
        data.pop("property_schema")
        data["prompt_set_sha"] = hashlib.sha256(self.prompt_set_path.read_bytes()).hexdigest()
        data["schema_sha"] = hashlib.sha256(self.schema_path.read_bytes()).hexdigest()
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def config_from_dict(data: dict, base_dir: Path | None = None) -> CampaignConfig:
    base_dir = base_dir or Path.cwd()

    def rel(value):
        if value in (None, ""):
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    known = {
        "rounds", "seed", "prompt_set", "property_schema", "subsets", "generator",
        "divergence_catalog", "reward_cap", "comparison_modes", "output_dir",
    }
    unknown = set(data) - known
    if unknown:
        raise CampaignError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    subsets = data.get("subsets") or {}
    gen = dict(data.get("generator") or {"kind": "stub"})
    kind = gen.pop("kind", "stub")
    remote = None
    if kind == "remote":
        try:
            remote = RemoteSettings(**gen)
        except TypeError as exc:
            raise CampaignError(f"bad remote generator settings: {exc}") from exc
    toggles = data.get("divergence_catalog")
    try:
        divergence = DivergenceCatalog.all() if toggles is None else DivergenceCatalog.from_toggles(toggles)
    except ValueError as exc:
        raise CampaignError(str(exc)) from exc
    return CampaignConfig(
        rounds=int(data.get("rounds", 200)),
        seed=int(data.get("seed", 0)),
        prompt_set=rel(data.get("prompt_set")),
        property_schema=rel(data.get("property_schema")),
        subset_strategy=subsets.get("strategy", "pairwise-interactions"),
        k=int(subsets.get("k", props.DEFAULT_K)),
        subset_seed=int(subsets.get("seed", 0)),
        generator=kind,
        remote=remote,
        divergence=divergence,
        reward_cap=int(data.get("reward_cap", scheduler.DEFAULT_REWARD_CAP)),
        comparison_modes=tuple(data.get("comparison_modes", cmp.MODES)),
        output_dir=rel(data.get("output_dir")) or base_dir / "conndiff-out",
    )


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    return config_from_dict(fileformat.read_yaml(path, CONFIG_KIND), path.parent)


def dump_config(config: CampaignConfig, path: str | Path) -> None:
    fileformat.write_yaml(path, CONFIG_KIND, config.to_dict())


@dataclass
class CampaignCheckpoint:
    config_hash: str
    bandit: scheduler.BanditState
    completed_rounds: int = 0
    failed_rounds: int = 0
    rng_state: dict = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)

    @property
    def next_round(self) -> int:
        return self.completed_rounds + self.failed_rounds + 1

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "bandit": self.bandit.to_dict(),
            "completed_rounds": self.completed_rounds,
            "failed_rounds": self.failed_rounds,
            "rng_state": self.rng_state,
            "log": self.log,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignCheckpoint":
        return cls(
            data["config_hash"],
            scheduler.BanditState.from_dict(data["bandit"]),
            data["completed_rounds"],
            data.get("failed_rounds", 0),
            data.get("rng_state", {}),
            data.get("log", []),
        )


def checkpoint_path(output_dir: Path) -> Path:
    return Path(output_dir) / "checkpoint.json"


def load_checkpoint(output_dir: Path) -> CampaignCheckpoint:
    return CampaignCheckpoint.from_dict(fileformat.read_json(checkpoint_path(output_dir), CHECKPOINT_KIND))


def commit_checkpoint(output_dir: Path, checkpoint: CampaignCheckpoint) -> None:
    fileformat.atomic_write(checkpoint_path(output_dir), fileformat.dumps_json(CHECKPOINT_KIND, checkpoint.to_dict()))


@dataclass
class RoundReport:
    round: int
    prompt_id: str
    status: str  # ok | parse-failure | failed
    trace: tr.Trace | None = None
    discrepancies: list[cmp.Discrepancy] = field(default_factory=list)
    classifications: list[cmp.Classification] = field(default_factory=list)
    raw_reward: int = 0
    entry: dict = field(default_factory=dict)


class Campaign:
    """Everything a run needs, loaded once from a :class:`CampaignConfig`."""

    def __init__(self, config: CampaignConfig, generator=None):
        self.config = config
        self.prompt_set: PromptSet = load_prompt_set(config.prompt_set_path)
        self.schema = props.load_schema(config.schema_path)
        self.catalog = props.curate_subsets(self.schema, config.k, config.subset_strategy, config.subset_seed)
        self.prompts = self.prompt_set.candidates()
        self.by_id = {p.id: p for p in self.prompts}
        if generator is not None:
            self.generator = generator
        elif config.generator == "remote":
            self.generator = RemoteGenerator(config.remote)
        else:
            self.generator = StubGenerator(self.prompt_set.generator)
        self.reference = ReferenceBackend()
        self.divergent = make_divergent(config.divergence)
        self.output_dir = Path(config.output_dir)
        self.config_hash = config.fingerprint()

    # checkpoint handling

    def fresh_checkpoint(self) -> CampaignCheckpoint:
        bandit = scheduler.BanditState.fresh(
            [p.id for p in self.prompts],
            self.config.reward_cap,
            {p.id: p.fingerprint for p in self.prompts},
        )
        return CampaignCheckpoint(self.config_hash, bandit, rng_state={"seed": self.config.seed, "next_round": 1})

    def resume_checkpoint(self) -> CampaignCheckpoint:
        ckpt = load_checkpoint(self.output_dir)
        stale = [
            a.prompt_id
            for a in ckpt.bandit.arms
            if a.prompt_id not in self.by_id or a.fingerprint != self.by_id[a.prompt_id].fingerprint
        ]
        if stale:
            raise CampaignError(f"prompt(s) changed since the checkpoint was written: {', '.join(stale)}")
        if ckpt.config_hash != self.config_hash:
            raise CampaignError("config hash mismatch: the checkpoint was produced by a different configuration")
        if ckpt.completed_rounds != ckpt.bandit.total_rounds:
            raise CampaignError("corrupt checkpoint: completed rounds disagree with bandit state")
        return ckpt

    # one round

    def partner(self, assignment: props.PropertyAssignment, rng: random.Random) -> props.PropertyAssignment | None:
        others = [a for a in self.catalog.flatten() if a != assignment]
        return rng.choice(others) if others else None

    def run_round(self, ckpt: CampaignCheckpoint) -> tuple[CampaignCheckpoint, RoundReport]:
        rnd = ckpt.next_round
        rng = random.Random(f"{self.config.seed}:round:{rnd}")
        prompt_id = scheduler.select_arm(ckpt.bandit)
        prompt = self.by_id[prompt_id]
        assignment = props.sample(self.catalog, rng)
        partner = self.partner(assignment, rng)
        request = GeneratorRequest(
            render(prompt, assignment), prompt.focus_group, assignment, rng.randrange(2**31)
        )
        report = RoundReport(rnd, prompt_id, "ok")
        base = {
            "round": rnd,
            "prompt_id": prompt_id,
            "focus_group": prompt.focus_group,
            "assignment": str(assignment),
        }
        stem = self.output_dir / "rounds" / f"round-{rnd:04d}"

        try:
            output = generate(request, self.generator)
        except (TransportError, GeneratorError) as exc:
            log.warning("round %d: generator failed: %s", rnd, exc)
            report.status = "failed"
            report.entry = {**base, "status": "failed", "error": str(exc), "trace_file": None,
                            "raw_reward": 0, "discrepancies": 0}
            self._write_jsonl(stem, report.entry, [])
            new = dataclasses.replace(ckpt, failed_rounds=ckpt.failed_rounds + 1, log=ckpt.log + [report.entry])
            new.rng_state = {"seed": self.config.seed, "next_round": new.next_round}
            return new, report

        if not output.ok:
            report.status = "parse-failure"
            fileformat.atomic_write(stem.with_suffix(".raw.txt"), output.raw_text)
            entry = {**base, "status": "parse-failure", "error": output.parsed.reason,
                     "trace_file": None, "rewrites": list(output.rewrites_applied)}
        else:
            trace = dataclasses.replace(output.parsed, id=f"round-{rnd:04d}", provenance=tr.Provenance(prompt_id, rnd))
            report.trace = trace
            report.discrepancies = self.examine(trace, partner)
            report.classifications = [cmp.classify(d, trace) for d in report.discrepancies]
            fileformat.atomic_write(stem.with_suffix(".trace"), tr.serialize(trace))
            entry = {**base, "status": "ok", "trace_file": f"rounds/{stem.name}.trace",
                     "partner": str(partner) if partner is not None else None,
                     "rewrites": list(output.rewrites_applied)}

        report.raw_reward = cmp.reward_of(report.discrepancies)
        entry.update(self._summarize(report))
        report.entry = entry
        self._write_jsonl(stem, entry, self._discrepancy_records(report))

        bandit = scheduler.update(ckpt.bandit, prompt_id, report.raw_reward)
        new = dataclasses.replace(
            ckpt, bandit=bandit, completed_rounds=ckpt.completed_rounds + 1, log=ckpt.log + [entry]
        )
        new.rng_state = {"seed": self.config.seed, "next_round": new.next_round}
        return new, report

    def examine(self, trace: tr.Trace, partner: props.PropertyAssignment | None) -> list[cmp.Discrepancy]:
        modes = self.config.comparison_modes
        found: list[cmp.Discrepancy] = []
        ref = self.reference.execute(trace)
        div = self.divergent.execute(trace)
        if cmp.CROSS_CONNECTOR in modes:
            found += cmp.compare(ref, div, cmp.CROSS_CONNECTOR)
        if cmp.CROSS_PROPERTY in modes and partner is not None:
            twin = dataclasses.replace(trace, property_assignment=partner)
            found += cmp.compare(div, self.divergent.execute(twin), cmp.CROSS_PROPERTY)
            # the reference must be property-invariant; anything here is a finding too
            found += cmp.compare(ref, self.reference.execute(twin), cmp.CROSS_PROPERTY)
        return found

    def _summarize(self, report: RoundReport) -> dict:
        kinds = Counter(d.kind for d in report.discrepancies)
        verdicts = Counter(c.verdict for c in report.classifications)
        sole: dict[str, dict[str, int]] = {}
        unsafe_ops: set[str] = set()
        any_rules: set[str] = set()
        for d, c in zip(report.discrepancies, report.classifications):
            any_rules.update(d.rules)
            if len(d.rules) == 1:
                rule = d.rules[0]
                sole.setdefault(rule, {}).setdefault(c.verdict, 0)
                sole[rule][c.verdict] += 1
                if rule == "R1" and c.verdict == cmp.UNSAFE and report.trace is not None:
                    unsafe_ops.add(cmp.nav_kind(d, report.trace))
        return {
            "raw_reward": report.raw_reward,
            "discrepancies": len(report.discrepancies),
            "kinds": dict(sorted(kinds.items())),
            "verdicts": dict(sorted(verdicts.items())),
            "rules": sorted(any_rules),
            "rule_verdicts": {r: dict(sorted(v.items())) for r, v in sorted(sole.items())},
            "unsafe_ops": sorted(unsafe_ops),
        }

    def _discrepancy_records(self, report: RoundReport) -> list[dict]:
        return [
            {**d.to_dict(), "verdict": c.verdict, "rationale": c.rationale}
            for d, c in zip(report.discrepancies, report.classifications)
        ]

    def _write_jsonl(self, stem: Path, entry: dict, records: list[dict]) -> None:
        lines = [json.dumps({"format": REPORT_FORMAT, **entry}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in records]
        fileformat.atomic_write(stem.with_suffix(".jsonl"), "\n".join(lines) + "\n")

    # whole campaign

    def run(
        self,
        rounds: int | None = None,
        resume: bool = False,
        on_round: Callable[[RoundReport], None] | None = None,
    ) -> dict:
        rounds = rounds or self.config.rounds
        path = checkpoint_path(self.output_dir)
        if resume and path.exists():
            ckpt = self.resume_checkpoint()
        elif path.exists():
            raise CampaignError(f"{path} exists; pass resume=True (--resume) to continue it")
        else:
            ckpt = self.fresh_checkpoint()
            self.output_dir.mkdir(parents=True, exist_ok=True)
            commit_checkpoint(self.output_dir, ckpt)
        while ckpt.next_round <= rounds:
            ckpt, report = self.run_round(ckpt)
            commit_checkpoint(self.output_dir, ckpt)
            if on_round is not None:
                on_round(report)
        return summarize(ckpt, self.prompts)


def run_campaign(config: CampaignConfig, resume: bool = False, generator=None) -> dict:
    return Campaign(config, generator).run(resume=resume)


def summarize(ckpt: CampaignCheckpoint, prompts=None) -> dict:
    groups = {p.id: p.focus_group for p in prompts or []}
    first: dict[str, int] = {}
    verdicts: dict[str, Counter] = {tag: Counter() for tag in RULES}
    unsafe_ops: set[str] = set()
    total = 0
    for entry in ckpt.log:
        total += entry.get("discrepancies", 0)
        for rule in entry.get("rules", []):
            first.setdefault(rule, entry["round"])
        for rule, counts in entry.get("rule_verdicts", {}).items():
            verdicts[rule].update(counts)
        unsafe_ops.update(entry.get("unsafe_ops", []))

    rules = {}
    for tag, name in RULES.items():
        observed = sorted(verdicts[tag])
        rules[tag] = {
            "name": name,
            "first_detected_round": first.get(tag),
            "verdicts": dict(sorted(verdicts[tag].items())),
            "expected_verdict": EXPECTED_VERDICT[tag],
            "verdict_matches": bool(observed) and observed == [EXPECTED_VERDICT[tag]],
        }
    bugs = sum(1 for tag in RULES if tag != "R1" and tag in first)
    unsafe = len(unsafe_ops)
    arms = [
        {
            "prompt_id": a.prompt_id,
            "focus_group": groups.get(a.prompt_id),
            "pulls": a.pulls,
            "mean_reward": a.mean_reward,
            "cumulative_reward": a.cumulative_reward,
        }
        for a in ckpt.bandit.arms
    ]
    return {
        "rounds_attempted": ckpt.completed_rounds + ckpt.failed_rounds,
        "rounds_completed": ckpt.completed_rounds,
        "rounds_failed": ckpt.failed_rounds,
        "total_discrepancies": total,
        "total_reward": sum(e.get("raw_reward", 0) for e in ckpt.log),
        "arms": arms,
        "rules": rules,
        "unsafe_navigation_ops": sorted(unsafe_ops),
        "table": [
            {"type": "Bugs", "connector": "divergent", "quantity": bugs},
            {"type": "Unsafe Implementations", "connector": "divergent", "quantity": unsafe},
            {"type": "Total (Bugs + Unsafe Implementations)", "connector": "", "quantity": bugs + unsafe},
        ],
    }


def render_summary(summary: dict) -> str:
    lines = ["Number of Bugs and Unsafe Implementations", ""]
    lines.append(f"{'Type':<40}{'Connector':<12}{'Quantity':>8}")
    for row in summary["table"]:
        lines.append(f"{row['type']:<40}{row['connector']:<12}{row['quantity']:>8}")
    lines += ["", f"rounds completed: {summary['rounds_completed']}  failed: {summary['rounds_failed']}"]
    lines.append(f"total discrepancies: {summary['total_discrepancies']}")
    lines += ["", f"{'Rule':<6}{'Name':<36}{'First round':>12}  Verdicts"]
    for tag, info in summary["rules"].items():
        first = info["first_detected_round"]
        verdicts = ", ".join(f"{k}={v}" for k, v in info["verdicts"].items()) or "-"
        lines.append(f"{tag:<6}{info['name']:<36}{first if first is not None else '-':>12}  {verdicts}")
    lines += ["", f"{'Arm':<6}{'Focus group':<24}{'Pulls':>7}{'Mean reward':>13}"]
    for arm in summary["arms"]:
        lines.append(f"{arm['prompt_id']:<6}{arm['focus_group'] or '':<24}{arm['pulls']:>7}{arm['mean_reward']:>13.4f}")
    return "\n".join(lines) + "\n"


def rounds_csv(ckpt: CampaignCheckpoint) -> str:
    rows = ["round,prompt_id,status,raw_reward,discrepancies,cumulative_discrepancies"]
    running = 0
    for e in ckpt.log:
        running += e.get("discrepancies", 0)
        rows.append(f"{e['round']},{e['prompt_id']},{e['status']},{e.get('raw_reward', 0)},"
                    f"{e.get('discrepancies', 0)},{running}")
    return "\n".join(rows) + "\n"


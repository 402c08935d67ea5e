"""Prompt template, candidate set, and rendering.

A template has four parts (role, dynamic context, task steps, output
requirements). Each candidate prompt fixes one focus group, which supplies
extra task steps and, for the offline stub generator, the op weights.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from conndiff import fileformat
from conndiff.props import PropertyAssignment

PROMPTS_KIND = "conndiff-prompts"

FOCUS_GROUPS = (
    "batch-execution",
    "cursor-navigation",
    "transaction-atomicity",
    "holdability-metadata",
    "resource-lifecycle",
    "multi-query",
)
SLOTS = ("target-connector-pair", "property-assignment", "focus-interface-group", "schema-hint")

_SLOT_RE = re.compile(r"\{([a-z][a-z0-9-]*)\}")


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    role_definition: str
    dynamic_context: str
    dynamic_context_slots: tuple[str, ...]
    task_decomposition: tuple[str, ...]
    output_requirements: str

    def __post_init__(self):
        for part in ("role_definition", "dynamic_context", "output_requirements"):
            if not getattr(self, part).strip():
                raise PromptError(f"template part {part!r} is empty")
        if not self.task_decomposition:
            raise PromptError("template part 'task_decomposition' is empty")
        if not self.dynamic_context_slots:
            raise PromptError("template declares no dynamic context slots")
        body = "\n".join(
            [self.role_definition, self.dynamic_context, *self.task_decomposition, self.output_requirements]
        )
        for slot in _SLOT_RE.findall(body):
            if slot not in self.dynamic_context_slots:
                raise PromptError(f"template references undeclared slot {{{slot}}}")


@dataclass(frozen=True)
class Prompt:
    id: str
    template: PromptTemplate
    focus_group: str
    fixed_context: tuple[tuple[str, str], ...] = ()
    focus_steps: tuple[str, ...] = ()

    @property
    def fingerprint(self) -> str:
        """Content hash; changes whenever the prompt text would change."""
        payload = json.dumps(
            {
                "template": [
                    self.template.role_definition,
                    self.template.dynamic_context,
                    list(self.template.task_decomposition),
                    self.template.output_requirements,
                ],
                "group": self.focus_group,
                "context": list(self.fixed_context),
                "steps": list(self.focus_steps),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PromptSet:
    template: PromptTemplate
    context: dict = field(default_factory=dict)
    group_steps: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)

    def candidates(self, groups=FOCUS_GROUPS) -> list[Prompt]:
        return instantiate_candidates(self.template, list(groups), self.group_steps, self.context)


def instantiate_candidates(
    template: PromptTemplate,
    groups: list[str],
    group_steps: dict[str, list[str]] | None = None,
    context: dict[str, str] | None = None,
) -> list[Prompt]:
    if not groups:
        raise PromptError("at least one focus group is required")
    unknown = [g for g in groups if g not in FOCUS_GROUPS]
    if unknown:
        raise PromptError(f"unknown focus group(s): {', '.join(unknown)}")
    if len(set(groups)) != len(groups):
        raise PromptError("duplicate focus groups")
    group_steps = group_steps or {}
    context = context or {}
    prompts = []
    for idx, group in enumerate(groups, start=1):
        fixed = {k: v for k, v in context.items() if k != "property-assignment"}
        fixed["focus-interface-group"] = group
        prompts.append(
            Prompt(
                id=f"P{idx}",
                template=template,
                focus_group=group,
                fixed_context=tuple(sorted(fixed.items())),
                focus_steps=tuple(group_steps.get(group, ())),
            )
        )
    return prompts


def _fill(text: str, values: dict[str, str]) -> str:
    def sub(m: re.Match) -> str:
        slot = m.group(1)
        if slot not in values:
            raise PromptError(f"unfilled slot: {slot}")
        return values[slot]

    return _SLOT_RE.sub(sub, text)


def render(prompt: Prompt, assignment: PropertyAssignment) -> str:
    template = prompt.template
    values = dict(prompt.fixed_context)
    values["property-assignment"] = str(assignment)
    for slot in template.dynamic_context_slots:
        if slot not in values:
            raise PromptError(f"unfilled slot: {slot}")
    steps = [_fill(s, values) for s in (*template.task_decomposition, *prompt.focus_steps)]
    parts = [
        "## Role",
        _fill(template.role_definition, values),
        "",
        "## Context",
        _fill(template.dynamic_context, values),
        "",
        "## Tasks",
        *(f"{n}. {step}" for n, step in enumerate(steps, start=1)),
        "",
        "## Output requirements",
        template.output_requirements,
    ]
    return "\n".join(parts)


# -- files -------------------------------------------------------------------------


def prompt_set_from_dict(data: dict) -> PromptSet:
    try:
        t = data["template"]
        template = PromptTemplate(
            role_definition=t["role_definition"],
            dynamic_context=t["dynamic_context"],
            dynamic_context_slots=tuple(t["dynamic_context_slots"]),
            task_decomposition=tuple(t["task_decomposition"]),
            output_requirements=t["output_requirements"],
        )
    except (KeyError, TypeError) as exc:
        raise PromptError(f"malformed prompt set: missing {exc}") from exc
    groups = data.get("groups") or {}
    unknown = [g for g in groups if g not in FOCUS_GROUPS]
    if unknown:
        raise PromptError(f"unknown focus group(s): {', '.join(unknown)}")
    return PromptSet(template, dict(data.get("context") or {}), dict(groups), dict(data.get("generator") or {}))


def load_prompt_set(path: str | Path) -> PromptSet:
    return prompt_set_from_dict(fileformat.read_yaml(path, PROMPTS_KIND))


def default_prompts_path() -> Path:
    return Path(__file__).parent / "data" / "prompts.yaml"


def default_prompt_set() -> PromptSet:
    return load_prompt_set(default_prompts_path())

"""UCB1 prompt scheduling.

Each prompt candidate is an arm. Rewards are discrepancy counts clipped to
``reward_cap`` and scaled into [0, 1]. The cumulative reward is held as an exact
fraction and the mean derived from it, so ``mean * pulls == cumulative`` holds
exactly.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

DEFAULT_REWARD_CAP = 5


class SchedulerError(ValueError):
    pass


@dataclass(frozen=True)
class PromptArm:
    prompt_id: str
    pulls: int = 0
    cumulative: Fraction = Fraction(0)
    fingerprint: str = ""

    @property
    def mean_reward(self) -> float:
        return float(self.mean_exact)

    @property
    def mean_exact(self) -> Fraction:
        return self.cumulative / self.pulls if self.pulls else Fraction(0)

    @property
    def cumulative_reward(self) -> float:
        return float(self.cumulative)


@dataclass(frozen=True)
class BanditState:
    arms: tuple[PromptArm, ...]
    total_rounds: int = 0
    reward_cap: int = DEFAULT_REWARD_CAP

    @classmethod
    def fresh(
        cls,
        prompt_ids: Iterable[str],
        reward_cap: int = DEFAULT_REWARD_CAP,
        fingerprints: dict[str, str] | None = None,
    ) -> "BanditState":
        if reward_cap < 1:
            raise SchedulerError("reward_cap must be a positive integer")
        fingerprints = fingerprints or {}
        arms = tuple(PromptArm(pid, fingerprint=fingerprints.get(pid, "")) for pid in prompt_ids)
        if len({a.prompt_id for a in arms}) != len(arms):
            raise SchedulerError("duplicate prompt ids")
        return cls(arms, 0, reward_cap)

    def arm(self, prompt_id: str) -> PromptArm:
        for arm in self.arms:
            if arm.prompt_id == prompt_id:
                return arm
        raise SchedulerError(f"unknown prompt id {prompt_id!r}")

    def to_dict(self) -> dict:
        return {
            "total_rounds": self.total_rounds,
            "reward_cap": self.reward_cap,
            "arms": [
                {
                    "prompt_id": a.prompt_id,
                    "pulls": a.pulls,
                    "cumulative": str(a.cumulative),
                    "fingerprint": a.fingerprint,
                }
                for a in self.arms
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BanditState":
        arms = tuple(
            PromptArm(a["prompt_id"], a["pulls"], Fraction(a["cumulative"]), a.get("fingerprint", ""))
            for a in data["arms"]
        )
        return cls(arms, data["total_rounds"], data["reward_cap"])


def ucb_score(arm: PromptArm, total_rounds: int) -> float:
    if arm.pulls < 1:
        raise SchedulerError(f"arm {arm.prompt_id!r} has no pulls; UCB1 is undefined")
    if total_rounds < 1:
        raise SchedulerError("total_rounds must be >= 1")
    return arm.mean_reward + math.sqrt(2.0 * math.log(total_rounds) / arm.pulls)


def select_arm(state: BanditState) -> str:
    """Pick the next prompt: untried arms first, then the best UCB1 score.

    Ties go to the lowest index.
    """
    if not state.arms:
        raise SchedulerError("no arms to select from")
    for arm in state.arms:
        if arm.pulls == 0:
            return arm.prompt_id
    best, best_score = state.arms[0], ucb_score(state.arms[0], state.total_rounds)
    for arm in state.arms[1:]:
        score = ucb_score(arm, state.total_rounds)
        if score > best_score:
            best, best_score = arm, score
    return best.prompt_id


def normalize(raw_reward: int, reward_cap: int) -> Fraction:
    if raw_reward < 0:
        raise SchedulerError("reward must be non-negative")
    return Fraction(min(raw_reward, reward_cap), reward_cap)


def update(state: BanditState, prompt_id: str, raw_reward: int) -> BanditState:
    reward = normalize(raw_reward, state.reward_cap)
    arms = list(state.arms)
    for idx, arm in enumerate(arms):
        if arm.prompt_id == prompt_id:
            arms[idx] = dataclasses.replace(arm, pulls=arm.pulls + 1, cumulative=arm.cumulative + reward)
            break
    else:
        raise SchedulerError(f"unknown prompt id {prompt_id!r}")
    return dataclasses.replace(state, arms=tuple(arms), total_rounds=state.total_rounds + 1)

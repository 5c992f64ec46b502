"""Transition policies: who picks the next top-level state.

Four implementations share one protocol: a seeded uniform-random policy, a
scripted policy for tests and replays, the LLM-backed controller (render the
prompt, validate the reply, re-prompt once, fall back to random), and the
branch enumerator used for exhaustive tree expansion.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .core import Snapshot, StateId, parse_wire_name, wire_name
from .gateway import (
    CompletionRequest,
    Constraint,
    Gateway,
    Message,
    TransportError,
)
from .prompter import (
    CONTROLLER_SYSTEM_MESSAGE,
    ControllerPrompt,
    RenderOptions,
    parse_reply,
    render_prompt,
)


@dataclass(frozen=True)
class PolicyDecision:
    """One decision: the chosen state, why, and how many LLM calls it took."""

    chosen: StateId
    rationale: str
    attempts: int = 1


class TransitionPolicy(Protocol):
    name: str

    def decide(
        self, memory: Snapshot, current: StateId, step: int, candidates: Sequence[StateId]
    ) -> PolicyDecision: ...


class ScriptError(Exception):
    """A scripted policy was asked for a state it cannot deliver."""


def _seeded_rng(seed: int, step: int) -> random.Random:
    # String seeding keeps draws stable across platforms and Python builds.
    return random.Random(f"transition-policy:{seed}:{step}")


def decide_random(candidates: Sequence[StateId], seed: int, step: int) -> PolicyDecision:
    """Uniform choice over the candidates from a named, seeded generator."""
    if not candidates:
        raise ValueError("cannot decide over an empty candidate list")
    chosen = _seeded_rng(seed, step).choice(list(candidates))
    return PolicyDecision(chosen=chosen, rationale="random", attempts=1)


def decide_scripted(script: Sequence[StateId], step: int, candidates: Sequence[StateId]) -> PolicyDecision:
    """Return script[step] if it is offered; otherwise a configuration error."""
    if step >= len(script):
        raise ScriptError(f"script underrun at step {step} (script has {len(script)} entries)")
    chosen = script[step]
    if chosen not in candidates:
        raise ScriptError(
            f"scripted state {wire_name(chosen)} not offered at step {step}: "
            f"candidates are {[wire_name(c) for c in candidates]}"
        )
    return PolicyDecision(chosen=chosen, rationale="scripted", attempts=1)


def enumerate_branches(candidates: Sequence[StateId]) -> list[StateId]:
    """All candidates in their canonical order, for exhaustive expansion."""
    return list(candidates)


class RandomPolicy:
    """Seeded uniform-random transition policy."""

    name = "random"

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def decide(
        self, memory: Snapshot, current: StateId, step: int, candidates: Sequence[StateId]
    ) -> PolicyDecision:
        return decide_random(candidates, self.seed, step)


class ScriptedPolicy:
    """Plays back a fixed list of states, one per decision."""

    name = "scripted"

    def __init__(self, script: Sequence[StateId]) -> None:
        self.script = list(script)
        self._cursor = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedPolicy":
        """Load a script: one wire name per line, blanks ignored."""
        lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
        return cls([parse_wire_name(ln) for ln in lines if ln])

    def decide(
        self, memory: Snapshot, current: StateId, step: int, candidates: Sequence[StateId]
    ) -> PolicyDecision:
        decision = decide_scripted(self.script, self._cursor, candidates)
        self._cursor += 1
        return decision


class LlmPolicy:
    """The LLM-backed controller with verifier, one re-prompt, and fallback.

    An invalid reply triggers exactly one re-prompt carrying a feedback line
    that names the violation. A second invalid reply (or a transport error)
    is a verifier failure: the decision falls back to the seeded random
    policy over the same candidates, and the rationale records that.
    """

    name = "llm"

    def __init__(
        self,
        gateway: Gateway,
        model_id: str = "controller",
        seed: int = 0,
        temperature: float = 0.0,
        max_tokens: int = 32,
        render_options: RenderOptions | None = None,
    ) -> None:
        self.gateway = gateway
        self.model_id = model_id
        self.seed = seed
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.render_options = render_options

    def _request(self, messages: list[Message], prompt: ControllerPrompt) -> CompletionRequest:
        allowed = tuple(f"<NextState>{name}</NextState>" for name in prompt.candidate_set)
        return CompletionRequest(
            model_id=self.model_id,
            messages=tuple(messages),
            constraint=Constraint(allowed_completions=allowed),
            max_tokens=self.max_tokens,
            temperature=self.temperature,
            seed=self.seed,
        )

    def decide(
        self, memory: Snapshot, current: StateId, step: int, candidates: Sequence[StateId]
    ) -> PolicyDecision:
        prompt = render_prompt(memory, current, step, candidates, self.render_options)
        messages = [
            Message("system", CONTROLLER_SYSTEM_MESSAGE),
            Message("user", prompt.text),
        ]
        attempts = 0
        last_reason = "transport_error"
        for round_no in (1, 2):
            try:
                result = self.gateway.complete(self._request(messages, prompt))
            except TransportError:
                attempts = round_no
                break
            attempts = round_no
            reply = parse_reply(result.text, prompt)
            if reply.is_valid:
                assert reply.state is not None
                return PolicyDecision(chosen=reply.state, rationale=result.text, attempts=round_no)
            last_reason = reply.reason or "invalid"
            if round_no == 1:
                messages = messages + [
                    Message("assistant", result.text),
                    Message(
                        "user",
                        f"Your previous reply was invalid ({last_reason}). Reply with exactly one "
                        "<NextState> tag containing one of the offered state candidates.",
                    ),
                ]
        fallback = decide_random(candidates, self.seed, step)
        return PolicyDecision(
            chosen=fallback.chosen,
            rationale=f"verifier failure ({last_reason}); random fallback",
            attempts=max(attempts, 1),
        )

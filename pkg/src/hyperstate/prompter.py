"""Controller prompt rendering and reply parsing.

render_prompt turns a memory snapshot into the exact text the state
controller sees (and that dataset inputs are made of); parse_reply validates
the controller's <NextState> reply against the offered candidates. Both are
pure functions, so rendering is reproducible byte-for-byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .core import EntryKind, Snapshot, StateId, UnknownStateName, parse_wire_name, wire_name

# Sent as the chat system message alongside the rendered user prompt.
CONTROLLER_SYSTEM_MESSAGE = (
    "You are an AI assistant to control the state of a multi-step visual "
    "reasoning system. Your task is to decide the next state the system "
    "should transition to based on the current state and history."
)

_CHOOSE_LINE = (
    "Based on the information above, determine the next state the system "
    "should transition to. Choose from the following states:"
)
_RETURN_LINE = "Return the name wrapped in <NextState> tags."

_NEXT_STATE = re.compile(r"<NextState>(.*?)</NextState>", re.DOTALL)


@dataclass(frozen=True)
class RenderOptions:
    """Optional truncation for long episodes; None keeps sections unbounded."""

    max_code_entries: int | None = None
    max_feedback_entries: int | None = None


@dataclass(frozen=True)
class ControllerPrompt:
    """A fully rendered controller prompt plus the candidates it offers."""

    text: str
    candidate_set: tuple[str, ...]
    step: int
    truncated: bool = False


@dataclass(frozen=True)
class ControllerReply:
    """Parse result for a controller reply; invalidity is a value."""

    raw: str
    state: StateId | None
    reason: str | None = None

    @property
    def is_valid(self) -> bool:
        return self.state is not None


def _block(tag: str, body: str) -> str:
    if not body:
        return f"<{tag}></{tag}>"
    return f"<{tag}>\n{body}\n</{tag}>"


def _inline(tag: str, value: str) -> str:
    return f"<{tag}>{value}</{tag}>"


def _tail(payloads: Sequence[str], limit: int | None) -> tuple[list[str], bool]:
    items = list(payloads)
    if limit is not None and len(items) > limit:
        return items[-limit:], True
    return items, False


def render_prompt(
    memory: Snapshot,
    current: StateId,
    step: int,
    candidates: Sequence[StateId],
    options: RenderOptions | None = None,
) -> ControllerPrompt:
    """Render the controller prompt for one decision.

    Section bodies are derived from the snapshot alone: feedback and code are
    the concatenated payloads of their kinds in sequence order, variables show
    the latest binding per name in first-definition order, and the state
    history lists every entered state starting at Initial.
    """
    if not candidates:
        raise ValueError("cannot render a prompt with no candidates")
    options = options or RenderOptions()

    feedback, feedback_cut = _tail(
        [e.payload for e in memory.by_kind(EntryKind.FEEDBACK) if isinstance(e.payload, str)],
        options.max_feedback_entries,
    )
    code, code_cut = _tail(
        [e.payload for e in memory.by_kind(EntryKind.CODE) if isinstance(e.payload, str)],
        options.max_code_entries,
    )
    instructions = [
        e.payload for e in memory.by_kind(EntryKind.INSTRUCTION) if isinstance(e.payload, str)
    ]
    variables = [f"{name}: {value}" for name, value in memory.latest_variables().items()]
    candidate_names = tuple(wire_name(c) for c in candidates)

    sections = [
        _block("TaskDescription", memory.last_payload(EntryKind.TASK_DESCRIPTION) or ""),
        _inline("Query", memory.last_payload(EntryKind.QUERY) or ""),
        _block("Instructions", "\n".join(instructions)),
        _block("Feedback", "\n".join(feedback)),
        _block("Code", "\n".join(code)),
        _block("Variables", "\n".join(variables)),
        _block("StateHistory", "\n".join(memory.state_history())),
        _inline("State", wire_name(current)),
        _inline("CurrentStep", str(step)),
        _CHOOSE_LINE,
        _block("StateCandidates", "\n".join(candidate_names)),
        _RETURN_LINE,
    ]
    return ControllerPrompt(
        text="\n".join(sections),
        candidate_set=candidate_names,
        step=step,
        truncated=feedback_cut or code_cut,
    )


def parse_reply(raw: str, prompt: ControllerPrompt) -> ControllerReply:
    """Extract and validate the single <NextState> span of a controller reply.

    Surrounding chatter is ignored. Zero or multiple spans, names outside the
    wire-name set, and names not offered by the prompt all yield an invalid
    reply with a machine-readable reason.
    """
    spans = _NEXT_STATE.findall(raw)
    if not spans:
        return ControllerReply(raw=raw, state=None, reason="missing_tag")
    if len(spans) > 1:
        return ControllerReply(raw=raw, state=None, reason="multiple_tags")
    name = spans[0].strip()
    try:
        state = parse_wire_name(name)
    except UnknownStateName:
        return ControllerReply(raw=raw, state=None, reason="unknown_name")
    if name not in prompt.candidate_set:
        return ControllerReply(raw=raw, state=None, reason="not_a_candidate")
    return ControllerReply(raw=raw, state=state)

"""Core vocabulary of the engine: states, shared memory, answers, episodes.

Everything here is model-free plumbing shared by the episode runner, the
agents, the prompt renderer, and the trajectory builder. The shared memory
is an append-only log; snapshots of it are immutable values that can be
handed to any number of concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Iterator, Mapping


class StateId(Enum):
    """Top-level states: three agent states plus three lifecycle states."""

    INITIAL = "Initial"
    ONESHOT = "Oneshot"
    STEPWISE = "Stepwise"
    SPECIALIZED = "Specialized"
    FINAL = "Final"
    FAILURE = "Failure"

    @property
    def is_agent(self) -> bool:
        return self in AGENT_STATES

    @property
    def is_lifecycle(self) -> bool:
        return self in LIFECYCLE_STATES


AGENT_STATES = frozenset({StateId.ONESHOT, StateId.STEPWISE, StateId.SPECIALIZED})
LIFECYCLE_STATES = frozenset({StateId.INITIAL, StateId.FINAL, StateId.FAILURE})

# Names used on the prompt/dataset wire. The map is bijective; parse_wire_name
# rejects anything outside it.
WIRE_NAMES: dict[StateId, str] = {
    StateId.INITIAL: "Initial",
    StateId.ONESHOT: "OneShotReasoning",
    StateId.STEPWISE: "StepWiseReasoning",
    StateId.SPECIALIZED: "Specialized",
    StateId.FINAL: "Final",
    StateId.FAILURE: "Failure",
}
_STATES_BY_WIRE_NAME = {name: state for state, name in WIRE_NAMES.items()}


def wire_name(state: StateId) -> str:
    """Render a state identifier to its wire name."""
    return WIRE_NAMES[state]


def parse_wire_name(text: str) -> StateId:
    """Parse a wire name back to its state identifier.

    Raises:
        UnknownStateName: for any string outside the six wire names.
    """
    try:
        return _STATES_BY_WIRE_NAME[text]
    except KeyError:
        raise UnknownStateName(text) from None


class UnknownStateName(ValueError):
    """A string that is not one of the six wire names."""

    def __init__(self, text: str) -> None:
        super().__init__(f"unknown state name: {text!r}")
        self.text = text


class EntryKind(str, Enum):
    """The eight memory entry kinds; one per controller-prompt slot."""

    QUERY = "query"
    TASK_DESCRIPTION = "task_description"
    FEEDBACK = "feedback"
    CODE = "code"
    VARIABLE = "variable"
    INSTRUCTION = "instruction"
    STATE_TRANSITION = "state_transition"
    ANSWER = "answer"


SYSTEM_AUTHOR = "system"


class MemoryError_(Exception):
    """Base for shared-memory violations."""


class AnswerParseError(MemoryError_):
    """An answer entry whose payload does not parse as an answer value."""

    def __init__(self, seq: int, reason: str) -> None:
        super().__init__(f"answer entry at seq {seq} is malformed: {reason}")
        self.seq = seq


_BOX_PATTERN = re.compile(
    r"^ImagePatch\(\s*(-?[\d.]+(?:[eE][-+]?\d+)?)\s*,\s*(-?[\d.]+(?:[eE][-+]?\d+)?)"
    r"\s*,\s*(-?[\d.]+(?:[eE][-+]?\d+)?)\s*,\s*(-?[\d.]+(?:[eE][-+]?\d+)?)\s*\)$"
)


@dataclass(frozen=True)
class AnswerValue:
    """A final answer: free text, or a pixel-space corner-form bounding box."""

    kind: str  # "text" | "box"
    text: str | None = None
    box: tuple[float, float, float, float] | None = None

    @classmethod
    def from_text(cls, text: str) -> "AnswerValue":
        return cls(kind="text", text=text)

    @classmethod
    def from_box(cls, x1: float, y1: float, x2: float, y2: float) -> "AnswerValue":
        coords = (float(x1), float(y1), float(x2), float(y2))
        if any(not math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite: {coords}")
        if any(c < 0 for c in coords):
            raise ValueError(f"box coordinates must be >= 0: {coords}")
        if coords[0] > coords[2] or coords[1] > coords[3]:
            raise ValueError(f"box corners must satisfy x1<=x2 and y1<=y2: {coords}")
        return cls(kind="box", box=coords)

    def render(self) -> str:
        """Canonical payload text: plain text, or ImagePatch(x1, y1, x2, y2)."""
        if self.kind == "text":
            assert self.text is not None
            return self.text
        assert self.box is not None
        return "ImagePatch({}, {}, {}, {})".format(*(_fmt_coord(c) for c in self.box))

    @classmethod
    def parse(cls, payload: str) -> "AnswerValue":
        """Inverse of render(); ImagePatch(...) strings become boxes."""
        match = _BOX_PATTERN.match(payload.strip())
        if match:
            return cls.from_box(*(float(g) for g in match.groups()))
        return cls.from_text(payload)


def _fmt_coord(c: float) -> str:
    return str(int(c)) if float(c).is_integer() else repr(c)


class MetricKind(str, Enum):
    """Which leaf metric a task is scored with (and its answer variant)."""

    VQA_ACCURACY = "vqa_accuracy"
    GROUNDING_IOU = "grounding_iou"

    @property
    def answer_kind(self) -> str:
        return "text" if self is MetricKind.VQA_ACCURACY else "box"


@dataclass(frozen=True)
class TaskSpec:
    """One reasoning task; image_ref is an opaque handle, never decoded here."""

    title: str
    description: str
    query: str
    image_ref: str
    metric_kind: MetricKind

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "title": self.title,
            "description": self.description,
            "query": self.query,
            "image_ref": self.image_ref,
            "metric_kind": self.metric_kind.value,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping[str, Any]) -> "TaskSpec":
        return cls(
            title=data["title"],
            description=data.get("description", ""),
            query=data["query"],
            image_ref=data.get("image_ref", ""),
            metric_kind=MetricKind(data.get("metric_kind", "vqa_accuracy")),
        )

    def digest(self) -> str:
        raw = json.dumps(self.to_json_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()[:12]


@dataclass(frozen=True)
class MemoryEntry:
    """One append-only log record.

    Variable entries carry a {"name", "value"} mapping payload; every other
    kind carries plain text. seq and step are assigned by SharedMemory.append.
    """

    kind: EntryKind
    payload: str | Mapping[str, str]
    author: str = SYSTEM_AUTHOR
    seq: int | None = None
    step: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, EntryKind):
            raise ValueError(f"unknown memory entry kind: {self.kind!r}")
        if self.kind is EntryKind.VARIABLE:
            if not isinstance(self.payload, Mapping) or set(self.payload) != {"name", "value"}:
                raise ValueError("variable entries need a {'name', 'value'} payload")
        elif not isinstance(self.payload, str):
            raise ValueError(f"{self.kind.value} entries need a text payload")

    @property
    def variable_name(self) -> str:
        assert self.kind is EntryKind.VARIABLE and isinstance(self.payload, Mapping)
        return self.payload["name"]

    @property
    def variable_value(self) -> str:
        assert self.kind is EntryKind.VARIABLE and isinstance(self.payload, Mapping)
        return self.payload["value"]

    def to_json_dict(self) -> dict[str, Any]:
        payload: Any = dict(self.payload) if isinstance(self.payload, Mapping) else self.payload
        return {
            "seq": self.seq,
            "author": self.author,
            "kind": self.kind.value,
            "payload": payload,
            "step": self.step,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping[str, Any]) -> "MemoryEntry":
        return cls(
            kind=EntryKind(data["kind"]),
            payload=data["payload"],
            author=data.get("author", SYSTEM_AUTHOR),
            seq=data.get("seq"),
            step=data.get("step"),
        )


def entry(kind: EntryKind, payload: str, author: str = SYSTEM_AUTHOR) -> MemoryEntry:
    """Draft a plain-text entry (seq/step assigned on append)."""
    return MemoryEntry(kind=kind, payload=payload, author=author)


def variable_entry(name: str, value: str, author: str = SYSTEM_AUTHOR) -> MemoryEntry:
    """Draft a variable-binding entry."""
    return MemoryEntry(kind=EntryKind.VARIABLE, payload={"name": name, "value": value}, author=author)


@dataclass(frozen=True)
class Snapshot:
    """An immutable view of a shared memory at a fixed sequence number."""

    task: TaskSpec
    entries: tuple[MemoryEntry, ...]

    @property
    def seq(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[MemoryEntry]:
        return iter(self.entries)

    def by_kind(self, kind: EntryKind) -> tuple[MemoryEntry, ...]:
        return tuple(e for e in self.entries if e.kind is kind)

    def last_payload(self, kind: EntryKind) -> str | None:
        for e in reversed(self.entries):
            if e.kind is kind and isinstance(e.payload, str):
                return e.payload
        return None

    def latest_variables(self) -> dict[str, str]:
        """Latest value per variable name, in first-definition order."""
        out: dict[str, str] = {}
        for e in self.entries:
            if e.kind is EntryKind.VARIABLE:
                out[e.variable_name] = e.variable_value
        return out

    def state_history(self) -> list[str]:
        """Wire names of all states entered so far, starting at Initial."""
        history = [WIRE_NAMES[StateId.INITIAL]]
        history.extend(
            e.payload for e in self.entries
            if e.kind is EntryKind.STATE_TRANSITION and isinstance(e.payload, str)
        )
        return history

    def serialize(self) -> str:
        """Canonical JSON of the entry log (used for equality and digests)."""
        return json.dumps([e.to_json_dict() for e in self.entries], sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


class SharedMemory:
    """The append-only episode log. Confined to one episode; appends are
    serialized by the episode loop, snapshots are safe to share."""

    def __init__(self, task: TaskSpec, entries: Iterable[MemoryEntry] = ()) -> None:
        self.task = task
        self._entries: list[MemoryEntry] = list(entries)

    @classmethod
    def for_task(cls, task: TaskSpec) -> "SharedMemory":
        """A fresh episode memory seeded with the task description and query."""
        memory = cls(task)
        description = task.title if not task.description else f"{task.title}\n{task.description}"
        memory.append(
            [
                entry(EntryKind.TASK_DESCRIPTION, description),
                entry(EntryKind.QUERY, task.query),
            ],
            step=0,
        )
        return memory

    @classmethod
    def from_snapshot(cls, snapshot: Snapshot) -> "SharedMemory":
        """An independent memory replaying a checkpoint (branch expansion)."""
        return cls(snapshot.task, snapshot.entries)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def seq(self) -> int:
        return len(self._entries)

    def append(self, delta: Iterable[MemoryEntry], step: int = 0) -> int:
        """Append drafted entries in order; returns the new sequence number.

        Entries must not carry a seq yet; contiguous seqs are assigned here.
        """
        drafted = list(delta)
        for e in drafted:
            if e.seq is not None:
                raise MemoryError_(f"entry already has seq {e.seq}; drafts must be unsequenced")
        for e in drafted:
            self._entries.append(replace(e, seq=len(self._entries), step=step))
        return len(self._entries)

    def snapshot(self) -> Snapshot:
        return Snapshot(task=self.task, entries=tuple(self._entries))


def extract_answer(snapshot: Snapshot) -> AnswerValue | None:
    """The output function: parse the last answer entry, or None if absent."""
    for e in reversed(snapshot.entries):
        if e.kind is EntryKind.ANSWER:
            assert isinstance(e.payload, str)
            try:
                return AnswerValue.parse(e.payload)
            except ValueError as exc:
                raise AnswerParseError(e.seq if e.seq is not None else -1, str(exc)) from exc
    return None


@dataclass(frozen=True)
class TraceStep:
    """One recorded policy decision: the chosen state and what it appended."""

    t: int
    state: StateId
    seq_start: int
    seq_end: int
    rationale: str

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "state": wire_name(self.state),
            "seq_start": self.seq_start,
            "seq_end": self.seq_end,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class Outcome:
    """How an episode ended. answered iff the last transition entered Final;
    exhausted episodes still carry a best-effort extracted answer if any."""

    status: str  # "answered" | "exhausted" | "failed"
    answer: AnswerValue | None = None

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "answer": None if self.answer is None else self.answer.render(),
        }


@dataclass
class EpisodeTrace:
    """The persistent record of one episode run."""

    task: TaskSpec
    steps: list[TraceStep] = field(default_factory=list)
    outcome: Outcome = field(default_factory=lambda: Outcome(status="failed"))
    seed: int = 0
    final_memory: Snapshot | None = None

    def to_json_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "task": self.task.to_json_dict(),
            "steps": [s.to_json_dict() for s in self.steps],
            "outcome": self.outcome.to_json_dict(),
            "seed": self.seed,
        }
        if self.final_memory is not None:
            doc["memory"] = [e.to_json_dict() for e in self.final_memory.entries]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

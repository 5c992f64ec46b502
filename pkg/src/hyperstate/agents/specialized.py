"""Direct perception agent: one expert-model call with output verification.

The prediction verifier checks shape only (a valid box for grounding tasks,
non-empty text otherwise). An invalid output earns one adaptive retry that
feeds the violation back to the expert as a hint; a second invalid output
makes the cycle unrecoverable.
"""

from __future__ import annotations

from ..core import (
    AnswerValue,
    EntryKind,
    MemoryEntry,
    MetricKind,
    Snapshot,
    StateId,
    entry,
    variable_entry,
    wire_name,
)
from .base import AgentCycleResult, BackendPorts
from .subautomaton import SubAutomatonSpec, load_builtin_spec


def verify_prediction(raw: str, metric_kind: MetricKind) -> tuple[AnswerValue | None, str]:
    """Return (answer, reason); answer None means the output failed its check."""
    if metric_kind is MetricKind.GROUNDING_IOU:
        try:
            parsed = AnswerValue.parse(raw)
        except ValueError as exc:
            return None, f"box did not validate: {exc}"
        if parsed.kind != "box":
            return None, "expected a bounding box, got text"
        return parsed, "valid box"
    if not raw.strip():
        return None, "expected non-empty text"
    return AnswerValue.from_text(raw.strip()), "valid text"


class SpecializedAgent:
    state = StateId.SPECIALIZED

    def __init__(self, ports: BackendPorts, retry_budget: int = 1) -> None:
        ports.require("expert_model")
        self.ports = ports
        self.retry_budget = retry_budget

    @property
    def spec(self) -> SubAutomatonSpec:
        return load_builtin_spec("specialized")

    def run_cycle(self, memory: Snapshot) -> AgentCycleResult:
        author = wire_name(self.state)
        task = memory.task
        hint: str | None = None
        retries = 0

        while True:
            raw = self.ports.expert_model.predict(task.query, task.image_ref, hint)  # type: ignore[union-attr]
            answer, reason = verify_prediction(raw, task.metric_kind)
            if answer is None:
                retries += 1
                if retries > self.retry_budget:
                    return AgentCycleResult(
                        status="unrecoverable",
                        delta=(entry(
                            EntryKind.FEEDBACK,
                            f"Specialized agent failed: expert output invalid twice ({reason}).",
                            author=author,
                        ),),
                        feedback=f"expert output invalid after retry: {reason}",
                    )
                hint = f"previous output invalid: {reason}"
                continue

            rendered = answer.render()
            summary = f"Expert prediction verified ({reason})."
            if retries:
                summary += f" Adaptive retries: {retries}."
            delta: list[MemoryEntry] = [
                variable_entry("prediction", rendered, author=author),
                entry(EntryKind.FEEDBACK, summary, author=author),
                entry(EntryKind.ANSWER, rendered, author=author),
            ]
            return AgentCycleResult(status="ok", delta=tuple(delta), feedback=summary)

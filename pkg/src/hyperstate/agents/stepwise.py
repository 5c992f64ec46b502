"""Step-by-step reasoner: plan one step, code it, run it, return.

A cycle performs exactly one reasoning step; multi-step reasoning happens by
the top-level policy selecting this agent again. Each stage (instruction
generation, code generation, execution) keeps its own bounded regeneration
loop; whichever stage stays invalid past its budget makes the cycle
unrecoverable.
"""

from __future__ import annotations

import json
import re

from ..core import EntryKind, MemoryEntry, Snapshot, StateId, entry, wire_name
from .base import AgentCycleResult, BackendPorts
from .oneshot import _answer_entries
from .prompts import (
    DESK_LIBRARY,
    PromptLibrary,
    extract_python_code,
    render_instruction_prompt,
    render_step_code_prompt,
)
from .subautomaton import SubAutomatonSpec, load_builtin_spec

_JSON_OBJECT = re.compile(r"\{.*\}", re.DOTALL)


def parse_instruction_list(raw: str) -> list[tuple[str, float]] | None:
    """Parse the {"instructions": [...]} reply; None when structurally invalid.

    Valid means: a JSON object with a non-empty instructions array whose items
    carry an instruction string and a probability in [0, 1].
    """
    text = raw.strip()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        match = _JSON_OBJECT.search(text)
        if not match:
            return None
        try:
            data = json.loads(match.group(0))
        except json.JSONDecodeError:
            return None
    if not isinstance(data, dict) or not isinstance(data.get("instructions"), list):
        return None
    items: list[tuple[str, float]] = []
    for item in data["instructions"]:
        if not isinstance(item, dict):
            return None
        text_value = item.get("instruction")
        prob = item.get("probability")
        if not isinstance(text_value, str) or not text_value.strip():
            return None
        if not isinstance(prob, (int, float)) or not 0.0 <= float(prob) <= 1.0:
            return None
        items.append((text_value, float(prob)))
    return items or None


def select_instruction(instructions: list[tuple[str, float]]) -> str:
    """Highest probability wins; ties go to the first listed."""
    best_text, best_prob = instructions[0]
    for text, prob in instructions[1:]:
        if prob > best_prob:
            best_text, best_prob = text, prob
    return best_text


class StepwiseReasoner:
    state = StateId.STEPWISE

    def __init__(
        self,
        ports: BackendPorts,
        library: PromptLibrary = DESK_LIBRARY,
        retry_budget: int = 1,
    ) -> None:
        ports.require("instruction_generator", "code_generator", "code_interpreter")
        self.ports = ports
        self.library = library
        self.retry_budget = retry_budget

    @property
    def spec(self) -> SubAutomatonSpec:
        return load_builtin_spec("stepwise")

    def _unrecoverable(self, author: str, reason: str) -> AgentCycleResult:
        return AgentCycleResult(
            status="unrecoverable",
            delta=(entry(EntryKind.FEEDBACK, f"Stepwise reasoner failed: {reason}", author=author),),
            feedback=reason,
        )

    def run_cycle(self, memory: Snapshot) -> AgentCycleResult:
        author = wire_name(self.state)
        step_no = len(memory.by_kind(EntryKind.INSTRUCTION)) + 1

        instructions = None
        for attempt in range(self.retry_budget + 1):
            raw = self.ports.instruction_generator.generate(  # type: ignore[union-attr]
                render_instruction_prompt(memory, step_no, self.library)
            )
            instructions = parse_instruction_list(raw)
            if instructions is not None:
                break
        if instructions is None:
            return self._unrecoverable(author, "no valid instruction list after retry")
        instruction = select_instruction(instructions)

        retry_notes: list[str] = []
        format_failures = 0
        runtime_failures = 0
        while True:
            prompt = render_step_code_prompt(memory, step_no, instruction, self.library)
            if retry_notes:
                prompt = prompt + "\n" + retry_notes[-1]
            raw = self.ports.code_generator.generate(prompt)  # type: ignore[union-attr]
            code = extract_python_code(raw)
            if code is None:
                format_failures += 1
                if format_failures > self.retry_budget:
                    return self._unrecoverable(author, "no valid <PythonCode> block after retry")
                retry_notes.append("Previous reply did not contain a valid <PythonCode> block.")
                continue

            result = self.ports.code_interpreter.execute(code, memory)  # type: ignore[union-attr]
            if not result.ok:
                runtime_failures += 1
                if runtime_failures > self.retry_budget:
                    return self._unrecoverable(author, f"step code kept raising ({result.error})")
                retry_notes.append(f"Previous code failed at runtime: {result.error}")
                continue

            delta: list[MemoryEntry] = [
                entry(EntryKind.INSTRUCTION, instruction, author=author),
                entry(EntryKind.CODE, code, author=author),
            ]
            for note in retry_notes:
                delta.append(entry(EntryKind.FEEDBACK, note, author=author))
            delta.extend(_answer_entries(dict(result.variables), author))
            summary = result.feedback or f"Step {step_no} executed: {instruction}"
            delta.append(entry(EntryKind.FEEDBACK, summary, author=author))
            return AgentCycleResult(status="ok", delta=tuple(delta), feedback=summary)

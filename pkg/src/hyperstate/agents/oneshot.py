"""Single-pass program reasoner: generate, verify, execute, return.

One cycle drives the whole micro-loop: the code generator writes a full
program, a structural verifier checks the <PythonCode> block, the interpreter
port runs it. Format or runtime failures each earn one regeneration (per
stage budget) with the failure text appended as extra context; persistent
failure reports an unrecoverable cycle.
"""

from __future__ import annotations

from ..core import EntryKind, MemoryEntry, Snapshot, StateId, entry, variable_entry, wire_name
from .base import AgentCycleResult, BackendPorts
from .prompts import DESK_LIBRARY, PromptLibrary, extract_python_code, render_oneshot_prompt
from .subautomaton import SubAutomatonSpec, load_builtin_spec

FINAL_ANSWER_VARIABLE = "final_answer"


def _answer_entries(variables: dict[str, str], author: str) -> list[MemoryEntry]:
    out: list[MemoryEntry] = [variable_entry(n, v, author=author) for n, v in variables.items()]
    if FINAL_ANSWER_VARIABLE in variables:
        out.append(entry(EntryKind.ANSWER, variables[FINAL_ANSWER_VARIABLE], author=author))
    return out


class OneshotReasoner:
    state = StateId.ONESHOT

    def __init__(
        self,
        ports: BackendPorts,
        library: PromptLibrary = DESK_LIBRARY,
        retry_budget: int = 1,
    ) -> None:
        ports.require("code_generator", "code_interpreter")
        self.ports = ports
        self.library = library
        self.retry_budget = retry_budget

    @property
    def spec(self) -> SubAutomatonSpec:
        return load_builtin_spec("oneshot")

    def run_cycle(self, memory: Snapshot) -> AgentCycleResult:
        author = wire_name(self.state)
        base_context = "\n".join(
            e.payload for e in memory.by_kind(EntryKind.FEEDBACK) if isinstance(e.payload, str)
        )
        retry_notes: list[str] = []
        format_failures = 0
        runtime_failures = 0

        while True:
            context = "\n".join(filter(None, [base_context, *retry_notes]))
            prompt = render_oneshot_prompt(memory, context, self.library)
            raw = self.ports.code_generator.generate(prompt)  # type: ignore[union-attr]
            code = extract_python_code(raw)
            if code is None:
                format_failures += 1
                if format_failures > self.retry_budget:
                    return AgentCycleResult(
                        status="unrecoverable",
                        delta=(entry(
                            EntryKind.FEEDBACK,
                            "Oneshot reasoner failed: no valid <PythonCode> block after retry.",
                            author=author,
                        ),),
                        feedback="code format invalid after retry",
                    )
                retry_notes.append("Previous reply did not contain a valid <PythonCode> block.")
                continue

            result = self.ports.code_interpreter.execute(code, memory)  # type: ignore[union-attr]
            if not result.ok:
                runtime_failures += 1
                if runtime_failures > self.retry_budget:
                    return AgentCycleResult(
                        status="unrecoverable",
                        delta=(entry(
                            EntryKind.FEEDBACK,
                            f"Oneshot reasoner failed: code kept raising ({result.error}).",
                            author=author,
                        ),),
                        feedback=f"runtime error after retry: {result.error}",
                    )
                retry_notes.append(f"Previous code failed at runtime: {result.error}")
                continue

            delta: list[MemoryEntry] = [entry(EntryKind.CODE, code, author=author)]
            for note in retry_notes:
                delta.append(entry(EntryKind.FEEDBACK, note, author=author))
            variables = dict(result.variables)
            delta.extend(_answer_entries(variables, author))
            summary = result.feedback or "Oneshot program executed successfully."
            delta.append(entry(EntryKind.FEEDBACK, summary, author=author))
            return AgentCycleResult(status="ok", delta=tuple(delta), feedback=summary)

"""Deterministic mock backends for desk-scale runs and tests.

Scripted ports replay fixed responses for unit tests. The mini interpreter
understands just enough of the generated programs (literal assignments,
``raise`` lines) to execute mock code deterministically. Demo ports derive
their outputs purely from (input, seed), so whole episodes replay
byte-identically.
"""

from __future__ import annotations

import hashlib
import re

from ..core import MetricKind, Snapshot, StateId
from .base import AgentRegistry, BackendPorts, ExecutionResult
from .oneshot import OneshotReasoner
from .specialized import SpecializedAgent
from .stepwise import StepwiseReasoner

_ASSIGNMENT = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$")
_STRING_LITERAL = re.compile(r"""^(['"])(.*)\1$""")


class ScriptedPortError(AssertionError):
    """A scripted port ran out of replies (a test error)."""


class ScriptedGenerator:
    """Text-generation port that replays a fixed list of completions."""

    def __init__(self, replies: list[str]) -> None:
        self.replies = list(replies)
        self.calls: list[str] = []

    def generate(self, prompt: str) -> str:
        self.calls.append(prompt)
        if not self.replies:
            raise ScriptedPortError("scripted generator exhausted")
        return self.replies.pop(0)


class ScriptedExpert:
    """Expert port that replays fixed predictions and records its calls."""

    def __init__(self, replies: list[str]) -> None:
        self.replies = list(replies)
        self.calls: list[tuple[str, str, str | None]] = []

    def predict(self, query: str, image_ref: str, hint: str | None = None) -> str:
        self.calls.append((query, image_ref, hint))
        if not self.replies:
            raise ScriptedPortError("scripted expert exhausted")
        return self.replies.pop(0)


class MiniInterpreter:
    """Executes mock programs: literal assignments plus ``raise`` lines.

    Assignments of string/number/ImagePatch literals bind variables; a bare
    ``raise`` (optionally with a message) produces a runtime error. Anything
    else binds the right-hand side verbatim as rendered text.
    """

    def __init__(self) -> None:
        self.calls: list[str] = []

    def execute(self, code: str, memory: Snapshot) -> ExecutionResult:
        self.calls.append(code)
        variables: dict[str, str] = {}
        statements = 0
        for line in code.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("raise"):
                message = line[len("raise"):].strip() or "RuntimeError"
                return ExecutionResult(ok=False, error=message, feedback=f"Execution failed: {message}")
            match = _ASSIGNMENT.match(line)
            if match:
                name, rhs = match.group(1), match.group(2).strip()
                literal = _STRING_LITERAL.match(rhs)
                variables[name] = literal.group(2) if literal else rhs
                statements += 1
        return ExecutionResult(
            ok=True,
            variables=variables,
            feedback=f"Executed {statements} statement(s); bound {len(variables)} variable(s).",
        )


def _stable_digest(*parts: str) -> int:
    joined = "␟".join(parts)
    return int(hashlib.sha256(joined.encode("utf-8")).hexdigest()[:8], 16)


class DemoCodeGenerator:
    """Seed-pure code generator: answers by echoing the query."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def generate(self, prompt: str) -> str:
        match = re.search(r"<Query>(.*?)</Query>", prompt, re.DOTALL)
        query = match.group(1).strip() if match else "unknown"
        salt = _stable_digest(str(self.seed), query) % 100
        return (
            "<PythonCode>\n"
            "image_patch = ImagePatch(image)\n"
            f'final_answer = "demo answer {salt} for: {query}"\n'
            "</PythonCode>"
        )


class DemoInstructionGenerator:
    """Seed-pure instruction generator proposing one plausible next step."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def generate(self, prompt: str) -> str:
        match = re.search(r"<Step>(\d+)</Step>", prompt)
        step = match.group(1) if match else "1"
        return (
            '{"instructions": ['
            f'{{"instruction": "inspect the scene (step {step})", "probability": 0.9}}, '
            '{"instruction": "crop the image", "probability": 0.4}]}'
        )


class DemoExpert:
    """Seed-pure expert model: a fixed box for grounding, text for VQA."""

    def __init__(self, metric_kind: MetricKind, seed: int = 0) -> None:
        self.metric_kind = metric_kind
        self.seed = seed

    def predict(self, query: str, image_ref: str, hint: str | None = None) -> str:
        salt = _stable_digest(str(self.seed), query, image_ref) % 200
        if self.metric_kind is MetricKind.GROUNDING_IOU:
            return f"ImagePatch({10 + salt}, {10 + salt}, {60 + salt}, {60 + salt})"
        return f"demo perception {salt} for: {query}"


def build_demo_registry(metric_kind: MetricKind, seed: int = 0) -> AgentRegistry:
    """Registry of all three agents over seed-pure demo backends."""
    interpreter = MiniInterpreter()
    oneshot_ports = BackendPorts(code_generator=DemoCodeGenerator(seed), code_interpreter=interpreter)
    stepwise_ports = BackendPorts(
        instruction_generator=DemoInstructionGenerator(seed),
        code_generator=DemoCodeGenerator(seed + 1),
        code_interpreter=interpreter,
    )
    expert_ports = BackendPorts(expert_model=DemoExpert(metric_kind, seed))
    return AgentRegistry({
        StateId.ONESHOT: OneshotReasoner(oneshot_ports),
        StateId.STEPWISE: StepwiseReasoner(stepwise_ports),
        StateId.SPECIALIZED: SpecializedAgent(expert_ports),
    })

"""Prompt construction for the agent backends.

The code API, skill list, and worked examples are configuration data, not
engine logic: deployments swap in their own library. The desk-scale default
below is just enough for the mock interpreter to act on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..core import EntryKind, Snapshot

_PYTHON_CODE = re.compile(r"<PythonCode>(.*?)</PythonCode>", re.DOTALL)


@dataclass(frozen=True)
class PromptLibrary:
    """Static text slotted into the backend prompts."""

    code_api: str
    skills: str
    instruction_setting: str
    instruction_example: str
    code_example: str
    oneshot_example: str


DESK_LIBRARY = PromptLibrary(
    code_api=(
        "class ImagePatch:\n"
        "    def find(self, names: list[str]) -> dict[str, list[ImagePatch]]: ...\n"
        "    def crop(self, x1: int, y1: int, x2: int, y2: int) -> ImagePatch: ...\n"
        "    def simple_query(self, question: str) -> str: ...\n"
        "    def exists(self, name: str) -> bool: ...\n"
    ),
    skills=(
        "- find objects by name\n"
        "- crop to a region\n"
        "- ask a simple question about a patch\n"
    ),
    instruction_setting="Propose exactly one small next step at a time.",
    instruction_example=(
        '{"instructions": [\n'
        '        {"instruction": "find the clock in the image", "probability": 0.9}\n'
        "]}"
    ),
    code_example=(
        "image_patch = ImagePatch(image)\n"
        'clock_patches = image_patch.find(["clock"])["clock"]\n'
        "final_answer = clock_patches[0].simple_query(\"Is the clock small or large?\")"
    ),
    oneshot_example=(
        "image_patch = ImagePatch(image)\n"
        'final_answer = image_patch.simple_query("What is in the image?")'
    ),
)


def extract_python_code(raw: str) -> str | None:
    """Pull the program out of a <PythonCode> block; None when absent/empty."""
    match = _PYTHON_CODE.search(raw)
    if not match:
        return None
    code = match.group(1).strip("\n")
    return code if code.strip() else None


def _task_description(memory: Snapshot) -> str:
    return memory.last_payload(EntryKind.TASK_DESCRIPTION) or ""


def _query(memory: Snapshot) -> str:
    return memory.last_payload(EntryKind.QUERY) or ""


def _joined(memory: Snapshot, kind: EntryKind) -> str:
    return "\n".join(e.payload for e in memory.by_kind(kind) if isinstance(e.payload, str))


def _variables_info(memory: Snapshot) -> str:
    return "\n".join(f"{name}: {value}" for name, value in memory.latest_variables().items())


def render_instruction_prompt(memory: Snapshot, step_no: int, library: PromptLibrary) -> str:
    """Prompt for the stepwise instruction generator (JSON instruction list)."""
    return (
        "You are an AI assistant designed to assist with compositional visual "
        "reasoning tasks providing valid step by step instruction for answering "
        "questions and understanding visual information.\n"
        "Instruction Settings\n"
        "--------------------\n"
        f"<InstructionSetting>{library.instruction_setting}</InstructionSetting>\n"
        "Skills Overview\n"
        "---------------\n"
        "The following are the skills that you can use to solve the query:\n"
        f"<Skills>{library.skills}</Skills>\n"
        "Task Description\n"
        "----------------\n"
        "Review the task description below to understand the problem context:\n"
        f"<TaskDescription>{_task_description(memory)}</TaskDescription>\n"
        "Example Instructions\n"
        "-------------------\n"
        "How to Use these skills:\n"
        f"<Examples>{library.instruction_example}</Examples>\n"
        "User Query\n"
        "----------\n"
        "This is the query you need to solve:\n"
        f"<Query>{_query(memory)}</Query>\n"
        "Current Step\n"
        "------------\n"
        f"<Step>{step_no}</Step>\n"
        "Previous Instructions\n"
        "---------------------\n"
        f"<PreviousInstructions>{_joined(memory, EntryKind.INSTRUCTION)}</PreviousInstructions>\n"
        "Previously Executed Code\n"
        "-----------------------\n"
        f"<ExecutedCode>{_joined(memory, EntryKind.CODE)}</ExecutedCode>\n"
        "Execution Results\n"
        "----------------\n"
        f"<ExecutionResults>{_joined(memory, EntryKind.FEEDBACK)}</ExecutionResults>\n"
        "Available Variables\n"
        "-------------------\n"
        f"<Variables>{_variables_info(memory)}</Variables>\n"
        "-------------------\n"
        "Based on the current context, generate possible next instructions to help "
        "solve the query. For each instruction, assign a probability score indicating "
        "how promising it will lead to the final answer.\n"
        "Your response must be in this JSON array format:\n"
        '{"instructions": [\n'
        '        {"instruction": "specific instruction", "probability": 0.X},\n'
        '        {"instruction": "another instruction", "probability": 0.Y},\n'
        "        ...\n"
        "]}"
    )


def render_step_code_prompt(
    memory: Snapshot, step_no: int, instruction: str, library: PromptLibrary
) -> str:
    """Prompt for the stepwise per-step code generator."""
    return (
        "You are a helpful assistant specializing in visual reasoning tasks. Your "
        "goal is to generate Python code that solves a visual reasoning query using "
        "the provided code API and examples.\n"
        "API Specification\n"
        "-----------------\n"
        "Use the following code API to guide your solution:\n"
        f"<CodeAPI>{library.code_api}</CodeAPI>\n"
        "Task Description\n"
        "----------------\n"
        "Review the task description below to understand the problem context:\n"
        f"<TaskDescription>{_task_description(memory)}</TaskDescription>\n"
        "Example Code\n"
        "-----------\n"
        "Here is an example that illustrates the expected format and approach:\n"
        f"<Examples>{library.code_example}</Examples>\n"
        "User Query\n"
        "----------\n"
        "This is the query you need to solve:\n"
        f"<Query>{_query(memory)}</Query>\n"
        "Current Step\n"
        "------------\n"
        f"<Step>{step_no}</Step>\n"
        "Previous Instructions\n"
        "---------------------\n"
        f"<PreviousInstructions>{_joined(memory, EntryKind.INSTRUCTION)}</PreviousInstructions>\n"
        "Current Instruction\n"
        "-------------------\n"
        f"<Instruction>{instruction}</Instruction>\n"
        "Previously Executed Code\n"
        "-----------------------\n"
        f"<ExecutedCode>{_joined(memory, EntryKind.CODE)}</ExecutedCode>\n"
        "Execution Results\n"
        "----------------\n"
        f"<ExecutionResults>{_joined(memory, EntryKind.FEEDBACK)}</ExecutionResults>\n"
        "Available Variables\n"
        "-------------------\n"
        f"<Variables>{_variables_info(memory)}</Variables>\n"
        "-------------------\n"
        "Generate Python code that solves the query based on the current instruction. "
        "Your code should build upon previous steps and use the available variables. "
        "Use the code API as shown in the example. Enclose your code in "
        "<PythonCode></PythonCode> tags. If your code provides a final answer, assign "
        'it to a variable named "final_answer".'
    )


def render_oneshot_prompt(memory: Snapshot, extra_context: str, library: PromptLibrary) -> str:
    """Prompt for the single-pass program generator."""
    return (
        "You are a helpful assistant specializing in visual reasoning tasks. Your "
        "goal is to generate Python code that solves a visual reasoning query using "
        "the provided code API and examples.\n"
        "API Specification\n"
        "-----------------\n"
        "Use the following code API to guide your solution:\n"
        f"<CodeAPI>{library.code_api}</CodeAPI>\n"
        "Task Description\n"
        "----------------\n"
        "Review the task description below to understand the problem context:\n"
        f"<TaskDescription>{_task_description(memory)}</TaskDescription>\n"
        "Example for Reference\n"
        "---------------------\n"
        "Here is an example that illustrates the expected format and approach:\n"
        f"<Example>{library.oneshot_example}</Example>\n"
        "User Query\n"
        "----------\n"
        "This is the query you need to solve:\n"
        f"<Query>{_query(memory)}</Query>\n"
        "Extra Context\n"
        "----------------\n"
        f"<ExtraContext>{extra_context}</ExtraContext>\n"
        "Code Initialization\n"
        "-------------------\n"
        'An instance of the "ImagePatch" class is already provided. Use the following '
        "initialization code as the starting point:\n"
        "<ExecutedCode>\n"
        "image_patch = ImagePatch(image)\n"
        "</ExecutedCode>\n"
        "Instruction:\n"
        "------------\n"
        "Generate Python code that utilizes the provided API and initialization to "
        "solve the query enclosed within the <PythonCode></PythonCode> block. Ensure "
        "your solution follows the structure and style of the given example. Ensure "
        'the variable "final_answer" is assigned to the result of the query.'
    )

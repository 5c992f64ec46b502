"""The three agent sub-automata, their contracts, and mock backends."""

from .base import (
    Agent,
    AgentCycleResult,
    AgentRegistry,
    BackendPorts,
    CodeExecutionPort,
    ExecutionResult,
    ExpertModelPort,
    MissingPortError,
    TextGenerationPort,
)
from .oneshot import FINAL_ANSWER_VARIABLE, OneshotReasoner
from .prompts import DESK_LIBRARY, PromptLibrary, extract_python_code
from .specialized import SpecializedAgent, verify_prediction
from .stepwise import StepwiseReasoner, parse_instruction_list, select_instruction
from .subautomaton import SubAutomatonSpec, load_builtin_spec, validate_subautomaton

__all__ = [
    "Agent",
    "AgentCycleResult",
    "AgentRegistry",
    "BackendPorts",
    "CodeExecutionPort",
    "DESK_LIBRARY",
    "ExecutionResult",
    "ExpertModelPort",
    "FINAL_ANSWER_VARIABLE",
    "MissingPortError",
    "OneshotReasoner",
    "PromptLibrary",
    "SpecializedAgent",
    "StepwiseReasoner",
    "SubAutomatonSpec",
    "TextGenerationPort",
    "extract_python_code",
    "load_builtin_spec",
    "parse_instruction_list",
    "select_instruction",
    "validate_subautomaton",
    "verify_prediction",
]

"""Parse, validate, execute and exhaustively explore business process diagrams."""

from __future__ import annotations

from bpdflow.analyzer import SoundnessReport, StateGraph, check_soundness, conformance, explore
from bpdflow.document import parse_definition, serialize_definition
from bpdflow.engine import (
    ProcessInstance,
    StepResult,
    enabled_transitions,
    inject_event,
    instantiate,
    or_join_enabled,
    run,
    step,
)
from bpdflow.expressions import ParseError, parse_expression
from bpdflow.fixtures import load_fixture, load_script
from bpdflow.model import ProcessDefinition, classify_model_type
from bpdflow.trace import Trace
from bpdflow.transitions import Transition
from bpdflow.validation import Diagnostic, validate

__version__ = "0.1.0"

__all__ = [
    "Diagnostic",
    "ParseError",
    "ProcessDefinition",
    "ProcessInstance",
    "SoundnessReport",
    "StateGraph",
    "StepResult",
    "Trace",
    "Transition",
    "check_soundness",
    "classify_model_type",
    "conformance",
    "enabled_transitions",
    "explore",
    "inject_event",
    "instantiate",
    "load_fixture",
    "load_script",
    "or_join_enabled",
    "parse_definition",
    "parse_expression",
    "run",
    "serialize_definition",
    "step",
    "validate",
]

"""Structured-output schemas for backend calls.

Every critic and designer response is validated against one of these schemas
before it enters the pipeline. The JSON-schema documents are also the
published wire contract for external validation.
"""

from __future__ import annotations

from typing import Any

import jsonschema

from .errors import SchemaViolation
from .scoring import RUBRICS, ComponentKind, Critique

_SUBFUNCTION_SPEC = {
    "type": ["object", "null"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
    },
    "required": ["name", "description"],
    "additionalProperties": False,
}

_NEW_VARIABLE = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "value": {"type": "string"},
        "value_type": {"enum": ["int", "float", "bool", "string", "list",
                                "dict"]},
        "description": {"type": "string"},
        "dont_clean": {"type": "boolean"},
    },
    "required": ["name", "value", "value_type"],
    "additionalProperties": False,
}


def _critique_schema(kind: ComponentKind) -> dict[str, Any]:
    categories = RUBRICS[kind]
    props: dict[str, Any] = {
        cat: {"type": "integer", "minimum": 0, "maximum": 10}
        for cat in categories}
    props["feedback"] = {"type": "string"}
    props["suggestions"] = {"type": "array", "items": {"type": "string"}}
    return {
        "type": "object",
        "properties": props,
        "required": list(categories) + ["feedback", "suggestions"],
        "additionalProperties": False,
    }


def _function_artifact_schema(min_relevant: int) -> dict[str, Any]:
    return {
        "type": "object",
        "properties": {
            "function_name": {"type": "string", "minLength": 1},
            "description": {"type": "string"},
            "implementation": {"type": "string", "minLength": 1},
            "relevant_state": {"type": "array",
                               "items": {"type": "string"},
                               "minItems": min_relevant},
        },
        "required": ["function_name", "description", "implementation",
                     "relevant_state"],
        "additionalProperties": False,
    }


SCHEMAS: dict[str, dict[str, Any]] = {
    "artifact:state_change": {
        "type": "object",
        "properties": {
            "relevant_variables": {"type": "array",
                                   "items": {"type": "string"}},
            "new_variables": {"type": "array", "items": _NEW_VARIABLE},
        },
        "required": ["relevant_variables", "new_variables"],
        "additionalProperties": False,
    },
    "artifact:decompose": {
        "type": "object",
        "properties": {
            "input_logic": _SUBFUNCTION_SPEC,
            "state_transition": _SUBFUNCTION_SPEC,
            "ui_rendering": _SUBFUNCTION_SPEC,
        },
        "required": ["input_logic", "state_transition", "ui_rendering"],
        "additionalProperties": False,
    },
    "artifact:input_logic": _function_artifact_schema(0),
    "artifact:state_transition": _function_artifact_schema(1),
    "artifact:ui_rendering": _function_artifact_schema(0),
    "step_plan": {
        "type": "object",
        "properties": {
            "steps": {"type": "array", "items": {"type": "string",
                                                 "minLength": 1},
                      "minItems": 1},
        },
        "required": ["steps"],
        "additionalProperties": False,
    },
}
for _kind in ComponentKind:
    SCHEMAS[f"critique:{_kind.value}"] = _critique_schema(_kind)


def json_schema(schema_id: str) -> dict[str, Any]:
    """The published JSON-schema document for a schema id."""
    if schema_id not in SCHEMAS:
        raise SchemaViolation(f"unknown schema id: {schema_id}")
    return SCHEMAS[schema_id]


def validate_structured(schema_id: str, payload: Any) -> dict[str, Any]:
    """Validate a structured response body. Raises SchemaViolation."""
    schema = json_schema(schema_id)
    if not isinstance(payload, dict):
        raise SchemaViolation(
            f"{schema_id}: expected an object, got {type(payload).__name__}")
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"{schema_id}: {exc.message}") from exc
    if schema_id == "artifact:decompose":
        if all(payload[slot] is None for slot in
               ("input_logic", "state_transition", "ui_rendering")):
            raise SchemaViolation(
                "artifact:decompose: at least one sub-function required")
    return payload


def parse_critique(kind: ComponentKind, payload: dict[str, Any]) -> Critique:
    """Build a Critique from a validated structured response."""
    data = validate_structured(f"critique:{kind.value}", payload)
    return Critique(
        kind=kind,
        scores=tuple(data[cat] for cat in RUBRICS[kind]),
        feedback=data["feedback"],
        suggestions=tuple(data["suggestions"]),
    )

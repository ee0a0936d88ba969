"""Session data model: state variables, generated functions, scoped projection.

The session is the structured representation of the evolving game that every
other module reads and mutates. Values are immutable snapshots; "mutation"
produces a new value.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from .errors import EmptySession, UnknownName

VALUE_TYPES = ("int", "float", "bool", "string", "list", "dict")

FUNCTION_KINDS = ("input_logic", "logic", "render")

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

#: Counts tokens in a serialized context. Default is whitespace-delimited.
TokenCounter = Callable[[str], int]


def whitespace_token_count(text: str) -> int:
    return len(text.split())


def parse_value(value: str, value_type: str):
    """Parse a serialized initial value according to its declared type.

    Raises ValueError when the text does not parse as the type.
    """
    if value_type == "int":
        return int(value)
    if value_type == "float":
        return float(value)
    if value_type == "bool":
        lowered = value.strip().lower()
        if lowered in ("true", "1"):
            return True
        if lowered in ("false", "0"):
            return False
        raise ValueError(f"not a bool literal: {value!r}")
    if value_type == "string":
        return value
    if value_type in ("list", "dict"):
        parsed = json.loads(value)
        expected = list if value_type == "list" else dict
        if not isinstance(parsed, expected):
            raise ValueError(f"JSON value is not a {value_type}: {value!r}")
        return parsed
    raise ValueError(f"unknown value_type: {value_type!r}")


@dataclass(frozen=True)
class StateVariable:
    """One state dimension: name, serialized initial value, type, description.

    Variables with dont_clean=True survive every clean_states pass.
    """

    name: str
    value: str
    value_type: str
    description: str = ""
    dont_clean: bool = False

    def __post_init__(self):
        if not _IDENT_RE.match(self.name):
            raise ValueError(f"invalid state variable name: {self.name!r}")
        if self.value_type not in VALUE_TYPES:
            raise ValueError(f"invalid value_type: {self.value_type!r}")
        parse_value(self.value, self.value_type)  # raises ValueError if bad

    def python_literal(self) -> str:
        """Render the initial value as a Python literal."""
        return repr(parse_value(self.value, self.value_type))


@dataclass(frozen=True)
class FunctionArtifact:
    """A generated function: controller, model, or view code."""

    name: str
    kind: str
    code: str
    relevant_state: tuple[str, ...] = ()
    description: str = ""

    def __post_init__(self):
        if not _IDENT_RE.match(self.name):
            raise ValueError(f"invalid function name: {self.name!r}")
        if self.kind not in FUNCTION_KINDS:
            raise ValueError(f"invalid function kind: {self.kind!r}")
        object.__setattr__(self, "relevant_state", tuple(self.relevant_state))


@dataclass(frozen=True)
class ScopeSet:
    """The variables relevant to a step plus functions with overlapping scope."""

    variable_names: frozenset[str] = frozenset()
    function_names: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "variable_names", frozenset(self.variable_names))
        object.__setattr__(self, "function_names", frozenset(self.function_names))


@dataclass(frozen=True)
class SessionModel:
    """The whole evolving session: variables, functions, processed queries."""

    state_variables: tuple[StateVariable, ...] = ()
    functions: tuple[FunctionArtifact, ...] = ()
    queries: tuple[str, ...] = ()
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "state_variables", tuple(self.state_variables))
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "queries", tuple(self.queries))
        names = [v.name for v in self.state_variables]
        if len(names) != len(set(names)):
            raise ValueError("duplicate state variable names")
        fnames = [f.name for f in self.functions]
        if len(fnames) != len(set(fnames)):
            raise ValueError("duplicate function names")

    # -- lookups ------------------------------------------------------------

    def variable_names(self) -> list[str]:
        return [v.name for v in self.state_variables]

    def function_names(self) -> list[str]:
        return [f.name for f in self.functions]

    def get_variable(self, name: str) -> StateVariable:
        for v in self.state_variables:
            if v.name == name:
                return v
        raise UnknownName(f"unknown state variable: {name!r}")

    def get_function(self, name: str) -> FunctionArtifact:
        for f in self.functions:
            if f.name == name:
                return f
        raise UnknownName(f"unknown function: {name!r}")

    # -- derived updates ----------------------------------------------------

    def with_variables(self, new_vars: Iterable[StateVariable]) -> "SessionModel":
        """Append new state variables. Names must not collide."""
        merged = self.state_variables + tuple(new_vars)
        return replace(self, state_variables=merged)

    def with_function(self, fn: FunctionArtifact) -> "SessionModel":
        """Integrate a function, replacing any existing one of the same name."""
        kept = tuple(f for f in self.functions if f.name != fn.name)
        return replace(self, functions=kept + (fn,))

    def with_query(self, query: str) -> "SessionModel":
        return replace(self, queries=self.queries + (query,))

    def with_metadata(self, **updates: str) -> "SessionModel":
        merged = dict(self.metadata)
        merged.update(updates)
        return replace(self, metadata=merged)


def new_initial_session(screen_width: int = 800, screen_height: int = 600,
                        fps: int = 60) -> SessionModel:
    """The starting session: four protected variables, nothing generated yet."""
    return SessionModel(state_variables=(
        StateVariable("score", "0", "int", "current player score",
                      dont_clean=True),
        StateVariable("screen_width", str(screen_width), "int",
                      "window width in pixels", dont_clean=True),
        StateVariable("screen_height", str(screen_height), "int",
                      "window height in pixels", dont_clean=True),
        StateVariable("fps", str(fps), "int", "target frames per second",
                      dont_clean=True),
    ))


def full_scope(session: SessionModel) -> ScopeSet:
    """A scope covering every live variable and function."""
    return ScopeSet(frozenset(session.variable_names()),
                    frozenset(session.function_names()))


_CONTEXT_HEADER = "# --- scoped game state ---"
_FUNCTIONS_HEADER = "# --- functions in scope ---"


def project_context(session: SessionModel, scope: ScopeSet) -> str:
    """Serialize the scoped slice of the session as a state-manager fragment.

    Variables render one per line in declaration order, then function sources
    in declaration order. Output is deterministic.
    """
    live_vars = set(session.variable_names())
    live_fns = set(session.function_names())
    for name in scope.variable_names - live_vars:
        raise UnknownName(f"scope names unknown variable: {name!r}")
    for name in scope.function_names - live_fns:
        raise UnknownName(f"scope names unknown function: {name!r}")

    lines = [_CONTEXT_HEADER]
    for var in session.state_variables:
        if var.name in scope.variable_names:
            comment = f"  # {var.description}" if var.description else ""
            lines.append(f"state.{var.name} = {var.python_literal()}{comment}")
    if scope.function_names:
        lines.append(_FUNCTIONS_HEADER)
        for fn in session.functions:
            if fn.name in scope.function_names:
                lines.append(fn.code.rstrip("\n"))
    return "\n".join(lines) + "\n"


def context_reduction_ratio(session: SessionModel, scope: ScopeSet,
                            token_counter: TokenCounter = whitespace_token_count,
                            ) -> float:
    """Scoped-context token count over full-context token count, in (0, 1]."""
    full_text = project_context(session, full_scope(session))
    full_tokens = token_counter(full_text)
    if full_tokens == 0:
        raise EmptySession("full-context token count is zero")
    scoped_tokens = token_counter(project_context(session, scope))
    return scoped_tokens / full_tokens


def _referenced_names(session: SessionModel) -> set[str]:
    """Variable names referenced by any function, by list or by whole word."""
    referenced: set[str] = set()
    for fn in session.functions:
        referenced.update(fn.relevant_state)
    if session.functions:
        all_code = "\n".join(fn.code for fn in session.functions)
        for var in session.state_variables:
            if var.name in referenced:
                continue
            if re.search(rf"\b{re.escape(var.name)}\b", all_code):
                referenced.add(var.name)
    return referenced


def clean_states(session: SessionModel) -> SessionModel:
    """Drop unprotected variables no function references. Functions are kept.

    A variable counts as referenced if any function lists it in relevant_state
    or mentions it as a whole word in its body; the textual check is a safety
    net against relevant_state lists that omit real uses.
    """
    referenced = _referenced_names(session)
    kept = tuple(v for v in session.state_variables
                 if v.dont_clean or v.name in referenced)
    return replace(session, state_variables=kept)

"""Prompt template registry with strict variable validation.

Templates live one per YAML file (keys: kind, role, variables, body) and use
``{name}`` placeholders. A body's placeholders must match its declared
variables exactly; ``{{`` and ``}}`` render literal braces.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import (DuplicateTemplate, IncompleteRegistry, MissingBinding,
                     TemplateParseError, UndeclaredPlaceholder,
                     UnknownTemplate, UnusedDeclaration)
from .scoring import ComponentKind

ROLES = ("planner", "designer", "critic")

#: Every component kind needs all three roles; extra ids are allowed.
REQUIRED_IDS = tuple(f"{kind.value}/{role}"
                     for kind in ComponentKind for role in ROLES)


def default_template_dir() -> Path:
    return Path(str(importlib.resources.files("simgen") / "templates"))


def _tokenize(body: str, source: str) -> list[tuple[str, str]]:
    """Split a body into ('text', s) and ('var', name) tokens."""
    tokens: list[tuple[str, str]] = []
    buf: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "{":
            if body.startswith("{{", i):
                buf.append("{")
                i += 2
                continue
            end = body.find("}", i)
            if end == -1:
                raise TemplateParseError(f"{source}: unclosed placeholder")
            name = body[i + 1:end]
            if not name.isidentifier():
                raise TemplateParseError(
                    f"{source}: invalid placeholder name {name!r}")
            if buf:
                tokens.append(("text", "".join(buf)))
                buf = []
            tokens.append(("var", name))
            i = end + 1
        elif ch == "}":
            if body.startswith("}}", i):
                buf.append("}")
                i += 2
                continue
            raise TemplateParseError(f"{source}: stray '}}' at offset {i}")
        else:
            buf.append(ch)
            i += 1
    if buf:
        tokens.append(("text", "".join(buf)))
    return tokens


@dataclass(frozen=True)
class PromptTemplate:
    kind: str
    role: str
    body: str
    variables: frozenset[str]

    @property
    def id(self) -> str:
        return f"{self.kind}/{self.role}"

    def placeholders(self) -> set[str]:
        return {name for tok, name in _tokenize(self.body, self.id)
                if tok == "var"}


class PromptRegistry:
    """Immutable-after-load mapping of template id to template."""

    def __init__(self, templates: dict[str, PromptTemplate]):
        self._templates = dict(templates)

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplate(template_id) from None

    def ids(self) -> list[str]:
        return sorted(self._templates)

    def __contains__(self, template_id: str) -> bool:
        return template_id in self._templates


def _parse_file(path: Path) -> PromptTemplate:
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise TemplateParseError(f"{path.name}: {exc}") from exc
    if not isinstance(doc, dict):
        raise TemplateParseError(f"{path.name}: not a mapping")
    for key in ("kind", "role", "body"):
        if key not in doc:
            raise TemplateParseError(f"{path.name}: missing key {key!r}")
    declared = frozenset(doc.get("variables") or [])
    template = PromptTemplate(kind=str(doc["kind"]), role=str(doc["role"]),
                              body=str(doc["body"]), variables=declared)
    used = template.placeholders()
    undeclared = used - declared
    if undeclared:
        raise UndeclaredPlaceholder(
            f"{path.name}: uses undeclared {sorted(undeclared)}")
    unused = declared - used
    if unused:
        raise UnusedDeclaration(
            f"{path.name}: declares unused {sorted(unused)}")
    return template


def load_registry(directory: str | Path | None = None,
                  require_complete: bool = True) -> PromptRegistry:
    """Load and validate every template file in a directory."""
    directory = Path(directory) if directory else default_template_dir()
    if not directory.is_dir():
        raise TemplateParseError(f"not a template directory: {directory}")
    templates: dict[str, PromptTemplate] = {}
    for path in sorted(directory.glob("*.yaml")):
        template = _parse_file(path)
        if template.id in templates:
            raise DuplicateTemplate(template.id)
        templates[template.id] = template
    if require_complete:
        missing = [tid for tid in REQUIRED_IDS if tid not in templates]
        if missing:
            raise IncompleteRegistry(f"missing templates: {missing}")
    return PromptRegistry(templates)


def render(registry: PromptRegistry, template_id: str,
           bindings: dict[str, str] | None = None) -> str:
    """Fill a template; every declared variable must be bound."""
    template = registry.get(template_id)
    bindings = bindings or {}
    missing = sorted(template.variables - set(bindings))
    if missing:
        raise MissingBinding(f"{template_id}: missing bindings {missing}")
    parts = []
    for tok, value in _tokenize(template.body, template_id):
        parts.append(value if tok == "text" else str(bindings[value]))
    return "".join(parts)

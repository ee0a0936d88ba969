"""Exception hierarchy shared across the package."""


class SimgenError(Exception):
    """Base class for all package errors."""


# -- session model ----------------------------------------------------------

class UnknownName(SimgenError):
    """A scope names a variable or function that is not in the session."""


class EmptySession(SimgenError):
    """Full-context token count is zero; no ratio can be computed."""


# -- scoring ----------------------------------------------------------------

class KindMismatch(SimgenError):
    """Two critiques of different component kinds were compared."""


class EmptyHistory(SimgenError):
    """The planner policy was asked to decide on an empty score history."""


# -- session store ----------------------------------------------------------

class StorageFailure(SimgenError):
    """An I/O or integrity error while reading or writing the store."""


class UnknownSession(SimgenError):
    """No session with the given id exists in the store."""


class UnknownSnapshot(SimgenError):
    """No snapshot with the given id exists in the store."""


class MigrationRequired(SimgenError):
    """The store file carries a schema version this code cannot read."""


# -- llm backend ------------------------------------------------------------

class BackendError(SimgenError):
    """Base class for backend call failures."""


class TransportError(BackendError):
    """Network-level or server-side (5xx) failure. Retryable."""


class RateLimited(BackendError):
    """HTTP 429 from the endpoint. Retryable with backoff."""


class SchemaViolation(BackendError):
    """Structured output failed validation after the allowed re-ask."""


class ScenarioExhausted(BackendError):
    """Strict scripted backend received a request with no canned response."""


# -- prompt registry --------------------------------------------------------

class PromptError(SimgenError):
    """Base class for template registry errors."""


class TemplateParseError(PromptError):
    """A template file could not be parsed."""


class UndeclaredPlaceholder(PromptError):
    """A template body uses a placeholder it does not declare."""


class UnusedDeclaration(PromptError):
    """A template declares a variable its body never uses."""


class DuplicateTemplate(PromptError):
    """Two template files share the same id."""


class IncompleteRegistry(PromptError):
    """Required template ids are missing from the registry directory."""


class UnknownTemplate(PromptError):
    """render() was called with an id the registry does not hold."""


class MissingBinding(PromptError):
    """render() was called without bindings for declared variables."""


# -- agents -----------------------------------------------------------------

class DesignFailure(SimgenError):
    """The designer could not produce a schema-valid artifact."""


class CritiqueFailure(SimgenError):
    """The critic could not produce a schema-valid critique."""


class ToolOrderViolation(SimgenError):
    """A planner tool was invoked out of its legal order."""


class InvalidArtifact(SimgenError):
    """A schema-valid artifact failed referential or value checks."""


# -- pipeline ---------------------------------------------------------------

class DecompositionFailure(SimgenError):
    """The spec could not be decomposed into a valid step plan."""


class StepFailure(SimgenError):
    """A pipeline step exhausted its retries.

    Carries one diagnostic string per failed attempt.
    """

    def __init__(self, message: str, attempts: list[str] | None = None):
        super().__init__(message)
        self.attempts = attempts or []


# -- assembler --------------------------------------------------------------

class AssemblyError(SimgenError):
    """A function artifact is inconsistent with its own source."""


# -- validator --------------------------------------------------------------

class HarnessUnavailable(SimgenError):
    """The harness executable or its runtime is missing."""


class HarnessProtocolError(SimgenError):
    """The harness exited without emitting a parseable result document."""

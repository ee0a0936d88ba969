"""simgen: natural-language specs to executable 2D game code.

Generation runs a scoped-context, critic-scored refinement loop at every
step, persists the evolving session in SQLite with snapshot/restore, and
assembles the result into one runnable Pygame file.
"""

from .model import (FunctionArtifact, ScopeSet, SessionModel, StateVariable,
                    clean_states, context_reduction_ratio, full_scope,
                    new_initial_session, project_context)
from .scoring import (Critique, ComponentKind, PlannerDecision, deltas,
                      format_deltas, planner_policy, total)

__all__ = [
    "FunctionArtifact", "ScopeSet", "SessionModel", "StateVariable",
    "clean_states", "context_reduction_ratio", "full_scope",
    "new_initial_session", "project_context",
    "Critique", "ComponentKind", "PlannerDecision", "deltas",
    "format_deltas", "planner_policy", "total",
]

__version__ = "0.1.0"

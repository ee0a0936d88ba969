"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import random
import string
from pathlib import Path

import pytest

from simgen.backend import Scenario, ScenarioEntry, ScriptedBackend, Usage
from simgen.model import (FunctionArtifact, SessionModel, StateVariable,
                          new_initial_session)
from simgen.scoring import RUBRICS, ComponentKind

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    print(f"[{status}] {name}", flush=True)


@pytest.fixture
def initial_session() -> SessionModel:
    return new_initial_session()


def make_variable(name: str, value: str = "0", value_type: str = "int",
                  description: str = "", dont_clean: bool = False,
                  ) -> StateVariable:
    return StateVariable(name=name, value=value, value_type=value_type,
                         description=description, dont_clean=dont_clean)


def make_function(name: str, kind: str = "logic", code: str | None = None,
                  relevant_state: tuple[str, ...] = (),
                  description: str = "") -> FunctionArtifact:
    if code is None:
        body = "\n".join(f"    state.{v} = state.{v}" for v in relevant_state)
        code = f"def {name}(state):\n{body or '    pass'}"
    return FunctionArtifact(name=name, kind=kind, code=code,
                            relevant_state=relevant_state,
                            description=description)


_TYPE_VALUES = {
    "int": lambda rng: str(rng.randint(-100, 100)),
    "float": lambda rng: str(round(rng.uniform(-10, 10), 3)),
    "bool": lambda rng: rng.choice(["true", "false"]),
    "string": lambda rng: "".join(rng.choices(string.ascii_lowercase, k=6)),
    "list": lambda rng: "[1, 2, 3]",
    "dict": lambda rng: '{"a": 1}',
}


def random_session(rng: random.Random, max_vars: int = 8,
                   max_fns: int = 4) -> SessionModel:
    """A structurally valid randomized session."""
    n_vars = rng.randint(0, max_vars)
    names = rng.sample([f"var_{c}" for c in string.ascii_lowercase], n_vars)
    variables = []
    for name in names:
        value_type = rng.choice(list(_TYPE_VALUES))
        variables.append(StateVariable(
            name=name, value=_TYPE_VALUES[value_type](rng),
            value_type=value_type,
            description=f"random {name}",
            dont_clean=rng.random() < 0.3))
    functions = []
    for i in range(rng.randint(0, max_fns)):
        listed = tuple(rng.sample(names, rng.randint(0, len(names))))
        # Sometimes reference a variable textually without listing it.
        textual = rng.choice(names) if names and rng.random() < 0.5 else None
        body_refs = set(listed) | ({textual} if textual else set())
        body = "\n".join(f"    state.{v} += 1" for v in sorted(body_refs))
        functions.append(FunctionArtifact(
            name=f"fn_{i}", kind=rng.choice(["input_logic", "logic", "render"]),
            code=f"def fn_{i}(state):\n{body or '    pass'}",
            relevant_state=listed))
    queries = tuple(f"step {i}" for i in range(rng.randint(0, 3)))
    metadata = {f"key_{i}": str(rng.randint(0, 999))
                for i in range(rng.randint(0, 3))}
    return SessionModel(state_variables=tuple(variables),
                        functions=tuple(functions), queries=queries,
                        metadata=metadata)


# -- scenario builders ------------------------------------------------------

def critique_content(kind: ComponentKind, scores: tuple[int, ...],
                     feedback: str = "needs work",
                     suggestions: tuple[str, ...] = ("tighten it up",),
                     ) -> dict:
    content = dict(zip(RUBRICS[kind], scores))
    content["feedback"] = feedback
    content["suggestions"] = list(suggestions)
    return content


def designer_content(kind: ComponentKind, round_index: int = 0) -> dict:
    """A generic schema-valid designer response for any kind."""
    if kind is ComponentKind.STATE_CHANGE:
        return {"relevant_variables": ["score"],
                "new_variables": [
                    {"name": f"gen_var_{round_index}", "value": "0",
                     "value_type": "int", "description": "generated"}]}
    if kind is ComponentKind.DECOMPOSE:
        return {"input_logic": None,
                "state_transition": {"name": f"update_{round_index}",
                                     "description": "advance things"},
                "ui_rendering": None}
    name = f"fn_r{round_index}"
    return {"function_name": name, "description": "generated",
            "implementation": f"def {name}(state):\n    pass",
            "relevant_state": ["score"]}


def trio_scenario(kind: ComponentKind, score_vectors: list[tuple[int, ...]],
                  step: int = 0, usage_in: int = 10, usage_out: int = 5,
                  ) -> ScriptedBackend:
    """A scripted backend serving one trio run with the given critic scores.

    Designer responses are generic; entry r serves designer round r and
    critic round r.
    """
    entries = []
    for r, scores in enumerate(score_vectors):
        entries.append(ScenarioEntry(
            role=f"{kind.value}.designer", step=step, round=r,
            content=designer_content(kind, r),
            usage=Usage(usage_in, usage_out)))
        entries.append(ScenarioEntry(
            role=f"{kind.value}.critic", step=step, round=r,
            content=critique_content(kind, scores),
            usage=Usage(usage_in, usage_out)))
    return ScriptedBackend(Scenario(entries=entries, strict=True))

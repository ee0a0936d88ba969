"""SQLite-backed session persistence with snapshot and restore.

One database file per workspace. Four logical tables mirror the session model
(state_variables, functions, queries, metadata); a snapshots table backs the
retry loop and a transcripts table records agent round summaries so a run is
replayable. Writes are transactional: a failed save leaves the previous
committed state readable.
"""

from __future__ import annotations

import json
import sqlite3
import time
from dataclasses import dataclass
from typing import Any, Callable

from .errors import (MigrationRequired, StorageFailure, UnknownSession,
                     UnknownSnapshot)
from .model import FunctionArtifact, SessionModel, StateVariable

SCHEMA_VERSION = 1

#: Metadata keys carried forward (at their maximum) across restores, so token
#: accounting stays monotone even when a failed attempt is rolled back.
MONOTONE_KEYS = ("tokens_input", "tokens_output")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS state_variables (
    session_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    name TEXT NOT NULL,
    value TEXT NOT NULL,
    value_type TEXT NOT NULL,
    description TEXT NOT NULL,
    dont_clean INTEGER NOT NULL,
    PRIMARY KEY (session_id, position)
);
CREATE TABLE IF NOT EXISTS functions (
    session_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    name TEXT NOT NULL,
    kind TEXT NOT NULL,
    code TEXT NOT NULL,
    relevant_state TEXT NOT NULL,
    description TEXT NOT NULL,
    PRIMARY KEY (session_id, position)
);
CREATE TABLE IF NOT EXISTS queries (
    session_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    text TEXT NOT NULL,
    PRIMARY KEY (session_id, position)
);
CREATE TABLE IF NOT EXISTS metadata (
    session_id TEXT NOT NULL,
    key TEXT NOT NULL,
    value TEXT NOT NULL,
    PRIMARY KEY (session_id, key)
);
CREATE TABLE IF NOT EXISTS snapshots (
    snapshot_id TEXT PRIMARY KEY,
    session_id TEXT NOT NULL,
    created_at REAL NOT NULL,
    payload TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS transcripts (
    session_id TEXT NOT NULL,
    agent_role TEXT NOT NULL,
    step_index INTEGER NOT NULL,
    position INTEGER NOT NULL,
    payload TEXT NOT NULL,
    PRIMARY KEY (session_id, agent_role, step_index, position)
);
"""

_META_SESSION = "__store__"


@dataclass(frozen=True)
class SnapshotHandle:
    snapshot_id: str
    created_at: float
    session_id: str


def model_to_dict(model: SessionModel) -> dict[str, Any]:
    return {
        "state_variables": [
            {"name": v.name, "value": v.value, "value_type": v.value_type,
             "description": v.description, "dont_clean": v.dont_clean}
            for v in model.state_variables],
        "functions": [
            {"name": f.name, "kind": f.kind, "code": f.code,
             "relevant_state": list(f.relevant_state),
             "description": f.description}
            for f in model.functions],
        "queries": list(model.queries),
        "metadata": dict(model.metadata),
    }


def model_from_dict(data: dict[str, Any]) -> SessionModel:
    return SessionModel(
        state_variables=tuple(StateVariable(**v) for v in data["state_variables"]),
        functions=tuple(
            FunctionArtifact(name=f["name"], kind=f["kind"], code=f["code"],
                             relevant_state=tuple(f["relevant_state"]),
                             description=f["description"])
            for f in data["functions"]),
        queries=tuple(data["queries"]),
        metadata=dict(data["metadata"]),
    )


class SessionStore:
    """Single-file transactional store. Single writer per session id."""

    def __init__(self, path: str, read_only: bool = False):
        self.path = path
        self._read_only = read_only
        try:
            if read_only:
                self._conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
            else:
                self._conn = sqlite3.connect(path)
                self._conn.executescript(_SCHEMA)
                self._conn.execute(
                    "INSERT OR IGNORE INTO metadata (session_id, key, value) "
                    "VALUES (?, 'schema_version', ?)",
                    (_META_SESSION, str(SCHEMA_VERSION)))
                self._conn.commit()
        except sqlite3.Error as exc:
            raise StorageFailure(f"cannot open store at {path}: {exc}") from exc
        self._check_schema_version()
        # Test hook: called inside the save transaction, before commit.
        self._fault_hook: Callable[[], None] | None = None

    def close(self) -> None:
        self._conn.close()

    def _check_schema_version(self) -> None:
        try:
            row = self._conn.execute(
                "SELECT value FROM metadata WHERE session_id = ? AND key = "
                "'schema_version'", (_META_SESSION,)).fetchone()
        except sqlite3.Error as exc:
            raise StorageFailure(f"unreadable store: {exc}") from exc
        if row is None:
            raise StorageFailure("store has no schema_version row")
        if int(row[0]) != SCHEMA_VERSION:
            raise MigrationRequired(
                f"store schema version {row[0]}, this build reads "
                f"{SCHEMA_VERSION}")

    # -- save / load --------------------------------------------------------

    def save(self, session_id: str, model: SessionModel) -> None:
        """Replace the session's four tables atomically."""
        try:
            with self._conn:
                self._conn.execute(
                    "INSERT OR IGNORE INTO sessions (session_id, created_at) "
                    "VALUES (?, ?)", (session_id, time.time()))
                for table in ("state_variables", "functions", "queries",
                              "metadata"):
                    self._conn.execute(
                        f"DELETE FROM {table} WHERE session_id = ?",
                        (session_id,))
                self._conn.executemany(
                    "INSERT INTO state_variables VALUES (?, ?, ?, ?, ?, ?, ?)",
                    [(session_id, i, v.name, v.value, v.value_type,
                      v.description, int(v.dont_clean))
                     for i, v in enumerate(model.state_variables)])
                if self._fault_hook is not None:
                    self._fault_hook()
                self._conn.executemany(
                    "INSERT INTO functions VALUES (?, ?, ?, ?, ?, ?, ?)",
                    [(session_id, i, f.name, f.kind, f.code,
                      json.dumps(list(f.relevant_state)), f.description)
                     for i, f in enumerate(model.functions)])
                self._conn.executemany(
                    "INSERT INTO queries VALUES (?, ?, ?)",
                    [(session_id, i, q) for i, q in enumerate(model.queries)])
                self._conn.executemany(
                    "INSERT INTO metadata VALUES (?, ?, ?)",
                    [(session_id, k, v) for k, v in model.metadata.items()])
        except sqlite3.Error as exc:
            raise StorageFailure(f"save failed: {exc}") from exc

    def exists(self, session_id: str) -> bool:
        row = self._conn.execute(
            "SELECT 1 FROM sessions WHERE session_id = ?",
            (session_id,)).fetchone()
        return row is not None

    def list_sessions(self) -> list[str]:
        rows = self._conn.execute(
            "SELECT session_id FROM sessions ORDER BY session_id").fetchall()
        return [r[0] for r in rows]

    def load(self, session_id: str) -> SessionModel:
        if not self.exists(session_id):
            raise UnknownSession(session_id)
        try:
            var_rows = self._conn.execute(
                "SELECT name, value, value_type, description, dont_clean "
                "FROM state_variables WHERE session_id = ? ORDER BY position",
                (session_id,)).fetchall()
            fn_rows = self._conn.execute(
                "SELECT name, kind, code, relevant_state, description "
                "FROM functions WHERE session_id = ? ORDER BY position",
                (session_id,)).fetchall()
            q_rows = self._conn.execute(
                "SELECT text FROM queries WHERE session_id = ? "
                "ORDER BY position", (session_id,)).fetchall()
            meta_rows = self._conn.execute(
                "SELECT key, value FROM metadata WHERE session_id = ?",
                (session_id,)).fetchall()
        except sqlite3.Error as exc:
            raise StorageFailure(f"load failed: {exc}") from exc
        return SessionModel(
            state_variables=tuple(
                StateVariable(name=n, value=v, value_type=t, description=d,
                              dont_clean=bool(dc))
                for n, v, t, d, dc in var_rows),
            functions=tuple(
                FunctionArtifact(name=n, kind=k, code=c,
                                 relevant_state=tuple(json.loads(rs)),
                                 description=d)
                for n, k, c, rs, d in fn_rows),
            queries=tuple(r[0] for r in q_rows),
            metadata=dict(meta_rows),
        )

    # -- snapshot / restore -------------------------------------------------

    def snapshot(self, session_id: str) -> SnapshotHandle:
        """Freeze the session's full state. Snapshots persist until deleted."""
        model = self.load(session_id)  # raises UnknownSession
        seq = self._conn.execute(
            "SELECT COUNT(*) FROM snapshots WHERE session_id = ?",
            (session_id,)).fetchone()[0]
        snapshot_id = f"{session_id}:{seq + 1}"
        created_at = time.time()
        try:
            with self._conn:
                self._conn.execute(
                    "INSERT INTO snapshots VALUES (?, ?, ?, ?)",
                    (snapshot_id, session_id, created_at,
                     json.dumps(model_to_dict(model))))
        except sqlite3.Error as exc:
            raise StorageFailure(f"snapshot failed: {exc}") from exc
        return SnapshotHandle(snapshot_id, created_at, session_id)

    def restore(self, handle: SnapshotHandle | str) -> SessionModel:
        """Replace the live session with a snapshot's contents.

        Monotone metadata counters (token totals) keep their current value
        when it exceeds the snapshot's, so accounting survives rollbacks.
        """
        snapshot_id = handle.snapshot_id if isinstance(handle, SnapshotHandle) \
            else handle
        row = self._conn.execute(
            "SELECT session_id, payload FROM snapshots WHERE snapshot_id = ?",
            (snapshot_id,)).fetchone()
        if row is None:
            raise UnknownSnapshot(snapshot_id)
        session_id, payload = row
        model = model_from_dict(json.loads(payload))
        current = self.load(session_id)
        merged_meta = dict(model.metadata)
        for key in MONOTONE_KEYS:
            if key in current.metadata:
                live = int(current.metadata[key])
                snap = int(merged_meta.get(key, "0"))
                merged_meta[key] = str(max(live, snap))
        model = model.with_metadata(**merged_meta) if merged_meta else model
        self.save(session_id, model)
        return model

    # -- transcripts --------------------------------------------------------

    def append_transcript(self, session_id: str, agent_role: str,
                          step_index: int, payload: dict[str, Any]) -> None:
        seq = self._conn.execute(
            "SELECT COUNT(*) FROM transcripts WHERE session_id = ? AND "
            "agent_role = ? AND step_index = ?",
            (session_id, agent_role, step_index)).fetchone()[0]
        try:
            with self._conn:
                self._conn.execute(
                    "INSERT INTO transcripts VALUES (?, ?, ?, ?, ?)",
                    (session_id, agent_role, step_index, seq,
                     json.dumps(payload, sort_keys=True)))
        except sqlite3.Error as exc:
            raise StorageFailure(f"transcript append failed: {exc}") from exc

    def list_transcripts(self, session_id: str,
                         step_index: int | None = None) -> list[dict[str, Any]]:
        sql = ("SELECT agent_role, step_index, payload FROM transcripts "
               "WHERE session_id = ?")
        args: list[Any] = [session_id]
        if step_index is not None:
            sql += " AND step_index = ?"
            args.append(step_index)
        sql += " ORDER BY step_index, agent_role, position"
        rows = self._conn.execute(sql, args).fetchall()
        return [{"agent_role": r[0], "step_index": r[1],
                 **json.loads(r[2])} for r in rows]

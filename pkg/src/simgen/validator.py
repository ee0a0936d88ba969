"""Sanity checking of assembled code via the headless harness subprocess.

The harness contract: invoke ``<harness> --file <path> --frames N``; the
harness writes exactly one JSON result document to stdout with keys
compiled, ran_frames, crashed, crash_message. A nonzero exit without that
document is a protocol error. The harness runs in a scratch directory and
is killed on wall-clock timeout.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import HarnessProtocolError, HarnessUnavailable


@dataclass(frozen=True)
class SanityReport:
    compiled: bool
    ran_frames: int
    crashed: bool
    crash_message: str | None = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.compiled and not self.crashed

    def __post_init__(self):
        if not self.compiled and self.ran_frames != 0:
            raise ValueError("uncompiled code cannot have run frames")


def sanity_check(code: str, frames: int = 300, timeout: float = 30.0,
                 harness_cmd: Sequence[str] = ("game-harness",),
                 ) -> SanityReport:
    """Compile-check and run the code headlessly for a bounded frame count."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    start = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="simgen-sanity-") as scratch:
        game_path = Path(scratch) / "game.py"
        game_path.write_text(code, encoding="utf-8")
        cmd = [*harness_cmd, "--file", str(game_path), "--frames", str(frames)]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True,
                                  timeout=timeout, cwd=scratch)
        except FileNotFoundError as exc:
            raise HarnessUnavailable(f"harness not found: {cmd[0]}") from exc
        except subprocess.TimeoutExpired:
            return SanityReport(compiled=True, ran_frames=0, crashed=True,
                                crash_message="timeout",
                                wall_time=time.monotonic() - start)
    wall = time.monotonic() - start
    doc = _parse_result(proc.stdout, proc.returncode, proc.stderr)
    if doc["crashed"] and doc["ran_frames"] >= frames:
        raise HarnessProtocolError(
            "harness reported a crash at or past the frame budget")
    return SanityReport(compiled=bool(doc["compiled"]),
                        ran_frames=int(doc["ran_frames"]),
                        crashed=bool(doc["crashed"]),
                        crash_message=doc.get("crash_message"),
                        wall_time=wall)


def _parse_result(stdout: str, returncode: int, stderr: str) -> dict:
    for line in stdout.splitlines():
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            continue
        if {"compiled", "ran_frames", "crashed"} <= set(doc):
            return doc
    raise HarnessProtocolError(
        f"no result document on stdout (exit {returncode}); "
        f"stderr: {stderr.strip()[:500]}")


@dataclass(frozen=True)
class Metrics:
    compilation_rate: float
    runtime_success_rate: float
    mean_trio_score: float | None


def metrics_rollup(reports: Sequence[SanityReport],
                   trio_totals: Sequence[int] = (),
                   frames: int = 300) -> Metrics:
    """Per-run-set rates plus the mean checkpoint critique total."""
    if not reports:
        raise ValueError("metrics need at least one report")
    compiled = sum(1 for r in reports if r.compiled)
    survived = sum(1 for r in reports
                   if r.compiled and not r.crashed and r.ran_frames >= frames)
    mean_score = (sum(trio_totals) / len(trio_totals)) if trio_totals else None
    return Metrics(compilation_rate=compiled / len(reports),
                   runtime_success_rate=survived / len(reports),
                   mean_trio_score=mean_score)

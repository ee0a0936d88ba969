"""Headless frame-limited game runner.

Invoked as ``game-harness --file <path> --frames N``. Compiles the file,
executes it with the frame budget enforced through a counting wrapper around
``pygame.time.Clock``, and writes exactly one JSON result document to
standard output::

    {"compiled": ..., "ran_frames": ..., "crashed": ..., "crash_message": ...}

All diagnostics go to standard error; a nonzero exit without a document only
happens for invocation errors (bad flags, unreadable file).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback


class FrameLimitReached(Exception):
    """Raised from the clock hook once the frame budget is spent."""


class FrameCounter:
    def __init__(self, limit: int):
        self.limit = limit
        self.count = 0


def _install_pygame() -> object:
    """Import pygame, falling back to the bundled headless stub."""
    os.environ.setdefault("SDL_VIDEODRIVER", "dummy")
    os.environ.setdefault("SDL_AUDIODRIVER", "dummy")
    try:
        import pygame  # noqa: F401
        return sys.modules["pygame"]
    except ImportError:
        from . import pygame_stub
        sys.modules["pygame"] = pygame_stub
        return pygame_stub


def _hook_clock(pygame_module, counter: FrameCounter) -> None:
    """Replace pygame.time.Clock with a delegating, counting wrapper."""
    real_clock = pygame_module.time.Clock

    class CountingClock:
        def __init__(self, *args, **kwargs):
            self._inner = real_clock(*args, **kwargs)

        def tick(self, *args, **kwargs):
            result = self._inner.tick(*args, **kwargs)
            counter.count += 1
            if counter.count >= counter.limit:
                raise FrameLimitReached
            return result

        def __getattr__(self, name):
            return getattr(self._inner, name)

    pygame_module.time.Clock = CountingClock


def run_headless(path: str, frames: int) -> dict:
    """Compile and execute one game file for at most ``frames`` loop
    iterations; always returns a result document."""
    with open(path, encoding="utf-8") as handle:
        source = handle.read()
    try:
        code = compile(source, path, "exec")
    except SyntaxError as exc:
        return {"compiled": False, "ran_frames": 0, "crashed": False,
                "crash_message": f"SyntaxError: {exc}"}

    pygame_module = _install_pygame()
    counter = FrameCounter(frames)
    _hook_clock(pygame_module, counter)
    namespace = {"__name__": "__main__", "__file__": path}
    try:
        exec(code, namespace)
    except FrameLimitReached:
        return {"compiled": True, "ran_frames": counter.count,
                "crashed": False, "crash_message": None}
    except SystemExit:
        pass
    except BaseException as exc:  # noqa: BLE001 - every crash becomes data
        traceback.print_exc(file=sys.stderr)
        return {"compiled": True, "ran_frames": counter.count, "crashed": True,
                "crash_message": f"{type(exc).__name__}: {exc}"}
    # The game ended on its own before the budget ran out.
    return {"compiled": True, "ran_frames": counter.count, "crashed": False,
            "crash_message": None}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="game-harness")
    parser.add_argument("--file", required=True)
    parser.add_argument("--frames", type=int, required=True)
    args = parser.parse_args(argv)
    if args.frames < 1:
        parser.error("--frames must be >= 1")
    if not os.path.isfile(args.file):
        parser.error(f"no such file: {args.file}")
    result = run_headless(args.file, args.frames)
    json.dump(result, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

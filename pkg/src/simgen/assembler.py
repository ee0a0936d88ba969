"""Renders a session into one executable Pygame source file.

The output is a pure function of the session: state variables become a
state-manager container in declaration order, generated functions follow in
declaration order, and a fixed main loop wires input -> logic -> render per
frame at the session's fps.
"""

from __future__ import annotations

import re

from .errors import AssemblyError
from .model import SessionModel

_PREAMBLE = '''\
"""Assembled 2D game. Run directly; pass --max-frames to bound the loop."""

import sys

import pygame


class GameState:
    """Mutable container for all game state variables."""


state = GameState()
'''

_MAIN_LOOP_TOP = '''\

def main(max_frames=None):
    pygame.init()
    screen = pygame.display.set_mode(
        (int(state.screen_width), int(state.screen_height)))
    clock = pygame.time.Clock()
    frame_count = 0
    running = True
    while running:
        events = pygame.event.get()
        for event in events:
            if event.type == pygame.QUIT:
                running = False
'''

_MAIN_LOOP_BOTTOM = '''\
        pygame.display.flip()
        clock.tick(int(state.fps))
        frame_count += 1
        if max_frames is not None and frame_count >= max_frames:
            running = False
    pygame.quit()


if __name__ == "__main__":
    frames = None
    if "--max-frames" in sys.argv:
        frames = int(sys.argv[sys.argv.index("--max-frames") + 1])
    main(frames)
'''


def export_code(session: SessionModel) -> str:
    """Assemble the full game source. Byte-deterministic for equal sessions."""
    parts = [_PREAMBLE]
    for var in session.state_variables:
        comment = f"  # {var.description}" if var.description else ""
        parts.append(f"state.{var.name} = {var.python_literal()}{comment}\n")

    for fn in session.functions:
        if not re.search(rf"\b{re.escape(fn.name)}\b", fn.code):
            raise AssemblyError(
                f"function {fn.name!r} does not appear in its own source")
        parts.append("\n\n" + fn.code.rstrip("\n") + "\n")

    parts.append("\n" + _MAIN_LOOP_TOP)
    for fn in session.functions:
        if fn.kind == "input_logic":
            parts.append(f"        {fn.name}(state, events)\n")
    for fn in session.functions:
        if fn.kind == "logic":
            parts.append(f"        {fn.name}(state)\n")
    parts.append("        screen.fill((0, 0, 0))\n")
    for fn in session.functions:
        if fn.kind == "render":
            parts.append(f"        {fn.name}(state, screen)\n")
    parts.append(_MAIN_LOOP_BOTTOM)
    return "".join(parts)

"""A tiny pygame-compatible surface for headless execution.

Registered as the ``pygame`` module when the real library is unavailable.
Only the slice of the API that assembled games touch is implemented; event
constants resolve through module ``__getattr__`` so comparisons against any
``pygame.K_*``-style name work without enumerating them all.
"""

from __future__ import annotations

import itertools

QUIT = 256
KEYDOWN = 768
KEYUP = 769

_next_constant = itertools.count(1000)
_constants: dict[str, int] = {}


def __getattr__(name: str) -> int:
    if name.startswith("_"):
        raise AttributeError(name)
    if name not in _constants:
        _constants[name] = next(_next_constant)
    return _constants[name]


def init() -> tuple[int, int]:
    return (0, 0)


def quit() -> None:  # noqa: A001 - mirrors the pygame API
    pass


class Surface:
    def __init__(self, size=(0, 0)):
        self._size = tuple(size)

    def fill(self, color):
        return None

    def get_size(self):
        return self._size

    def blit(self, source, dest):
        return None


class _Display:
    @staticmethod
    def set_mode(size, *args, **kwargs):
        return Surface(size)

    @staticmethod
    def set_caption(title):
        return None

    @staticmethod
    def flip():
        return None

    @staticmethod
    def update(*args):
        return None


class _Draw:
    @staticmethod
    def circle(surface, color, center, radius, width=0):
        return None

    @staticmethod
    def rect(surface, color, rect, width=0):
        return None

    @staticmethod
    def line(surface, color, start, end, width=1):
        return None

    @staticmethod
    def polygon(surface, color, points, width=0):
        return None

    @staticmethod
    def ellipse(surface, color, rect, width=0):
        return None


class _Event:
    @staticmethod
    def get():
        return []

    @staticmethod
    def pump():
        return None


class Clock:
    """Non-sleeping stand-in; tick() returns 0 ms immediately."""

    def tick(self, framerate=0):
        return 0

    def get_fps(self):
        return 0.0


class _Time:
    Clock = Clock

    @staticmethod
    def get_ticks():
        return 0

    @staticmethod
    def delay(ms):
        return 0


class _Key:
    @staticmethod
    def get_pressed():
        # Large enough for any K_* constant handed out by __getattr__.
        return [0] * 4096


class _Font:
    def __init__(self, name=None, size=12):
        self._size = size

    def render(self, text, antialias, color, background=None):
        return Surface((len(text) * self._size // 2, self._size))


class _FontModule:
    Font = _Font
    SysFont = staticmethod(lambda name, size, bold=False, italic=False:
                           _Font(name, size))

    @staticmethod
    def init():
        return None


display = _Display()
draw = _Draw()
event = _Event()
time = _Time()
key = _Key()
font = _FontModule()

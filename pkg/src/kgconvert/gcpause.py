"""Pause the cyclic garbage collector around bulk allocation phases.

Lifting and rendering allocate millions of small, acyclic objects; the
collector's full passes over them make run time grow faster than the
input. Nested and concurrent pauses are reference-counted.
"""
from __future__ import annotations

import gc
import threading
from contextlib import contextmanager

_lock = threading.Lock()
_depth = 0
_was_enabled = False


@contextmanager
def gc_paused():
    global _depth, _was_enabled
    with _lock:
        if _depth == 0:
            _was_enabled = gc.isenabled()
            gc.disable()
        _depth += 1
    try:
        yield
    finally:
        with _lock:
            _depth -= 1
            if _depth == 0 and _was_enabled:
                gc.enable()

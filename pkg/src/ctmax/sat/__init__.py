"""Incremental SAT engine.

The compiled backend (``_cengine``) is used when it was built; otherwise the
pure-Python engine is loaded. Set ``CTMAX_BACKEND=python`` to force the
fallback.
"""
from __future__ import annotations

import os

from . import _pyengine
from .common import Propagation, SolveOutcome, Status, luby

PyEngine = _pyengine.Engine

try:
    if os.environ.get("CTMAX_BACKEND", "").lower() == "python":
        raise ImportError("compiled backend disabled by CTMAX_BACKEND")
    from ._cengine import Engine as CEngine
except ImportError:
    CEngine = None

Engine = CEngine if CEngine is not None else PyEngine
BACKEND = Engine.backend

__all__ = [
    "BACKEND", "CEngine", "Engine", "PyEngine", "Propagation", "SolveOutcome", "Status",
    "available_backends", "luby",
]


def available_backends() -> dict[str, type]:
    out = {"python": PyEngine}
    if CEngine is not None:
        out["cython"] = CEngine
    return out

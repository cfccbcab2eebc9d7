"""Kernel backend selection.

The compiled ``_kernels`` module is used when it imports; otherwise the numpy
twins in ``_fallback`` are used. ``EVFOREST_BACKEND=python`` forces the
fallback and ``EVFOREST_NUM_THREADS`` sets the OpenMP thread count used by the
compiled kernels. Results never depend on the thread count.
"""
import logging
import os

from evforest import _fallback

logger = logging.getLogger(__name__)

try:
    from evforest import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_state = {"name": None, "threads": None}


def available_backends():
    return sorted(_BACKENDS)


def _default_name():
    requested = os.environ.get("EVFOREST_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            logger.warning("backend %r unavailable, using default", requested)
        else:
            return requested
    return "compiled" if "compiled" in _BACKENDS else "python"


def backend_name():
    if _state["name"] is None:
        _state["name"] = _default_name()
    return _state["name"]


def set_backend(name):
    """Select ``"compiled"`` or ``"python"`` for all subsequent kernel calls."""
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}")
    _state["name"] = name


def get_kernels(name=None):
    return _BACKENDS[name or backend_name()]


def num_threads():
    if _state["threads"] is None:
        raw = os.environ.get("EVFOREST_NUM_THREADS", "1")
        try:
            _state["threads"] = max(1, int(raw))
        except ValueError:
            raise ValueError(f"EVFOREST_NUM_THREADS must be an integer, got {raw!r}") from None
    return _state["threads"]


def set_num_threads(n):
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _state["threads"] = int(n)


def reload():
    """Re-read the environment variables (used by tests)."""
    _state["name"] = None
    _state["threads"] = None

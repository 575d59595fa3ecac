"""Kernel backend selection.

The compiled extension is preferred; the NumPy reference implementation is
used when the extension is missing or when IDGAMES_BACKEND=python is set.
``load("compiled")`` / ``load("python")`` give explicit access to one backend
(used by the cross-checking tests and the benchmark).
"""

import os

from . import reference


def load(name: str):
    if name == "python":
        return reference
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")


def _select():
    if os.environ.get("IDGAMES_BACKEND", "").lower() == "python":
        return reference
    try:
        from . import _core
        return _core
    except ImportError:
        return reference


active = _select()


def backend_name() -> str:
    return active.BACKEND

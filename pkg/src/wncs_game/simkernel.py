"""Selects the compiled simulation kernel when it is importable.

Set ``MGARE_PURE_PYTHON=1`` to force the numpy implementation. ``BACKEND``
names the implementation in use.
"""

from __future__ import annotations

import os

from . import _sim_numpy

if os.environ.get("MGARE_PURE_PYTHON", "") not in ("", "0"):
    run = _sim_numpy.run
    BACKEND = "numpy"
else:
    try:
        from ._sim_kernel import run  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        run = _sim_numpy.run
        BACKEND = "numpy"


def thread_count() -> int:
    """Worker threads for the compiled kernel, capped by ``MGARE_THREADS``."""
    raw = os.environ.get("MGARE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            return 1
    return os.cpu_count() or 1

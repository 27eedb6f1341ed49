"""Existence tests and saddle-point policies for LQ zero-sum games over random wireless channels."""

from __future__ import annotations

import os

_threads = os.environ.get("MGARE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

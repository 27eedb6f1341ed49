"""Vectorized numpy implementation of the closed-loop time-stepping loop.

All runs advance together; the loop over slots stays in Python. The compiled
kernel in ``_sim_kernel.pyx`` has the same signature and fills the same
output buffers.
"""

from __future__ import annotations

import numpy as np

from .matrix_core import Array


def run(
    A: Array,
    Q: Array,
    Rc: Array,
    Ra: Array,
    gains: Array,
    schedule: Array,
    bc: Array,
    ba: Array,
    bc_idx: Array,
    ba_idx: Array,
    noise: Array,
    x0: Array,
    delta: Array,
    nc: int,
    cap: float,
    costs: Array,
    flags: Array,
    states: Array,
    controls: Array,
    threads: int = 1,
) -> None:
    R, K = bc_idx.shape
    record = states.shape[0] > 0
    x = x0.copy()
    alive = flags == 0
    if record:
        states[:, 0] = x
    runs = np.arange(R)
    for k in range(K):
        m = bc_idx[:, k]
        g = gains[schedule[k], m] + delta
        u = np.einsum("rns,rs->rn", g, x)
        uc, ua = u[:, :nc], u[:, nc:]
        xn = x @ A.T + np.einsum("rsc,rc->rs", bc[m], uc) + noise[:, k]
        if ua.shape[1]:
            xn += np.einsum("rsa,ra->rs", ba[ba_idx[:, k]], ua)
        stage = np.einsum("rs,st,rt->r", xn, Q, xn) + np.einsum("rc,cd,rd->r", uc, Rc, uc)
        if ua.shape[1]:
            stage -= np.einsum("ra,ab,rb->r", ua, Ra, ua)
        sq = np.einsum("rs,rs->r", xn, xn)
        bad = alive & ~(np.isfinite(sq) & (sq <= cap))
        if bad.any():
            flags[bad] = 1
            alive &= ~bad
        costs[:, k] = np.where(alive, stage, np.nan)
        x = np.where(alive[:, None], xn, 0.0)
        if record:
            states[runs, k + 1] = np.where(alive[:, None], xn, np.nan)
            controls[runs, k] = np.where(alive[:, None], u, np.nan)

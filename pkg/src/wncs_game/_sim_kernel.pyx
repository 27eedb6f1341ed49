# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop time-stepping loop; one OpenMP task per run."""

import numpy as np

from cython.parallel cimport prange
from libc.math cimport isfinite, NAN


def run(
    const double[:, ::1] A,
    const double[:, ::1] Q,
    const double[:, ::1] Rc,
    const double[:, ::1] Ra,
    const double[:, :, :, ::1] gains,
    const long[::1] schedule,
    const double[:, :, ::1] bc,
    const double[:, :, ::1] ba,
    const long[:, ::1] bc_idx,
    const long[:, ::1] ba_idx,
    const double[:, :, ::1] noise,
    const double[:, ::1] x0,
    const double[:, :, ::1] delta,
    int nc,
    double cap,
    double[:, ::1] costs,
    unsigned char[::1] flags,
    double[:, :, ::1] states,
    double[:, :, ::1] controls,
    int threads=1,
):
    cdef Py_ssize_t R = bc_idx.shape[0]
    cdef Py_ssize_t K = bc_idx.shape[1]
    cdef Py_ssize_t S = A.shape[0]
    cdef Py_ssize_t n = gains.shape[2]
    cdef Py_ssize_t na = n - nc
    cdef bint record = states.shape[0] > 0
    cdef double[:, ::1] xs = np.array(x0, dtype=np.float64)
    cdef double[:, ::1] xn = np.zeros((R, S))
    cdef double[:, ::1] us = np.zeros((R, max(n, 1)))
    cdef Py_ssize_t r, k, i, j, g, m, ma
    cdef double acc, stage, sq

    for r in prange(R, nogil=True, num_threads=threads, schedule="static"):
        if record:
            for i in range(S):
                states[r, 0, i] = xs[r, i]
        for k in range(K):
            if flags[r]:
                costs[r, k] = NAN
                if record:
                    for i in range(S):
                        states[r, k + 1, i] = NAN
                    for j in range(n):
                        controls[r, k, j] = NAN
                continue
            g = schedule[k]
            m = bc_idx[r, k]
            ma = ba_idx[r, k]
            for j in range(n):
                acc = 0.0
                for i in range(S):
                    acc = acc + (gains[g, m, j, i] + delta[r, j, i]) * xs[r, i]
                us[r, j] = acc
            for i in range(S):
                acc = noise[r, k, i]
                for j in range(S):
                    acc = acc + A[i, j] * xs[r, j]
                for j in range(nc):
                    acc = acc + bc[m, i, j] * us[r, j]
                for j in range(na):
                    acc = acc + ba[ma, i, j] * us[r, nc + j]
                xn[r, i] = acc
            stage = 0.0
            sq = 0.0
            for i in range(S):
                acc = 0.0
                for j in range(S):
                    acc = acc + Q[i, j] * xn[r, j]
                stage = stage + xn[r, i] * acc
                sq = sq + xn[r, i] * xn[r, i]
            for i in range(nc):
                acc = 0.0
                for j in range(nc):
                    acc = acc + Rc[i, j] * us[r, j]
                stage = stage + us[r, i] * acc
            for i in range(na):
                acc = 0.0
                for j in range(na):
                    acc = acc + Ra[i, j] * us[r, nc + j]
                stage = stage - us[r, nc + i] * acc
            if not (isfinite(sq) and sq <= cap):
                flags[r] = 1
                costs[r, k] = NAN
                if record:
                    for i in range(S):
                        states[r, k + 1, i] = NAN
                    for j in range(n):
                        controls[r, k, j] = NAN
                continue
            costs[r, k] = stage
            for i in range(S):
                xs[r, i] = xn[r, i]
            if record:
                for i in range(S):
                    states[r, k + 1, i] = xn[r, i]
                for j in range(n):
                    controls[r, k, j] = us[r, j]

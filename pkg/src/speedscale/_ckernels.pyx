# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Must stay numerically identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def expect_shift(const double[::1] values, const i64[::1] tap_idx,
                 const double[::1] tap_p, Py_ssize_t n_out):
    """out[y] = sum_j tap_p[j] * values[y + tap_idx[j]] for y < n_out."""
    cdef Py_ssize_t n_taps = tap_idx.shape[0]
    cdef Py_ssize_t y, j
    cdef double acc
    if n_taps and n_out and n_out - 1 + tap_idx[n_taps - 1] >= values.shape[0]:
        raise IndexError("values too short for requested output length")
    out = np.empty(n_out, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for y in range(n_out):
            acc = 0.0
            for j in range(n_taps):
                acc = acc + tap_p[j] * values[y + tap_idx[j]]
            o[y] = acc
    return out


def expect_geometric(const double[::1] values, Py_ssize_t stride, double ratio,
                     const double[::1] weights, double w_tail, const i64[::1] pt_idx,
                     const double[::1] pt_p, Py_ssize_t n_out):
    """Same as expect_shift for a geometric run plus point masses.

    The run is summed by the backward recursion
    s[y] = (w0 v[y] + ratio s[y + stride]) - w_tail v[y + count stride];
    the top ``stride`` entries are summed directly.
    """
    cdef Py_ssize_t count = weights.shape[0]
    cdef Py_ssize_t n_pts = pt_idx.shape[0]
    cdef Py_ssize_t y, k, j, span = (count - 1) * stride
    cdef double acc, w0 = weights[0]
    for j in range(n_pts):
        if pt_idx[j] > span:
            span = pt_idx[j]
    if n_out and n_out - 1 + span >= values.shape[0]:
        raise IndexError("values too short for requested output length")
    out = np.empty(n_out, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        y = n_out - 1
        while y >= 0:
            if y + stride > n_out - 1:
                acc = 0.0
                for k in range(count):
                    acc = acc + weights[k] * values[y + k * stride]
            else:
                acc = (w0 * values[y] + ratio * o[y + stride]) - w_tail * values[y + count * stride]
            o[y] = acc
            y -= 1
        for y in range(n_out):
            acc = o[y]
            for j in range(n_pts):
                acc = acc + pt_p[j] * values[y + pt_idx[j]]
            o[y] = acc
    return out


cdef void _dnc(const double[::1] g, const double[::1] pc, double[::1] vals,
               i64[::1] arg, Py_ssize_t x_lo, Py_ssize_t x_hi,
               Py_ssize_t y_lo, Py_ssize_t y_hi) noexcept nogil:
    cdef Py_ssize_t mid, y, y_top, best_y
    cdef double best, v
    while x_lo <= x_hi:
        mid = (x_lo + x_hi) // 2
        y_top = y_hi if y_hi < mid else mid
        best_y = y_lo
        best = pc[mid - y_lo] + g[y_lo]
        for y in range(y_lo + 1, y_top + 1):
            v = pc[mid - y] + g[y]
            if v <= best:
                best = v
                best_y = y
        vals[mid] = best
        arg[mid] = best_y
        _dnc(g, pc, vals, arg, x_lo, mid - 1, y_lo, best_y)
        x_lo = mid + 1
        y_lo = best_y


def minplus_monotone(const double[::1] g, const double[::1] pc, Py_ssize_t n):
    """vals[x] = min_{0<=y<=x} pc[x-y] + g[y]; arg holds the largest minimiser."""
    if g.shape[0] < n or pc.shape[0] < n:
        raise IndexError("inputs shorter than n")
    vals = np.empty(n, dtype=np.float64)
    arg = np.empty(n, dtype=np.int64)
    cdef double[::1] v = vals
    cdef i64[::1] a = arg
    if n:
        with nogil:
            _dnc(g, pc, v, a, 0, n - 1, 0, n - 1)
    return vals, arg


def run_chain(const i64[::1] table, const i64[::1] arrivals, i64[::1] xs,
              i64[::1] us, Py_ssize_t t, Py_ssize_t n, i64 x, i64 cap):
    """Advance the lattice chain from step t until n or until x leaves the table.

    Returns (t, x).  xs[t] and us[t] are written for every completed step.
    """
    cdef Py_ssize_t size = table.shape[0]
    cdef i64 u
    with nogil:
        while t < n and x < size:
            u = table[x]
            xs[t] = x
            us[t] = u
            x = x - u + arrivals[t]
            if cap >= 0 and x > cap:
                x = cap
            t += 1
    return t, x

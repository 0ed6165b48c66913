"""Pure-Python versions of the compiled inner loops in ``_ckernels.pyx``.

Summation order matches the compiled code so both backends agree bit for bit
(the extension is built with ``-ffp-contract=off``).
"""

import numpy as np


def expect_shift(values, tap_idx, tap_p, n_out):
    """out[y] = sum_j tap_p[j] * values[y + tap_idx[j]] for y < n_out."""
    values = np.asarray(values, dtype=np.float64)
    n_taps = len(tap_idx)
    if n_taps and n_out and n_out - 1 + tap_idx[n_taps - 1] >= values.shape[0]:
        raise IndexError("values too short for requested output length")
    out = np.zeros(n_out, dtype=np.float64)
    for j in range(n_taps):
        k = int(tap_idx[j])
        out += tap_p[j] * values[k:k + n_out]
    return out


def expect_geometric(values, stride, ratio, weights, w_tail, pt_idx, pt_p, n_out):
    """Same as expect_shift for a geometric run plus point masses (see the compiled version)."""
    v = np.asarray(values, dtype=np.float64).tolist()
    w = [float(a) for a in weights]
    count = len(w)
    span = (count - 1) * stride
    pts = list(zip([int(i) for i in pt_idx], [float(p) for p in pt_p]))
    for i, _ in pts:
        span = max(span, i)
    if n_out and n_out - 1 + span >= len(v):
        raise IndexError("values too short for requested output length")
    o = [0.0] * n_out
    w0 = w[0]
    lag = count * stride
    for y in range(n_out - 1, -1, -1):
        if y + stride > n_out - 1:
            acc = 0.0
            for k in range(count):
                acc = acc + w[k] * v[y + k * stride]
        else:
            acc = (w0 * v[y] + ratio * o[y + stride]) - w_tail * v[y + lag]
        o[y] = acc
    for y in range(n_out):
        acc = o[y]
        for i, p in pts:
            acc = acc + p * v[y + i]
        o[y] = acc
    return np.array(o, dtype=np.float64)


def minplus_monotone(g, pc, n):
    """vals[x] = min_{0<=y<=x} pc[x-y] + g[y]; arg holds the largest minimiser.

    Divide and conquer over rows; valid because the largest minimiser is
    nondecreasing in x whenever pc is convex.
    """
    g = np.asarray(g, dtype=np.float64)
    pc = np.asarray(pc, dtype=np.float64)
    if g.shape[0] < n or pc.shape[0] < n:
        raise IndexError("inputs shorter than n")
    vals = np.empty(n, dtype=np.float64)
    arg = np.empty(n, dtype=np.int64)
    if n:
        _dnc(g, pc, vals, arg, 0, n - 1, 0, n - 1)
    return vals, arg


def _dnc(g, pc, vals, arg, x_lo, x_hi, y_lo, y_hi):
    while x_lo <= x_hi:
        mid = (x_lo + x_hi) // 2
        y_top = min(y_hi, mid)
        ys = np.arange(y_lo, y_top + 1)
        cand = pc[mid - ys] + g[ys]
        # reversed argmin picks the largest y among ties
        k = len(cand) - 1 - int(np.argmin(cand[::-1]))
        vals[mid] = cand[k]
        arg[mid] = y_lo + k
        _dnc(g, pc, vals, arg, x_lo, mid - 1, y_lo, y_lo + k)
        x_lo = mid + 1
        y_lo = y_lo + k


def minplus_brute(g, pc, n):
    """Quadratic-time reference for ``minplus_monotone`` (any pc)."""
    vals = np.empty(n, dtype=np.float64)
    arg = np.empty(n, dtype=np.int64)
    for x in range(n):
        cand = pc[x - np.arange(x + 1)] + g[:x + 1]
        k = x - int(np.argmin(cand[::-1]))
        vals[x] = cand[k]
        arg[x] = k
    return vals, arg


def run_chain(table, arrivals, xs, us, t, n, x, cap):
    """Advance the lattice chain from step t until n or until x leaves the table."""
    size = len(table)
    tab = table.tolist()
    arr = arrivals.tolist()
    x = int(x)
    t0 = t
    xl = []
    ul = []
    while t < n and x < size:
        u = tab[x]
        xl.append(x)
        ul.append(u)
        x = x - u + arr[t]
        if cap >= 0 and x > cap:
            x = cap
        t += 1
    xs[t0:t] = xl
    us[t0:t] = ul
    return t, x

"""Compiled kernels for t-bit round-to-nearest-even arithmetic.

Every kernel takes the format as four scalars ``(t, emin, emax, clamped)``:
``t`` significand bits (implicit bit included), ``emin``/``emax`` the IEEE-style
exponent range, and ``clamped`` whether that range applies at all.  Values are
carried in float64 containers.

Exact results of ``a+b``, ``a*b`` and ``a/b`` are recovered as a float64
approximation plus the sign of the residual (TwoSum, Dekker's TwoProduct, the
exact division remainder).  The sign breaks ties at the target precision, which
makes the emulated operations correctly rounded for ``t <= 52``.  ``t == 53``
without clamp is plain float64 arithmetic.

All kernels return an overflow flag instead of raising; the Python wrappers in
:mod:`mgmp.fparith` turn it into an exception.
"""

import math

import numpy as np
from numba import njit

_SPLIT = 134217729.0  # 2**27 + 1


@njit(cache=True, inline="always")
def _native(t, clamped):
    return t >= 53 and not clamped


@njit(cache=True, inline="always")
def _max_finite(t, emax):
    return (2.0 - math.ldexp(1.0, 1 - t)) * math.ldexp(1.0, emax)


@njit(cache=True, inline="always")
def _quantum_exp(x, t, emin, clamped):
    # grid spacing around x is 2**q
    m, e = math.frexp(x)
    if clamped and e < emin + 1:
        e = emin + 1
    return e - t


@njit(cache=True)
def round_scalar(x, t, emin, emax, clamped):
    if _native(t, clamped) or x == 0.0:
        return x, False
    q = _quantum_exp(x, t, emin, clamped)
    y = math.ldexp(np.rint(math.ldexp(x, -q)), q)
    ovf = clamped and abs(y) > _max_finite(t, emax)
    return y, ovf


@njit(cache=True, inline="always")
def _round_sticky(s, err, t, emin, emax, clamped):
    """Round ``s + err`` where ``s = fl64(exact)`` and ``err`` carries the sign of ``exact - s``."""
    if _native(t, clamped):
        return s, False
    if s == 0.0:
        return 0.0, False
    q = _quantum_exp(s, t, emin, clamped)
    sc = math.ldexp(s, -q)
    fl = math.floor(sc)
    if sc - fl == 0.5 and err != 0.0:
        r = fl + 1.0 if err > 0.0 else fl
    else:
        r = np.rint(sc)
    y = math.ldexp(r, q)
    ovf = clamped and abs(y) > _max_finite(t, emax)
    return y, ovf


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


@njit(cache=True, inline="always")
def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


@njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


@njit(cache=True, inline="always")
def fl_add(a, b, t, emin, emax, clamped):
    s, err = _two_sum(a, b)
    return _round_sticky(s, err, t, emin, emax, clamped)


@njit(cache=True, inline="always")
def fl_sub(a, b, t, emin, emax, clamped):
    s, err = _two_sum(a, -b)
    return _round_sticky(s, err, t, emin, emax, clamped)


@njit(cache=True, inline="always")
def fl_mul(a, b, t, emin, emax, clamped):
    p, err = _two_prod(a, b)
    return _round_sticky(p, err, t, emin, emax, clamped)


@njit(cache=True, inline="always")
def fl_div(a, b, t, emin, emax, clamped):
    q = a / b
    if _native(t, clamped):
        return q, False
    p, pe = _two_prod(q, b)
    rem = (a - p) - pe
    # exact quotient is q + rem / b
    err = rem if b > 0.0 else -rem
    return _round_sticky(q, err, t, emin, emax, clamped)


@njit(cache=True)
def round_array(x, t, emin, emax, clamped):
    out = np.empty_like(x)
    ovf = False
    for i in range(x.size):
        y, o = round_scalar(x[i], t, emin, emax, clamped)
        out[i] = y
        ovf = ovf or o
    return out, ovf


@njit(cache=True)
def add_arrays(v, w, t, emin, emax, clamped):
    out = np.empty_like(v)
    ovf = False
    for i in range(v.size):
        y, o = fl_add(v[i], w[i], t, emin, emax, clamped)
        out[i] = y
        ovf = ovf or o
    return out, ovf


@njit(cache=True, nogil=True)
def spmv(indptr, indices, data, w, t, emin, emax, clamped):
    """Row dot products in ascending column order, rounding after every * and +."""
    n = indptr.size - 1
    out = np.zeros(n)
    ovf = False
    for i in range(n):
        acc = 0.0
        first = True
        for k in range(indptr[i], indptr[i + 1]):
            p, o1 = fl_mul(data[k], w[indices[k]], t, emin, emax, clamped)
            if first:
                acc = p
                first = False
                o2 = False
            else:
                acc, o2 = fl_add(acc, p, t, emin, emax, clamped)
            ovf = ovf or o1 or o2
        out[i] = acc
    return out, ovf


@njit(cache=True, nogil=True)
def residual(v, indptr, indices, data, w, t, emin, emax, clamped):
    """``v - K w`` with the product accumulated as in :func:`spmv`, then one rounded subtraction."""
    kw, ovf = spmv(indptr, indices, data, w, t, emin, emax, clamped)
    out = np.empty_like(v)
    for i in range(v.size):
        y, o = fl_sub(v[i], kw[i], t, emin, emax, clamped)
        out[i] = y
        ovf = ovf or o
    return out, ovf


@njit(cache=True, nogil=True)
def forward_subst(indptr, indices, data, b, t, emin, emax, clamped):
    """Solve ``T x = b`` for lower-triangular CSR ``T`` (diagonal last in each row).

    Returns ``(x, overflow, bad_row)``; ``bad_row >= 0`` flags a missing or zero diagonal.
    """
    n = b.size
    x = np.zeros(n)
    ovf = False
    for i in range(n):
        start = indptr[i]
        end = indptr[i + 1]
        if end == start or indices[end - 1] != i or data[end - 1] == 0.0:
            return x, ovf, i
        acc = b[i]
        for k in range(start, end - 1):
            p, o1 = fl_mul(data[k], x[indices[k]], t, emin, emax, clamped)
            acc, o2 = fl_sub(acc, p, t, emin, emax, clamped)
            ovf = ovf or o1 or o2
        xi, o3 = fl_div(acc, data[end - 1], t, emin, emax, clamped)
        x[i] = xi
        ovf = ovf or o3
    return x, ovf, -1


@njit(cache=True, nogil=True)
def backward_subst(indptr, indices, data, b, t, emin, emax, clamped):
    """Solve ``U x = b`` for upper-triangular CSR ``U`` (diagonal first in each row)."""
    n = b.size
    x = np.zeros(n)
    ovf = False
    for i in range(n - 1, -1, -1):
        start = indptr[i]
        end = indptr[i + 1]
        if end == start or indices[start] != i or data[start] == 0.0:
            return x, ovf, i
        acc = b[i]
        for k in range(start + 1, end):
            p, o1 = fl_mul(data[k], x[indices[k]], t, emin, emax, clamped)
            acc, o2 = fl_sub(acc, p, t, emin, emax, clamped)
            ovf = ovf or o1 or o2
        xi, o3 = fl_div(acc, data[start], t, emin, emax, clamped)
        x[i] = xi
        ovf = ovf or o3
    return x, ovf, -1

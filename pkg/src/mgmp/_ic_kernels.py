"""Left-looking column incomplete Cholesky (zero fill-in or threshold dropping)."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _grow(arr, need):
    if need <= arr.size:
        return arr
    out = np.empty(max(need, 2 * arr.size), dtype=arr.dtype)
    out[: arr.size] = arr
    return out


@njit(cache=True)
def left_looking_ic(indptr, indices, data, zero_fill, dpt, rowscale, colscale, pivot_relative):
    """Lower factor of a symmetric CSR matrix in CSC arrays ``(Lp, Li, Lx, bad)``.

    Column ``j`` takes ``A[j:, j]`` from row ``j`` of ``A`` (symmetry), subtracts
    the contributions of earlier columns with ``L[j, k] != 0``, and divides by the
    pivot.  With ``zero_fill`` the updates are restricted to the pattern of ``A``;
    otherwise new entries may appear and off-diagonals with
    ``|L[i, j]| < dpt * rowscale[i] * colscale[j]`` are dropped
    (``|L[i, j] L[j, j]|`` in place of ``|L[i, j]|`` when ``pivot_relative``).  ``bad >= 0`` names the
    column whose pivot was not positive.
    """
    n = indptr.size - 1
    cap = indices.size + n
    Lp = np.zeros(n + 1, dtype=np.int64)
    Li = np.empty(cap, dtype=np.int64)
    Lx = np.empty(cap)
    w = np.zeros(n)
    mark = np.full(n, -1, dtype=np.int64)
    lst = np.empty(n, dtype=np.int64)
    first = np.zeros(n, dtype=np.int64)
    head = np.full(n, -1, dtype=np.int64)
    link = np.full(n, -1, dtype=np.int64)
    nz = 0
    for j in range(n):
        cnt = 0
        for p in range(indptr[j], indptr[j + 1]):
            c = indices[p]
            if c >= j:
                w[c] = data[p]
                mark[c] = j
                lst[cnt] = c
                cnt += 1
        if mark[j] != j:
            w[j] = 0.0
            mark[j] = j
            lst[cnt] = j
            cnt += 1
        k = head[j]
        while k != -1:
            nextk = link[k]
            ps = first[k]
            end = Lp[k + 1]
            ljk = Lx[ps]
            for p in range(ps, end):
                i = Li[p]
                if mark[i] != j:
                    if zero_fill:
                        continue
                    mark[i] = j
                    w[i] = 0.0
                    lst[cnt] = i
                    cnt += 1
                w[i] -= Lx[p] * ljk
            first[k] = ps + 1
            if ps + 1 < end:
                r = Li[ps + 1]
                link[k] = head[r]
                head[r] = k
            k = nextk
        piv = w[j]
        if not piv > 0.0:
            return Lp, Li[:nz], Lx[:nz], j
        ljj = math.sqrt(piv)
        rows = np.sort(lst[:cnt])
        Li = _grow(Li, nz + cnt)
        Lx = _grow(Lx, nz + cnt)
        start = nz
        Li[nz] = j
        Lx[nz] = ljj
        nz += 1
        for q in range(cnt):
            i = rows[q]
            if i == j:
                continue
            v = w[i] / ljj
            test = abs(w[i]) if pivot_relative else abs(v)
            if not zero_fill and test < dpt * rowscale[i] * colscale[j]:
                continue
            Li[nz] = i
            Lx[nz] = v
            nz += 1
        Lp[j + 1] = nz
        if nz - start > 1:
            first[j] = start + 1
            r = Li[start + 1]
            link[j] = head[r]
            head[r] = j
        for q in range(cnt):
            w[lst[q]] = 0.0
    return Lp, Li[:nz].copy(), Lx[:nz].copy(), -1

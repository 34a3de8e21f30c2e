# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_pykernels``; same signatures and results."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef double ACCEPT_RTOL = 1e-9


def krnng_pass(const int[:, ::1] ranks, long long[:, ::1] nbrs, long long[::1] deg,
               const long long[::1] order, double lam, long long rank_sum, long long sq_sum):
    cdef Py_ssize_t n = nbrs.shape[0]
    cdef Py_ssize_t k = nbrs.shape[1]
    cdef Py_ssize_t idx, a, b, cnt, j
    cdef long long i, ds, d_rank, d_sq
    cdef double w, delta, scale
    cdef char[::1] is_nbr = np.zeros(n, dtype=np.int8)
    cdef char[::1] is_new = np.zeros(n, dtype=np.int8)
    cdef double[::1] best_w = np.empty(k, dtype=np.float64)
    cdef long long[::1] best_j = np.empty(k, dtype=np.int64)
    moves = []

    for idx in range(order.shape[0]):
        i = order[idx]
        for a in range(k):
            is_nbr[nbrs[i, a]] = 1

        # keep the k smallest (w, j); j ascends so equal w never displaces
        cnt = 0
        for j in range(n):
            if j == i:
                continue
            ds = deg[j] - is_nbr[j]
            w = ranks[i, j] + lam * <double>((ds + 1) * (ds + 1))
            if cnt < k:
                b = cnt
                cnt += 1
            elif w < best_w[k - 1]:
                b = k - 1
            else:
                continue
            while b > 0 and best_w[b - 1] > w:
                best_w[b] = best_w[b - 1]
                best_j[b] = best_j[b - 1]
                b -= 1
            best_w[b] = w
            best_j[b] = j

        d_rank = 0
        d_sq = 0
        for a in range(k):
            is_new[best_j[a]] = 1
            d_rank += ranks[i, best_j[a]] - ranks[i, nbrs[i, a]]
        for a in range(k):
            if not is_new[nbrs[i, a]]:
                d_sq += 1 - 2 * deg[nbrs[i, a]]
            if not is_nbr[best_j[a]]:
                d_sq += 2 * deg[best_j[a]] + 1
        delta = d_rank + lam * d_sq
        scale = 1.0
        if fabs(<double>d_rank) > scale:
            scale = fabs(<double>d_rank)
        if fabs(lam * d_sq) > scale:
            scale = fabs(lam * d_sq)

        if delta < -ACCEPT_RTOL * scale:
            for a in range(k):
                if not is_new[nbrs[i, a]]:
                    deg[nbrs[i, a]] -= 1
            for a in range(k):
                if not is_nbr[best_j[a]]:
                    deg[best_j[a]] += 1
            for a in range(k):
                is_nbr[nbrs[i, a]] = 0
                is_new[best_j[a]] = 0
                nbrs[i, a] = best_j[a]
            rank_sum += d_rank
            sq_sum += d_sq
            moves.append((i, rank_sum, sq_sum))
        else:
            for a in range(k):
                is_nbr[nbrs[i, a]] = 0
                is_new[best_j[a]] = 0
    return rank_sum, sq_sum, moves


cdef Py_ssize_t _find(long long[::1] parent, Py_ssize_t a) noexcept nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def kruskal_tree(const long long[::1] ei, const long long[::1] ej, used, Py_ssize_t n):
    cdef cnp.uint8_t[::1] used_v = used.view(np.uint8)
    cdef long long[::1] parent = np.arange(n, dtype=np.int64)
    cdef long long[::1] chosen = np.empty(max(n - 1, 0), dtype=np.int64)
    cdef Py_ssize_t pos, ra, rb, cnt = 0
    cdef Py_ssize_t m = ei.shape[0]
    if n <= 1:
        return np.empty(0, dtype=np.int64)
    with nogil:
        for pos in range(m):
            if used_v[pos]:
                continue
            ra = _find(parent, ei[pos])
            rb = _find(parent, ej[pos])
            if ra != rb:
                parent[ra] = rb
                chosen[cnt] = pos
                cnt += 1
                if cnt == n - 1:
                    break
    if cnt != n - 1:
        return None
    out = np.asarray(chosen).copy()
    used[out] = True
    return out


def prefix_counts(const long long[::1] ea, const long long[::1] eb, const long long[:, ::1] pos):
    cdef Py_ssize_t bsz = pos.shape[0]
    cdef Py_ssize_t n = pos.shape[1]
    cdef Py_ssize_t ne = ea.shape[0]
    cdef Py_ssize_t b, e, t
    cdef long long pa, pb
    r1_arr = np.zeros((bsz, n + 1), dtype=np.int64)
    r2_arr = np.zeros((bsz, n + 1), dtype=np.int64)
    cdef long long[:, ::1] r1 = r1_arr
    cdef long long[:, ::1] r2 = r2_arr
    with nogil:
        for b in range(bsz):
            for e in range(ne):
                pa = pos[b, ea[e]]
                pb = pos[b, eb[e]]
                if pa > pb:
                    r1[b, pa + 1] += 1
                    r2[b, pb + 1] += 1
                else:
                    r1[b, pb + 1] += 1
                    r2[b, pa + 1] += 1
            for t in range(1, n + 1):
                r1[b, t] += r1[b, t - 1]
                r2[b, t] += r2[b, t - 1]
            for t in range(n + 1):
                r2[b, t] = ne - r2[b, t]
    return r1_arr, r2_arr

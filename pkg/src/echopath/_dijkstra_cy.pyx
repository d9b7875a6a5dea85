# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled shortest-path kernel; hot inner loop of the segmentation.

Mirrors _dijkstra_py.dijkstra_half exactly (same inputs, same arithmetic
ordering, same tie-breaking) so the two backends are interchangeable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, fabs, pow, sqrt, M_PI
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double RAD2DEG = 180.0 / M_PI
cdef double INF = float("inf")


cdef struct HeapEntry:
    double td
    int gid
    int idx


cdef struct Heap:
    HeapEntry* data
    int size
    int cap


cdef inline bint _less(HeapEntry a, HeapEntry b) nogil:
    if a.td != b.td:
        return a.td < b.td
    return a.gid < b.gid


cdef inline int _heap_push(Heap* h, double td, int gid, int idx) nogil:
    cdef int i, p
    cdef HeapEntry e
    cdef HeapEntry* grown
    if h.size == h.cap:
        grown = <HeapEntry*> malloc(sizeof(HeapEntry) * h.cap * 2)
        if grown == NULL:
            return -1
        for i in range(h.size):
            grown[i] = h.data[i]
        free(h.data)
        h.data = grown
        h.cap *= 2
    e.td = td
    e.gid = gid
    e.idx = idx
    i = h.size
    h.size += 1
    while i > 0:
        p = (i - 1) >> 1
        if _less(e, h.data[p]):
            h.data[i] = h.data[p]
            i = p
        else:
            break
    h.data[i] = e
    return 0


cdef inline HeapEntry _heap_pop(Heap* h) nogil:
    cdef HeapEntry top = h.data[0]
    cdef HeapEntry last = h.data[h.size - 1]
    cdef int i = 0, c
    h.size -= 1
    while True:
        c = 2 * i + 1
        if c >= h.size:
            break
        if c + 1 < h.size and _less(h.data[c + 1], h.data[c]):
            c += 1
        if _less(h.data[c], last):
            h.data[i] = h.data[c]
            i = c
        else:
            break
    if h.size > 0:
        h.data[i] = last
    return top


def dijkstra_half(
    steps,
    r,
    nc,
    gids,
    col_start,
    next_occ,
    n_steps,
    sources,
    targets,
    dl_bins,
    alpha,
    beta,
    gamma,
    angle_factor,
    cos_table,
):
    """Multi-source / multi-target Dijkstra over one boundary half."""
    cdef cnp.ndarray[cnp.int32_t, ndim=1] steps_a = np.ascontiguousarray(steps, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r_a = np.ascontiguousarray(r, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nc_a = np.ascontiguousarray(nc, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] gids_a = np.ascontiguousarray(gids, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cs_a = np.ascontiguousarray(col_start, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] no_a = np.ascontiguousarray(next_occ, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] src_a = np.ascontiguousarray(sources, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] tgt_a = np.ascontiguousarray(targets, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cos_a = np.ascontiguousarray(cos_table, dtype=np.float64)

    cdef int n = steps_a.shape[0]
    cdef int ns = int(n_steps)
    cdef int dl = int(dl_bins)
    cdef double a_w = float(alpha)
    cdef double b_w = float(beta)
    cdef double g_w = float(gamma)
    cdef double af = float(angle_factor)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.full(n, INF, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] parent = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] done = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] is_target = np.zeros(n, dtype=np.uint8)

    cdef int i, u, v, s, lo, hi, b, best, dstep
    cdef double td, r_u, r_v, dr, csq, cdist, ang, nd
    cdef HeapEntry e

    for i in range(tgt_a.shape[0]):
        is_target[tgt_a[i]] = 1

    cdef Heap heap
    heap.cap = 256
    heap.size = 0
    heap.data = <HeapEntry*> malloc(sizeof(HeapEntry) * heap.cap)
    if heap.data == NULL:
        raise MemoryError()

    try:
        for i in range(src_a.shape[0]):
            u = src_a[i]
            dist[u] = 0.0
            if _heap_push(&heap, 0.0, gids_a[u], u) < 0:
                raise MemoryError()

        best = -1
        while heap.size > 0:
            e = _heap_pop(&heap)
            td = e.td
            u = e.idx
            if done[u] or td > dist[u]:
                continue
            done[u] = 1
            if is_target[u]:
                best = u
                break
            s = steps_a[u]
            if s >= ns:
                continue
            lo = cs_a[s + 1]
            hi = cs_a[(s + dl if s + dl < ns else ns) + 1]
            if lo == hi:
                b = no_a[s + 1]
                if b < 0:
                    continue
                lo = cs_a[b]
                hi = cs_a[b + 1]
            r_u = r_a[u]
            for v in range(lo, hi):
                if done[v]:
                    continue
                r_v = r_a[v]
                dstep = steps_a[v] - s
                dr = r_v - r_u
                csq = r_v * r_v + r_u * r_u - 2.0 * r_v * r_u * cos_a[dstep]
                cdist = sqrt(csq) if csq > 0.0 else 0.0
                ang = af * fabs(90.0 - atan2(<double> dstep, dr) * RAD2DEG)
                nd = td + a_w * nc_a[v] + g_w * ang + pow(cdist, b_w)
                if nd < dist[v]:
                    dist[v] = nd
                    parent[v] = u
                    if _heap_push(&heap, nd, gids_a[v], v) < 0:
                        raise MemoryError()
    finally:
        free(heap.data)

    return best, dist, parent

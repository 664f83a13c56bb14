# cython: boundscheck=False, wraparound=False, cdivision=True
"""Native kernels: multi-source Dijkstra and BVH ray casting.

Semantics must stay bit-for-bit identical to ``_reference.py``; the test
suite compares the two lanes on random inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

IS_NATIVE = True


cdef struct HeapItem:
    double dist
    long origin
    long node


cdef inline bint _heap_less(HeapItem a, HeapItem b) noexcept nogil:
    if a.dist != b.dist:
        return a.dist < b.dist
    return a.origin < b.origin


cdef struct Heap:
    HeapItem* items
    long size
    long cap


cdef inline void _heap_push(Heap* h, double dist, long origin, long node) noexcept nogil:
    cdef long i, parent
    cdef HeapItem item
    if h.size == h.cap:
        h.cap *= 2
        h.items = <HeapItem*>realloc_items(h.items, h.cap)
    item.dist = dist
    item.origin = origin
    item.node = node
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _heap_less(item, h.items[parent]):
            h.items[i] = h.items[parent]
            i = parent
        else:
            break
    h.items[i] = item


cdef inline HeapItem _heap_pop(Heap* h) noexcept nogil:
    cdef HeapItem top = h.items[0]
    cdef HeapItem last
    cdef long i = 0, child
    h.size -= 1
    if h.size > 0:
        last = h.items[h.size]
        while True:
            child = 2 * i + 1
            if child >= h.size:
                break
            if child + 1 < h.size and _heap_less(h.items[child + 1], h.items[child]):
                child += 1
            if _heap_less(h.items[child], last):
                h.items[i] = h.items[child]
                i = child
            else:
                break
        h.items[i] = last
    return top


cdef HeapItem* realloc_items(HeapItem* items, long cap) noexcept nogil:
    cdef HeapItem* fresh = <HeapItem*>malloc(cap * sizeof(HeapItem))
    cdef long i
    for i in range(cap // 2):
        fresh[i] = items[i]
    free(items)
    return fresh


def multi_source_dijkstra(indptr, indices, weights, sources, source_ids, n_nodes,
                          target=-1):
    """See ``_reference.multi_source_dijkstra``."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] src = np.ascontiguousarray(sources, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sid = np.ascontiguousarray(source_ids, dtype=np.int64)
    cdef long n = n_nodes
    cdef long tgt = target

    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.full(n, np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] origin = np.full(n, -1, dtype=np.int64)

    cdef Heap heap
    heap.cap = 1024
    heap.size = 0
    heap.items = <HeapItem*>malloc(heap.cap * sizeof(HeapItem))

    cdef long i, s, o, u, v, k
    cdef double d, nd
    cdef HeapItem item

    try:
        for i in range(src.shape[0]):
            s = src[i]
            o = sid[i]
            if 0.0 < dist[s] or (dist[s] == 0.0 and (origin[s] < 0 or o < origin[s])):
                dist[s] = 0.0
                origin[s] = o
                _heap_push(&heap, 0.0, o, s)

        while heap.size > 0:
            item = _heap_pop(&heap)
            d = item.dist
            o = item.origin
            u = item.node
            if d != dist[u] or o != origin[u]:
                continue
            if u == tgt:
                break
            for k in range(ip[u], ip[u + 1]):
                v = idx[k]
                nd = d + w[k]
                if nd < dist[v] or (nd == dist[v] and o < origin[v]):
                    dist[v] = nd
                    origin[v] = o
                    _heap_push(&heap, nd, o, v)
    finally:
        free(heap.items)

    return dist, origin


cdef inline double _hit_triangle(double ox, double oy, double oz,
                                 double dx, double dy, double dz,
                                 const double* v0, const double* e1, const double* e2,
                                 double t_min, double* uu, double* vv) noexcept nogil:
    cdef double px = dy * e2[2] - dz * e2[1]
    cdef double py = dz * e2[0] - dx * e2[2]
    cdef double pz = dx * e2[1] - dy * e2[0]
    cdef double det = e1[0] * px + e1[1] * py + e1[2] * pz
    cdef double inv, sx, sy, sz, u, qx, qy, qz, v, t
    if -1e-14 < det < 1e-14:
        return -1.0
    inv = 1.0 / det
    sx = ox - v0[0]
    sy = oy - v0[1]
    sz = oz - v0[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -1e-12 or u > 1.0 + 1e-12:
        return -1.0
    qx = sy * e1[2] - sz * e1[1]
    qy = sz * e1[0] - sx * e1[2]
    qz = sx * e1[1] - sy * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-12 or u + v > 1.0 + 1e-12:
        return -1.0
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    if t <= t_min:
        return -1.0
    uu[0] = u
    vv[0] = v
    return t


def raycast(node_min, node_max, node_left, node_right, node_start, node_count,
            prim_order, tri_v0, tri_e1, tri_e2, origins, directions, t_min):
    """See ``_reference.raycast``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] nmin = np.ascontiguousarray(node_min, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] nmax = np.ascontiguousarray(node_max, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] left = np.ascontiguousarray(node_left, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] right = np.ascontiguousarray(node_right, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] start = np.ascontiguousarray(node_start, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] count = np.ascontiguousarray(node_count, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.ascontiguousarray(prim_order, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v0 = np.ascontiguousarray(tri_v0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e1 = np.ascontiguousarray(tri_e1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] e2 = np.ascontiguousarray(tri_e2, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] org = np.ascontiguousarray(origins, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dirs = np.ascontiguousarray(directions, dtype=np.float64)
    cdef double tmin = t_min

    cdef long n_rays = org.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_t = np.full(n_rays, np.inf)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_face = np.full(n_rays, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_u = np.zeros(n_rays)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_v = np.zeros(n_rays)

    cdef long stack_cap = 4 * left.shape[0] + 64
    cdef long* stack = <long*>malloc(stack_cap * sizeof(long))

    cdef long r, node, top, k, f, best_f
    cdef double ox, oy, oz, dx, dy, dz, inv_dx, inv_dy, inv_dz
    cdef double best_t, best_u, best_v, t0, t1, lo, hi, tmp, t, u, v

    try:
        for r in range(n_rays):
            ox = org[r, 0]; oy = org[r, 1]; oz = org[r, 2]
            dx = dirs[r, 0]; dy = dirs[r, 1]; dz = dirs[r, 2]
            if dx != 0.0:
                inv_dx = 1.0 / dx
            else:
                inv_dx = np.inf if dx >= 0 else -np.inf
            if dy != 0.0:
                inv_dy = 1.0 / dy
            else:
                inv_dy = np.inf if dy >= 0 else -np.inf
            if dz != 0.0:
                inv_dz = 1.0 / dz
            else:
                inv_dz = np.inf if dz >= 0 else -np.inf
            best_t = np.inf
            best_f = -1
            best_u = 0.0
            best_v = 0.0
            top = 0
            stack[top] = 0
            top += 1
            while top > 0:
                top -= 1
                node = stack[top]
                t0 = (nmin[node, 0] - ox) * inv_dx
                t1 = (nmax[node, 0] - ox) * inv_dx
                if t0 < t1:
                    lo = t0; hi = t1
                else:
                    lo = t1; hi = t0
                t0 = (nmin[node, 1] - oy) * inv_dy
                t1 = (nmax[node, 1] - oy) * inv_dy
                if t0 > t1:
                    tmp = t0; t0 = t1; t1 = tmp
                if t0 > lo:
                    lo = t0
                if t1 < hi:
                    hi = t1
                t0 = (nmin[node, 2] - oz) * inv_dz
                t1 = (nmax[node, 2] - oz) * inv_dz
                if t0 > t1:
                    tmp = t0; t0 = t1; t1 = tmp
                if t0 > lo:
                    lo = t0
                if t1 < hi:
                    hi = t1
                if hi < lo or hi < tmin or lo > best_t:
                    continue
                if count[node] > 0:
                    for k in range(start[node], start[node] + count[node]):
                        f = order[k]
                        t = _hit_triangle(ox, oy, oz, dx, dy, dz,
                                          &v0[f, 0], &e1[f, 0], &e2[f, 0],
                                          tmin, &u, &v)
                        if t > 0.0 and (t < best_t or (t == best_t and f < best_f)):
                            best_t = t
                            best_f = f
                            best_u = u
                            best_v = v
                else:
                    stack[top] = right[node]
                    top += 1
                    stack[top] = left[node]
                    top += 1
            out_t[r] = best_t
            out_face[r] = best_f
            out_u[r] = best_u
            out_v[r] = best_v
    finally:
        free(stack)

    return out_t, out_face, out_u, out_v
